use serde::{Deserialize, Serialize};

use crate::model::state::DefaultState;

/// One market coefficient as a function of time: a constant or a polynomial
/// in `t` (coefficients in increasing degree). Polynomials are the concrete
/// serializable stand-in for bounded deterministic functions of time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coefficient {
    Constant(f64),
    Poly { poly: Vec<f64> },
}

impl Coefficient {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::Poly { poly } => {
                poly.iter().rev().fold(0.0, |acc, c| acc * t + c)
            }
        }
    }

    /// Antiderivative evaluated at `t` with F(0) = 0.
    pub fn integral(&self, t: f64) -> f64 {
        match self {
            Coefficient::Constant(c) => c * t,
            Coefficient::Poly { poly } => {
                let mut acc = 0.0;
                for (k, c) in poly.iter().enumerate().rev() {
                    acc = acc * t + c / (k as f64 + 1.0);
                }
                acc * t
            }
        }
    }

    /// ∫_a^b of the coefficient.
    pub fn integral_between(&self, a: f64, b: f64) -> f64 {
        self.integral(b) - self.integral(a)
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Coefficient::Constant(_) => true,
            Coefficient::Poly { poly } => poly.len() <= 1,
        }
    }

    pub fn constant_value(&self) -> Option<f64> {
        match self {
            Coefficient::Constant(c) => Some(*c),
            Coefficient::Poly { poly } => match poly.len() {
                0 => Some(0.0),
                1 => Some(poly[0]),
                _ => None,
            },
        }
    }

    pub fn all_finite(&self) -> bool {
        match self {
            Coefficient::Constant(c) => c.is_finite(),
            Coefficient::Poly { poly } => poly.iter().all(|c| c.is_finite()),
        }
    }

    /// (min, max) over `[0, horizon]`, by dense sampling plus endpoints.
    /// Adequate for the low-degree polynomials this family is meant for.
    pub fn range_on(&self, horizon: f64) -> (f64, f64) {
        match self {
            Coefficient::Constant(c) => (*c, *c),
            Coefficient::Poly { .. } => {
                let n = 1024;
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for k in 0..=n {
                    let v = self.eval(horizon * k as f64 / n as f64);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                (lo, hi)
            }
        }
    }
}

/// A coefficient per default state. Deserializes either from a single
/// coefficient (same in every state) or from a `{ "00": .., "10": .., "01": ..,
/// "11": .. }` table keyed by `h_a h_b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StateCoeff {
    Uniform(Coefficient),
    PerState {
        #[serde(rename = "00")]
        s00: Coefficient,
        #[serde(rename = "10")]
        s10: Coefficient,
        #[serde(rename = "01")]
        s01: Coefficient,
        #[serde(rename = "11")]
        s11: Coefficient,
    },
}

impl StateCoeff {
    pub fn constant(c: f64) -> Self {
        StateCoeff::Uniform(Coefficient::Constant(c))
    }

    pub fn per_state(c00: f64, c10: f64, c01: f64, c11: f64) -> Self {
        StateCoeff::PerState {
            s00: Coefficient::Constant(c00),
            s10: Coefficient::Constant(c10),
            s01: Coefficient::Constant(c01),
            s11: Coefficient::Constant(c11),
        }
    }

    pub fn get(&self, state: DefaultState) -> &Coefficient {
        match self {
            StateCoeff::Uniform(c) => c,
            StateCoeff::PerState { s00, s10, s01, s11 } => match state.index() {
                0 => s00,
                1 => s10,
                2 => s01,
                _ => s11,
            },
        }
    }

    pub fn eval(&self, t: f64, state: DefaultState) -> f64 {
        self.get(state).eval(t)
    }

    pub fn integral_between(&self, a: f64, b: f64, state: DefaultState) -> f64 {
        self.get(state).integral_between(a, b)
    }

    pub fn all_finite(&self) -> bool {
        DefaultState::ALL.iter().all(|s| self.get(*s).all_finite())
    }

    pub fn is_constant(&self) -> bool {
        DefaultState::ALL.iter().all(|s| self.get(*s).is_constant())
    }

    /// Apply `f` to every state's coefficient, replacing it.
    pub fn map_state(&mut self, state: DefaultState, value: Coefficient) {
        let table = match self {
            StateCoeff::Uniform(c) => {
                let c = c.clone();
                *self = StateCoeff::PerState {
                    s00: c.clone(),
                    s10: c.clone(),
                    s01: c.clone(),
                    s11: c,
                };
                return self.map_state(state, value);
            }
            StateCoeff::PerState { s00, s10, s01, s11 } => [s00, s10, s01, s11],
        };
        *table[match state.index() {
            0 => 0,
            1 => 1,
            2 => 2,
            _ => 3,
        }] = value;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poly_eval_and_integral() {
        // 1 + 2t + 3t²
        let c = Coefficient::Poly { poly: vec![1.0, 2.0, 3.0] };
        assert!((c.eval(2.0) - (1.0 + 4.0 + 12.0)).abs() < 1e-14);
        // ∫_0^2 = t + t² + t³ = 2 + 4 + 8 = 14
        assert!((c.integral(2.0) - 14.0).abs() < 1e-12);
        assert!((c.integral_between(1.0, 2.0) - (14.0 - 3.0)).abs() < 1e-12);
    }

    #[test]
    fn state_table_lookup() {
        let c = StateCoeff::per_state(1.0, 2.0, 3.0, 4.0);
        assert_eq!(c.eval(0.5, DefaultState::NONE), 1.0);
        assert_eq!(c.eval(0.5, DefaultState::A_ONLY), 2.0);
        assert_eq!(c.eval(0.5, DefaultState::B_ONLY), 3.0);
        assert_eq!(c.eval(0.5, DefaultState::BOTH), 4.0);
    }

    #[test]
    fn serde_shorthand() {
        let c: StateCoeff = serde_json::from_str("0.2").unwrap();
        assert_eq!(c.eval(0.0, DefaultState::NONE), 0.2);
        let c: StateCoeff =
            serde_json::from_str(r#"{"00": 0.1, "10": {"poly": [0.0, 1.0]}, "01": 0.1, "11": 0.3}"#)
                .unwrap();
        assert_eq!(c.eval(0.5, DefaultState::A_ONLY), 0.5);
    }
}
