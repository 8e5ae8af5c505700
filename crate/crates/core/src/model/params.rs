use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::coeff::{Coefficient, StateCoeff};
use crate::model::state::DefaultState;

/// Market coefficients of the defaultable bond, per default state:
///
/// `dD_t / D_{t−} = μ dt + σ dW + σ^A dM^A + σ^B dM^B`,
///
/// with `M^i = H^i − ∫ λ^i` the compensated default indicators. All
/// coefficients are constants or polynomials in `t`, selected by the current
/// default state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub mu: StateCoeff,
    pub sigma: StateCoeff,
    /// Relative jump of the bond at τ^A (dimensionless, > −1).
    pub sigma_a: StateCoeff,
    /// Relative jump of the bond at τ^B.
    pub sigma_b: StateCoeff,
    pub lambda_a: StateCoeff,
    pub lambda_b: StateCoeff,
    /// Horizon in years.
    pub horizon: f64,
    /// When set, defaults are ordered A-then-B: λ^B must vanish before τ^A
    /// and the state (0,1) becomes unreachable.
    #[serde(default)]
    pub ordered_defaults: bool,
}

impl ModelParams {
    /// Checks every parameter invariant and returns the validated set.
    ///
    /// The first violated invariant is reported by name and state. In ordered
    /// mode the caller must already supply `λ^B(·,(0,0)) = 0`; after the
    /// check it is pinned to the exact constant zero.
    pub fn validate(mut self) -> Result<ModelParams> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::InvalidParams(format!(
                "horizon must be positive and finite, got {}",
                self.horizon
            )));
        }
        for (name, c) in [
            ("mu", &self.mu),
            ("sigma", &self.sigma),
            ("sigmaA", &self.sigma_a),
            ("sigmaB", &self.sigma_b),
            ("lambdaA", &self.lambda_a),
            ("lambdaB", &self.lambda_b),
        ] {
            if !c.all_finite() {
                return Err(Error::InvalidParams(format!(
                    "{name} has a non-finite coefficient"
                )));
            }
        }
        let t_end = self.horizon;
        for state in DefaultState::ALL {
            let lbl = state.label();
            let (lo_a, _) = self.sigma_a.get(state).range_on(t_end);
            if 1.0 + lo_a <= 0.0 {
                return Err(Error::InvalidParams(format!(
                    "bond positivity violated: 1+sigmaA <= 0 in state ({lbl})"
                )));
            }
            let (lo_b, _) = self.sigma_b.get(state).range_on(t_end);
            if 1.0 + lo_b <= 0.0 {
                return Err(Error::InvalidParams(format!(
                    "bond positivity violated: 1+sigmaB <= 0 in state ({lbl})"
                )));
            }
            let (lo, _) = self.lambda_a.get(state).range_on(t_end);
            if lo < 0.0 {
                return Err(Error::InvalidParams(format!(
                    "lambdaA < 0 in state ({lbl})"
                )));
            }
            let (lo, _) = self.lambda_b.get(state).range_on(t_end);
            if lo < 0.0 {
                return Err(Error::InvalidParams(format!(
                    "lambdaB < 0 in state ({lbl})"
                )));
            }
            // A firm defaults once: intensity must vanish after its default.
            if state.h_a {
                let (_, hi) = self.lambda_a.get(state).range_on(t_end);
                if hi != 0.0 {
                    return Err(Error::InvalidParams(format!(
                        "lambdaA must be 0 after tauA, state ({lbl})"
                    )));
                }
            }
            if state.h_b {
                let (_, hi) = self.lambda_b.get(state).range_on(t_end);
                if hi != 0.0 {
                    return Err(Error::InvalidParams(format!(
                        "lambdaB must be 0 after tauB, state ({lbl})"
                    )));
                }
            }
        }
        if self.ordered_defaults {
            let (lo, hi) = self.lambda_b.get(DefaultState::NONE).range_on(t_end);
            if lo != 0.0 || hi != 0.0 {
                return Err(Error::InvalidParams(
                    "ordered mode requires lambdaB = 0 before tauA (state (00))".into(),
                ));
            }
            self.lambda_b
                .map_state(DefaultState::NONE, Coefficient::Constant(0.0));
        }
        Ok(self)
    }

    /// Requires σ(t,h) > 0 on every state in `states`; the diffusive HJB tier
    /// divides by σ.
    pub fn require_positive_sigma(&self, states: &[DefaultState]) -> Result<()> {
        for &state in states {
            let (lo, _) = self.sigma.get(state).range_on(self.horizon);
            if lo <= 0.0 {
                return Err(Error::Unsupported(format!(
                    "sigma <= 0 in state ({}): complete-jump case not supported in the HJB module; see closed_forms",
                    state.label()
                )));
            }
        }
        Ok(())
    }

    /// λ^A and λ^B evaluated at `(t, state)`, with dead channels clamped to 0.
    pub fn intensities(&self, t: f64, state: DefaultState) -> (f64, f64) {
        let la = if state.h_a { 0.0 } else { self.lambda_a.eval(t, state).max(0.0) };
        let lb = if state.h_b { 0.0 } else { self.lambda_b.eval(t, state).max(0.0) };
        (la, lb)
    }

    /// Drift of the bond between defaults, with the jump compensators
    /// `−σ^i λ^i` folded in while the corresponding firm is alive.
    pub fn compensated_drift(&self, t: f64, state: DefaultState) -> f64 {
        let (la, lb) = self.intensities(t, state);
        self.mu.eval(t, state)
            - self.sigma_a.eval(t, state) * la
            - self.sigma_b.eval(t, state) * lb
    }

    pub fn is_constant(&self) -> bool {
        self.mu.is_constant()
            && self.sigma.is_constant()
            && self.sigma_a.is_constant()
            && self.sigma_b.is_constant()
            && self.lambda_a.is_constant()
            && self.lambda_b.is_constant()
    }
}

/// The Brownian Girsanov control forced by the martingale constraint on the
/// bond: `μ + ρ^A σ^A λ^A + ρ^B σ^B λ^B + ρ σ = 0`, so
/// `ρ = −(μ + ρ^A σ^A λ^A + ρ^B σ^B λ^B)/σ`.
pub fn solve_rho(
    params: &ModelParams,
    t: f64,
    state: DefaultState,
    rho_a: f64,
    rho_b: f64,
) -> Result<f64> {
    let sigma = params.sigma.eval(t, state);
    if sigma == 0.0 {
        return Err(Error::Unsupported(
            "sigma = 0: complete-jump case not supported in the HJB module; see closed_forms"
                .into(),
        ));
    }
    let (la, lb) = params.intensities(t, state);
    let mu = params.mu.eval(t, state);
    Ok(-(mu
        + rho_a * params.sigma_a.eval(t, state) * la
        + rho_b * params.sigma_b.eval(t, state) * lb)
        / sigma)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn basic_params() -> ModelParams {
        ModelParams {
            mu: StateCoeff::constant(0.0),
            sigma: StateCoeff::constant(0.2),
            sigma_a: StateCoeff::constant(-0.4),
            sigma_b: StateCoeff::constant(-0.3),
            lambda_a: StateCoeff::per_state(0.1, 0.0, 0.1, 0.0),
            lambda_b: StateCoeff::per_state(0.05, 0.05, 0.0, 0.0),
            horizon: 1.0,
            ordered_defaults: false,
        }
    }

    #[test]
    fn accepts_valid_constants() {
        assert!(basic_params().validate().is_ok());
    }

    #[test]
    fn rejects_bond_killing_jump() {
        let mut p = basic_params();
        p.sigma_a = StateCoeff::constant(-1.2);
        let err = p.validate().unwrap_err().to_string();
        assert!(err.contains("bond positivity violated"), "{err}");
    }

    #[test]
    fn ordered_mode_requires_zero_lambda_b_before_tau_a() {
        let mut p = basic_params();
        p.ordered_defaults = true;
        let err = p.validate().unwrap_err().to_string();
        assert!(err.contains("ordered mode requires lambdaB = 0"), "{err}");

        let mut p = basic_params();
        p.ordered_defaults = true;
        p.lambda_b = StateCoeff::per_state(0.0, 0.05, 0.0, 0.0);
        assert!(p.validate().is_ok());
    }

    #[test]
    fn rejects_live_intensity_after_own_default() {
        let mut p = basic_params();
        p.lambda_a = StateCoeff::constant(0.1);
        let err = p.validate().unwrap_err().to_string();
        assert!(err.contains("lambdaA must be 0 after tauA"), "{err}");
    }

    #[test]
    fn solve_rho_examples() {
        // μ=0, ρ^A=ρ^B=0 → ρ=0
        let p = basic_params().validate().unwrap();
        assert_eq!(solve_rho(&p, 0.0, DefaultState::NONE, 0.0, 0.0).unwrap(), 0.0);

        // μ=0.05, σ=0.2 → ρ=−0.25
        let mut p = basic_params();
        p.mu = StateCoeff::constant(0.05);
        let p = p.validate().unwrap();
        let rho = solve_rho(&p, 0.0, DefaultState::NONE, 0.0, 0.0).unwrap();
        assert!((rho + 0.25).abs() < 1e-15);

        // μ=0.05, σ=0.2, σ^A=−0.4, λ^A=0.1, ρ^A=0.5 → ρ=−(0.05−0.02)/0.2=−0.15
        let rho = solve_rho(&p, 0.0, DefaultState::NONE, 0.5, 0.0).unwrap();
        assert!((rho + 0.15).abs() < 1e-15);

        // the constraint itself holds at the returned control
        let (la, lb) = p.intensities(0.0, DefaultState::NONE);
        let resid = p.mu.eval(0.0, DefaultState::NONE)
            + 0.5 * p.sigma_a.eval(0.0, DefaultState::NONE) * la
            + 0.0 * p.sigma_b.eval(0.0, DefaultState::NONE) * lb
            + rho * p.sigma.eval(0.0, DefaultState::NONE);
        assert!(resid.abs() < 1e-15);
    }

    #[test]
    fn sigma_zero_is_rejected_for_hjb() {
        let mut p = basic_params();
        p.sigma = StateCoeff::constant(0.0);
        let p = p.validate().unwrap();
        assert!(solve_rho(&p, 0.0, DefaultState::NONE, 0.0, 0.0).is_err());
        assert!(p.require_positive_sigma(&[DefaultState::NONE]).is_err());
    }
}
