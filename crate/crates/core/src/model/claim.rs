use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::simulate::MarketPath;

/// A bounded payoff function of the spot, from a serializable family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PayoffFn {
    Constant { value: f64 },
    /// min(slope·x + intercept, cap); slope must be ≥ 0 so the function is
    /// bounded on x > 0.
    CappedAffine { slope: f64, intercept: f64, cap: f64 },
    /// min((x − strike)⁺, cap)
    CappedCall { strike: f64, cap: f64 },
    /// min((strike − x)⁺, cap)
    CappedPut { strike: f64, cap: f64 },
    /// base(x) + offset — cash-shifted payoff.
    Shifted { base: Box<PayoffFn>, offset: f64 },
}

impl PayoffFn {
    pub const ZERO: PayoffFn = PayoffFn::Constant { value: 0.0 };

    pub fn constant(value: f64) -> Self {
        PayoffFn::Constant { value }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            PayoffFn::Constant { value } => *value,
            PayoffFn::CappedAffine { slope, intercept, cap } => (slope * x + intercept).min(*cap),
            PayoffFn::CappedCall { strike, cap } => (x - strike).max(0.0).min(*cap),
            PayoffFn::CappedPut { strike, cap } => (strike - x).max(0.0).min(*cap),
            PayoffFn::Shifted { base, offset } => base.eval(x) + offset,
        }
    }

    /// Closure of the range over x > 0.
    pub fn range(&self) -> (f64, f64) {
        match self {
            PayoffFn::Constant { value } => (*value, *value),
            PayoffFn::CappedAffine { slope, intercept, cap } => {
                if *slope == 0.0 {
                    (intercept.min(*cap), intercept.min(*cap))
                } else {
                    (intercept.min(*cap), *cap)
                }
            }
            PayoffFn::CappedCall { cap, .. } => (0.0, cap.max(0.0)),
            PayoffFn::CappedPut { strike, cap } => (0.0, cap.min(*strike).max(0.0)),
            PayoffFn::Shifted { base, offset } => {
                let (lo, hi) = base.range();
                (lo + offset, hi + offset)
            }
        }
    }

    /// Supremum of |f| over x > 0.
    pub fn sup_abs(&self) -> f64 {
        let (lo, hi) = self.range();
        lo.abs().max(hi.abs())
    }

    fn check(&self, name: &str) -> Result<()> {
        match self {
            PayoffFn::Constant { value } => check_finite(name, &[*value]),
            PayoffFn::CappedAffine { slope, intercept, cap } => {
                check_finite(name, &[*slope, *intercept, *cap])?;
                if *slope < 0.0 {
                    return Err(Error::InvalidClaim(format!(
                        "{name}: capped-affine slope must be >= 0 to stay bounded on x > 0"
                    )));
                }
                Ok(())
            }
            PayoffFn::CappedCall { strike, cap } | PayoffFn::CappedPut { strike, cap } => {
                check_finite(name, &[*strike, *cap])
            }
            PayoffFn::Shifted { base, offset } => {
                check_finite(name, &[*offset])?;
                base.check(name)
            }
        }
    }

    /// f(x) + k, exact for every variant.
    pub fn shifted(&self, k: f64) -> PayoffFn {
        match self {
            PayoffFn::Constant { value } => PayoffFn::Constant { value: value + k },
            PayoffFn::CappedAffine { slope, intercept, cap } => PayoffFn::CappedAffine {
                slope: *slope,
                intercept: intercept + k,
                cap: cap + k,
            },
            PayoffFn::Shifted { base, offset } => {
                PayoffFn::Shifted { base: base.clone(), offset: offset + k }
            }
            other => PayoffFn::Shifted { base: Box::new(other.clone()), offset: k },
        }
    }
}

fn check_finite(name: &str, vals: &[f64]) -> Result<()> {
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidClaim(format!("{name}: non-finite parameter")));
    }
    Ok(())
}

/// The restricted claim of the solver tiers:
/// `ψ = g(D_T)·1{τ^B > T} + f(D_{τ^B−})·1{τ^B ≤ T}`,
/// with `|g| ≤ M` and `|f| ≤ M` for the declared bound M.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestrictedClaim {
    pub g: PayoffFn,
    pub f: PayoffFn,
    /// Declared common bound M.
    pub bound: f64,
}

impl RestrictedClaim {
    pub fn validate(&self) -> Result<()> {
        self.g.check("g")?;
        self.f.check("f")?;
        if !(self.bound.is_finite() && self.bound >= 0.0) {
            return Err(Error::InvalidClaim("bound M must be finite and >= 0".into()));
        }
        for (name, p) in [("g", &self.g), ("f", &self.f)] {
            if p.sup_abs() > self.bound + 1e-12 {
                return Err(Error::InvalidClaim(format!(
                    "|{name}| exceeds the declared bound M={} (sup {})",
                    self.bound,
                    p.sup_abs()
                )));
            }
        }
        Ok(())
    }

    /// ψ + K, with the bound enlarged accordingly.
    pub fn cash_shifted(&self, k: f64) -> RestrictedClaim {
        RestrictedClaim {
            g: self.g.shifted(k),
            f: self.f.shifted(k),
            bound: self.bound + k.abs(),
        }
    }

    pub fn payoff(&self, path: &MarketPath) -> f64 {
        let t_end = path.horizon();
        if path.tau_b <= t_end {
            self.f.eval(path.bond_before_tau_b.expect("pre-default bond recorded"))
        } else {
            self.g.eval(path.terminal_bond())
        }
    }
}

/// A generic defaultable claim: promised payoffs `X^A`, `X^B` paid at `T` if
/// the corresponding firm survived, plus recoveries `Z^A`, `Z^B` paid at the
/// default times:
///
/// `ψ = X^A 1{τ^A>T} + X^B 1{τ^B>T} + Z^A(D_{τ^A−}) 1{τ^A≤T} + Z^B(D_{τ^B−}) 1{τ^B≤T}`.
///
/// The restricted form is the instance `XA = 0, XB = g, ZA = 0, ZB = f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DefaultableClaim {
    General {
        xa: PayoffFn,
        xb: PayoffFn,
        za: PayoffFn,
        zb: PayoffFn,
    },
    Restricted(RestrictedClaim),
}

impl DefaultableClaim {
    pub fn restricted(g: PayoffFn, f: PayoffFn, bound: f64) -> Self {
        DefaultableClaim::Restricted(RestrictedClaim { g, f, bound })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DefaultableClaim::General { xa, xb, za, zb } => {
                for (n, p) in [("XA", xa), ("XB", xb), ("ZA", za), ("ZB", zb)] {
                    p.check(n)?;
                }
                Ok(())
            }
            DefaultableClaim::Restricted(r) => r.validate(),
        }
    }

    /// The restricted form, required by the HJB and BSDE tiers.
    pub fn as_restricted(&self) -> Result<&RestrictedClaim> {
        match self {
            DefaultableClaim::Restricted(r) => Ok(r),
            DefaultableClaim::General { .. } => Err(Error::Unsupported(
                "this solver tier requires the restricted claim form (g, f)".into(),
            )),
        }
    }

    /// Evaluates the claim's total cash flow along one path. The recovery
    /// integrals `∫ Z dH` collapse to single evaluations at the default
    /// times, at the pre-jump spot.
    pub fn payoff(&self, path: &MarketPath) -> f64 {
        let t_end = path.horizon();
        match self {
            DefaultableClaim::General { xa, xb, za, zb } => {
                let d_t = path.terminal_bond();
                let mut total = 0.0;
                if path.tau_a > t_end {
                    total += xa.eval(d_t);
                } else {
                    total += za.eval(path.bond_before_tau_a.expect("pre-default bond recorded"));
                }
                if path.tau_b > t_end {
                    total += xb.eval(d_t);
                } else {
                    total += zb.eval(path.bond_before_tau_b.expect("pre-default bond recorded"));
                }
                total
            }
            DefaultableClaim::Restricted(r) => r.payoff(path),
        }
    }
}
