//! Explicit solutions used as oracles: the single-default exponential Θ under
//! the drift/volatility/intensity balance condition, the complete-market Θ
//! for pure-Brownian and pure-jump filtrations, and the candidate
//! variance-optimal Girsanov controls built from the first BSDE solution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::coeff::Coefficient;
use crate::model::simulate::gauss5;

/// Parameters of the single-default explicit solution: constant pre-default
/// coefficients `(μ⁰, σ⁰)`, jump size `κ`, intensity `λ`, post-default
/// `(μ¹, σ¹)`, with the balance constraint `μ⁰ κ = (σ⁰)² + κ² λ`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Prop38Params {
    pub mu0: f64,
    pub sigma0: f64,
    /// σ^A before the default.
    pub kappa: f64,
    /// Pre-default intensity of firm A.
    pub lambda: f64,
    pub mu1: f64,
    pub sigma1: f64,
    pub horizon: f64,
}

impl Prop38Params {
    pub fn validate(&self) -> Result<()> {
        if self.kappa == 0.0 {
            return Err(Error::InvalidParams("kappa must be nonzero".into()));
        }
        if self.sigma1 <= 0.0 {
            return Err(Error::InvalidParams("sigma1 must be > 0".into()));
        }
        let lhs = self.mu0 * self.kappa;
        let rhs = self.sigma0 * self.sigma0 + self.kappa * self.kappa * self.lambda;
        let scale = lhs.abs().max(rhs.abs()).max(1e-30);
        if (lhs - rhs).abs() > 1e-12 * scale {
            return Err(Error::InvalidParams(format!(
                "balance constraint violated: mu0*kappa = {lhs} but sigma0^2 + kappa^2*lambda = {rhs}"
            )));
        }
        Ok(())
    }
}

/// The exponential Θ of the single-default model:
/// `Θ_pre(t) = exp(−(μ⁰/κ)(T−t))`, `Θ_post(t) = exp(−(μ¹/σ¹)²(T−t))`.
pub fn theta_prop38(p: &Prop38Params, t: f64) -> Result<(f64, f64)> {
    p.validate()?;
    let rem = p.horizon - t;
    let pre = (-(p.mu0 / p.kappa) * rem).exp();
    let post = (-(p.mu1 / p.sigma1).powi(2) * rem).exp();
    Ok((pre, post))
}

/// Complete pure-Brownian market (no default channel): the unique
/// risk-neutral density has `ρ = −μ/σ` and
/// `Θ(t) = exp(−∫_t^T (μ/σ)² ds)`.
pub fn theta_complete_brownian(
    mu: &Coefficient,
    sigma: &Coefficient,
    horizon: f64,
    t: f64,
) -> Result<f64> {
    let (lo, _) = sigma.range_on(horizon);
    if lo <= 0.0 {
        return Err(Error::InvalidParams("sigma must be > 0 on [0, T]".into()));
    }
    if mu.is_constant() && sigma.is_constant() {
        let r = mu.eval(0.0) / sigma.eval(0.0);
        return Ok((-r * r * (horizon - t)).exp());
    }
    // composite quadrature, 64 panels of Gauss-5
    let n = 64;
    let mut acc = 0.0;
    for k in 0..n {
        let a = t + (horizon - t) * k as f64 / n as f64;
        let b = t + (horizon - t) * (k + 1) as f64 / n as f64;
        acc += gauss5(a, b, |s| {
            let r = mu.eval(s) / sigma.eval(s);
            r * r
        });
    }
    Ok((-acc).exp())
}

/// Complete pure-jump market (only the default noise of firm A, `σ ≡ 0`):
/// the unique risk-neutral control is `ρ^A = −μ/(λ^A σ^A)` and, for constant
/// coefficients, `Θ(t) = 1 / E[Z̄²_T / Z̄²_t | alive at t]` evaluates by the
/// explicit two-regime (default before T / survival) sum. After the default
/// the model is riskless and `Θ ≡ 1`.
pub fn theta_complete_jump(
    mu: f64,
    sigma_a: f64,
    lambda_a: f64,
    horizon: f64,
    t: f64,
) -> Result<f64> {
    if lambda_a * sigma_a == 0.0 {
        return Err(Error::InvalidParams(
            "pure-jump market needs lambdaA * sigmaA != 0".into(),
        ));
    }
    let rho = -mu / (lambda_a * sigma_a);
    if rho <= -1.0 {
        return Err(Error::Unsupported(format!(
            "rho^A = {rho} <= -1: the density is signed; the VOM exists only as a signed measure"
        )));
    }
    let rem = horizon - t;
    // E[Z̄²_T / Z̄²_t | τ > t]
    //   = ∫_t^T λ e^{−λ(s−t)} (1+ρ)² e^{−2ρλ(s−t)} ds + e^{−λ(T−t)} e^{−2ρλ(T−t)}
    let c = (1.0 + 2.0 * rho) * lambda_a;
    let tail = (-c * rem).exp();
    let integral = if c.abs() > 1e-14 {
        (1.0 + rho).powi(2) * lambda_a * (-(-c * rem).exp_m1()) / c
    } else {
        (1.0 + rho).powi(2) * lambda_a * rem
    };
    Ok(1.0 / (integral + tail))
}

/// Candidate variance-optimal Girsanov controls at one node, from the first
/// BSDE solution `(θ^A, θ^B, β)` and the auxiliary `(a, b)`:
/// `ρ = β − bσ/a`, `ρ^i = θ^i − (1+θ^i) σ^i b/a`. The returned triple
/// satisfies the bond martingale constraint identically.
#[derive(Debug, Clone, Copy)]
pub struct VomControls {
    pub rho: f64,
    pub rho_a: f64,
    pub rho_b: f64,
}

/// Market data of one node as needed by [`vom_controls`].
#[derive(Debug, Clone, Copy)]
pub struct VomNode {
    pub mu: f64,
    pub sigma: f64,
    pub sigma_a: f64,
    pub sigma_b: f64,
    pub lambda_a: f64,
    pub lambda_b: f64,
    pub theta_a: f64,
    pub theta_b: f64,
    pub beta: f64,
}

pub fn vom_controls(n: &VomNode) -> Result<VomControls> {
    let a = n.sigma * n.sigma
        + (1.0 + n.theta_a) * n.sigma_a * n.sigma_a * n.lambda_a
        + (1.0 + n.theta_b) * n.sigma_b * n.sigma_b * n.lambda_b;
    if a <= 0.0 {
        return Err(Error::Numerical(format!("nonpositive control weight a = {a}")));
    }
    let b = n.mu
        + n.sigma * n.beta
        + n.sigma_a * n.theta_a * n.lambda_a
        + n.sigma_b * n.theta_b * n.lambda_b;
    Ok(VomControls {
        rho: n.beta - b * n.sigma / a,
        rho_a: n.theta_a - (1.0 + n.theta_a) * n.sigma_a * b / a,
        rho_b: n.theta_b - (1.0 + n.theta_b) * n.sigma_b * b / a,
    })
}

/// Residual of the bond martingale constraint
/// `μ + ρ^A σ^A λ^A + ρ^B σ^B λ^B + ρσ` at the given controls.
pub fn martingale_residual(n: &VomNode, c: &VomControls) -> f64 {
    n.mu + c.rho_a * n.sigma_a * n.lambda_a + c.rho_b * n.sigma_b * n.lambda_b + c.rho * n.sigma
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assumption_params() -> Prop38Params {
        Prop38Params {
            mu0: 0.14,
            sigma0: 0.2,
            kappa: 0.4,
            lambda: 0.1,
            mu1: 0.1,
            sigma1: 0.2,
            horizon: 1.0,
        }
    }

    #[test]
    fn prop38_terminal_and_reference_values() {
        let p = assumption_params();
        let (pre, post) = theta_prop38(&p, 1.0).unwrap();
        assert_eq!((pre, post), (1.0, 1.0));
        let (pre, post) = theta_prop38(&p, 0.0).unwrap();
        assert!((pre - (-0.35f64).exp()).abs() < 1e-15);
        assert!((post - (-0.25f64).exp()).abs() < 1e-15);
        assert!((pre - 0.704688).abs() < 1e-6);
        assert!((post - 0.778801).abs() < 1e-6);
    }

    #[test]
    fn prop38_zero_post_drift() {
        let mut p = assumption_params();
        p.mu1 = 0.0;
        let (_, post) = theta_prop38(&p, 0.3).unwrap();
        assert_eq!(post, 1.0);
    }

    #[test]
    fn prop38_rejects_broken_balance() {
        let mut p = assumption_params();
        p.lambda = 0.2;
        assert!(theta_prop38(&p, 0.0).is_err());
    }

    #[test]
    fn complete_brownian_reference() {
        let mu = Coefficient::Constant(0.1);
        let sigma = Coefficient::Constant(0.2);
        let th = theta_complete_brownian(&mu, &sigma, 1.0, 0.0).unwrap();
        assert!((th - (-0.25f64).exp()).abs() < 1e-14);
        assert_eq!(
            theta_complete_brownian(&Coefficient::Constant(0.0), &sigma, 1.0, 0.3).unwrap(),
            1.0
        );
        // time-dependent branch agrees with the constant branch
        let mu_poly = Coefficient::Poly { poly: vec![0.1] };
        let th2 = theta_complete_brownian(&mu_poly, &sigma, 1.0, 0.0).unwrap();
        assert!((th2 - th).abs() < 1e-12);
    }

    #[test]
    fn complete_jump_limits() {
        // μ = 0 ⇒ ρ^A = 0 ⇒ Θ ≡ 1
        let th = theta_complete_jump(0.0, 0.4, 0.1, 1.0, 0.2).unwrap();
        assert!((th - 1.0).abs() < 1e-14);
        // terminal time
        let th = theta_complete_jump(0.002, 0.4, 0.1, 1.0, 1.0).unwrap();
        assert!((th - 1.0).abs() < 1e-14);
        // signed-density refusal
        assert!(theta_complete_jump(0.08, 0.4, 0.1, 1.0, 0.0).is_err());
    }

    #[test]
    fn vom_controls_satisfy_the_constraint() {
        let nodes = [
            VomNode {
                mu: 0.05,
                sigma: 0.2,
                sigma_a: -0.4,
                sigma_b: -0.3,
                lambda_a: 0.1,
                lambda_b: 0.05,
                theta_a: -0.2,
                theta_b: 0.1,
                beta: 0.02,
            },
            VomNode {
                mu: -0.03,
                sigma: 0.35,
                sigma_a: 0.25,
                sigma_b: 0.0,
                lambda_a: 0.4,
                lambda_b: 0.0,
                theta_a: 0.05,
                theta_b: 0.0,
                beta: -0.01,
            },
        ];
        for n in &nodes {
            let c = vom_controls(n).unwrap();
            assert!(martingale_residual(n, &c).abs() < 1e-15);
        }
        // μ ≡ 0, θ = β = 0 → all controls vanish
        let n = VomNode {
            mu: 0.0,
            sigma: 0.2,
            sigma_a: 0.1,
            sigma_b: 0.1,
            lambda_a: 0.3,
            lambda_b: 0.3,
            theta_a: 0.0,
            theta_b: 0.0,
            beta: 0.0,
        };
        let c = vom_controls(&n).unwrap();
        assert_eq!((c.rho, c.rho_a, c.rho_b), (0.0, 0.0, 0.0));
        // complete Brownian reduction: ρ = −μ/σ
        let n = VomNode {
            mu: 0.1,
            sigma: 0.2,
            sigma_a: 0.0,
            sigma_b: 0.0,
            lambda_a: 0.0,
            lambda_b: 0.0,
            theta_a: 0.0,
            theta_b: 0.0,
            beta: 0.0,
        };
        let c = vom_controls(&n).unwrap();
        assert!((c.rho + 0.5).abs() < 1e-15);
    }
}
