use crate::error::{Error, Result};
use crate::model::params::ModelParams;
use crate::model::state::DefaultState;

/// Market coefficients frozen at one `(t, state)` node.
#[derive(Debug, Clone, Copy, Default)]
pub struct MarketNode {
    pub mu: f64,
    pub sigma: f64,
    pub sigma_a: f64,
    pub sigma_b: f64,
    pub lambda_a: f64,
    pub lambda_b: f64,
}

impl MarketNode {
    pub fn at(params: &ModelParams, t: f64, state: DefaultState) -> MarketNode {
        let (lambda_a, lambda_b) = params.intensities(t, state);
        MarketNode {
            mu: params.mu.eval(t, state),
            sigma: params.sigma.eval(t, state),
            sigma_a: params.sigma_a.eval(t, state),
            sigma_b: params.sigma_b.eval(t, state),
            lambda_a,
            lambda_b,
        }
    }
}

/// Jump and Brownian integrands of the first BSDE at a node (relative form).
#[derive(Debug, Clone, Copy, Default)]
pub struct ThetaIntegrands {
    pub theta_a: f64,
    pub theta_b: f64,
    pub beta: f64,
}

/// Jump and Brownian integrands of the second BSDE at a node.
#[derive(Debug, Clone, Copy, Default)]
pub struct YIntegrands {
    pub u_a: f64,
    pub u_b: f64,
    pub z: f64,
}

/// The quadratic-cost auxiliary processes:
///
/// ```text
/// a = σ² + Σ_i (σ^i)² (1+θ^i) λ^i          (control weight, must be > 0)
/// b = μ + σβ + Σ_i σ^i θ^i λ^i             (drift coupling)
/// c = −σZ − Σ_i σ^i U^i (1+θ^i) λ^i        (claim coupling)
/// v = Z² + Σ_i (U^i)² (1+θ^i) λ^i          (variance term)
/// u = βZ + Σ_i U^i θ^i λ^i                 (cross term)
/// ```
#[derive(Debug, Clone, Copy)]
pub struct MvhCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub u: f64,
    pub v: f64,
}

pub fn coeffs(node: &MarketNode, th: &ThetaIntegrands, yi: &YIntegrands) -> MvhCoefficients {
    let wa = (1.0 + th.theta_a) * node.lambda_a;
    let wb = (1.0 + th.theta_b) * node.lambda_b;
    MvhCoefficients {
        a: node.sigma * node.sigma
            + node.sigma_a * node.sigma_a * wa
            + node.sigma_b * node.sigma_b * wb,
        b: node.mu
            + node.sigma * th.beta
            + node.sigma_a * th.theta_a * node.lambda_a
            + node.sigma_b * th.theta_b * node.lambda_b,
        c: -node.sigma * yi.z - node.sigma_a * yi.u_a * wa - node.sigma_b * yi.u_b * wb,
        u: th.beta * yi.z
            + yi.u_a * th.theta_a * node.lambda_a
            + yi.u_b * th.theta_b * node.lambda_b,
        v: yi.z * yi.z + yi.u_a * yi.u_a * wa + yi.u_b * yi.u_b * wb,
    }
}

fn positive_a(node: &MarketNode, th: &ThetaIntegrands) -> Result<f64> {
    let co = coeffs(node, th, &YIntegrands::default());
    if co.a <= 0.0 {
        return Err(Error::Numerical(format!(
            "mean-variance trade-off weight a = {} is not positive (theta_a={}, theta_b={})",
            co.a, th.theta_a, th.theta_b
        )));
    }
    Ok(co.a)
}

/// Quadratic driver of the first BSDE: `g¹ = −b²/a`.
pub fn driver_g1(node: &MarketNode, th: &ThetaIntegrands) -> Result<f64> {
    let a = positive_a(node, th)?;
    let co = coeffs(node, th, &YIntegrands::default());
    Ok(-co.b * co.b / a)
}

/// Linear driver of the second BSDE: `g² = bc/a + u`; it has no Y term and is
/// linear-homogeneous in `(U, Z)`.
pub fn driver_g2(node: &MarketNode, th: &ThetaIntegrands, yi: &YIntegrands) -> Result<f64> {
    positive_a(node, th)?;
    let co = coeffs(node, th, yi);
    Ok(co.b * co.c / co.a + co.u)
}

/// Source of the third BSDE: `g³ = Θ (v − c²/a)`.
pub fn driver_g3(
    node: &MarketNode,
    th: &ThetaIntegrands,
    yi: &YIntegrands,
    theta_big: f64,
) -> Result<f64> {
    positive_a(node, th)?;
    let co = coeffs(node, th, yi);
    Ok(theta_big * (co.v - co.c * co.c / co.a))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coeffs_reference_point() {
        // θ=β=U=Z=0, σ=0.2, σ^A=−0.4, λ^A=0.1, σ^B=−0.3, λ^B=0.05, μ=0.05
        let node = MarketNode {
            mu: 0.05,
            sigma: 0.2,
            sigma_a: -0.4,
            sigma_b: -0.3,
            lambda_a: 0.1,
            lambda_b: 0.05,
        };
        let co = coeffs(&node, &ThetaIntegrands::default(), &YIntegrands::default());
        assert!((co.a - 0.0605).abs() < 1e-15);
        assert!((co.b - 0.05).abs() < 1e-15);
        assert_eq!((co.c, co.u, co.v), (0.0, 0.0, 0.0));
    }

    #[test]
    fn coeffs_without_jump_channels() {
        // all jump channels off: a=σ², b=μ+σβ, c=−σZ, u=βZ, v=Z²
        let node = MarketNode {
            mu: 0.07,
            sigma: 0.3,
            sigma_a: 0.0,
            sigma_b: 0.0,
            lambda_a: 0.0,
            lambda_b: 0.0,
        };
        let th = ThetaIntegrands { theta_a: 0.0, theta_b: 0.0, beta: 0.4 };
        let yi = YIntegrands { u_a: 0.0, u_b: 0.0, z: 1.3 };
        let co = coeffs(&node, &th, &yi);
        assert!((co.a - 0.09).abs() < 1e-15);
        assert!((co.b - (0.07 + 0.3 * 0.4)).abs() < 1e-15);
        assert!((co.c + 0.3 * 1.3).abs() < 1e-15);
        assert!((co.u - 0.4 * 1.3).abs() < 1e-15);
        assert!((co.v - 1.69).abs() < 1e-15);
    }

    #[test]
    fn coeffs_with_negative_theta() {
        // θ^A=−0.5, σ^A=0.4, λ^A=0.1, σ=0.2 → a = 0.04 + 0.16·0.5·0.1 = 0.048
        let node = MarketNode {
            mu: 0.0,
            sigma: 0.2,
            sigma_a: 0.4,
            sigma_b: 0.0,
            lambda_a: 0.1,
            lambda_b: 0.0,
        };
        let th = ThetaIntegrands { theta_a: -0.5, theta_b: 0.0, beta: 0.0 };
        let co = coeffs(&node, &th, &YIntegrands::default());
        assert!((co.a - 0.048).abs() < 1e-15);
    }

    #[test]
    fn g1_reference_points() {
        // μ=0, θ=β=0 → 0
        let mut node = MarketNode {
            mu: 0.0,
            sigma: 0.2,
            sigma_a: 0.0,
            sigma_b: 0.0,
            lambda_a: 0.0,
            lambda_b: 0.0,
        };
        assert_eq!(driver_g1(&node, &ThetaIntegrands::default()).unwrap(), 0.0);

        // post-default (λ≡0), μ=0.1, σ=0.2 → −0.25 = −(μ/σ)²
        node.mu = 0.1;
        let g1 = driver_g1(&node, &ThetaIntegrands::default()).unwrap();
        assert!((g1 + 0.25).abs() < 1e-14);

        // μ=0.14, σ=0.2, σ^A=0.4, λ^A=0.1 → −0.14²/0.056 = −0.35
        let node = MarketNode {
            mu: 0.14,
            sigma: 0.2,
            sigma_a: 0.4,
            sigma_b: 0.0,
            lambda_a: 0.1,
            lambda_b: 0.0,
        };
        let g1 = driver_g1(&node, &ThetaIntegrands::default()).unwrap();
        assert!((g1 + 0.35).abs() < 1e-14);
    }

    #[test]
    fn g2_reference_points() {
        let node = MarketNode {
            mu: 0.1,
            sigma: 0.2,
            sigma_a: 0.0,
            sigma_b: 0.0,
            lambda_a: 0.0,
            lambda_b: 0.0,
        };
        // U=Z=0 → 0
        assert_eq!(
            driver_g2(&node, &ThetaIntegrands::default(), &YIntegrands::default()).unwrap(),
            0.0
        );
        // λ≡0, μ=0.1, σ=0.2, β=0, Z=1 → −(μ/σ²)·σZ = −0.5
        let yi = YIntegrands { u_a: 0.0, u_b: 0.0, z: 1.0 };
        let g2 = driver_g2(&node, &ThetaIntegrands::default(), &yi).unwrap();
        assert!((g2 + 0.5).abs() < 1e-14);
    }

    #[test]
    fn g2_matches_vom_control_form() {
        // g² = ρZ + ρ^A U^A λ^A + ρ^B U^B λ^B at the candidate VOM controls
        use crate::closed_forms::{vom_controls, VomNode};
        let cases = [
            (0.05, 0.2, -0.4, -0.3, 0.1, 0.05, -0.1, 0.2, 0.03, 0.7, -0.2, 1.1),
            (-0.02, 0.3, 0.25, 0.15, 0.4, 0.2, 0.05, -0.3, -0.01, -0.5, 0.3, 0.8),
        ];
        for (mu, sigma, sa, sb, la, lb, ta, tb, be, ua, ub, z) in cases {
            let node = MarketNode {
                mu,
                sigma,
                sigma_a: sa,
                sigma_b: sb,
                lambda_a: la,
                lambda_b: lb,
            };
            let th = ThetaIntegrands { theta_a: ta, theta_b: tb, beta: be };
            let yi = YIntegrands { u_a: ua, u_b: ub, z };
            let g2 = driver_g2(&node, &th, &yi).unwrap();
            let c = vom_controls(&VomNode {
                mu,
                sigma,
                sigma_a: sa,
                sigma_b: sb,
                lambda_a: la,
                lambda_b: lb,
                theta_a: ta,
                theta_b: tb,
                beta: be,
            })
            .unwrap();
            let alt = z * c.rho + ua * c.rho_a * la + ub * c.rho_b * lb;
            assert!((g2 - alt).abs() < 1e-14, "g2={g2}, control form={alt}");
        }
    }

    #[test]
    fn g3_reference_points() {
        // complete market (single risk source): v − c²/a = 0, ξ-source vanishes
        let node = MarketNode {
            mu: 0.1,
            sigma: 0.2,
            sigma_a: 0.0,
            sigma_b: 0.0,
            lambda_a: 0.0,
            lambda_b: 0.0,
        };
        let yi = YIntegrands { u_a: 0.0, u_b: 0.0, z: 0.9 };
        let g3 = driver_g3(&node, &ThetaIntegrands::default(), &yi, 0.8).unwrap();
        assert!(g3.abs() < 1e-15);

        // Z=1, U=0, σ=0.2, σ^A=0.4, λ^A=0.1, θ=0, Θ=1 → 1 − 0.04/0.056 ≈ 0.28571
        let node = MarketNode {
            mu: 0.0,
            sigma: 0.2,
            sigma_a: 0.4,
            sigma_b: 0.0,
            lambda_a: 0.1,
            lambda_b: 0.0,
        };
        let yi = YIntegrands { u_a: 0.0, u_b: 0.0, z: 1.0 };
        let g3 = driver_g3(&node, &ThetaIntegrands::default(), &yi, 1.0).unwrap();
        assert!((g3 - (1.0 - 0.04 / 0.056)).abs() < 1e-14);
        assert!((g3 - 0.28571).abs() < 1e-4);
    }

    #[test]
    fn g1_rejects_nonpositive_denominator() {
        let node = MarketNode {
            mu: 0.1,
            sigma: 0.0,
            sigma_a: 0.4,
            sigma_b: 0.0,
            lambda_a: 0.1,
            lambda_b: 0.0,
        };
        let th = ThetaIntegrands { theta_a: -3.0, theta_b: 0.0, beta: 0.0 };
        assert!(driver_g1(&node, &th).is_err());
    }
}
