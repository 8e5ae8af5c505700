use crate::error::{Error, Result};
use crate::mvh::MarketNode;

/// Running cost of the dual control problem at one node:
/// `j = Σ_i λ^i[(1+ρ^i)ln(1+ρ^i) − ρ^i] − δ(1+ρ^B)λ^B f + ρ²/2`.
///
/// `rho` is the Brownian control already resolved through the martingale
/// constraint; `f_value` is the recovery evaluated at the node's spot.
pub fn running_cost_j(
    node: &MarketNode,
    rho: f64,
    rho_a: f64,
    rho_b: f64,
    f_value: f64,
    delta: f64,
) -> Result<f64> {
    if 1.0 + rho_a <= 0.0 || 1.0 + rho_b <= 0.0 {
        return Err(Error::Numerical(format!(
            "jump controls must stay above -1, got rho_a={rho_a}, rho_b={rho_b}"
        )));
    }
    let entropy = |r: f64| (1.0 + r) * (1.0 + r).ln() - r;
    Ok(node.lambda_a * entropy(rho_a) + node.lambda_b * entropy(rho_b)
        - delta * (1.0 + rho_b) * node.lambda_b * f_value
        + 0.5 * rho * rho)
}

/// The optimal dual controls at one node with their objective value and
/// first-order-condition residual.
#[derive(Debug, Clone, Copy)]
pub struct DualControl {
    pub rho_a: f64,
    pub rho_b: f64,
    pub rho: f64,
    /// Minimized `L_{ρ^A,ρ^B}V + j` at the node.
    pub cost: f64,
    /// Sup-norm of the first-order conditions at the returned point.
    pub foc_residual: f64,
}

/// The per-node minimization problem: minimize over `(ρ^A, ρ^B) ∈ (−1,∞)²`
///
/// `F = Σ_i C_i (1+ρ^i) λ^i + j(ρ^A, ρ^B, ρ)`
///
/// with `ρ = −(μ + ρ^A σ^A λ^A + ρ^B σ^B λ^B)/σ` eliminated through the
/// martingale constraint and `C_i = [V(t, z^i) − V(t, z)] − σ^i ∂V/∂y` the
/// jump cost bracket. The objective is convex, so the first-order point is
/// the global minimum.
#[derive(Debug, Clone, Copy)]
pub struct NodeObjective {
    pub node: MarketNode,
    pub c_a: f64,
    pub c_b: f64,
    /// δ·f(spot at the node).
    pub delta_f: f64,
}

const CONTROL_FLOOR: f64 = -1.0 + 1e-6;

impl NodeObjective {
    pub fn rho(&self, rho_a: f64, rho_b: f64) -> f64 {
        -(self.node.mu
            + rho_a * self.node.sigma_a * self.node.lambda_a
            + rho_b * self.node.sigma_b * self.node.lambda_b)
            / self.node.sigma
    }

    pub fn value(&self, rho_a: f64, rho_b: f64) -> f64 {
        let n = &self.node;
        let rho = self.rho(rho_a, rho_b);
        let entropy = |r: f64| (1.0 + r) * (1.0 + r).ln() - r;
        self.c_a * (1.0 + rho_a) * n.lambda_a
            + self.c_b * (1.0 + rho_b) * n.lambda_b
            + n.lambda_a * entropy(rho_a)
            + n.lambda_b * entropy(rho_b)
            - self.delta_f * (1.0 + rho_b) * n.lambda_b
            + 0.5 * rho * rho
    }

    /// The first-order conditions: `∂F/∂ρ^i = λ^i [C_i + ln(1+ρ^i) −
    /// (σ^i/σ) ρ − δf·1{i=B}]`.
    pub fn gradient(&self, rho_a: f64, rho_b: f64) -> (f64, f64) {
        let n = &self.node;
        let rho = self.rho(rho_a, rho_b);
        let ga = n.lambda_a
            * (self.c_a + (1.0 + rho_a).ln() - n.sigma_a / n.sigma * rho);
        let gb = n.lambda_b
            * (self.c_b + (1.0 + rho_b).ln() - n.sigma_b / n.sigma * rho - self.delta_f);
        (ga, gb)
    }

    fn hessian(&self, rho_a: f64, rho_b: f64) -> (f64, f64, f64) {
        let n = &self.node;
        let va = n.sigma_a * n.lambda_a / n.sigma;
        let vb = n.sigma_b * n.lambda_b / n.sigma;
        (
            n.lambda_a / (1.0 + rho_a) + va * va,
            n.lambda_b / (1.0 + rho_b) + vb * vb,
            va * vb,
        )
    }

    /// Damped Newton on the active coordinates with a box safeguard at
    /// `ρ^i ≥ −1 + 10⁻⁶`, falling back to coordinatewise bisection of the
    /// monotone first-order conditions.
    pub fn minimize(&self, foc_tol: f64, warm: Option<(f64, f64)>) -> Result<DualControl> {
        let active_a = self.node.lambda_a > 0.0;
        let active_b = self.node.lambda_b > 0.0;
        let (mut ra, mut rb) = warm.unwrap_or((0.0, 0.0));
        if !active_a {
            ra = 0.0;
        }
        if !active_b {
            rb = 0.0;
        }
        ra = ra.max(CONTROL_FLOOR);
        rb = rb.max(CONTROL_FLOOR);

        if active_a || active_b {
            let mut value = self.value(ra, rb);
            let mut converged = false;
            for _ in 0..60 {
                let (ga, gb) = self.gradient(ra, rb);
                let res = grad_norm(ga, gb, active_a, active_b);
                if res < foc_tol * 1e-3 {
                    converged = true;
                    break;
                }
                let (haa, hbb, hab) = self.hessian(ra, rb);
                let (da, db) = match (active_a, active_b) {
                    (true, true) => {
                        let det = haa * hbb - hab * hab;
                        if det <= 0.0 {
                            (-ga / haa, -gb / hbb)
                        } else {
                            ((-ga * hbb + gb * hab) / det, (-gb * haa + ga * hab) / det)
                        }
                    }
                    (true, false) => (-ga / haa, 0.0),
                    (false, true) => (0.0, -gb / hbb),
                    (false, false) => unreachable!(),
                };
                let mut step = 1.0;
                let mut accepted = false;
                for _ in 0..50 {
                    let na = (ra + step * da).max(CONTROL_FLOOR);
                    let nb = (rb + step * db).max(CONTROL_FLOOR);
                    let nv = self.value(na, nb);
                    if nv <= value {
                        ra = na;
                        rb = nb;
                        value = nv;
                        accepted = true;
                        break;
                    }
                    step *= 0.5;
                }
                if !accepted {
                    break;
                }
            }
            if !converged {
                // coordinatewise bisection of the monotone gradients
                for _ in 0..200 {
                    if active_a {
                        ra = self.bisect_coordinate(true, rb)?;
                    }
                    if active_b {
                        rb = self.bisect_coordinate(false, ra)?;
                    }
                    let (ga, gb) = self.gradient(ra, rb);
                    if grad_norm(ga, gb, active_a, active_b) < foc_tol * 1e-2 {
                        break;
                    }
                }
            }
        }

        let (ga, gb) = self.gradient(ra, rb);
        let foc_residual = grad_norm(ga, gb, active_a, active_b);
        if foc_residual > foc_tol {
            return Err(Error::NoConvergence {
                what: "pointwise dual control minimization".into(),
                residual: foc_residual,
                iterations: 260,
                last: vec![ra, rb],
            });
        }
        Ok(DualControl {
            rho_a: ra,
            rho_b: rb,
            rho: self.rho(ra, rb),
            cost: self.value(ra, rb),
            foc_residual,
        })
    }

    /// Solves `∂F/∂ρ^i = 0` in one coordinate; the partial derivative is
    /// strictly increasing in its own coordinate.
    fn bisect_coordinate(&self, first: bool, other: f64) -> Result<f64> {
        let g = |x: f64| -> f64 {
            if first {
                self.gradient(x, other).0
            } else {
                self.gradient(other, x).1
            }
        };
        let mut lo = CONTROL_FLOOR;
        if g(lo) >= 0.0 {
            return Ok(lo);
        }
        let mut hi = 1.0;
        let mut expand = 0;
        while g(hi) < 0.0 {
            hi = hi * 2.0 + 1.0;
            expand += 1;
            if expand > 80 {
                return Err(Error::NoConvergence {
                    what: "bracketing the dual control root".into(),
                    residual: g(hi),
                    iterations: expand,
                    last: vec![hi],
                });
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 * (1.0 + hi.abs()) {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

fn grad_norm(ga: f64, gb: f64, active_a: bool, active_b: bool) -> f64 {
    let mut r: f64 = 0.0;
    if active_a {
        r = r.max(ga.abs());
    }
    if active_b {
        r = r.max(gb.abs());
    }
    r
}
