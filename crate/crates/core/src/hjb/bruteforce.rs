use crate::error::{Error, Result};
use crate::model::claim::RestrictedClaim;
use crate::model::params::ModelParams;
use crate::model::state::DefaultState;

/// Desk-scale oracle for the dual value: a discrete-time tree with trinomial
/// diffusion and per-period default events, minimized exhaustively over a
/// control grid at every node by backward induction.
///
/// This route shares nothing with the PDE path: the entropy is the exact
/// discrete relative entropy of the tree's transition kernels (event part
/// plus diffusion part), the claim contributions are exact on the tree, and
/// the minimization is a plain grid search. The tree discretizes the same
/// control problem, so agreement with the PDE holds to the documented coarse
/// tolerance only.
///
/// Constraints: `n_periods ≤ 3` (the tree does not recombine across default
/// layers) and coefficients constant per state.
pub fn dual_value_bruteforce(
    params: &ModelParams,
    claim: &RestrictedClaim,
    delta: f64,
    d0: f64,
    n_periods: usize,
    n_controls: usize,
) -> Result<f64> {
    if n_periods == 0 || n_periods > 3 {
        return Err(Error::Unsupported(format!(
            "size guard exceeded: n_periods must be in 1..=3, got {n_periods}"
        )));
    }
    if n_controls < 8 || n_controls > 400 {
        return Err(Error::Unsupported(format!(
            "control grid must have 8..=400 points per axis, got {n_controls}"
        )));
    }
    if !params.is_constant() {
        return Err(Error::Unsupported(
            "the tree oracle requires coefficients constant per state".into(),
        ));
    }
    params.require_positive_sigma(&DefaultState::ALL)?;
    claim.validate()?;

    let dt = params.horizon / n_periods as f64;
    // control grid over (−0.99, 5], with the do-nothing control always present
    let mut controls: Vec<f64> = (0..n_controls)
        .map(|i| -0.99 + (5.0 + 0.99) * i as f64 / (n_controls - 1) as f64)
        .collect();
    controls.push(0.0);
    controls.sort_by(f64::total_cmp);
    let tree = Tree { params, claim, delta, dt, n_periods, controls };
    Ok(tree.value(0, d0, DefaultState::NONE))
}

struct Tree<'a> {
    params: &'a ModelParams,
    claim: &'a RestrictedClaim,
    delta: f64,
    dt: f64,
    n_periods: usize,
    controls: Vec<f64>,
}

#[derive(Clone, Copy)]
struct EventBranch {
    p: f64,
    q: f64,
    /// −δ·recovery paid when the branch is a B default, else 0.
    payout: f64,
    post_state: DefaultState,
    post_spot: f64,
}

impl Tree<'_> {
    /// Minimal expected remaining cost from (period k, spot, state).
    fn value(&self, k: usize, spot: f64, state: DefaultState) -> f64 {
        if k == self.n_periods {
            return if state.h_b { 0.0 } else { -self.delta * self.claim.g.eval(spot) };
        }
        let p = self.params;
        let t = 0.0; // constant coefficients
        let (la, lb) = p.intensities(t, state);
        let active_a = la > 0.0;
        let active_b = lb > 0.0;
        let scan_a: &[f64] = if active_a { &self.controls } else { &[0.0] };
        let scan_b: &[f64] = if active_b { &self.controls } else { &[0.0] };

        let mut best = f64::INFINITY;
        for &ra in scan_a {
            for &rb in scan_b {
                if let Some(v) = self.candidate_value(k, spot, state, ra, rb) {
                    best = best.min(v);
                }
            }
        }
        best
    }

    /// Expected cost of one control pair at a node: event-kernel relative
    /// entropy plus, per event, the diffusion-kernel relative entropy and
    /// the successor value. `None` when the pair is not representable on the
    /// tree (invalid branch probabilities).
    fn candidate_value(
        &self,
        k: usize,
        spot: f64,
        state: DefaultState,
        ra: f64,
        rb: f64,
    ) -> Option<f64> {
        let p = self.params;
        let t = 0.0;
        let (la, lb) = p.intensities(t, state);
        let mu = p.mu.eval(t, state);
        let sigma = p.sigma.eval(t, state);
        let rho = -(mu + ra * p.sigma_a.eval(t, state) * la + rb * p.sigma_b.eval(t, state) * lb)
            / sigma;

        let branches = self.event_branches(spot, state, ra, rb)?;
        let mut total = 0.0;
        // event-kernel entropy
        for b in &branches {
            if b.q > 0.0 {
                if b.p <= 0.0 {
                    return None;
                }
                total += b.q * (b.q / b.p).ln();
            }
        }
        // per event: payout, diffusion entropy in the post-event state, and
        // the successor values over the trinomial moves
        for b in &branches {
            if b.q == 0.0 {
                continue;
            }
            let mut contribution = b.payout;
            let post_sigma = p.sigma.eval(t, b.post_state);
            let m_p = p.compensated_drift(t, b.post_state) - 0.5 * post_sigma * post_sigma;
            let m_q = m_p + post_sigma * rho;
            let h_y = post_sigma * (3.0 * self.dt).sqrt();
            let tri_p = trinomial(m_p, post_sigma, self.dt, h_y)?;
            let tri_q = trinomial(m_q, post_sigma, self.dt, h_y)?;
            for i in 0..3 {
                if tri_q[i] > 0.0 {
                    if tri_p[i] <= 0.0 {
                        return None;
                    }
                    contribution += tri_q[i] * (tri_q[i] / tri_p[i]).ln();
                }
            }
            let moves = [h_y, 0.0, -h_y];
            for i in 0..3 {
                if tri_q[i] > 0.0 {
                    contribution += tri_q[i]
                        * self.value(k + 1, b.post_spot * moves[i].exp(), b.post_state);
                }
            }
            total += b.q * contribution;
        }
        Some(total)
    }

    /// Default-event kernel over one period with exact competing-risk
    /// splitting for constant intensities, under the historical and the
    /// controlled intensities.
    fn event_branches(
        &self,
        spot: f64,
        state: DefaultState,
        ra: f64,
        rb: f64,
    ) -> Option<[EventBranch; 3]> {
        let p = self.params;
        let t = 0.0;
        let (la, lb) = p.intensities(t, state);
        let qa = (1.0 + ra) * la;
        let qb = (1.0 + rb) * lb;
        if qa < 0.0 || qb < 0.0 {
            return None;
        }
        let split = |xa: f64, xb: f64| -> (f64, f64, f64) {
            let tot = xa + xb;
            if tot == 0.0 {
                return (1.0, 0.0, 0.0);
            }
            let none = (-tot * self.dt).exp();
            ((none), xa / tot * (1.0 - none), xb / tot * (1.0 - none))
        };
        let (p_none, p_a, p_b) = split(la, lb);
        let (q_none, q_a, q_b) = split(qa, qb);
        let spot_a = spot * (1.0 + p.sigma_a.eval(t, state));
        let spot_b = spot * (1.0 + p.sigma_b.eval(t, state));
        Some([
            EventBranch {
                p: p_none,
                q: q_none,
                payout: 0.0,
                post_state: state,
                post_spot: spot,
            },
            EventBranch {
                p: p_a,
                q: q_a,
                payout: 0.0,
                post_state: state.after_a(),
                post_spot: spot_a,
            },
            EventBranch {
                p: p_b,
                q: q_b,
                payout: -self.delta * self.claim.f.eval(spot),
                post_state: state.after_b(),
                post_spot: spot_b,
            },
        ])
    }
}

/// Trinomial kernel on log-moves `{+h, 0, −h}` matching mean `m·dt` and
/// variance `σ²·dt`; `None` when the drift shift leaves the simplex.
fn trinomial(m: f64, sigma: f64, dt: f64, h: f64) -> Option<[f64; 3]> {
    if sigma <= 0.0 || h <= 0.0 {
        return None;
    }
    let shift = m * dt / (2.0 * h);
    let pu = 1.0 / 6.0 + shift;
    let pd = 1.0 / 6.0 - shift;
    if pu < 0.0 || pd < 0.0 {
        return None;
    }
    Some([pu, 2.0 / 3.0, pd])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::claim::PayoffFn;
    use crate::model::coeff::StateCoeff;

    fn constant_params(mu: f64) -> ModelParams {
        ModelParams {
            mu: StateCoeff::constant(mu),
            sigma: StateCoeff::constant(0.2),
            sigma_a: StateCoeff::constant(-0.4),
            sigma_b: StateCoeff::constant(-0.3),
            lambda_a: StateCoeff::per_state(0.2, 0.0, 0.2, 0.0),
            lambda_b: StateCoeff::per_state(0.1, 0.1, 0.0, 0.0),
            horizon: 1.0,
            ordered_defaults: false,
        }
        .validate()
        .unwrap()
    }

    #[test]
    fn driftless_zero_claim_has_zero_dual_value() {
        let params = constant_params(0.0);
        let claim = RestrictedClaim { g: PayoffFn::ZERO, f: PayoffFn::ZERO, bound: 0.0 };
        let v = dual_value_bruteforce(&params, &claim, 1.0, 1.0, 2, 61).unwrap();
        assert!(v.abs() < 1e-12, "v = {v}");
    }

    #[test]
    fn cash_claim_shifts_the_value_by_delta_k() {
        let params = constant_params(0.05);
        let delta = 1.3;
        let k = 0.4;
        let zero = RestrictedClaim { g: PayoffFn::ZERO, f: PayoffFn::ZERO, bound: 0.0 };
        let cash = RestrictedClaim {
            g: PayoffFn::constant(k),
            f: PayoffFn::constant(k),
            bound: k,
        };
        let v0 = dual_value_bruteforce(&params, &zero, delta, 1.0, 2, 61).unwrap();
        let vk = dual_value_bruteforce(&params, &cash, delta, 1.0, 2, 61).unwrap();
        assert!(
            (vk - (v0 - delta * k)).abs() < 1e-9,
            "v0 = {v0}, vk = {vk}"
        );
    }

    #[test]
    fn size_guard_rejects_large_trees() {
        let params = constant_params(0.0);
        let claim = RestrictedClaim { g: PayoffFn::ZERO, f: PayoffFn::ZERO, bound: 0.0 };
        assert!(dual_value_bruteforce(&params, &claim, 1.0, 1.0, 4, 61).is_err());
    }
}
