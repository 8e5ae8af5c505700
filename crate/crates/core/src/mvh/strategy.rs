use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mc::{mean_stderr, McEstimate};
use crate::model::claim::RestrictedClaim;
use crate::model::params::ModelParams;
use crate::model::simulate::{map_paths, SimConfig};
use crate::model::state::DefaultState;
use crate::model::wealth::{simulate_wealth_monitored, PathContext, Strategy};
use crate::mvh::coeffs::{coeffs, MarketNode, ThetaIntegrands, YIntegrands};
use crate::mvh::{BsdeFirstSolution, BsdeSecondSolution, BsdeThirdSolution};

/// The optimal quadratic-hedging cost `Θ₀ (x₀ − Y₀)² + ξ₀`, read at the
/// initial node (t = 0, spot = d0, no defaults).
pub fn mvh_value(
    x0: f64,
    first: &BsdeFirstSolution,
    second: &BsdeSecondSolution,
    third: &BsdeThirdSolution,
) -> f64 {
    let c = first.grid.center_index();
    let theta = first.theta0[0][c];
    let y = second.y0[0][c];
    let xi = third.xi0[0][c];
    theta * (x0 - y) * (x0 - y) + xi
}

/// The feedback hedge `π* = −(b (X − Y) + c)/a`, exposed as a [`Strategy`]
/// closure over the solved surfaces.
pub fn optimal_strategy_mvh<'a>(
    params: &'a ModelParams,
    claim: &'a RestrictedClaim,
    first: &'a BsdeFirstSolution,
    second: &'a BsdeSecondSolution,
) -> MvhStrategy<'a> {
    MvhStrategy { params, claim, first, second }
}

pub struct MvhStrategy<'a> {
    params: &'a ModelParams,
    claim: &'a RestrictedClaim,
    first: &'a BsdeFirstSolution,
    second: &'a BsdeSecondSolution,
}

/// Everything the feedback rule and the Monte Carlo identities need at one
/// predictable node.
#[derive(Debug, Clone, Copy)]
pub struct NodeBundle {
    pub node: MarketNode,
    pub th: ThetaIntegrands,
    pub yi: YIntegrands,
    pub y_val: f64,
    pub theta_big: f64,
}

impl MvhStrategy<'_> {
    pub fn node_bundle(
        &self,
        t: f64,
        spot: f64,
        state: DefaultState,
        ctx: &PathContext,
    ) -> Option<NodeBundle> {
        let regime = state.regime()?;
        let first = self.first;
        let second = self.second;
        let grid = &first.grid;
        let n = first.step_index(t);
        let y_log = spot.ln();
        let node = MarketNode::at(self.params, t, state);
        match regime {
            0 => Some(NodeBundle {
                node,
                th: ThetaIntegrands {
                    theta_a: grid.interp(&first.theta_a_rel[n], y_log),
                    theta_b: 0.0,
                    beta: grid.interp(&first.beta0[n], y_log),
                },
                yi: YIntegrands {
                    u_a: grid.interp(&second.u_a[n], y_log),
                    u_b: 0.0,
                    z: grid.interp(&second.z0[n], y_log),
                },
                y_val: grid.interp(&second.y0[n], y_log),
                theta_big: grid.interp(&first.theta0[n], y_log),
            }),
            1 => {
                let l = ctx.default_a.map_or(0.0, |e| e.time);
                let (j0, j1, w) = crate::mvh::slice_weights(&first.l1, l);
                let lerp2 = |s: &[Vec<Vec<f64>>]| -> f64 {
                    let v0 = grid.interp(&s[j0][n], y_log);
                    let v1 = grid.interp(&s[j1][n], y_log);
                    v0 * (1.0 - w) + v1 * w
                };
                Some(NodeBundle {
                    node,
                    th: ThetaIntegrands {
                        theta_a: 0.0,
                        theta_b: lerp2(&first.theta_b_rel),
                        beta: lerp2(&first.beta1),
                    },
                    yi: YIntegrands {
                        u_a: 0.0,
                        u_b: lerp2(&second.u_b),
                        z: lerp2(&second.z1),
                    },
                    y_val: second.y1_at(l, n, y_log),
                    theta_big: first.theta1_at(l, n, y_log),
                })
            }
            _ => {
                // after both defaults the claim is pinned; only the Brownian
                // channel remains
                let pinned = self.claim.f.eval(ctx.default_b?.pre_spot);
                Some(NodeBundle {
                    node,
                    th: ThetaIntegrands {
                        theta_a: 0.0,
                        theta_b: 0.0,
                        beta: grid.interp(&first.beta2[n], y_log),
                    },
                    yi: YIntegrands::default(),
                    y_val: pinned,
                    theta_big: grid.interp(&first.theta2[n], y_log),
                })
            }
        }
    }

    /// (a, b, c) and Y at a node; shared by the position rule and the tests.
    pub fn node_abc_y(
        &self,
        t: f64,
        spot: f64,
        state: DefaultState,
        ctx: &PathContext,
    ) -> Option<(f64, f64, f64, f64)> {
        let b = self.node_bundle(t, spot, state, ctx)?;
        let co = coeffs(&b.node, &b.th, &b.yi);
        if co.a <= 0.0 {
            return None;
        }
        Some((co.a, co.b, co.c, b.y_val))
    }
}

impl Strategy for MvhStrategy<'_> {
    fn position(
        &self,
        t: f64,
        wealth: f64,
        spot: f64,
        state: DefaultState,
        ctx: &PathContext,
    ) -> f64 {
        match self.node_abc_y(t, spot, state, ctx) {
            Some((a, b, c, y)) => -(b * (wealth - y) + c) / a,
            None => 0.0,
        }
    }
}

/// `E[J_t]` at one monitoring time.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CostMonitorPoint {
    pub t: f64,
    pub mean: f64,
    pub stderr: f64,
}

/// Sample statistics of the cost process `J_t = Θ_t (X_t − Y_t)² + ξ_t`
/// along simulated paths under a given strategy. Under the optimal strategy
/// `E[J_t]` is flat at `J_0`; under any admissible strategy it is
/// nondecreasing from `J_0` up to Monte Carlo and discretization slack.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostProcessReport {
    pub j0: f64,
    pub points: Vec<CostMonitorPoint>,
    pub n_paths: usize,
    pub seed: u64,
}

impl CostProcessReport {
    pub fn max_abs_deviation_sigmas(&self) -> f64 {
        self.points
            .iter()
            .map(|p| {
                if p.stderr > 0.0 {
                    (p.mean - self.j0).abs() / p.stderr
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max)
    }

    pub fn terminal(&self) -> &CostMonitorPoint {
        self.points.last().expect("at least one monitor")
    }

    /// The terminal mean is `E[(X_T − ψ)²]` as an estimate.
    pub fn terminal_estimate(&self) -> McEstimate {
        let p = self.terminal();
        McEstimate { mean: p.mean, stderr: p.stderr, n_paths: self.n_paths, seed: self.seed }
    }
}

fn time_lerp(times: &[f64], t: f64) -> (usize, usize, f64) {
    let n = times.len() - 1;
    let t_end = times[n];
    if t <= times[0] {
        return (0, 0, 0.0);
    }
    if t >= t_end {
        return (n, n, 0.0);
    }
    let s = t / t_end * n as f64;
    let j = (s.floor() as usize).min(n - 1);
    (j, j + 1, s - j as f64)
}

/// Evaluates `J_t` surfaces with linear interpolation in time (exact at the
/// solver's grid times), so monitoring times need not align with the solver
/// grid.
#[allow(clippy::too_many_arguments)]
fn j_value(
    claim: &RestrictedClaim,
    first: &BsdeFirstSolution,
    second: &BsdeSecondSolution,
    third: &BsdeThirdSolution,
    t: f64,
    x: f64,
    spot: f64,
    state: DefaultState,
    ctx: &PathContext,
) -> f64 {
    let (n0, n1, w) = time_lerp(&first.times, t);
    let y_log = spot.ln();
    let regime = state.regime().expect("ordered-mode state");
    let grid = &first.grid;
    let lerp_t = |s0: f64, s1: f64| s0 * (1.0 - w) + s1 * w;
    let (theta, y_val, xi) = match regime {
        0 => (
            lerp_t(grid.interp(&first.theta0[n0], y_log), grid.interp(&first.theta0[n1], y_log)),
            lerp_t(grid.interp(&second.y0[n0], y_log), grid.interp(&second.y0[n1], y_log)),
            lerp_t(grid.interp(&third.xi0[n0], y_log), grid.interp(&third.xi0[n1], y_log)),
        ),
        1 => {
            let l = ctx.default_a.map_or(0.0, |e| e.time);
            (
                lerp_t(first.theta1_at(l, n0, y_log), first.theta1_at(l, n1, y_log)),
                lerp_t(second.y1_at(l, n0, y_log), second.y1_at(l, n1, y_log)),
                lerp_t(third.xi1_at(l, n0, y_log), third.xi1_at(l, n1, y_log)),
            )
        }
        _ => {
            let pre = ctx.default_b.expect("regime 2 reached through tauB").pre_spot;
            (
                lerp_t(grid.interp(&first.theta2[n0], y_log), grid.interp(&first.theta2[n1], y_log)),
                claim.f.eval(pre),
                0.0,
            )
        }
    };
    theta * (x - y_val) * (x - y_val) + xi
}

/// Simulates the cost process under `strategy` and reports `E[J_t]` with
/// standard errors at the requested path-grid steps.
#[allow(clippy::too_many_arguments)]
pub fn cost_process_check(
    params: &ModelParams,
    sim: &SimConfig,
    x0: f64,
    claim: &RestrictedClaim,
    first: &BsdeFirstSolution,
    second: &BsdeSecondSolution,
    third: &BsdeThirdSolution,
    strategy: &dyn Strategy,
    monitor_steps: &[usize],
) -> Result<CostProcessReport> {
    let n = sim.n_steps;
    let monitors: Vec<f64> = monitor_steps
        .iter()
        .map(|&k| {
            if k >= n {
                params.horizon
            } else {
                params.horizon * k as f64 / n as f64
            }
        })
        .collect();
    let per_path: Vec<Vec<f64>> = map_paths(params, sim, |path| {
        let (_, samples) = simulate_wealth_monitored(path, strategy, x0, &monitors);
        debug_assert_eq!(samples.len(), monitors.len());
        Ok(samples
            .iter()
            .zip(monitor_steps)
            .map(|((t, x, ctx), &k)| {
                let idx = k.min(n);
                j_value(
                    claim,
                    first,
                    second,
                    third,
                    *t,
                    *x,
                    path.bond[idx],
                    path.states[idx],
                    ctx,
                )
            })
            .collect())
    })?;

    let j0 = mvh_value(x0, first, second, third);
    let mut points = Vec::with_capacity(monitors.len());
    let mut column = vec![0.0; per_path.len()];
    for (j, &t) in monitors.iter().enumerate() {
        for (i, row) in per_path.iter().enumerate() {
            column[i] = row[j];
        }
        let (mean, stderr) = mean_stderr(&column);
        points.push(CostMonitorPoint { t, mean, stderr });
    }
    Ok(CostProcessReport { j0, points, n_paths: sim.n_paths, seed: sim.seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::model::claim::PayoffFn;
    use crate::model::coeff::StateCoeff;
    use crate::mvh::theta::{solve_theta_split, ThetaTier};
    use crate::mvh::{solve_xi, solve_y_split, Tolerances};

    #[test]
    fn value_is_quadratic_in_the_initial_gap() {
        // Θ₀=1, Y₀=0, ξ₀=0, x0=2 → 4, using a driftless model
        let params = ModelParams {
            mu: StateCoeff::constant(0.0),
            sigma: StateCoeff::constant(0.2),
            sigma_a: StateCoeff::constant(-0.4),
            sigma_b: StateCoeff::constant(-0.3),
            lambda_a: StateCoeff::per_state(0.2, 0.0, 0.0, 0.0),
            lambda_b: StateCoeff::per_state(0.0, 0.1, 0.0, 0.0),
            horizon: 1.0,
            ordered_defaults: true,
        }
        .validate()
        .unwrap();
        let spec = GridSpec { n_time: 40, n_space: 31, ..Default::default() };
        let first =
            solve_theta_split(&params, &spec, 1.0, ThetaTier::Auto, &Tolerances::default())
                .unwrap();
        let claim = RestrictedClaim { g: PayoffFn::ZERO, f: PayoffFn::ZERO, bound: 0.0 };
        let second = solve_y_split(&params, &claim, &first, true).unwrap();
        let third = solve_xi(&params, &first, &second).unwrap();
        assert!((mvh_value(2.0, &first, &second, &third) - 4.0).abs() < 1e-12);

        // μ ≡ 0, ψ ≡ 0 → π* ≡ 0
        let strat = optimal_strategy_mvh(&params, &claim, &first, &second);
        let ctx = PathContext::default();
        for (t, x, spot) in [(0.0, 2.0, 1.0), (0.5, -1.0, 1.3), (0.9, 0.3, 0.7)] {
            let pi = strat.position(t, x, spot, DefaultState::NONE, &ctx);
            assert!(pi.abs() < 1e-12, "pi = {pi}");
        }
    }
}
