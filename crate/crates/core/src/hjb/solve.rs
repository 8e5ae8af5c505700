use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, LogSpotGrid, TimeGrid};
use crate::hjb::cost::NodeObjective;
use crate::hjb::HjbSolution;
use crate::model::claim::RestrictedClaim;
use crate::model::params::ModelParams;
use crate::model::state::DefaultState;
use crate::model::wealth::StrategyField;
use crate::mvh::{MarketNode, Tolerances};

/// Solves the dual HJB system backward from `V(T, y, h) = −δ g(e^y)(1−h^B)`.
///
/// States are swept in reverse dependency order — (1,1), then (1,0) and
/// (0,1), then (0,0) — because the jump coupling points to post-default
/// surfaces. Each step minimizes the control Hamiltonian explicitly at every
/// node (in parallel) and then takes one implicit diffusion step in
/// log-spot.
pub fn solve_hjb(
    params: &ModelParams,
    claim: &RestrictedClaim,
    delta: f64,
    spec: &GridSpec,
    d0: f64,
    tol: &Tolerances,
) -> Result<HjbSolution> {
    claim.validate()?;
    spec.validate()?;
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidParams(format!("risk aversion must be > 0, got {delta}")));
    }
    params.require_positive_sigma(&DefaultState::ALL)?;

    let tg = TimeGrid::new(params.horizon, spec.n_time);
    let grid = LogSpotGrid::centered(d0.ln(), spec.resolve_halfwidth(params), spec.n_space);
    let n_steps = tg.n_steps();
    let n_nodes = grid.n_nodes();

    let mut sol = HjbSolution {
        times: tg.times.clone(),
        grid: grid.clone(),
        delta,
        v: std::array::from_fn(|_| vec![vec![0.0; n_nodes]; n_steps + 1]),
        rho_a: std::array::from_fn(|_| vec![vec![0.0; n_nodes]; n_steps]),
        rho_b: std::array::from_fn(|_| vec![vec![0.0; n_nodes]; n_steps]),
        rho: std::array::from_fn(|_| vec![vec![0.0; n_nodes]; n_steps]),
        foc_residual_max: 0.0,
    };

    // terminal condition per state
    for state in DefaultState::ALL {
        let si = state.index();
        let hb = state.h_b;
        for (j, y) in grid.nodes().enumerate() {
            sol.v[si][n_steps][j] =
                if hb { 0.0 } else { -delta * claim.g.eval(y.exp()) };
        }
    }

    // reverse dependency order: both-defaulted first, no-default last
    for state in [
        DefaultState::BOTH,
        DefaultState::A_ONLY,
        DefaultState::B_ONLY,
        DefaultState::NONE,
    ] {
        sweep_state(params, claim, delta, &tg, &grid, state, tol, &mut sol)?;
    }
    Ok(sol)
}

#[allow(clippy::too_many_arguments)]
fn sweep_state(
    params: &ModelParams,
    claim: &RestrictedClaim,
    delta: f64,
    tg: &TimeGrid,
    grid: &LogSpotGrid,
    state: DefaultState,
    tol: &Tolerances,
    sol: &mut HjbSolution,
) -> Result<()> {
    let si = state.index();
    let n_steps = tg.n_steps();
    let n_nodes = grid.n_nodes();
    let post_a = state.after_a().index();
    let post_b = state.after_b().index();

    for n in (0..n_steps).rev() {
        let t0 = tg.times[n];
        let t1 = tg.times[n + 1];
        let dt = t1 - t0;
        let node_t = t0; // coefficients evaluated at the step's left end
        let market = MarketNode::at(params, node_t, state);
        let shift_a = (1.0 + market.sigma_a).ln();
        let shift_b = (1.0 + market.sigma_b).ln();

        let v_here = &sol.v[si][n + 1];
        let dv = grid.d_dy(v_here);
        let v_post_a = &sol.v[post_a][n + 1];
        let v_post_b = &sol.v[post_b][n + 1];

        struct NodeOut {
            cost: f64,
            rho_a: f64,
            rho_b: f64,
            rho: f64,
            residual: f64,
            q_rate: f64,
        }
        let results: Vec<NodeOut> = (0..n_nodes)
            .into_par_iter()
            .map(|j| -> Result<NodeOut> {
                let y = grid.node(j);
                let c_a = if market.lambda_a > 0.0 {
                    grid.interp(v_post_a, y + shift_a) - v_here[j] - market.sigma_a * dv[j]
                } else {
                    0.0
                };
                let c_b = if market.lambda_b > 0.0 {
                    grid.interp(v_post_b, y + shift_b) - v_here[j] - market.sigma_b * dv[j]
                } else {
                    0.0
                };
                let obj = NodeObjective {
                    node: market,
                    c_a,
                    c_b,
                    delta_f: delta * claim.f.eval(y.exp()),
                };
                let warm = if n + 1 < n_steps {
                    Some((sol.rho_a[si][n + 1][j], sol.rho_b[si][n + 1][j]))
                } else {
                    None
                };
                let c = obj.minimize(tol.foc, warm)?;
                let q_rate = (1.0 + c.rho_a) * market.lambda_a
                    + (1.0 + c.rho_b) * market.lambda_b;
                Ok(NodeOut {
                    cost: c.cost,
                    rho_a: c.rho_a,
                    rho_b: c.rho_b,
                    rho: c.rho,
                    residual: c.foc_residual,
                    q_rate,
                })
            })
            .collect::<Result<_>>()?;

        // stability of the explicit default coupling
        let max_q = results.iter().map(|r| r.q_rate).fold(0.0f64, f64::max);
        if dt * max_q > 1.0 {
            return Err(Error::Unsupported(format!(
                "time grid too coarse for the explicit default coupling: dt·(1+ρ)λ = {:.3} > 1; increase grids.n_time",
                dt * max_q
            )));
        }

        let mut rhs = vec![0.0; n_nodes];
        for (j, r) in results.iter().enumerate() {
            rhs[j] = v_here[j] / dt + r.cost;
            sol.rho_a[si][n][j] = r.rho_a;
            sol.rho_b[si][n][j] = r.rho_b;
            sol.rho[si][n][j] = r.rho;
            sol.foc_residual_max = sol.foc_residual_max.max(r.residual);
        }
        let diff = 0.5 * market.sigma * market.sigma;
        let conv = vec![-diff; n_nodes]; // the −½σ²∂_y of the log transform
        let reaction = vec![0.0; n_nodes];
        sol.v[si][n] = crate::mvh::implicit_step(grid, dt, diff, &conv, &reaction, &rhs);
    }
    Ok(())
}

/// The optimal hedge of the primal problem:
/// `π*(t, x, h) = −(1/δ)(∂V/∂x + ρ̄/(xσ))`, tabulated as a strategy field
/// (piecewise-constant in time, linear in log-spot).
pub fn optimal_strategy_hjb(sol: &HjbSolution, params: &ModelParams) -> StrategyField {
    let n_steps = sol.n_steps();
    let mut field = StrategyField::zero(sol.times.clone(), sol.grid.clone());
    for state in DefaultState::ALL {
        let si = state.index();
        for n in 0..n_steps {
            let t = sol.times[n];
            let sigma = params.sigma.eval(t, state);
            let dv = sol.grid.d_dy(&sol.v[si][n]);
            for (j, y) in sol.grid.nodes().enumerate() {
                let x = y.exp();
                field.values[si][n][j] =
                    -(dv[j] + sol.rho[si][n][j] / sigma) / (sol.delta * x);
            }
        }
    }
    field
}
