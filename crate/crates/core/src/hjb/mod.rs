//! Exponential-utility indifference pricing in the Markov tier.
//!
//! The dual problem minimizes `E^Q[ln Z_T − δψ]` over risk-neutral measures
//! parameterized by Girsanov controls `(ρ^A, ρ^B) ∈ (−1,∞)²` with the
//! Brownian control eliminated through the bond martingale constraint. Its
//! value function solves one HJB equation per default state, coupled through
//! the post-default surfaces; the indifference price of a claim is
//! `p = (V^0 − V^ψ)/δ` and the optimal hedge reads off the spatial
//! derivative and the optimal Brownian control.

mod bruteforce;
mod cost;
mod price;
mod solve;

use std::io::Write;

pub use bruteforce::dual_value_bruteforce;
pub use cost::{running_cost_j, DualControl, NodeObjective};
pub use price::{indifference_price, mc_price_bisection, PriceReport};
pub use solve::{optimal_strategy_hjb, solve_hjb};

use crate::error::Result;
use crate::grid::LogSpotGrid;
use crate::mc::ControlField;
use crate::model::params::{solve_rho, ModelParams};
use crate::model::state::DefaultState;
use crate::model::wealth::PathContext;

/// Solved dual value surfaces for the four default states, with the optimal
/// controls stored per time step. Interpolation is linear in log-spot and
/// piecewise-constant in time over each step.
#[derive(Debug, Clone)]
pub struct HjbSolution {
    pub times: Vec<f64>,
    pub grid: LogSpotGrid,
    pub delta: f64,
    /// `v[state][time][node]`, in entropy units.
    pub v: [Vec<Vec<f64>>; 4],
    /// Optimal controls on each step: `[state][step][node]`.
    pub rho_a: [Vec<Vec<f64>>; 4],
    pub rho_b: [Vec<Vec<f64>>; 4],
    pub rho: [Vec<Vec<f64>>; 4],
    /// Largest first-order-condition residual accepted during the sweep.
    pub foc_residual_max: f64,
}

impl HjbSolution {
    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn step_index(&self, t: f64) -> usize {
        let n = self.n_steps();
        let t_end = self.times[n];
        if t >= t_end {
            return n - 1;
        }
        ((t / t_end * n as f64).floor() as usize).min(n - 1)
    }

    /// Dual value at (t index, log-spot, state).
    pub fn value_at(&self, state: DefaultState, n: usize, y: f64) -> f64 {
        self.grid.interp(&self.v[state.index()][n], y)
    }

    /// Initial dual value at the centered spot in state (0,0).
    pub fn value0(&self) -> f64 {
        self.v[0][0][self.grid.center_index()]
    }
}

/// The solved optimal controls as a predictable field: jump controls are
/// interpolated in log-spot and the Brownian control is re-solved from the
/// martingale constraint so the triple satisfies it exactly.
pub struct HjbControlField<'a> {
    pub params: &'a ModelParams,
    pub solution: &'a HjbSolution,
}

impl ControlField for HjbControlField<'_> {
    fn controls(
        &self,
        t: f64,
        spot: f64,
        state: DefaultState,
        _ctx: &PathContext,
    ) -> Option<(f64, f64, f64)> {
        let s = self.solution;
        let n = s.step_index(t);
        let y = spot.ln();
        let si = state.index();
        let ra = s.grid.interp(&s.rho_a[si][n], y);
        let rb = s.grid.interp(&s.rho_b[si][n], y);
        let rho = solve_rho(self.params, t, state, ra, rb).ok()?;
        Some((rho, ra, rb))
    }
}

/// CSV export with columns
/// `state,t,x,V,dVdx,rhoA_opt,rhoB_opt,rho_opt,pi_star`. Controls and the
/// hedge on the row of time `t` apply to the step starting at `t` (the last
/// row repeats the final step's controls).
pub fn write_hjb_csv<W: Write>(
    params: &ModelParams,
    solution: &HjbSolution,
    out: &mut W,
) -> Result<()> {
    writeln!(out, "state,t,x,V,dVdx,rhoA_opt,rhoB_opt,rho_opt,pi_star")?;
    let field = optimal_strategy_hjb(solution, params);
    let n_steps = solution.n_steps();
    for state in DefaultState::ALL {
        let si = state.index();
        for (n, &t) in solution.times.iter().enumerate() {
            let step = n.min(n_steps - 1);
            let dv = solution.grid.d_dy(&solution.v[si][n]);
            for (j, y) in solution.grid.nodes().enumerate() {
                let x = y.exp();
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{}",
                    state.label(),
                    t,
                    x,
                    solution.v[si][n][j],
                    dv[j] / x,
                    solution.rho_a[si][step][j],
                    solution.rho_b[si][step][j],
                    solution.rho[si][step][j],
                    field.values[si][step][j],
                )?;
            }
        }
    }
    Ok(())
}
