//! Mean-variance hedging via the triple backward-equation system.
//!
//! The quadratic cost of an admissible strategy decomposes as
//! `J_t = Θ_t (X_t − Y_t)² + ξ_t`, where
//!
//! * Θ solves a quadratic BSDE with driver `g¹ = −b²/a` and terminal value 1,
//! * Y solves a linear BSDE with driver `g² = bc/a + u` and terminal value ψ,
//! * ξ solves a linear BSDE with source `g³ = Θ(v − c²/a)` and terminal 0,
//!
//! with the auxiliary processes of [`coeffs`]. Defaults are ordered
//! (A before B), so the default state walks the chain 00 → 10 → 11, and each
//! backward equation splits into one continuous equation per regime,
//! recombined at the default times through the jump integrands
//! `θ̄^A_t = Θ¹_t(t) − Θ⁰_t` and `θ̄^B_t = Θ²_t(τ^A, t) − Θ¹_t(τ^A)`.
//!
//! The optimal position is the feedback rule `π* = −(b(X−Y) + c)/a` and the
//! optimal cost is `Θ₀ (x₀ − Y₀)² + ξ₀`.

pub mod coeffs;
mod strategy;
mod theta;
mod xi;
mod y;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use coeffs::{coeffs, driver_g1, driver_g2, driver_g3, MarketNode, ThetaIntegrands, YIntegrands};
pub use strategy::{
    cost_process_check, mvh_value, optimal_strategy_mvh, CostMonitorPoint, CostProcessReport,
    MvhStrategy, NodeBundle,
};
pub use theta::{solve_theta_split, ThetaTier};
pub(crate) use theta::implicit_step;
pub use xi::solve_xi;
pub use y::solve_y_split;

use crate::error::Result;
use crate::grid::LogSpotGrid;
use crate::model::state::DefaultState;

/// Numeric tolerances shared by the solvers.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Tolerances {
    /// First-order-condition residual accepted by the HJB pointwise
    /// minimizer.
    pub foc: f64,
    /// Sup-norm update threshold of the frozen-coefficient iteration in the
    /// quadratic-driver PDE step.
    pub picard: f64,
    /// Declared grid-halving convergence tolerance.
    pub convergence: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { foc: 1e-8, picard: 1e-8, convergence: 5e-3 }
    }
}

/// Hard floor below which a Θ solve is declared failed (the positivity
/// constraint of the first backward equation).
pub const THETA_FLOOR: f64 = 1e-12;

/// Per-regime surfaces of the first backward equation (Θ and its
/// integrands). Regime 1 carries one slice per regime-entry time `l₁`; under
/// the supported coefficient family the slices coincide, and the entry-time
/// dependence is interpolated linearly across them.
#[derive(Debug, Clone)]
pub struct BsdeFirstSolution {
    pub times: Vec<f64>,
    pub grid: LogSpotGrid,
    /// Regime-1 entry times of the slices (singleton when `l1_grid = 1`).
    pub l1: Vec<f64>,
    /// `[time][node]`
    pub theta0: Vec<Vec<f64>>,
    /// `[slice][time][node]`
    pub theta1: Vec<Vec<Vec<f64>>>,
    pub theta2: Vec<Vec<f64>>,
    /// Relative Brownian integrands β = β̄/Θ (zero in the ODE tier).
    pub beta0: Vec<Vec<f64>>,
    pub beta1: Vec<Vec<Vec<f64>>>,
    pub beta2: Vec<Vec<f64>>,
    /// Relative jump integrand θ^A on regime 0.
    pub theta_a_rel: Vec<Vec<f64>>,
    /// Relative jump integrand θ^B on regime 1, per slice.
    pub theta_b_rel: Vec<Vec<Vec<f64>>>,
    /// Grid minimum of Θ across regimes (the achieved positivity floor).
    pub delta_min: f64,
    pub tier: ThetaTier,
}

impl BsdeFirstSolution {
    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    /// Index of the time step containing `t` (left-closed steps; T maps to
    /// the last row).
    pub fn step_index(&self, t: f64) -> usize {
        let n = self.n_steps();
        let t_end = self.times[n];
        if t >= t_end {
            return n;
        }
        ((t / t_end * n as f64).floor() as usize).min(n)
    }

    /// Θ¹ with entry time `l`, evaluated at time index `n` and log-spot `y`.
    pub fn theta1_at(&self, l: f64, n: usize, y: f64) -> f64 {
        let (j0, j1, w) = slice_weights(&self.l1, l);
        let v0 = self.grid.interp(&self.theta1[j0][n], y);
        let v1 = self.grid.interp(&self.theta1[j1][n], y);
        v0 * (1.0 - w) + v1 * w
    }

    /// The recombination diagonal Θ¹_t(t): the regime is entered right now.
    pub fn theta1_diag(&self, n: usize, y: f64) -> f64 {
        self.theta1_at(self.times[n], n, y)
    }

    pub fn theta_at(&self, state: DefaultState, l1: f64, n: usize, y: f64) -> f64 {
        match state.regime() {
            Some(0) => self.grid.interp(&self.theta0[n], y),
            Some(1) => self.theta1_at(l1, n, y),
            Some(2) => self.grid.interp(&self.theta2[n], y),
            _ => f64::NAN,
        }
    }

    /// Market data and Θ-integrands at a predictable node, for consumers
    /// that need only the first solution (density fields, invariant checks).
    pub fn integrands_at(
        &self,
        params: &crate::model::params::ModelParams,
        t: f64,
        spot: f64,
        state: DefaultState,
        l1_entry: f64,
    ) -> Option<(coeffs::MarketNode, coeffs::ThetaIntegrands)> {
        let regime = state.regime()?;
        let n = self.step_index(t);
        let y = spot.ln();
        let node = coeffs::MarketNode::at(params, t, state);
        let th = match regime {
            0 => coeffs::ThetaIntegrands {
                theta_a: self.grid.interp(&self.theta_a_rel[n], y),
                theta_b: 0.0,
                beta: self.grid.interp(&self.beta0[n], y),
            },
            1 => {
                let (j0, j1, w) = slice_weights(&self.l1, l1_entry);
                let lerp2 = |s: &[Vec<Vec<f64>>]| -> f64 {
                    let v0 = self.grid.interp(&s[j0][n], y);
                    let v1 = self.grid.interp(&s[j1][n], y);
                    v0 * (1.0 - w) + v1 * w
                };
                coeffs::ThetaIntegrands {
                    theta_a: 0.0,
                    theta_b: lerp2(&self.theta_b_rel),
                    beta: lerp2(&self.beta1),
                }
            }
            _ => coeffs::ThetaIntegrands {
                theta_a: 0.0,
                theta_b: 0.0,
                beta: self.grid.interp(&self.beta2[n], y),
            },
        };
        Some((node, th))
    }
}

pub(crate) fn slice_weights(l1: &[f64], l: f64) -> (usize, usize, f64) {
    let m = l1.len();
    if m == 1 || l <= l1[0] {
        return (0, 0, 0.0);
    }
    if l >= l1[m - 1] {
        return (m - 1, m - 1, 0.0);
    }
    let mut j = 0;
    while j + 1 < m && l1[j + 1] < l {
        j += 1;
    }
    let w = (l - l1[j]) / (l1[j + 1] - l1[j]);
    (j, j + 1, w)
}

/// Per-regime surfaces of the second backward equation (the price Y and its
/// integrands). After τ^B the claim is pinned: the regime-2 values are keyed
/// by the pre-jump log-spot at τ^B and constant in time.
#[derive(Debug, Clone)]
pub struct BsdeSecondSolution {
    pub times: Vec<f64>,
    pub grid: LogSpotGrid,
    pub l1: Vec<f64>,
    pub y0: Vec<Vec<f64>>,
    pub y1: Vec<Vec<Vec<f64>>>,
    /// Y after both defaults, as a function of the pre-jump spot at τ^B.
    pub y2_of_prespot: Vec<f64>,
    pub z0: Vec<Vec<f64>>,
    pub z1: Vec<Vec<Vec<f64>>>,
    /// Jump integrand U^A on regime 0.
    pub u_a: Vec<Vec<f64>>,
    /// Jump integrand U^B on regime 1, per slice.
    pub u_b: Vec<Vec<Vec<f64>>>,
    /// Claim bound M used for the |Y| check.
    pub claim_bound: f64,
    /// The coarse a-priori bound `2(1/δ_min + M²)` recorded for reporting.
    pub remark_bound: f64,
}

impl BsdeSecondSolution {
    pub fn y1_at(&self, l: f64, n: usize, y: f64) -> f64 {
        let (j0, j1, w) = slice_weights(&self.l1, l);
        let v0 = self.grid.interp(&self.y1[j0][n], y);
        let v1 = self.grid.interp(&self.y1[j1][n], y);
        v0 * (1.0 - w) + v1 * w
    }

    pub fn y1_diag(&self, n: usize, y: f64) -> f64 {
        self.y1_at(self.times[n], n, y)
    }
}

/// Per-regime surfaces of the tracking error ξ (ξ ≡ 0 after both defaults).
#[derive(Debug, Clone)]
pub struct BsdeThirdSolution {
    pub times: Vec<f64>,
    pub grid: LogSpotGrid,
    pub l1: Vec<f64>,
    pub xi0: Vec<Vec<f64>>,
    pub xi1: Vec<Vec<Vec<f64>>>,
}

impl BsdeThirdSolution {
    pub fn xi1_at(&self, l: f64, n: usize, y: f64) -> f64 {
        let (j0, j1, w) = slice_weights(&self.l1, l);
        let v0 = self.grid.interp(&self.xi1[j0][n], y);
        let v1 = self.grid.interp(&self.xi1[j1][n], y);
        v0 * (1.0 - w) + v1 * w
    }
}

/// Solver outputs paired with their Monte Carlo counterparts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HedgeReport {
    pub theta0: f64,
    pub y0: f64,
    pub xi0: f64,
    pub value: f64,
    pub mc_value: f64,
    pub mc_stderr: f64,
    pub n_paths: usize,
    pub seed: u64,
}

/// CSV export with columns
/// `regime,l1,t,x,Theta,beta,thetaA,thetaB,Y,Z,UA,UB,xi`.
/// The `l1` column is blank for regimes 0 and 2 and when there is a single
/// slice.
pub fn write_mvh_csv<W: Write>(
    first: &BsdeFirstSolution,
    second: &BsdeSecondSolution,
    third: &BsdeThirdSolution,
    out: &mut W,
) -> Result<()> {
    writeln!(out, "regime,l1,t,x,Theta,beta,thetaA,thetaB,Y,Z,UA,UB,xi")?;
    let grid = &first.grid;
    let n_rows = first.times.len();
    let single = first.l1.len() == 1;
    for n in 0..n_rows {
        let t = first.times[n];
        for (j, y) in grid.nodes().enumerate() {
            writeln!(
                out,
                "0,,{},{},{},{},{},0,{},{},{},0,{}",
                t,
                y.exp(),
                first.theta0[n][j],
                first.beta0[n][j],
                first.theta_a_rel[n][j],
                second.y0[n][j],
                second.z0[n][j],
                second.u_a[n][j],
                third.xi0[n][j],
            )?;
        }
    }
    for (s, l) in first.l1.iter().enumerate() {
        let l1_label = if single { String::new() } else { format!("{l}") };
        for n in 0..n_rows {
            let t = first.times[n];
            for (j, y) in grid.nodes().enumerate() {
                writeln!(
                    out,
                    "1,{},{},{},{},{},0,{},{},{},0,{},{}",
                    l1_label,
                    t,
                    y.exp(),
                    first.theta1[s][n][j],
                    first.beta1[s][n][j],
                    first.theta_b_rel[s][n][j],
                    second.y1[s][n][j],
                    second.z1[s][n][j],
                    second.u_b[s][n][j],
                    third.xi1[s][n][j],
                )?;
            }
        }
    }
    for n in 0..n_rows {
        let t = first.times[n];
        for (j, y) in grid.nodes().enumerate() {
            writeln!(
                out,
                "2,,{},{},{},{},0,0,{},0,0,0,0",
                t,
                y.exp(),
                first.theta2[n][j],
                first.beta2[n][j],
                second.y2_of_prespot[j],
            )?;
        }
    }
    Ok(())
}
