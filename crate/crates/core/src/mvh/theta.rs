use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, LogSpotGrid, TimeGrid};
use crate::model::params::ModelParams;
use crate::model::state::DefaultState;
use crate::mvh::{BsdeFirstSolution, Tolerances, THETA_FLOOR};
use crate::tridiag;

/// Solver tier for the first backward equation.
///
/// * `Ode` — per-regime scalar equations with the β = 0 ansatz, integrated
///   with a classical fourth-order step. Exact (to integrator accuracy) for
///   deterministic per-regime coefficients.
/// * `Pde` — per-regime implicit finite-difference solves on the
///   (time × log-spot) grid, the quadratic driver handled by
///   frozen-coefficient iteration. This is the path spot-dependent extensions
///   would take; on the supported coefficient family its solution is flat in
///   the spot direction.
/// * `Auto` — `Ode` for regime-constant coefficients, `Pde` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaTier {
    Auto,
    Ode,
    Pde,
}

/// The (μ, σ) of a regime plus its outgoing jump channel (σ^J, λ^J); the
/// channel is absent in regime 2.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RegimeCoeffs {
    pub state: DefaultState,
    pub has_channel: bool,
}

impl RegimeCoeffs {
    pub(crate) fn of(regime: usize) -> RegimeCoeffs {
        RegimeCoeffs { state: DefaultState::from_regime(regime), has_channel: regime < 2 }
    }

    pub(crate) fn mu(&self, params: &ModelParams, t: f64) -> f64 {
        params.mu.eval(t, self.state)
    }

    pub(crate) fn sigma(&self, params: &ModelParams, t: f64) -> f64 {
        params.sigma.eval(t, self.state)
    }

    /// Outgoing jump size: σ^A in regime 0, σ^B in regime 1.
    pub(crate) fn sigma_j(&self, params: &ModelParams, t: f64) -> f64 {
        match self.state.regime() {
            Some(0) => params.sigma_a.eval(t, self.state),
            Some(1) => params.sigma_b.eval(t, self.state),
            _ => 0.0,
        }
    }

    /// Outgoing jump intensity: λ^A in regime 0, λ^B in regime 1.
    pub(crate) fn lambda_j(&self, params: &ModelParams, t: f64) -> f64 {
        let (la, lb) = params.intensities(t, self.state);
        match self.state.regime() {
            Some(0) => la,
            Some(1) => lb,
            _ => 0.0,
        }
    }
}

/// Absolute-form driver of the split equation in one regime:
/// `ḡ = −[μΘ + θ̄ σ^J λ^J + σ β̄]² / (Θσ² + Θ_next (σ^J)² λ^J)`,
/// with `θ̄ = Θ_next − Θ` the absolute jump integrand. The full dt
/// coefficient of the dH-form equation is `f̄ = ḡ + θ̄ λ^J`.
pub(crate) fn g_bar_abs(
    mu: f64,
    sigma: f64,
    sigma_j: f64,
    lambda_j: f64,
    theta: f64,
    theta_next: f64,
    beta_bar: f64,
) -> Result<f64> {
    let theta_bar = theta_next - theta;
    let num = mu * theta + theta_bar * sigma_j * lambda_j + sigma * beta_bar;
    let den = theta * sigma * sigma + theta_next * sigma_j * sigma_j * lambda_j;
    if den <= 0.0 {
        if num == 0.0 {
            return Ok(0.0);
        }
        return Err(Error::Numerical(format!(
            "quadratic-driver denominator {den} <= 0 with numerator {num} (theta={theta}, theta_next={theta_next})"
        )));
    }
    Ok(-num * num / den)
}

fn f_bar_abs(
    rc: &RegimeCoeffs,
    params: &ModelParams,
    t: f64,
    theta: f64,
    theta_next: f64,
    beta_bar: f64,
) -> Result<f64> {
    let lambda_j = if rc.has_channel { rc.lambda_j(params, t) } else { 0.0 };
    let sigma_j = if rc.has_channel { rc.sigma_j(params, t) } else { 0.0 };
    let tn = if rc.has_channel { theta_next } else { theta };
    let g = g_bar_abs(rc.mu(params, t), rc.sigma(params, t), sigma_j, lambda_j, theta, tn, beta_bar)?;
    Ok(g + (tn - theta) * lambda_j)
}

pub(crate) fn l1_slices(horizon: f64, m: usize) -> Vec<f64> {
    if m <= 1 {
        vec![0.0]
    } else {
        (0..m).map(|j| horizon * j as f64 / (m - 1) as f64).collect()
    }
}

fn interp_l1(l1: &[f64], values: &[f64], l: f64) -> f64 {
    let (j0, j1, w) = crate::mvh::slice_weights(l1, l);
    values[j0] * (1.0 - w) + values[j1] * w
}

/// Solves the split system for Θ over the three ordered regimes.
///
/// The backward recursion runs regime 2 → 1 → 0: regime 2 sees no further
/// default and solves the continuous quadratic equation; regime k < 2 couples
/// to the next regime through the jump integrand `θ̄ = Θ^{k+1}(·, t) − Θ^k`,
/// with the regime-1 entry-time dependence carried on `spec.l1_grid` slices.
pub fn solve_theta_split(
    params: &ModelParams,
    spec: &GridSpec,
    d0: f64,
    tier: ThetaTier,
    tol: &Tolerances,
) -> Result<BsdeFirstSolution> {
    if !params.ordered_defaults {
        return Err(Error::Unsupported(
            "the splitting solver requires ordered-default mode".into(),
        ));
    }
    spec.validate()?;
    let tier = match tier {
        ThetaTier::Auto => {
            if params.is_constant() {
                ThetaTier::Ode
            } else {
                ThetaTier::Pde
            }
        }
        t => t,
    };
    let tg = TimeGrid::new(params.horizon, spec.n_time);
    let grid = LogSpotGrid::centered(d0.ln(), spec.resolve_halfwidth(params), spec.n_space);
    match tier {
        ThetaTier::Ode => solve_ode_tier(params, &tg, grid, spec.l1_grid),
        ThetaTier::Pde => solve_pde_tier(params, &tg, grid, spec.l1_grid, tol),
        ThetaTier::Auto => unreachable!(),
    }
}

fn check_floor(value: f64, regime: usize, t: f64) -> Result<f64> {
    if !(value.is_finite() && value > THETA_FLOOR) {
        return Err(Error::Numerical(format!(
            "Theta fell to {value} in regime {regime} at t={t}: positivity constraint violated"
        )));
    }
    Ok(value)
}

fn solve_ode_tier(
    params: &ModelParams,
    tg: &TimeGrid,
    grid: LogSpotGrid,
    m: usize,
) -> Result<BsdeFirstSolution> {
    let l1 = l1_slices(params.horizon, m);
    let n_steps = tg.n_steps();
    // state vector: [Θ², Θ¹ slices.., Θ⁰]
    let dim = m + 2;
    let deriv = |t: f64, v: &[f64], out: &mut [f64]| -> Result<()> {
        let r2 = RegimeCoeffs::of(2);
        out[0] = -f_bar_abs(&r2, params, t, v[0], v[0], 0.0)?;
        let r1 = RegimeCoeffs::of(1);
        for s in 0..m {
            out[1 + s] = -f_bar_abs(&r1, params, t, v[1 + s], v[0], 0.0)?;
        }
        let r0 = RegimeCoeffs::of(0);
        let diag = interp_l1(&l1, &v[1..1 + m], t);
        out[1 + m] = -f_bar_abs(&r0, params, t, v[1 + m], diag, 0.0)?;
        Ok(())
    };

    let mut rows = vec![vec![1.0; dim]; n_steps + 1];
    let mut v = vec![1.0; dim];
    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut tmp = vec![0.0; dim];
    for n in (0..n_steps).rev() {
        let t1 = tg.times[n + 1];
        let t0 = tg.times[n];
        let h = t0 - t1; // negative: backward step
        deriv(t1, &v, &mut k1)?;
        for i in 0..dim {
            tmp[i] = v[i] + 0.5 * h * k1[i];
        }
        deriv(t1 + 0.5 * h, &tmp, &mut k2)?;
        for i in 0..dim {
            tmp[i] = v[i] + 0.5 * h * k2[i];
        }
        deriv(t1 + 0.5 * h, &tmp, &mut k3)?;
        for i in 0..dim {
            tmp[i] = v[i] + h * k3[i];
        }
        deriv(t0, &tmp, &mut k4)?;
        for i in 0..dim {
            v[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            check_floor(v[i], if i == 0 { 2 } else if i <= m { 1 } else { 0 }, t0)?;
        }
        rows[n].copy_from_slice(&v);
    }

    // materialize the flat surfaces
    let n_nodes = grid.n_nodes();
    let flat = |col: usize| -> Vec<Vec<f64>> {
        rows.iter().map(|r| vec![r[col]; n_nodes]).collect()
    };
    let theta2 = flat(0);
    let theta1: Vec<Vec<Vec<f64>>> = (0..m).map(|s| flat(1 + s)).collect();
    let theta0 = flat(1 + m);
    let zeros = vec![vec![0.0; n_nodes]; n_steps + 1];
    let delta_min = rows
        .iter()
        .flat_map(|r| r.iter())
        .fold(f64::INFINITY, |a, &b| a.min(b));

    let mut sol = BsdeFirstSolution {
        times: tg.times.clone(),
        grid,
        l1,
        theta0,
        theta1,
        theta2,
        beta0: zeros.clone(),
        beta1: vec![zeros.clone(); m],
        beta2: zeros,
        theta_a_rel: Vec::new(),
        theta_b_rel: Vec::new(),
        delta_min,
        tier: ThetaTier::Ode,
    };
    fill_relative_jumps(params, &mut sol);
    Ok(sol)
}

/// Implicit finite-difference step shared by the PDE tiers: solves
/// `(1/dt + reaction) u − [diff ∂_yy + conv ∂_y] u = rhs`
/// with zero-second-derivative boundary rows.
pub(crate) fn implicit_step(
    grid: &LogSpotGrid,
    dt: f64,
    diff: f64,
    conv: &[f64],
    reaction: &[f64],
    rhs: &[f64],
) -> Vec<f64> {
    let n = grid.n_nodes();
    let dy = grid.dy;
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for j in 0..n {
        let base = 1.0 / dt + reaction[j];
        if j == 0 {
            // ghost node with zero curvature: diffusion drops and drift is
            // one-sided; an outflow drift would put a positive entry off the
            // diagonal, so it is dropped to keep the scheme monotone
            let c = conv[0].max(0.0);
            diag[0] = base + c / dy;
            upper[0] = -c / dy;
        } else if j == n - 1 {
            let c = conv[n - 1].min(0.0);
            diag[n - 1] = base - c / dy;
            lower[n - 1] = c / dy;
        } else {
            let d2 = diff / (dy * dy);
            let d1 = conv[j] / (2.0 * dy);
            lower[j] = -(d2 - d1);
            diag[j] = base + 2.0 * d2;
            upper[j] = -(d2 + d1);
        }
    }
    tridiag::solve(&lower, &diag, &upper, rhs)
}

/// One backward step of the quadratic Θ equation in one regime, iterating the
/// frozen-coefficient linearization until the sup-norm update drops below
/// `picard_tol`.
#[allow(clippy::too_many_arguments)]
fn theta_pde_step(
    rc: &RegimeCoeffs,
    params: &ModelParams,
    grid: &LogSpotGrid,
    t0: f64,
    dt: f64,
    prev: &[f64],
    target: Option<&[f64]>, // Θ^{next}(t0, y + ln(1+σ^J)) at the nodes
    picard_tol: f64,
) -> Result<Vec<f64>> {
    let n = grid.n_nodes();
    let mu = rc.mu(params, t0);
    let sigma = rc.sigma(params, t0);
    let lambda_j = if rc.has_channel { rc.lambda_j(params, t0) } else { 0.0 };
    let sigma_j = if rc.has_channel { rc.sigma_j(params, t0) } else { 0.0 };
    let diff = 0.5 * sigma * sigma;
    let conv = vec![mu - sigma_j * lambda_j - 0.5 * sigma * sigma; n];
    let reaction = vec![lambda_j; n];

    let mut iterate = prev.to_vec();
    for iter in 0..50 {
        let dtheta = grid.d_dy(&iterate);
        let mut rhs = vec![0.0; n];
        for j in 0..n {
            let theta_next = target.map_or(iterate[j], |t| t[j]);
            let beta_bar = sigma * dtheta[j];
            let g = g_bar_abs(mu, sigma, sigma_j, lambda_j, iterate[j], theta_next, beta_bar)?;
            rhs[j] = prev[j] / dt + lambda_j * theta_next + g;
        }
        let next = implicit_step(grid, dt, diff, &conv, &reaction, &rhs);
        let delta = next
            .iter()
            .zip(&iterate)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        iterate = next;
        if delta < picard_tol {
            return Ok(iterate);
        }
        if iter == 49 {
            return Err(Error::NoConvergence {
                what: "frozen-coefficient iteration of the quadratic driver".into(),
                residual: delta,
                iterations: 50,
                last: vec![iterate[0]],
            });
        }
    }
    unreachable!()
}

fn shifted_values(grid: &LogSpotGrid, surface_row: &[f64], shift: f64) -> Vec<f64> {
    grid.nodes().map(|y| grid.interp(surface_row, y + shift)).collect()
}

fn solve_pde_tier(
    params: &ModelParams,
    tg: &TimeGrid,
    grid: LogSpotGrid,
    m: usize,
    tol: &Tolerances,
) -> Result<BsdeFirstSolution> {
    let l1 = l1_slices(params.horizon, m);
    let n_steps = tg.n_steps();
    let n_nodes = grid.n_nodes();
    let ones = || vec![vec![1.0; n_nodes]; n_steps + 1];

    // regime 2: no outgoing channel
    let mut theta2 = ones();
    let r2 = RegimeCoeffs::of(2);
    for n in (0..n_steps).rev() {
        let dt = tg.times[n + 1] - tg.times[n];
        let prev = theta2[n + 1].clone();
        theta2[n] = theta_pde_step(&r2, params, &grid, tg.times[n], dt, &prev, None, tol.picard)?;
        for &v in &theta2[n] {
            check_floor(v, 2, tg.times[n])?;
        }
    }

    // regime 1 slices couple to regime 2, in parallel across slices
    let r1 = RegimeCoeffs::of(1);
    let theta1: Vec<Vec<Vec<f64>>> = (0..m)
        .into_par_iter()
        .map(|_| -> Result<Vec<Vec<f64>>> {
            let mut surf = ones();
            for n in (0..n_steps).rev() {
                let t0 = tg.times[n];
                let dt = tg.times[n + 1] - t0;
                let shift = (1.0 + r1.sigma_j(params, t0)).ln();
                let target = shifted_values(&grid, &theta2[n], shift);
                let prev = surf[n + 1].clone();
                surf[n] =
                    theta_pde_step(&r1, params, &grid, t0, dt, &prev, Some(&target), tol.picard)?;
                for &v in &surf[n] {
                    check_floor(v, 1, t0)?;
                }
            }
            Ok(surf)
        })
        .collect::<Result<_>>()?;

    // regime 0 couples to the regime-1 diagonal Θ¹_t(t)
    let r0 = RegimeCoeffs::of(0);
    let mut theta0 = ones();
    for n in (0..n_steps).rev() {
        let t0 = tg.times[n];
        let dt = tg.times[n + 1] - t0;
        let shift = (1.0 + r0.sigma_j(params, t0)).ln();
        let (j0, j1, w) = crate::mvh::slice_weights(&l1, t0);
        let diag_row: Vec<f64> = (0..n_nodes)
            .map(|j| theta1[j0][n][j] * (1.0 - w) + theta1[j1][n][j] * w)
            .collect();
        let target = shifted_values(&grid, &diag_row, shift);
        let prev = theta0[n + 1].clone();
        theta0[n] = theta_pde_step(&r0, params, &grid, t0, dt, &prev, Some(&target), tol.picard)?;
        for &v in &theta0[n] {
            check_floor(v, 0, t0)?;
        }
    }

    let delta_min = theta0
        .iter()
        .chain(theta2.iter())
        .chain(theta1.iter().flatten())
        .flat_map(|row| row.iter())
        .fold(f64::INFINITY, |a, &b| a.min(b));

    // β (relative) = σ ∂_y Θ / Θ
    let beta_of = |surf: &Vec<Vec<f64>>, state: DefaultState| -> Vec<Vec<f64>> {
        surf.iter()
            .enumerate()
            .map(|(n, row)| {
                let sigma = params.sigma.eval(tg.times[n], state);
                grid.d_dy(row)
                    .iter()
                    .zip(row)
                    .map(|(d, v)| sigma * d / v)
                    .collect()
            })
            .collect()
    };
    let beta0 = beta_of(&theta0, DefaultState::NONE);
    let beta1: Vec<_> = theta1.iter().map(|s| beta_of(s, DefaultState::A_ONLY)).collect();
    let beta2 = beta_of(&theta2, DefaultState::BOTH);

    let mut sol = BsdeFirstSolution {
        times: tg.times.clone(),
        grid,
        l1,
        theta0,
        theta1,
        theta2,
        beta0,
        beta1,
        beta2,
        theta_a_rel: Vec::new(),
        theta_b_rel: Vec::new(),
        delta_min,
        tier: ThetaTier::Pde,
    };
    fill_relative_jumps(params, &mut sol);
    Ok(sol)
}

/// Relative jump integrands from the recombination identities:
/// `θ^A Θ⁰ = Θ¹(t)(post-jump spot) − Θ⁰` and
/// `θ^B Θ¹ = Θ²(post-jump spot) − Θ¹`.
fn fill_relative_jumps(params: &ModelParams, sol: &mut BsdeFirstSolution) {
    let n_rows = sol.times.len();
    let grid = sol.grid.clone();
    let mut theta_a = Vec::with_capacity(n_rows);
    for n in 0..n_rows {
        let t = sol.times[n];
        let sig_a = params.sigma_a.eval(t, DefaultState::NONE);
        let shift = (1.0 + sig_a).ln();
        let row: Vec<f64> = grid
            .nodes()
            .enumerate()
            .map(|(j, y)| {
                let diag = sol.theta1_diag(n, y + shift);
                (diag - sol.theta0[n][j]) / sol.theta0[n][j]
            })
            .collect();
        theta_a.push(row);
    }
    sol.theta_a_rel = theta_a;

    let mut theta_b_all = Vec::with_capacity(sol.l1.len());
    for s in 0..sol.l1.len() {
        let mut rows = Vec::with_capacity(n_rows);
        for n in 0..n_rows {
            let t = sol.times[n];
            let sig_b = params.sigma_b.eval(t, DefaultState::A_ONLY);
            let shift = (1.0 + sig_b).ln();
            let row: Vec<f64> = grid
                .nodes()
                .enumerate()
                .map(|(j, y)| {
                    let next = grid.interp(&sol.theta2[n], y + shift);
                    (next - sol.theta1[s][n][j]) / sol.theta1[s][n][j]
                })
                .collect();
            rows.push(row);
        }
        theta_b_all.push(rows);
    }
    sol.theta_b_rel = theta_b_all;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::coeff::StateCoeff;

    pub(crate) fn prop38_model() -> ModelParams {
        // single-default instance: μ⁰=0.14, κ=0.4, σ⁰=0.2, λ=0.1 (balance
        // holds: 0.14·0.4 = 0.056 = 0.04 + 0.016), μ¹=0.1, σ¹=0.2
        ModelParams {
            mu: StateCoeff::per_state(0.14, 0.1, 0.0, 0.1),
            sigma: StateCoeff::per_state(0.2, 0.2, 0.2, 0.2),
            sigma_a: StateCoeff::constant(0.4),
            sigma_b: StateCoeff::constant(0.0),
            lambda_a: StateCoeff::per_state(0.1, 0.0, 0.0, 0.0),
            lambda_b: StateCoeff::constant(0.0),
            horizon: 1.0,
            ordered_defaults: true,
        }
        .validate()
        .unwrap()
    }

    #[test]
    fn zero_drift_gives_unit_theta() {
        let params = ModelParams {
            mu: StateCoeff::constant(0.0),
            sigma: StateCoeff::constant(0.2),
            sigma_a: StateCoeff::constant(-0.4),
            sigma_b: StateCoeff::constant(-0.3),
            lambda_a: StateCoeff::per_state(0.1, 0.0, 0.0, 0.0),
            lambda_b: StateCoeff::per_state(0.0, 0.05, 0.0, 0.0),
            horizon: 1.0,
            ordered_defaults: true,
        }
        .validate()
        .unwrap();
        let spec = GridSpec { n_time: 50, n_space: 21, ..Default::default() };
        for tier in [ThetaTier::Ode, ThetaTier::Pde] {
            let sol =
                solve_theta_split(&params, &spec, 1.0, tier, &Tolerances::default()).unwrap();
            for surf in [&sol.theta0, &sol.theta2].into_iter().chain(sol.theta1.iter()) {
                for row in surf {
                    for &v in row {
                        assert!((v - 1.0).abs() < 1e-12, "theta={v}");
                    }
                }
            }
            assert!(sol.theta_a_rel.iter().flatten().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn ode_tier_reproduces_explicit_exponentials() {
        let params = prop38_model();
        let spec = GridSpec { n_time: 200, n_space: 21, ..Default::default() };
        let sol =
            solve_theta_split(&params, &spec, 1.0, ThetaTier::Ode, &Tolerances::default())
                .unwrap();
        let c = sol.grid.center_index();
        let pre = sol.theta0[0][c];
        let post = sol.theta1[0][0][c];
        assert!((pre - (-0.35f64).exp()).abs() < 1e-6, "pre={pre}");
        assert!((post - (-0.25f64).exp()).abs() < 1e-6, "post={post}");
        assert!(sol.theta2[0][c] <= 1.0 + 1e-12);
        // terminal condition is exact
        assert!(sol.theta0.last().unwrap().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn pde_tier_reproduces_explicit_exponentials_coarser() {
        let params = prop38_model();
        let spec = GridSpec { n_time: 200, n_space: 41, ..Default::default() };
        let sol =
            solve_theta_split(&params, &spec, 1.0, ThetaTier::Pde, &Tolerances::default())
                .unwrap();
        let c = sol.grid.center_index();
        let pre = sol.theta0[0][c];
        let post = sol.theta1[0][0][c];
        assert!((pre - (-0.35f64).exp()).abs() < 1e-3, "pre={pre}");
        assert!((post - (-0.25f64).exp()).abs() < 1e-3, "post={post}");
        // flat in the spot direction, so β ≈ 0
        assert!(sol.beta0.iter().flatten().all(|b| b.abs() < 1e-9));
    }

    #[test]
    fn l1_slices_coincide_for_time_state_coefficients() {
        let params = prop38_model();
        let spec = GridSpec { n_time: 100, n_space: 21, l1_grid: 4, ..Default::default() };
        let sol =
            solve_theta_split(&params, &spec, 1.0, ThetaTier::Ode, &Tolerances::default())
                .unwrap();
        assert_eq!(sol.l1.len(), 4);
        for s in 1..4 {
            for (a, b) in sol.theta1[0].iter().flatten().zip(sol.theta1[s].iter().flatten()) {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn unordered_mode_is_rejected() {
        let mut params = prop38_model();
        params.ordered_defaults = false;
        let spec = GridSpec::default();
        assert!(solve_theta_split(&params, &spec, 1.0, ThetaTier::Auto, &Tolerances::default())
            .is_err());
    }
}
