use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::coeff::Coefficient;
use crate::model::params::ModelParams;
use crate::model::rng::path_rng;
use crate::model::state::DefaultState;

/// Sentinel multiple of the horizon used for "no default" in serialized
/// output; in memory the sentinel is `f64::INFINITY`.
pub const NO_DEFAULT_SERIALIZED_FACTOR: f64 = 2.0;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_steps: usize,
    pub n_paths: usize,
    /// Initial bond value D_0.
    pub d0: f64,
    pub seed: u64,
}

/// Which firm defaults at the end of a path segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Firm {
    A,
    B,
}

/// One continuous piece of a trajectory: constant default state on
/// `[t0, t1]`, the Brownian increment accumulated over it, the bond value at
/// both ends (pre-jump at `t1`), and the default terminating it, if any.
///
/// `drift` is the integrated compensated drift `∫ (μ − Σ σ^i λ^i)` over the
/// segment and `sigma` the volatility the simulator applied, so wealth and
/// density replays reuse exactly the increments the bond saw.
#[derive(Debug, Clone, Copy)]
pub struct Segment {
    pub t0: f64,
    pub t1: f64,
    pub dw: f64,
    pub state: DefaultState,
    pub bond0: f64,
    /// Bond just before any jump at `t1`.
    pub bond1: f64,
    pub drift: f64,
    pub sigma: f64,
    pub jump_after: Option<Firm>,
    /// Relative jump size applied at `t1` (0 when no default).
    pub jump_size: f64,
}

/// One simulated trajectory of the defaultable bond.
///
/// Grid arrays hold values at the uniform grid times; `segments` carries the
/// event-resolved decomposition (grid times plus exact default times) used to
/// replay wealth and density integrals without losing the jump positions.
#[derive(Debug, Clone)]
pub struct MarketPath {
    pub times: Vec<f64>,
    /// Brownian increment per grid step.
    pub dw: Vec<f64>,
    /// Bond value at grid times (post-jump if a default fell on the step).
    pub bond: Vec<f64>,
    /// Default state at grid times (right-continuous).
    pub states: Vec<DefaultState>,
    pub tau_a: f64,
    pub tau_b: f64,
    pub bond_before_tau_a: Option<f64>,
    pub bond_before_tau_b: Option<f64>,
    pub segments: Vec<Segment>,
}

impl MarketPath {
    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("non-empty grid")
    }

    pub fn terminal_bond(&self) -> f64 {
        *self.bond.last().expect("non-empty grid")
    }

    pub fn terminal_state(&self) -> DefaultState {
        *self.states.last().expect("non-empty grid")
    }

    /// Default time as serialized: 2T when the firm never defaults.
    pub fn serialized_tau(&self, firm: Firm) -> f64 {
        let tau = match firm {
            Firm::A => self.tau_a,
            Firm::B => self.tau_b,
        };
        if tau.is_finite() {
            tau
        } else {
            NO_DEFAULT_SERIALIZED_FACTOR * self.horizon()
        }
    }
}

/// 5-point Gauss-Legendre quadrature of `f` over `[a, b]`; exact for
/// polynomials up to degree 9, which covers every product of the coefficient
/// family this model supports.
pub(crate) fn gauss5<F: Fn(f64) -> f64>(a: f64, b: f64, f: F) -> f64 {
    const X: [f64; 5] = [
        -0.906_179_845_938_664,
        -0.538_469_310_105_683,
        0.0,
        0.538_469_310_105_683,
        0.906_179_845_938_664,
    ];
    const W: [f64; 5] = [
        0.236_926_885_056_189,
        0.478_628_670_499_366,
        0.568_888_888_888_889,
        0.478_628_670_499_366,
        0.236_926_885_056_189,
    ];
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    half * X.iter().zip(W).map(|(&x, w)| w * f(mid + half * x)).sum::<f64>()
}

/// Inverts `∫_{from}^{s} λ(u) du = target` for the next default time inside
/// the current regime; `None` when the clock survives past `cap`.
fn invert_intensity(lambda: &Coefficient, from: f64, cap: f64, target: f64) -> Option<f64> {
    let total = lambda.integral_between(from, cap);
    if target > total {
        return None;
    }
    if let Some(l) = lambda.constant_value() {
        if l <= 0.0 {
            return None;
        }
        return Some(from + target / l);
    }
    // monotone bisection on the polynomial antiderivative
    let (mut lo, mut hi) = (from, cap);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if lambda.integral_between(from, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * cap.max(1.0) {
            break;
        }
    }
    Some(0.5 * (lo + hi))
}

struct Clock {
    next_a: f64,
    next_b: f64,
}

fn redraw_clocks<R: Rng>(
    params: &ModelParams,
    t: f64,
    state: DefaultState,
    rng: &mut R,
) -> Clock {
    let horizon = params.horizon;
    let draw = |alive: bool, lambda: &Coefficient, rng: &mut R| -> f64 {
        if !alive {
            return f64::INFINITY;
        }
        let e: f64 = rng.sample::<f64, _>(rand_distr::Exp1);
        invert_intensity(lambda, t, horizon, e).unwrap_or(f64::INFINITY)
    };
    // fixed draw order: A then B, so streams are reproducible
    let next_a = draw(!state.h_a, params.lambda_a.get(state), rng);
    let next_b = draw(!state.h_b, params.lambda_b.get(state), rng);
    Clock { next_a, next_b }
}

/// Simulates one trajectory as a pure function of `(params, sim, path_id)`.
///
/// The continuous factor follows the Euler log-scheme (positivity holds by
/// construction), drift and compensator terms `μ − Σ σ^i λ^i` are integrated
/// exactly over each segment, and default times are drawn exactly from the
/// integrated intensity of the current regime, re-drawn after each regime
/// change. At a default the bond is multiplied by `1 + σ^i`.
pub fn simulate_one_path(
    params: &ModelParams,
    sim: &SimConfig,
    path_id: usize,
) -> Result<MarketPath> {
    let n = sim.n_steps;
    let horizon = params.horizon;
    let dt = horizon / n as f64;
    let mut rng = path_rng(sim.seed, path_id as u64);

    let mut times = Vec::with_capacity(n + 1);
    let mut dw_grid = vec![0.0; n];
    let mut bond = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity(n + 1);
    let mut segments: Vec<Segment> = Vec::with_capacity(n + 2);

    let mut state = DefaultState::NONE;
    let mut log_d = sim.d0.ln();
    if !log_d.is_finite() {
        return Err(Error::InvalidParams(format!("d0 must be positive, got {}", sim.d0)));
    }
    let mut tau_a = f64::INFINITY;
    let mut tau_b = f64::INFINITY;
    let mut pre_a = None;
    let mut pre_b = None;

    let mut clocks = redraw_clocks(params, 0.0, state, &mut rng);
    times.push(0.0);
    bond.push(sim.d0);
    states.push(state);

    let mut t_now = 0.0;
    for k in 0..n {
        let t_grid = if k + 1 == n { horizon } else { (k + 1) as f64 * dt };
        loop {
            let tau = clocks.next_a.min(clocks.next_b);
            let seg_end = tau.min(t_grid);
            // continuous piece on [t_now, seg_end] in the current state
            let seg_len = seg_end - t_now;
            let sigma0 = params.sigma.eval(t_now, state);
            let drift = gauss5(t_now, seg_end, |u| params.compensated_drift(u, state));
            let dw = if seg_len > 0.0 {
                let z: f64 = rng.sample(StandardNormal);
                z * seg_len.sqrt()
            } else {
                0.0
            };
            let bond0 = log_d.exp();
            log_d += drift - 0.5 * sigma0 * sigma0 * seg_len + sigma0 * dw;
            let bond1 = log_d.exp();
            dw_grid[k] += dw;

            let jump_after = if tau <= t_grid {
                if clocks.next_a <= clocks.next_b {
                    Some(Firm::A)
                } else {
                    Some(Firm::B)
                }
            } else {
                None
            };
            let jump_size = match jump_after {
                Some(Firm::A) => params.sigma_a.eval(tau, state),
                Some(Firm::B) => params.sigma_b.eval(tau, state),
                None => 0.0,
            };
            segments.push(Segment {
                t0: t_now,
                t1: seg_end,
                dw,
                state,
                bond0,
                bond1,
                drift,
                sigma: sigma0,
                jump_after,
                jump_size,
            });

            match jump_after {
                Some(firm) => {
                    match firm {
                        Firm::A => {
                            tau_a = tau;
                            pre_a = Some(bond1);
                        }
                        Firm::B => {
                            tau_b = tau;
                            pre_b = Some(bond1);
                        }
                    }
                    log_d += (1.0 + jump_size).ln();
                    state = match firm {
                        Firm::A => state.after_a(),
                        Firm::B => state.after_b(),
                    };
                    t_now = tau;
                    clocks = redraw_clocks(params, t_now, state, &mut rng);
                }
                None => {
                    t_now = t_grid;
                    break;
                }
            }
        }
        if !log_d.is_finite() {
            return Err(Error::Numerical(format!(
                "bond overflowed on path {path_id} at t={t_now}"
            )));
        }
        times.push(t_grid);
        bond.push(log_d.exp());
        states.push(state);
    }

    Ok(MarketPath {
        times,
        dw: dw_grid,
        bond,
        states,
        tau_a,
        tau_b,
        bond_before_tau_a: pre_a,
        bond_before_tau_b: pre_b,
        segments,
    })
}

/// Simulates `sim.n_paths` trajectories in parallel. Identical
/// `(params, sim)` produce bit-identical output regardless of scheduling.
pub fn simulate_paths(params: &ModelParams, sim: &SimConfig) -> Result<Vec<MarketPath>> {
    if sim.n_steps == 0 {
        return Err(Error::InvalidParams("n_steps must be >= 1".into()));
    }
    (0..sim.n_paths)
        .into_par_iter()
        .map(|i| simulate_one_path(params, sim, i))
        .collect()
}

/// Streams paths through `f`, collecting one value per path in path order.
/// This is how the Monte Carlo estimators avoid materializing path sets.
pub fn map_paths<T, F>(params: &ModelParams, sim: &SimConfig, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&MarketPath) -> Result<T> + Sync,
{
    if sim.n_steps == 0 {
        return Err(Error::InvalidParams("n_steps must be >= 1".into()));
    }
    (0..sim.n_paths)
        .into_par_iter()
        .map(|i| simulate_one_path(params, sim, i).and_then(|p| f(&p)))
        .collect()
}

/// Writes paths as CSV with columns `path_id,step,t,dW,bond,hA,hB`.
pub fn write_paths_csv<W: Write>(paths: &[MarketPath], out: &mut W) -> Result<()> {
    writeln!(out, "path_id,step,t,dW,bond,hA,hB")?;
    for (id, p) in paths.iter().enumerate() {
        for (k, t) in p.times.iter().enumerate() {
            let dw = if k == 0 { 0.0 } else { p.dw[k - 1] };
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                id,
                k,
                t,
                dw,
                p.bond[k],
                p.states[k].h_a as u8,
                p.states[k].h_b as u8
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::coeff::StateCoeff;

    fn still_params() -> ModelParams {
        ModelParams {
            mu: StateCoeff::constant(0.0),
            sigma: StateCoeff::constant(0.0),
            sigma_a: StateCoeff::constant(0.0),
            sigma_b: StateCoeff::constant(0.0),
            lambda_a: StateCoeff::constant(0.0),
            lambda_b: StateCoeff::constant(0.0),
            horizon: 1.0,
            ordered_defaults: false,
        }
        .validate()
        .unwrap()
    }

    #[test]
    fn all_sources_off_keeps_bond_flat() {
        let sim = SimConfig { n_steps: 16, n_paths: 3, d0: 1.5, seed: 1 };
        for p in simulate_paths(&still_params(), &sim).unwrap() {
            assert!(p.bond.iter().all(|&b| (b - 1.5).abs() < 1e-14));
            assert!(p.tau_a.is_infinite() && p.tau_b.is_infinite());
            assert_eq!(p.serialized_tau(Firm::A), 2.0);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let mut params = still_params();
        params.mu = StateCoeff::constant(0.03);
        params.sigma = StateCoeff::constant(0.2);
        params.lambda_a = StateCoeff::per_state(0.2, 0.0, 0.2, 0.0);
        let params = params.validate().unwrap();
        let sim = SimConfig { n_steps: 32, n_paths: 8, d0: 1.0, seed: 99 };
        let a = simulate_paths(&params, &sim).unwrap();
        let b = simulate_paths(&params, &sim).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.bond, y.bond);
            assert_eq!(x.dw, y.dw);
            assert_eq!(x.tau_a, y.tau_a);
        }
    }

    #[test]
    fn exponential_clock_survival_law() {
        // λ^A = 0.1 constant, λ^B = 0: P(τ^A ≤ 1) = 1 − e^{−0.1}
        let mut params = still_params();
        params.lambda_a = StateCoeff::per_state(0.1, 0.0, 0.1, 0.0);
        let params = params.validate().unwrap();
        let n_paths = 100_000;
        let sim = SimConfig { n_steps: 8, n_paths, d0: 1.0, seed: 12345 };
        let paths = simulate_paths(&params, &sim).unwrap();
        let hits = paths.iter().filter(|p| p.tau_a <= 1.0).count() as f64;
        let p_hat = hits / n_paths as f64;
        let p_true = 1.0 - (-0.1f64).exp();
        let se = (p_true * (1.0 - p_true) / n_paths as f64).sqrt();
        assert!(
            (p_hat - p_true).abs() < 3.0 * se,
            "p_hat={p_hat}, p_true={p_true}, se={se}"
        );
    }

    #[test]
    fn driftless_bond_is_a_martingale() {
        let mut params = still_params();
        params.sigma = StateCoeff::constant(0.2);
        let params = params.validate().unwrap();
        let n_paths = 100_000;
        let sim = SimConfig { n_steps: 16, n_paths, d0: 1.0, seed: 777 };
        let terminal: Vec<f64> =
            map_paths(&params, &sim, |p| Ok(p.terminal_bond())).unwrap();
        let mean = terminal.iter().sum::<f64>() / n_paths as f64;
        let var = terminal.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n_paths as f64;
        let se = (var / n_paths as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "mean={mean}, se={se}");
    }

    #[test]
    fn no_common_jumps_and_monotone_states() {
        let mut params = still_params();
        params.sigma = StateCoeff::constant(0.2);
        params.sigma_a = StateCoeff::constant(-0.4);
        params.sigma_b = StateCoeff::constant(-0.3);
        params.lambda_a = StateCoeff::per_state(0.8, 0.0, 1.0, 0.0);
        params.lambda_b = StateCoeff::per_state(0.6, 0.9, 0.0, 0.0);
        let params = params.validate().unwrap();
        let sim = SimConfig { n_steps: 16, n_paths: 4000, d0: 1.0, seed: 5 };
        for p in simulate_paths(&params, &sim).unwrap() {
            if p.tau_a.is_finite() && p.tau_b.is_finite() {
                assert_ne!(p.tau_a, p.tau_b);
            }
            for w in p.states.windows(2) {
                assert!(w[0].le(w[1]), "state order broke: {:?}", w);
            }
            assert!(p.bond.iter().all(|&b| b > 0.0));
        }
    }
}
