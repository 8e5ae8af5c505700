use crate::grid::LogSpotGrid;
use crate::model::simulate::{Firm, MarketPath};
use crate::model::state::DefaultState;

/// A default that already happened on the path: when, and the bond value
/// just before the jump.
#[derive(Debug, Clone, Copy)]
pub struct DefaultEvent {
    pub time: f64,
    pub pre_spot: f64,
}

/// Path information a feedback strategy may condition on beyond the current
/// node: the defaults recorded so far.
#[derive(Debug, Clone, Copy, Default)]
pub struct PathContext {
    pub default_a: Option<DefaultEvent>,
    pub default_b: Option<DefaultEvent>,
}

/// A trading position rule: money invested in the defaultable bond as a
/// function of the current node. Implementations are evaluated at pre-jump
/// (predictable) data only.
pub trait Strategy: Sync {
    fn position(
        &self,
        t: f64,
        wealth: f64,
        spot: f64,
        state: DefaultState,
        ctx: &PathContext,
    ) -> f64;
}

impl<F> Strategy for F
where
    F: Fn(f64, f64, f64, DefaultState, &PathContext) -> f64 + Sync,
{
    fn position(
        &self,
        t: f64,
        wealth: f64,
        spot: f64,
        state: DefaultState,
        ctx: &PathContext,
    ) -> f64 {
        self(t, wealth, spot, state, ctx)
    }
}

/// A strategy tabulated on a (time × log-spot × state) grid:
/// piecewise-constant in time over each step, linear in log-spot.
#[derive(Debug, Clone)]
pub struct StrategyField {
    pub times: Vec<f64>,
    pub grid: LogSpotGrid,
    /// `values[state][step][node]`, one slab per default state.
    pub values: [Vec<Vec<f64>>; 4],
}

impl StrategyField {
    pub fn zero(times: Vec<f64>, grid: LogSpotGrid) -> Self {
        let steps = times.len().saturating_sub(1);
        let slab = vec![vec![0.0; grid.n_nodes()]; steps];
        StrategyField {
            times,
            grid,
            values: [slab.clone(), slab.clone(), slab.clone(), slab],
        }
    }

    pub fn step_index(&self, t: f64) -> usize {
        let n_steps = self.times.len() - 1;
        let t0 = self.times[0];
        let t_end = self.times[n_steps];
        if t >= t_end {
            return n_steps - 1;
        }
        let dt = (t_end - t0) / n_steps as f64;
        (((t - t0) / dt).floor() as usize).min(n_steps - 1)
    }
}

impl Strategy for StrategyField {
    fn position(
        &self,
        t: f64,
        _wealth: f64,
        spot: f64,
        state: DefaultState,
        _ctx: &PathContext,
    ) -> f64 {
        let step = self.step_index(t);
        self.grid.interp(&self.values[state.index()][step], spot.ln())
    }
}

/// Pointwise `base + scale·bump`, used by the perturbation tests.
pub struct BumpedStrategy<'a> {
    pub base: &'a dyn Strategy,
    pub bump: &'a dyn Strategy,
    pub scale: f64,
}

impl Strategy for BumpedStrategy<'_> {
    fn position(
        &self,
        t: f64,
        wealth: f64,
        spot: f64,
        state: DefaultState,
        ctx: &PathContext,
    ) -> f64 {
        self.base.position(t, wealth, spot, state, ctx)
            + self.scale * self.bump.position(t, wealth, spot, state, ctx)
    }
}

/// Forward Euler of the wealth equation
/// `dX = π (μ dt + σ dW + σ^A dM^A + σ^B dM^B)`
/// along a simulated path. The position is held over each path segment and a
/// default's jump `π σ^i` uses the position taken before the jump
/// (predictability); the compensator part of `dM^i` is inside the segment's
/// stored drift.
pub fn simulate_wealth(path: &MarketPath, strategy: &dyn Strategy, x0: f64) -> f64 {
    simulate_wealth_monitored(path, strategy, x0, &[]).0
}

/// As [`simulate_wealth`], additionally sampling `(t, X_t, ctx)` at the
/// requested monitor times (ascending; matched against segment right ends).
pub fn simulate_wealth_monitored(
    path: &MarketPath,
    strategy: &dyn Strategy,
    x0: f64,
    monitors: &[f64],
) -> (f64, Vec<(f64, f64, PathContext)>) {
    let mut x = x0;
    let mut ctx = PathContext::default();
    let mut samples = Vec::with_capacity(monitors.len());
    let mut next_monitor = 0usize;

    while next_monitor < monitors.len() && monitors[next_monitor] <= path.times[0] {
        samples.push((monitors[next_monitor], x, ctx));
        next_monitor += 1;
    }

    for seg in &path.segments {
        let pi = strategy.position(seg.t0, x, seg.bond0, seg.state, &ctx);
        x += pi * (seg.drift + seg.sigma * seg.dw);
        if let Some(firm) = seg.jump_after {
            x += pi * seg.jump_size;
            let event = DefaultEvent { time: seg.t1, pre_spot: seg.bond1 };
            match firm {
                Firm::A => ctx.default_a = Some(event),
                Firm::B => ctx.default_b = Some(event),
            }
        }
        while next_monitor < monitors.len() && monitors[next_monitor] <= seg.t1 + 1e-12 {
            samples.push((monitors[next_monitor], x, ctx));
            next_monitor += 1;
        }
    }
    (x, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::coeff::StateCoeff;
    use crate::model::params::ModelParams;
    use crate::model::simulate::{simulate_paths, SimConfig};

    fn params(mu: f64, sigma: f64) -> ModelParams {
        ModelParams {
            mu: StateCoeff::constant(mu),
            sigma: StateCoeff::constant(sigma),
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
    fn zero_position_keeps_wealth_flat() {
        let p = params(0.05, 0.2);
        let sim = SimConfig { n_steps: 16, n_paths: 4, d0: 1.0, seed: 3 };
        let zero = |_: f64, _: f64, _: f64, _: DefaultState, _: &PathContext| 0.0;
        for path in simulate_paths(&p, &sim).unwrap() {
            assert_eq!(simulate_wealth(&path, &zero, 2.5), 2.5);
        }
    }

    #[test]
    fn unit_position_earns_the_drift_deterministically() {
        // π ≡ 1, μ = 0.05, σ = σ^A = σ^B = 0 ⇒ X_T = x0 + 0.05
        let p = params(0.05, 0.0);
        let sim = SimConfig { n_steps: 10, n_paths: 1, d0: 1.0, seed: 3 };
        let one = |_: f64, _: f64, _: f64, _: DefaultState, _: &PathContext| 1.0;
        let path = &simulate_paths(&p, &sim).unwrap()[0];
        let x_t = simulate_wealth(path, &one, 1.0);
        assert!((x_t - 1.05).abs() < 1e-12, "x_t = {x_t}");
    }
}
