use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::hjb::solve::{optimal_strategy_hjb, solve_hjb};
use crate::hjb::HjbSolution;
use crate::model::claim::{PayoffFn, RestrictedClaim};
use crate::model::params::ModelParams;
use crate::model::simulate::{map_paths, SimConfig};
use crate::model::wealth::simulate_wealth;
use crate::mvh::Tolerances;

/// Indifference price and the two dual values it is built from.
#[derive(Debug)]
pub struct PriceReport {
    pub price: f64,
    pub v0_with: f64,
    pub v0_without: f64,
    pub solution_with: HjbSolution,
    pub solution_without: HjbSolution,
}

/// The exponential-utility indifference price `p` solving
/// `u^ψ(x + p) = u^0(x)`.
///
/// Both primal values have the form `−exp(−δx − V(0, z₀))` with `V` the
/// dual value, so the shift is `p = (V^0(0, z₀) − V^ψ(0, z₀))/δ`,
/// independent of the initial wealth.
pub fn indifference_price(
    params: &ModelParams,
    claim: &RestrictedClaim,
    delta: f64,
    spec: &GridSpec,
    d0: f64,
    tol: &Tolerances,
) -> Result<PriceReport> {
    let with = solve_hjb(params, claim, delta, spec, d0, tol)?;
    let zero_claim = RestrictedClaim { g: PayoffFn::ZERO, f: PayoffFn::ZERO, bound: 0.0 };
    let without = solve_hjb(params, &zero_claim, delta, spec, d0, tol)?;
    let v0_with = with.value0();
    let v0_without = without.value0();
    Ok(PriceReport {
        price: (v0_without - v0_with) / delta,
        v0_with,
        v0_without,
        solution_with: with,
        solution_without: without,
    })
}

/// Monte Carlo primal oracle for the indifference price: estimates both
/// primal utilities under the solved hedges on a common path set and bisects
/// `p` in `û^ψ(x + p) = û^0(x)`. Returns the bisected price and a
/// propagated standard error.
pub fn mc_price_bisection(
    params: &ModelParams,
    claim: &RestrictedClaim,
    delta: f64,
    report: &PriceReport,
    sim: &SimConfig,
    x0: f64,
) -> Result<(f64, f64)> {
    let strat_with = optimal_strategy_hjb(&report.solution_with, params);
    let strat_without = optimal_strategy_hjb(&report.solution_without, params);
    // per path: (−exp(−δ(x0 + G_ψ − ψ)), −exp(−δ(x0 + G_0)))
    let samples: Vec<(f64, f64)> = map_paths(params, sim, |path| {
        let x_with = simulate_wealth(path, &strat_with, x0);
        let x_without = simulate_wealth(path, &strat_without, x0);
        let psi = claim.payoff(path);
        Ok((
            -(-delta * (x_with - psi)).exp(),
            -(-delta * x_without).exp(),
        ))
    })?;
    let a: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let b: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let (mean_a, se_a) = crate::mc::mean_stderr(&a);
    let (mean_b, se_b) = crate::mc::mean_stderr(&b);
    if !(mean_a < 0.0 && mean_b < 0.0) {
        return Err(Error::Numerical("primal utility estimates must be negative".into()));
    }

    // û^ψ(x0 + p) = mean_a · e^{−δp}, increasing in p (mean_a < 0); bisect
    // the crossing with û^0(x0)
    let h = |p: f64| mean_a * (-delta * p).exp() - mean_b;
    let bound = 10.0 * (claim.bound + 1.0);
    let (mut lo, mut hi) = (-bound, bound);
    if h(lo) > 0.0 || h(hi) < 0.0 {
        return Err(Error::Numerical("indifference price bracket failed".into()));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let p_hat = 0.5 * (lo + hi);
    let stderr = ((se_a / mean_a).powi(2) + (se_b / mean_b).powi(2)).sqrt() / delta;
    Ok((p_hat, stderr))
}
