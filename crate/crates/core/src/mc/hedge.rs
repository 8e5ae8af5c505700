use crate::error::Result;
use crate::mc::McEstimate;
use crate::model::claim::DefaultableClaim;
use crate::model::params::ModelParams;
use crate::model::simulate::{map_paths, SimConfig};
use crate::model::wealth::{simulate_wealth, Strategy};
use crate::mvh::MvhStrategy;

/// Monte Carlo estimate of the quadratic hedge error `E[(X_T^{x,π} − ψ)²]`.
pub fn estimate_hedge_error(
    params: &ModelParams,
    sim: &SimConfig,
    claim: &DefaultableClaim,
    strategy: &dyn Strategy,
    x0: f64,
) -> Result<McEstimate> {
    let samples = map_paths(params, sim, |path| {
        let x_t = simulate_wealth(path, strategy, x0);
        let psi = claim.payoff(path);
        Ok((x_t - psi) * (x_t - psi))
    })?;
    Ok(McEstimate::from_samples(&samples, sim.seed))
}

/// Monte Carlo estimate of the exponential-utility objective
/// `E[−exp(−δ (X_T^{x,π} − ψ))]`.
pub fn estimate_utility(
    params: &ModelParams,
    sim: &SimConfig,
    claim: &DefaultableClaim,
    strategy: &dyn Strategy,
    x0: f64,
    delta: f64,
) -> Result<McEstimate> {
    let samples = map_paths(params, sim, |path| {
        let x_t = simulate_wealth(path, strategy, x0);
        let psi = claim.payoff(path);
        Ok(-(-delta * (x_t - psi)).exp())
    })?;
    Ok(McEstimate::from_samples(&samples, sim.seed))
}

/// Plain Monte Carlo of the tracking-error integral
/// `E[∫_0^T (v_s − c²_s/a_s) Θ_s ds]`, the independent oracle for the ξ
/// solve. The integrand is evaluated at the left end of each path segment.
pub fn estimate_tracking_integral(
    params: &ModelParams,
    sim: &SimConfig,
    strategy: &MvhStrategy<'_>,
) -> Result<McEstimate> {
    let samples = map_paths(params, sim, |path| {
        let mut acc = 0.0;
        let mut ctx = crate::model::wealth::PathContext::default();
        for seg in &path.segments {
            if let Some(b) = strategy.node_bundle(seg.t0, seg.bond0, seg.state, &ctx) {
                let co = crate::mvh::coeffs(&b.node, &b.th, &b.yi);
                if co.a > 0.0 {
                    acc += (co.v - co.c * co.c / co.a) * b.theta_big * (seg.t1 - seg.t0);
                }
            }
            if let Some(firm) = seg.jump_after {
                let event = crate::model::wealth::DefaultEvent {
                    time: seg.t1,
                    pre_spot: seg.bond1,
                };
                match firm {
                    crate::model::simulate::Firm::A => ctx.default_a = Some(event),
                    crate::model::simulate::Firm::B => ctx.default_b = Some(event),
                }
            }
        }
        Ok(acc)
    })?;
    Ok(McEstimate::from_samples(&samples, sim.seed))
}
