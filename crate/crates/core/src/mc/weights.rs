use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mc::McEstimate;
use crate::model::claim::DefaultableClaim;
use crate::model::params::ModelParams;
use crate::model::simulate::{map_paths, Firm, MarketPath, SimConfig};
use crate::model::state::DefaultState;
use crate::model::wealth::{DefaultEvent, PathContext};
use crate::mvh::BsdeFirstSolution;

/// A predictable field of Girsanov controls `(ρ, ρ^A, ρ^B)`.
pub trait ControlField: Sync {
    fn controls(
        &self,
        t: f64,
        spot: f64,
        state: DefaultState,
        ctx: &PathContext,
    ) -> Option<(f64, f64, f64)>;
}

/// The stochastic-exponential weight `Z_T` of a control field along one
/// path, via the product form: continuous part
/// `exp(∫ρ dW − ½∫ρ² dt − ∫(ρ^Aλ^A + ρ^Bλ^B) dt)` times `(1+ρ^i)` at each
/// default, discretized on the path's event segments.
pub fn path_weight(
    params: &ModelParams,
    path: &MarketPath,
    field: &dyn ControlField,
) -> Result<f64> {
    let mut ln_w = 0.0;
    let mut ctx = PathContext::default();
    for seg in &path.segments {
        let (rho, rho_a, rho_b) = field
            .controls(seg.t0, seg.bond0, seg.state, &ctx)
            .ok_or_else(|| {
                Error::Numerical(format!(
                    "control field undefined at t={}, state {}",
                    seg.t0,
                    seg.state.label()
                ))
            })?;
        let (la, lb) = params.intensities(seg.t0, seg.state);
        let len = seg.t1 - seg.t0;
        ln_w += rho * seg.dw - 0.5 * rho * rho * len - (rho_a * la + rho_b * lb) * len;
        if let Some(firm) = seg.jump_after {
            let (_, ja, jb) = field
                .controls(seg.t1, seg.bond1, seg.state, &ctx)
                .ok_or_else(|| Error::Numerical("control field undefined at default".into()))?;
            let jump_control = match firm {
                Firm::A => ja,
                Firm::B => jb,
            };
            if 1.0 + jump_control <= 0.0 {
                return Err(Error::Unsupported(format!(
                    "1 + rho^i = {} <= 0 at a default: signed measure, reweighting refused",
                    1.0 + jump_control
                )));
            }
            ln_w += (1.0 + jump_control).ln();
            let event = DefaultEvent { time: seg.t1, pre_spot: seg.bond1 };
            match firm {
                Firm::A => ctx.default_a = Some(event),
                Firm::B => ctx.default_b = Some(event),
            }
        }
    }
    Ok(ln_w.exp())
}

/// Per-path density weights, in path order.
pub fn density_weights(
    params: &ModelParams,
    sim: &SimConfig,
    field: &dyn ControlField,
) -> Result<Vec<f64>> {
    map_paths(params, sim, |path| path_weight(params, path, field))
}

/// Estimates the dual objective `E^Q[ln Z_T − δψ] = E[w (ln w − δψ)]`.
pub fn entropy_dual_estimate(
    params: &ModelParams,
    sim: &SimConfig,
    field: &dyn ControlField,
    claim: &DefaultableClaim,
    delta: f64,
) -> Result<McEstimate> {
    let samples = map_paths(params, sim, |path| {
        let w = path_weight(params, path, field)?;
        let psi = claim.payoff(path);
        Ok(w * (w.ln() - delta * psi))
    })?;
    Ok(McEstimate::from_samples(&samples, sim.seed))
}

/// Estimates `E[w · D_T]`; equals `d0` when the controls satisfy the bond
/// martingale constraint.
pub fn reweighted_terminal_bond(
    params: &ModelParams,
    sim: &SimConfig,
    field: &dyn ControlField,
) -> Result<McEstimate> {
    let samples = map_paths(params, sim, |path| {
        let w = path_weight(params, path, field)?;
        Ok(w * path.terminal_bond())
    })?;
    Ok(McEstimate::from_samples(&samples, sim.seed))
}

/// Candidate variance-optimal control field built from the first backward
/// solution: `ρ = β − bσ/a`, `ρ^i = θ^i − (1+θ^i)σ^i b/a` at each node.
/// In a regime with no risk sources left (σ = 0, no live intensity) the
/// controls are zero, which requires μ = 0 there.
pub struct VomControlField<'a> {
    pub params: &'a ModelParams,
    pub first: &'a BsdeFirstSolution,
}

impl ControlField for VomControlField<'_> {
    fn controls(
        &self,
        t: f64,
        spot: f64,
        state: DefaultState,
        ctx: &PathContext,
    ) -> Option<(f64, f64, f64)> {
        let l1_entry = ctx.default_a.map_or(0.0, |e| e.time);
        let (node, th) = self.first.integrands_at(self.params, t, spot, state, l1_entry)?;
        let vn = crate::closed_forms::VomNode {
            mu: node.mu,
            sigma: node.sigma,
            sigma_a: node.sigma_a,
            sigma_b: node.sigma_b,
            lambda_a: node.lambda_a,
            lambda_b: node.lambda_b,
            theta_a: th.theta_a,
            theta_b: th.theta_b,
            beta: th.beta,
        };
        match crate::closed_forms::vom_controls(&vn) {
            Ok(c) => Some((c.rho, c.rho_a, c.rho_b)),
            // riskless node: no reweighting possible nor needed
            Err(_) if node.mu == 0.0 => Some((0.0, 0.0, 0.0)),
            Err(_) => None,
        }
    }
}

/// Result of the second-moment identity check `Θ₀ · E[Z̄²_T] = 1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VomMomentReport {
    pub theta0: f64,
    pub second_moment: McEstimate,
    pub product: f64,
    pub product_stderr: f64,
}

impl VomMomentReport {
    pub fn within(&self, k: f64) -> bool {
        (self.product - 1.0).abs() <= k * self.product_stderr + 1e-12
    }
}

/// Checks `Θ₀ · E[Z̄²_T] = 1` with `Z̄` the candidate variance-optimal
/// density of [`VomControlField`].
pub fn vom_moment_check(
    params: &ModelParams,
    sim: &SimConfig,
    first: &BsdeFirstSolution,
) -> Result<VomMomentReport> {
    let field = VomControlField { params, first };
    let samples = map_paths(params, sim, |path| {
        let w = path_weight(params, path, &field)?;
        Ok(w * w)
    })?;
    let second_moment = McEstimate::from_samples(&samples, sim.seed);
    let theta0 = first.theta0[0][first.grid.center_index()];
    Ok(VomMomentReport {
        theta0,
        second_moment,
        product: theta0 * second_moment.mean,
        product_stderr: theta0 * second_moment.stderr,
    })
}
