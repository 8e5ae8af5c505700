use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mc::{mean_stderr, McEstimate};
use crate::model::claim::DefaultableClaim;
use crate::model::params::ModelParams;
use crate::model::rng::path_rng;
use crate::model::simulate::{map_paths, SimConfig};
use crate::model::state::DefaultState;
use crate::model::wealth::{simulate_wealth, BumpedStrategy, PathContext, Strategy};

/// A smooth random perturbation field
/// `η(t, x) = a₀ + a₁ sin(ω_t t + φ_t) cos(ω_y ln x + φ_y)`, drawn from
/// `(seed, index)`.
#[derive(Debug, Clone, Copy)]
pub struct BumpField {
    a0: f64,
    a1: f64,
    om_t: f64,
    ph_t: f64,
    om_y: f64,
    ph_y: f64,
}

pub fn bump_field(seed: u64, index: u64) -> BumpField {
    let mut rng = path_rng(seed ^ 0xB0B0_F1E1D, index);
    let mut sym = |lo: f64, hi: f64| lo + (hi - lo) * rng.gen::<f64>();
    BumpField {
        a0: sym(-1.0, 1.0),
        a1: sym(-1.0, 1.0),
        om_t: sym(0.5, 6.0),
        ph_t: sym(0.0, std::f64::consts::TAU),
        om_y: sym(0.5, 4.0),
        ph_y: sym(0.0, std::f64::consts::TAU),
    }
}

impl Strategy for BumpField {
    fn position(
        &self,
        t: f64,
        _wealth: f64,
        spot: f64,
        _state: DefaultState,
        _ctx: &PathContext,
    ) -> f64 {
        self.a0 + self.a1 * (self.om_t * t + self.ph_t).sin() * (self.om_y * spot.ln() + self.ph_y).cos()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbationRow {
    pub bump_index: usize,
    pub bumped_cost: f64,
    /// Paired difference bumped − base on common random numbers.
    pub diff_mean: f64,
    pub diff_stderr: f64,
    /// Bumped cost below base by more than 3 paired standard errors.
    pub violation: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub base_cost: McEstimate,
    pub rows: Vec<PerturbationRow>,
    pub n_violations: usize,
}

/// Compares the quadratic cost of `base` against `n_bumps` randomly bumped
/// strategies on a common path set. Each path is simulated once and the
/// wealth is replayed per candidate, so the comparisons are paired.
#[allow(clippy::too_many_arguments)]
pub fn perturbation_test(
    params: &ModelParams,
    sim: &SimConfig,
    claim: &DefaultableClaim,
    base: &dyn Strategy,
    x0: f64,
    n_bumps: usize,
    bump_scale: f64,
    bump_seed: u64,
) -> Result<PerturbationReport> {
    let bumps: Vec<BumpField> = (0..n_bumps).map(|i| bump_field(bump_seed, i as u64)).collect();
    // per path: [base cost, bumped costs...]
    let rows: Vec<Vec<f64>> = map_paths(params, sim, |path| {
        let psi = claim.payoff(path);
        let sq = |x: f64| (x - psi) * (x - psi);
        let mut out = Vec::with_capacity(n_bumps + 1);
        out.push(sq(simulate_wealth(path, base, x0)));
        for bump in &bumps {
            let candidate = BumpedStrategy { base, bump, scale: bump_scale };
            out.push(sq(simulate_wealth(path, &candidate, x0)));
        }
        Ok(out)
    })?;

    let n_paths = rows.len();
    let column = |j: usize| -> Vec<f64> { rows.iter().map(|r| r[j]).collect() };
    let base_cost = McEstimate::from_samples(&column(0), sim.seed);
    let mut report_rows = Vec::with_capacity(n_bumps);
    let mut n_violations = 0;
    for b in 0..n_bumps {
        let diffs: Vec<f64> = rows.iter().map(|r| r[b + 1] - r[0]).collect();
        let (diff_mean, diff_stderr) = mean_stderr(&diffs);
        let bumped = pairwise_mean(&column(b + 1));
        let violation = diff_mean < -3.0 * diff_stderr - 1e-12;
        if violation {
            n_violations += 1;
        }
        report_rows.push(PerturbationRow {
            bump_index: b,
            bumped_cost: bumped,
            diff_mean,
            diff_stderr,
            violation,
        });
    }
    let _ = n_paths;
    Ok(PerturbationReport { base_cost, rows: report_rows, n_violations })
}

fn pairwise_mean(xs: &[f64]) -> f64 {
    crate::mc::pairwise_sum(xs) / xs.len() as f64
}
