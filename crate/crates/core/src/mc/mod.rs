//! Monte Carlo estimators tying the solvers to the model's probabilistic
//! identities: hedge-error estimation, Girsanov density weights and
//! measure-changed expectations, variance-optimal second-moment checks, and
//! perturbation optimality tests.
//!
//! Estimates are reproducible bit-exactly given `(inputs, seed, n_paths)`:
//! per-path streams follow the split-stream contract and accumulation is
//! pairwise (order-independent of any parallel scheduling).

mod hedge;
mod perturb;
mod weights;

pub use hedge::{estimate_hedge_error, estimate_tracking_integral, estimate_utility};
pub use perturb::{bump_field, perturbation_test, PerturbationReport, PerturbationRow};
pub use weights::{
    density_weights, entropy_dual_estimate, reweighted_terminal_bond, vom_moment_check,
    ControlField, VomMomentReport,
};

use serde::{Deserialize, Serialize};

/// A Monte Carlo estimate with its standard error and provenance.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub seed: u64,
}

impl McEstimate {
    pub fn from_samples(samples: &[f64], seed: u64) -> McEstimate {
        let (mean, stderr) = mean_stderr(samples);
        McEstimate { mean, stderr, n_paths: samples.len(), seed }
    }

    /// |mean − target| ≤ k·stderr, with a tiny absolute floor so exact
    /// (zero-variance) cases compare cleanly.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr + 1e-12
    }
}

/// Pairwise summation: deterministic, order-independent of scheduling, and
/// with O(log n) error growth.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

/// Sample mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = pairwise_sum(xs) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&sq) / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_small_input() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let naive: f64 = xs.iter().sum();
        assert!((pairwise_sum(&xs) - naive).abs() < 1e-9);
    }

    #[test]
    fn stderr_of_constant_sample_is_zero() {
        let (m, s) = mean_stderr(&[2.0; 64]);
        assert_eq!(m, 2.0);
        assert_eq!(s, 0.0);
    }
}
