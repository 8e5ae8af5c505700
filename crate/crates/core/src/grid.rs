use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::params::ModelParams;
use crate::model::state::DefaultState;

/// Grid configuration for the PDE tiers.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_time: usize,
    /// Number of log-spot nodes; forced odd so the center node sits exactly
    /// at ln d0.
    pub n_space: usize,
    /// Half-width of the log-spot grid around ln d0. When absent it is sized
    /// from the terminal log distribution (see [`GridSpec::resolve_halfwidth`]).
    #[serde(default)]
    pub log_spot_halfwidth: Option<f64>,
    /// Number of regime-entry-time slices for the regime-1 solves of the
    /// splitting scheme.
    #[serde(default = "default_l1")]
    pub l1_grid: usize,
}

fn default_l1() -> usize {
    1
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { n_time: 200, n_space: 201, log_spot_halfwidth: None, l1_grid: 1 }
    }
}

/// Standard-deviation multiple used when the half-width is auto-sized.
pub const DEFAULT_HALFWIDTH_STDDEVS: f64 = 6.0;

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_time < 2 {
            return Err(Error::Config("grids.n_time must be >= 2".into()));
        }
        if self.n_space < 5 {
            return Err(Error::Config("grids.n_space must be >= 5".into()));
        }
        if let Some(h) = self.log_spot_halfwidth {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::Config("grids.log_spot_halfwidth must be > 0".into()));
            }
        }
        if self.l1_grid == 0 {
            return Err(Error::Config("grids.l1_grid must be >= 1".into()));
        }
        Ok(())
    }

    /// Half-width: configured value, or `6·σ_max·√T` plus the largest jump
    /// displacements in log space, so post-jump lookups stay on the grid.
    pub fn resolve_halfwidth(&self, params: &ModelParams) -> f64 {
        if let Some(h) = self.log_spot_halfwidth {
            return h;
        }
        let t_end = params.horizon;
        let mut sig = 0.0f64;
        let mut jump = 0.0f64;
        let mut drift = 0.0f64;
        for s in DefaultState::ALL {
            let (lo, hi) = params.sigma.get(s).range_on(t_end);
            sig = sig.max(lo.abs().max(hi.abs()));
            for c in [params.sigma_a.get(s), params.sigma_b.get(s)] {
                let (lo, hi) = c.range_on(t_end);
                for v in [lo, hi] {
                    if 1.0 + v > 0.0 {
                        jump = jump.max((1.0 + v).ln().abs());
                    }
                }
            }
            let (lo, hi) = params.mu.get(s).range_on(t_end);
            drift = drift.max(lo.abs().max(hi.abs()));
        }
        (DEFAULT_HALFWIDTH_STDDEVS * sig * t_end.sqrt() + 2.0 * jump + drift * t_end).max(0.5)
    }

    pub fn with_halved_steps(&self) -> GridSpec {
        GridSpec {
            n_time: self.n_time * 2,
            n_space: self.n_space * 2 - 1,
            ..*self
        }
    }
}

/// Uniform time grid on `[0, T]`.
#[derive(Debug, Clone)]
pub struct TimeGrid {
    pub times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Self {
        let times = (0..=n_steps)
            .map(|k| {
                if k == n_steps {
                    horizon
                } else {
                    horizon * k as f64 / n_steps as f64
                }
            })
            .collect();
        TimeGrid { times }
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn dt(&self) -> f64 {
        self.times[1] - self.times[0]
    }
}

/// Uniform grid in log-spot, centered on `ln d0` with an odd node count so
/// the center node is exact. Interpolation is linear inside and linear
/// extrapolation outside (consistent with the zero-second-derivative
/// boundary of the PDE tiers).
#[derive(Debug, Clone, PartialEq)]
pub struct LogSpotGrid {
    pub y_min: f64,
    pub dy: f64,
    pub n: usize,
    pub center: f64,
}

impl LogSpotGrid {
    pub fn centered(ln_d0: f64, halfwidth: f64, n_space: usize) -> Self {
        let n = if n_space % 2 == 0 { n_space + 1 } else { n_space };
        let dy = 2.0 * halfwidth / (n - 1) as f64;
        LogSpotGrid { y_min: ln_d0 - halfwidth, dy, n, center: ln_d0 }
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn node(&self, j: usize) -> f64 {
        self.y_min + self.dy * j as f64
    }

    pub fn center_index(&self) -> usize {
        (self.n - 1) / 2
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |j| self.node(j))
    }

    /// Linear interpolation of tabulated `values` at log-spot `y`, with
    /// linear extrapolation beyond the ends.
    pub fn interp(&self, values: &[f64], y: f64) -> f64 {
        debug_assert_eq!(values.len(), self.n);
        let s = (y - self.y_min) / self.dy;
        if s <= 0.0 {
            return values[0] + (values[1] - values[0]) * s;
        }
        let last = (self.n - 1) as f64;
        if s >= last {
            return values[self.n - 1]
                + (values[self.n - 1] - values[self.n - 2]) * (s - last);
        }
        let j = s.floor() as usize;
        let w = s - j as f64;
        values[j] * (1.0 - w) + values[j + 1] * w
    }

    /// Central-difference ∂/∂y of tabulated values, one-sided at the ends.
    pub fn d_dy(&self, values: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n];
        out[0] = (values[1] - values[0]) / self.dy;
        for j in 1..n - 1 {
            out[j] = (values[j + 1] - values[j - 1]) / (2.0 * self.dy);
        }
        out[n - 1] = (values[n - 1] - values[n - 2]) / self.dy;
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn center_node_is_exact() {
        let g = LogSpotGrid::centered(0.3, 1.5, 200);
        assert_eq!(g.n_nodes(), 201);
        assert!((g.node(g.center_index()) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn interp_is_exact_on_linear_data() {
        let g = LogSpotGrid::centered(0.0, 1.0, 11);
        let vals: Vec<f64> = g.nodes().map(|y| 2.0 * y + 1.0).collect();
        for y in [-1.4, -0.63, 0.0, 0.21, 1.0, 1.9] {
            assert!((g.interp(&vals, y) - (2.0 * y + 1.0)).abs() < 1e-12);
        }
    }
}
