use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::params::ModelParams;
use crate::mvh::coeffs::{driver_g3, MarketNode, ThetaIntegrands, YIntegrands};
use crate::mvh::theta::{implicit_step, RegimeCoeffs};
use crate::mvh::{slice_weights, BsdeFirstSolution, BsdeSecondSolution, BsdeThirdSolution};

/// Solves the tracking-error equation regime by regime: a linear backward
/// solve with source `g³ = Θ(v − c²/a)` and zero terminal value. After both
/// defaults the market has a single risk source left and `ξ ≡ 0`, so regime 1
/// couples to zero and regime 0 to the regime-1 diagonal at the post-jump
/// spot.
pub fn solve_xi(
    params: &ModelParams,
    first: &BsdeFirstSolution,
    second: &BsdeSecondSolution,
) -> Result<BsdeThirdSolution> {
    let times = &first.times;
    let grid = &first.grid;
    let n_steps = first.n_steps();
    let n_nodes = grid.n_nodes();
    let m = first.l1.len();

    let r1 = RegimeCoeffs::of(1);
    let xi1: Vec<Vec<Vec<f64>>> = (0..m)
        .into_par_iter()
        .map(|s| -> Result<Vec<Vec<f64>>> {
            let mut surf = vec![vec![0.0; n_nodes]; n_steps + 1];
            for n in (0..n_steps).rev() {
                let t0 = times[n];
                let dt = times[n + 1] - t0;
                let zero_target = vec![0.0; n_nodes];
                surf[n] = xi_backward_step(
                    &r1,
                    params,
                    first,
                    XiStepInput {
                        t0,
                        dt,
                        prev: &surf[n + 1],
                        jump_target: &zero_target,
                        theta_big_row: &first.theta1[s][n],
                        theta_rel_row: &first.theta_b_rel[s][n],
                        beta_rel_row: &first.beta1[s][n],
                        u_row: &second.u_b[s][n],
                        z_row: &second.z1[s][n],
                    },
                )?;
            }
            Ok(surf)
        })
        .collect::<Result<_>>()?;

    let r0 = RegimeCoeffs::of(0);
    let mut xi0 = vec![vec![0.0; n_nodes]; n_steps + 1];
    for n in (0..n_steps).rev() {
        let t0 = times[n];
        let dt = times[n + 1] - t0;
        let shift = (1.0 + r0.sigma_j(params, t0)).ln();
        let (j0, j1, w) = slice_weights(&first.l1, t0);
        let target: Vec<f64> = grid
            .nodes()
            .map(|y| {
                let v0 = grid.interp(&xi1[j0][n], y + shift);
                let v1 = grid.interp(&xi1[j1][n], y + shift);
                // off-grid extrapolation must not leave the nonnegative cone
                (v0 * (1.0 - w) + v1 * w).max(0.0)
            })
            .collect();
        xi0[n] = xi_backward_step(
            &r0,
            params,
            first,
            XiStepInput {
                t0,
                dt,
                prev: &xi0[n + 1],
                jump_target: &target,
                theta_big_row: &first.theta0[n],
                theta_rel_row: &first.theta_a_rel[n],
                beta_rel_row: &first.beta0[n],
                u_row: &second.u_a[n],
                z_row: &second.z0[n],
            },
        )?;
    }

    let min_xi = xi0
        .iter()
        .chain(xi1.iter().flatten())
        .flat_map(|r| r.iter())
        .fold(f64::INFINITY, |a, &b| a.min(b));
    if min_xi < -1e-9 {
        return Err(Error::Numerical(format!(
            "tracking error went negative: min xi = {min_xi}"
        )));
    }

    Ok(BsdeThirdSolution {
        times: times.clone(),
        grid: grid.clone(),
        l1: first.l1.clone(),
        xi0,
        xi1,
    })
}

struct XiStepInput<'a> {
    t0: f64,
    dt: f64,
    prev: &'a [f64],
    jump_target: &'a [f64],
    theta_big_row: &'a [f64],
    theta_rel_row: &'a [f64],
    beta_rel_row: &'a [f64],
    u_row: &'a [f64],
    z_row: &'a [f64],
}

fn xi_backward_step(
    rc: &RegimeCoeffs,
    params: &ModelParams,
    first: &BsdeFirstSolution,
    input: XiStepInput<'_>,
) -> Result<Vec<f64>> {
    let grid = &first.grid;
    let n = grid.n_nodes();
    let t0 = input.t0;
    let mu = rc.mu(params, t0);
    let sigma = rc.sigma(params, t0);
    let sigma_j = rc.sigma_j(params, t0);
    let lambda_j = rc.lambda_j(params, t0);
    let regime = rc.state.regime().expect("ordered regime");

    let node = MarketNode {
        mu,
        sigma,
        sigma_a: if regime == 0 { sigma_j } else { 0.0 },
        sigma_b: if regime == 1 { sigma_j } else { 0.0 },
        lambda_a: if regime == 0 { lambda_j } else { 0.0 },
        lambda_b: if regime == 1 { lambda_j } else { 0.0 },
    };
    let diff = 0.5 * sigma * sigma;
    let conv = vec![mu - sigma_j * lambda_j - 0.5 * sigma * sigma; n];
    let reaction = vec![lambda_j; n];
    let mut rhs = vec![0.0; n];
    for j in 0..n {
        let th = ThetaIntegrands {
            theta_a: if regime == 0 { input.theta_rel_row[j] } else { 0.0 },
            theta_b: if regime == 1 { input.theta_rel_row[j] } else { 0.0 },
            beta: input.beta_rel_row[j],
        };
        let yi = YIntegrands {
            u_a: if regime == 0 { input.u_row[j] } else { 0.0 },
            u_b: if regime == 1 { input.u_row[j] } else { 0.0 },
            z: input.z_row[j],
        };
        let g3 = driver_g3(&node, &th, &yi, input.theta_big_row[j])?;
        rhs[j] = input.prev[j] / input.dt + lambda_j * input.jump_target[j] + g3;
    }
    Ok(implicit_step(grid, input.dt, diff, &conv, &reaction, &rhs))
}
