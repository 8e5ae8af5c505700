use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::claim::RestrictedClaim;
use crate::model::params::ModelParams;
use crate::mvh::coeffs::{coeffs, MarketNode, ThetaIntegrands, YIntegrands};
use crate::mvh::theta::RegimeCoeffs;
use crate::mvh::{slice_weights, BsdeFirstSolution, BsdeSecondSolution};

/// Solves the price equation regime by regime.
///
/// After τ^B the claim is pinned to `f(D_{τ^B−})`, so the regime-2 solution
/// is that constant (the driver vanishes at `U = Z = 0`). Regime 1 couples to
/// it through `U^B = f(x) − Y¹` and has terminal `g`; regime 0 couples to the
/// regime-1 diagonal through `U^A = Y¹(t, x(1+σ^A)) − Y⁰`, terminal `g`. The
/// driver `g²` is evaluated with the Θ-integrands frozen from `first`; being
/// linear in `(U, Z)` it folds into the implicit step exactly.
pub fn solve_y_split(
    params: &ModelParams,
    claim: &RestrictedClaim,
    first: &BsdeFirstSolution,
    x_floor_check: bool,
) -> Result<BsdeSecondSolution> {
    claim.validate()?;
    let times = &first.times;
    let grid = &first.grid;
    let n_steps = first.n_steps();
    let m = first.l1.len();

    let y2_of_prespot: Vec<f64> = grid.nodes().map(|y| claim.f.eval(y.exp())).collect();
    let f_at_nodes = y2_of_prespot.clone();
    let terminal_g: Vec<f64> = grid.nodes().map(|y| claim.g.eval(y.exp())).collect();

    // regime 1, one solve per entry-time slice
    let r1 = RegimeCoeffs::of(1);
    let y1: Vec<Vec<Vec<f64>>> = (0..m)
        .into_par_iter()
        .map(|s| -> Result<Vec<Vec<f64>>> {
            let mut surf = vec![terminal_g.clone(); n_steps + 1];
            for n in (0..n_steps).rev() {
                let t0 = times[n];
                let dt = times[n + 1] - t0;
                surf[n] = linear_backward_step(
                    &r1,
                    params,
                    first,
                    LinearStepInput {
                        t0,
                        dt,
                        prev: &surf[n + 1],
                        target: &f_at_nodes,
                        theta_rel_row: &first.theta_b_rel[s][n],
                        beta_rel_row: &first.beta1[s][n],
                    },
                )?;
            }
            Ok(surf)
        })
        .collect::<Result<_>>()?;

    // regime 0, coupled to the regime-1 diagonal at the post-jump spot
    let r0 = RegimeCoeffs::of(0);
    let mut y0 = vec![terminal_g.clone(); n_steps + 1];
    for n in (0..n_steps).rev() {
        let t0 = times[n];
        let dt = times[n + 1] - t0;
        let shift = (1.0 + r0.sigma_j(params, t0)).ln();
        let (j0, j1, w) = slice_weights(&first.l1, t0);
        let target: Vec<f64> = grid
            .nodes()
            .map(|y| {
                let v0 = grid.interp(&y1[j0][n], y + shift);
                let v1 = grid.interp(&y1[j1][n], y + shift);
                v0 * (1.0 - w) + v1 * w
            })
            .collect();
        y0[n] = linear_backward_step(
            &r0,
            params,
            first,
            LinearStepInput {
                t0,
                dt,
                prev: &y0[n + 1],
                target: &target,
                theta_rel_row: &first.theta_a_rel[n],
                beta_rel_row: &first.beta0[n],
            },
        )?;
    }

    // derived integrands
    let z_of = |surf: &Vec<Vec<f64>>, rc: &RegimeCoeffs| -> Vec<Vec<f64>> {
        surf.iter()
            .enumerate()
            .map(|(n, row)| {
                let sigma = rc.sigma(params, times[n]);
                grid.d_dy(row).iter().map(|d| sigma * d).collect()
            })
            .collect()
    };
    let z0 = z_of(&y0, &r0);
    let z1: Vec<_> = y1.iter().map(|s| z_of(s, &r1)).collect();

    let u_b: Vec<Vec<Vec<f64>>> = y1
        .iter()
        .map(|s| {
            s.iter()
                .map(|row| {
                    row.iter().zip(&f_at_nodes).map(|(y, f)| f - y).collect()
                })
                .collect()
        })
        .collect();
    let mut u_a = Vec::with_capacity(n_steps + 1);
    for n in 0..=n_steps {
        let t = times[n];
        let shift = (1.0 + r0.sigma_j(params, t)).ln();
        let (j0, j1, w) = slice_weights(&first.l1, t);
        let row: Vec<f64> = grid
            .nodes()
            .enumerate()
            .map(|(j, y)| {
                let v0 = grid.interp(&y1[j0][n], y + shift);
                let v1 = grid.interp(&y1[j1][n], y + shift);
                v0 * (1.0 - w) + v1 * w - y0[n][j]
            })
            .collect();
        u_a.push(row);
    }

    let remark_bound = 2.0 * (1.0 / first.delta_min + claim.bound * claim.bound);
    let sol = BsdeSecondSolution {
        times: times.clone(),
        grid: grid.clone(),
        l1: first.l1.clone(),
        y0,
        y1,
        y2_of_prespot,
        z0,
        z1,
        u_a,
        u_b,
        claim_bound: claim.bound,
        remark_bound,
    };

    if x_floor_check {
        let tol = 1e-6 * claim.bound.max(1.0);
        let max_abs = sol
            .y0
            .iter()
            .chain(sol.y1.iter().flatten())
            .flat_map(|r| r.iter())
            .fold(0.0f64, |a, &b| a.max(b.abs()));
        if !max_abs.is_finite() || max_abs > claim.bound + tol {
            return Err(Error::Numerical(format!(
                "price surface exceeds the claim bound: max |Y| = {max_abs}, M = {}",
                claim.bound
            )));
        }
    }
    Ok(sol)
}

struct LinearStepInput<'a> {
    t0: f64,
    dt: f64,
    prev: &'a [f64],
    /// Post-jump value the jump integrand points to: `U = target − Y`.
    target: &'a [f64],
    theta_rel_row: &'a [f64],
    beta_rel_row: &'a [f64],
}

/// One implicit step of the linear price equation. Writing the driver plus
/// compensator as `g² + Uλ = κ_Z Z + κ_U U` with
/// `κ_Z = β − bσ/a` and `κ_U = (1+θ)(1 − bσ^J/a) λ`, the `Z = σ ∂_y Y` part
/// joins the convection and the `−κ_U Y` part the reaction, leaving
/// `κ_U · target` as the source.
fn linear_backward_step(
    rc: &RegimeCoeffs,
    params: &ModelParams,
    first: &BsdeFirstSolution,
    input: LinearStepInput<'_>,
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
    let base_conv = mu - sigma_j * lambda_j - 0.5 * sigma * sigma;
    let mut conv = vec![0.0; n];
    let mut reaction = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    for j in 0..n {
        let th = ThetaIntegrands {
            theta_a: if regime == 0 { input.theta_rel_row[j] } else { 0.0 },
            theta_b: if regime == 1 { input.theta_rel_row[j] } else { 0.0 },
            beta: input.beta_rel_row[j],
        };
        let co = coeffs(&node, &th, &YIntegrands::default());
        if co.a <= 0.0 {
            return Err(Error::Numerical(format!(
                "control weight a = {} not positive at t={t0}",
                co.a
            )));
        }
        let theta_rel = input.theta_rel_row[j];
        let kappa_z = th.beta - co.b * sigma / co.a;
        let kappa_u = (1.0 + theta_rel) * (1.0 - co.b * sigma_j / co.a) * lambda_j;
        conv[j] = base_conv + kappa_z * sigma;
        reaction[j] = kappa_u;
        rhs[j] = input.prev[j] / input.dt + kappa_u * input.target[j];
    }
    Ok(crate::mvh::theta::implicit_step(grid, input.dt, diff, &conv, &reaction, &rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::model::claim::PayoffFn;
    use crate::model::coeff::StateCoeff;
    use crate::mvh::theta::{solve_theta_split, ThetaTier};
    use crate::mvh::Tolerances;

    fn ordered_params(mu: f64) -> ModelParams {
        ModelParams {
            mu: StateCoeff::constant(mu),
            sigma: StateCoeff::constant(0.2),
            sigma_a: StateCoeff::constant(-0.4),
            sigma_b: StateCoeff::constant(-0.3),
            lambda_a: StateCoeff::per_state(0.15, 0.0, 0.0, 0.0),
            lambda_b: StateCoeff::per_state(0.0, 0.1, 0.0, 0.0),
            horizon: 1.0,
            ordered_defaults: true,
        }
        .validate()
        .unwrap()
    }

    fn first_for(params: &ModelParams, spec: &GridSpec) -> BsdeFirstSolution {
        solve_theta_split(params, spec, 1.0, ThetaTier::Auto, &Tolerances::default()).unwrap()
    }

    #[test]
    fn zero_claim_prices_to_zero_exactly() {
        let params = ordered_params(0.05);
        let spec = GridSpec { n_time: 60, n_space: 41, ..Default::default() };
        let first = first_for(&params, &spec);
        let claim = RestrictedClaim { g: PayoffFn::ZERO, f: PayoffFn::ZERO, bound: 0.0 };
        let sol = solve_y_split(&params, &claim, &first, true).unwrap();
        assert!(sol.y0.iter().flatten().all(|&v| v == 0.0));
        assert!(sol.y1[0].iter().flatten().all(|&v| v == 0.0));
        assert!(sol.z0.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_claim_prices_to_the_constant() {
        let params = ordered_params(0.05);
        let spec = GridSpec { n_time: 60, n_space: 41, ..Default::default() };
        let first = first_for(&params, &spec);
        let k = 0.8;
        let claim = RestrictedClaim {
            g: PayoffFn::constant(k),
            f: PayoffFn::constant(k),
            bound: k,
        };
        let sol = solve_y_split(&params, &claim, &first, true).unwrap();
        for surf in [&sol.y0, &sol.y1[0]] {
            for row in surf.iter() {
                for &v in row {
                    assert!((v - k).abs() < 1e-12, "Y = {v}");
                }
            }
        }
        // U and Z vanish for a cash claim
        assert!(sol.u_a.iter().flatten().all(|v| v.abs() < 1e-12));
        assert!(sol.u_b[0].iter().flatten().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn complete_market_price_is_risk_neutral_expectation() {
        // λ ≡ 0: Y₀ = E[g(D_T)] under the measure with ρ = −μ/σ, i.e. a
        // driftless lognormal bond; oracle by Gauss-Hermite-style quadrature.
        let params = ModelParams {
            mu: StateCoeff::constant(0.08),
            sigma: StateCoeff::constant(0.25),
            sigma_a: StateCoeff::constant(0.0),
            sigma_b: StateCoeff::constant(0.0),
            lambda_a: StateCoeff::constant(0.0),
            lambda_b: StateCoeff::constant(0.0),
            horizon: 1.0,
            ordered_defaults: true,
        }
        .validate()
        .unwrap();
        let spec = GridSpec { n_time: 400, n_space: 401, ..Default::default() };
        let first = first_for(&params, &spec);
        let g = PayoffFn::CappedCall { strike: 1.0, cap: 0.6 };
        let claim = RestrictedClaim { g: g.clone(), f: PayoffFn::ZERO, bound: 0.6 };
        let sol = solve_y_split(&params, &claim, &first, true).unwrap();
        let y0 = sol.y0[0][sol.grid.center_index()];

        // quadrature of E[g(exp(−σ²/2 + σ z))], z ~ N(0,1)
        let sigma = 0.25;
        let n = 4000;
        let mut oracle = 0.0;
        for i in 0..n {
            let z = -8.0 + 16.0 * (i as f64 + 0.5) / n as f64;
            let w = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
            oracle += w * g.eval((-0.5 * sigma * sigma + sigma * z).exp()) * 16.0 / n as f64;
        }
        assert!(
            (y0 - oracle).abs() < 2e-4,
            "pde price {y0} vs quadrature {oracle}"
        );
    }
}
