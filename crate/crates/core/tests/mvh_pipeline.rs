//! End-to-end checks of the mean-variance pipeline: solver output against
//! Monte Carlo replays of the cost process under the feedback hedge.

use dualhedge_core::grid::GridSpec;
use dualhedge_core::mc::{estimate_hedge_error, estimate_tracking_integral};
use dualhedge_core::model::simulate::SimConfig;
use dualhedge_core::mvh::{
    cost_process_check, mvh_value, optimal_strategy_mvh, solve_theta_split, solve_xi,
    solve_y_split, ThetaTier, Tolerances,
};
use dualhedge_core::{
    DefaultableClaim, ModelParams, PayoffFn, RestrictedClaim, StateCoeff, Strategy,
};

fn ordered_instance() -> (ModelParams, RestrictedClaim) {
    let params = ModelParams {
        mu: StateCoeff::per_state(0.05, 0.03, 0.0, 0.02),
        sigma: StateCoeff::per_state(0.2, 0.25, 0.2, 0.3),
        sigma_a: StateCoeff::constant(-0.4),
        sigma_b: StateCoeff::constant(-0.3),
        lambda_a: StateCoeff::per_state(0.2, 0.0, 0.0, 0.0),
        lambda_b: StateCoeff::per_state(0.0, 0.25, 0.0, 0.0),
        horizon: 1.0,
        ordered_defaults: true,
    }
    .validate()
    .unwrap();
    let claim = RestrictedClaim {
        g: PayoffFn::CappedCall { strike: 1.0, cap: 0.8 },
        f: PayoffFn::CappedAffine { slope: 0.5, intercept: 0.1, cap: 0.7 },
        bound: 0.8,
    };
    (params, claim)
}

#[test]
fn mc_cost_under_feedback_hedge_matches_solver_value() {
    let (params, claim) = ordered_instance();
    let spec = GridSpec { n_time: 300, n_space: 301, ..Default::default() };
    let tol = Tolerances::default();
    let d0 = 1.0;
    let x0 = 0.4;

    let first = solve_theta_split(&params, &spec, d0, ThetaTier::Auto, &tol).unwrap();
    let second = solve_y_split(&params, &claim, &first, true).unwrap();
    let third = solve_xi(&params, &first, &second).unwrap();
    let value = mvh_value(x0, &first, &second, &third);
    let strategy = optimal_strategy_mvh(&params, &claim, &first, &second);

    let sim = SimConfig { n_steps: 400, n_paths: 60_000, d0, seed: 424242 };
    let est = estimate_hedge_error(
        &params,
        &sim,
        &DefaultableClaim::Restricted(claim.clone()),
        &strategy,
        x0,
    )
    .unwrap();
    assert!(
        (est.mean - value).abs() < 3.0 * est.stderr,
        "MC {} ± {} vs solver {}",
        est.mean,
        est.stderr,
        value
    );
}

#[test]
fn tracking_error_matches_plain_mc_of_its_integral() {
    let (params, claim) = ordered_instance();
    let spec = GridSpec { n_time: 200, n_space: 201, ..Default::default() };
    let tol = Tolerances::default();
    let d0 = 1.0;

    let first = solve_theta_split(&params, &spec, d0, ThetaTier::Auto, &tol).unwrap();
    let second = solve_y_split(&params, &claim, &first, true).unwrap();
    let third = solve_xi(&params, &first, &second).unwrap();
    let xi0 = third.xi0[0][third.grid.center_index()];

    let strategy = optimal_strategy_mvh(&params, &claim, &first, &second);
    let sim = SimConfig { n_steps: 300, n_paths: 40_000, d0, seed: 777 };
    let est = estimate_tracking_integral(&params, &sim, &strategy).unwrap();
    assert!(
        (est.mean - xi0).abs() < 3.0 * est.stderr + 1e-4,
        "MC integral {} ± {} vs xi0 {}",
        est.mean,
        est.stderr,
        xi0
    );
}

#[test]
fn cost_process_is_flat_under_the_optimal_hedge_and_grows_when_doubled() {
    let (params, claim) = ordered_instance();
    let spec = GridSpec { n_time: 300, n_space: 301, ..Default::default() };
    let tol = Tolerances::default();
    let d0 = 1.0;
    let x0 = 0.4;

    let first = solve_theta_split(&params, &spec, d0, ThetaTier::Auto, &tol).unwrap();
    let second = solve_y_split(&params, &claim, &first, true).unwrap();
    let third = solve_xi(&params, &first, &second).unwrap();
    let strategy = optimal_strategy_mvh(&params, &claim, &first, &second);

    let sim = SimConfig { n_steps: 400, n_paths: 50_000, d0, seed: 31415 };
    let monitors = [0, 50, 100, 150, 200, 250, 300, 350, 400];
    let report = cost_process_check(
        &params, &sim, x0, &claim, &first, &second, &third, &strategy, &monitors,
    )
    .unwrap();
    assert!(
        report.max_abs_deviation_sigmas() < 3.0,
        "E[J_t] deviates from J_0 by {} sigmas",
        report.max_abs_deviation_sigmas()
    );

    // doubling the position makes the cost process a strict submartingale
    let doubled = |t: f64,
                   w: f64,
                   spot: f64,
                   state: dualhedge_core::DefaultState,
                   ctx: &dualhedge_core::PathContext| {
        2.0 * strategy.position(t, w, spot, state, ctx)
    };
    let report2 = cost_process_check(
        &params, &sim, x0, &claim, &first, &second, &third, &doubled, &monitors,
    )
    .unwrap();
    let term = report2.terminal();
    assert!(
        term.mean >= report2.j0 - 3.0 * term.stderr,
        "E[J_T] = {} fell below J_0 = {}",
        term.mean,
        report2.j0
    );
    // and strictly above for a clearly suboptimal strategy
    assert!(term.mean > report.terminal().mean, "doubling should cost more");
}
