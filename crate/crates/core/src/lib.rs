//! Pricing and hedging engine for claims contingent on the default times of
//! two firms, where only the defaultable bond of firm A is traded.
//!
//! Two pipelines are provided:
//!
//! * [`hjb`] — exponential-utility indifference pricing in the Markov tier.
//!   The dual entropy-minimization problem over risk-neutral measures is
//!   solved as a system of HJB equations coupled across default states, and
//!   the optimal hedge is read off the value surface.
//! * [`mvh`] — mean-variance hedging in the ordered-default tier. The
//!   quadratic cost decomposes as `Θ_t (X_t − Y_t)² + ξ_t`; the triple
//!   (Θ, Y, ξ) solves a cascade of per-regime backward equations obtained by
//!   splitting the jump BSDE at the default times.
//!
//! [`model`] holds the market model (bond dynamics with two compensated
//! default jumps, path simulation, claims, wealth), [`closed_forms`] the
//! explicit solutions used as oracles, [`mc`] the Monte Carlo estimators that
//! tie solver output back to the probabilistic identities, and [`checks`] a
//! config-driven verification suite combining all of the above.

// pub mod checks;
pub mod closed_forms;
pub mod error;
pub mod grid;
pub mod hjb;
pub mod mc;
pub mod model;
pub mod mvh;
mod tridiag;

pub use error::{Error, Result};
pub use grid::{GridSpec, LogSpotGrid, TimeGrid};
pub use model::claim::{DefaultableClaim, PayoffFn, RestrictedClaim};
pub use model::coeff::{Coefficient, StateCoeff};
pub use model::params::ModelParams;
pub use model::simulate::{simulate_paths, MarketPath, SimConfig};
pub use model::state::DefaultState;
pub use model::wealth::{simulate_wealth, PathContext, Strategy, StrategyField};
