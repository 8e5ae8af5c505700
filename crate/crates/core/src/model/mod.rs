//! The two-default market model: parameters and validation, bond path
//! simulation, claims and payoffs, and wealth dynamics.

pub mod claim;
pub mod coeff;
pub mod params;
pub(crate) mod rng;
pub mod simulate;
pub mod state;
pub mod wealth;

pub use params::solve_rho;
