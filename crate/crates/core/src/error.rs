use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A model parameter violates an invariant; the message names the first
    /// failed invariant and the state it failed in.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid claim: {0}")]
    InvalidClaim(String),

    /// The requested operation is outside the supported tier
    /// (e.g. the pure-jump market in the HJB module).
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// An iterative solve failed to reach its tolerance.
    #[error("no convergence in {what}: residual {residual:.3e} after {iterations} iterations (last iterate {last:?})")]
    NoConvergence {
        what: String,
        residual: f64,
        iterations: usize,
        last: Vec<f64>,
    },

    /// A solver invariant was violated mid-run (e.g. Θ below its floor).
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
