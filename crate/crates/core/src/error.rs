//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the admissible state space (saturation, negative
    /// fractions, non-finite values).
    #[error("domain: {0}")]
    Domain(String),

    /// A quadrature or interpolation did not reach the requested accuracy.
    #[error("accuracy: {context} (requested {requested:e}, achieved {achieved:e})")]
    Accuracy {
        context: String,
        requested: f64,
        achieved: f64,
    },

    /// A time step produced an invalid state and was rejected.
    #[error("step rejected: {reason} (species {species}, node ({ix},{iy}), value {value:e})")]
    StepRejected {
        reason: String,
        species: usize,
        ix: usize,
        iy: usize,
        value: f64,
    },

    /// An iterative solve ran out of iterations.
    #[error("no convergence: {context} (residual {residual:e})")]
    NonConvergence { context: String, residual: f64 },

    /// Generic numerical failure (overflow, non-finite intermediate).
    #[error("numerical: {0}")]
    Numerical(String),

    /// Malformed configuration or an unknown key.
    #[error("config: {0}")]
    Config(String),

    /// Invalid input to a post-processing routine.
    #[error("input: {0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Exit code the command-line tool maps this error to: 2 for
    /// configuration problems, 1 for runtime/numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Input(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
