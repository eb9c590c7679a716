use thiserror::Error;

use crate::solver::Solution;

/// Error type shared by every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A group element or algebra vector left the neighbourhood of the
    /// identity on which `exp` is a diffeomorphism.
    #[error("rotation angle {theta} is outside the injectivity radius of exp (|theta| < pi - {margin})")]
    InjectivityRadius { theta: f64, margin: f64 },

    #[error("matrix is numerically singular: {0}")]
    Singular(&'static str),

    /// Links overlap: the shape lies outside (-pi, pi)^2.
    #[error("shape ({alpha1}, {alpha2}) is outside the model domain (-pi, pi)^2")]
    ShapeOutOfDomain { alpha1: f64, alpha2: f64 },

    #[error("costate fixed point did not converge in {iterations} iterations (last update {last_update:e})")]
    FixedPointDiverged { iterations: usize, last_update: f64 },

    #[error("shooting Jacobian is singular")]
    SingularJacobian,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The solver ran out of iterations. The best iterate is attached.
    #[error("solver reached the iteration limit without converging")]
    MaxIterations { best: Box<Solution> },

    /// Line search failure or a non-finite iterate. The best iterate is attached.
    #[error("solver diverged: {reason}")]
    Diverged { reason: String, best: Box<Solution> },
}

impl Error {
    /// The best iterate carried by a non-convergence error, if any.
    pub fn best_iterate(&self) -> Option<&Solution> {
        match self {
            Error::MaxIterations { best } | Error::Diverged { best, .. } => Some(best),
            _ => None,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
