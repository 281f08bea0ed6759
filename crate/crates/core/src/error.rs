use thiserror::Error;

use crate::trajectory::Trajectory;

/// Errors raised by the solvers in this crate.
#[derive(Debug, Error)]
pub enum EviError {
    /// Invalid sizes, parameters or option values.
    #[error("configuration error: {0}")]
    Config(String),

    /// Vector or operator dimensions do not agree.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// Trajectories live on different time grids.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// An argument lies outside the effective domain of a functional.
    #[error("domain error: {0}")]
    Domain(String),

    /// An iterative method stopped before reaching its tolerance.
    #[error("{solver} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    /// The line search could not produce a decrease; the last iterate is attached.
    #[error("line search stagnated after {shrinks} step reductions at iteration {iteration}")]
    Stagnation {
        iteration: usize,
        shrinks: usize,
        last_iterate: Box<Trajectory>,
    },
}

impl EviError {
    pub(crate) fn dim(context: &'static str, expected: usize, got: usize) -> Self {
        EviError::Dimension {
            context,
            expected,
            got,
        }
    }

    /// True for failures of a numerical method (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            EviError::NonConvergence { .. } | EviError::Stagnation { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, EviError>;
