use std::fmt;

/// Errors surfaced by the simulation and bound kernels.
#[derive(Debug, Clone, PartialEq)]
pub enum SimError {
    /// Invalid configuration or parameter value.
    Config(String),
    /// Operand shapes do not satisfy the operation contract.
    Dimension(String),
    /// A matrix expected to be Hermitian deviates beyond tolerance.
    NonHermitian { deviation: f64 },
    /// The iterative eigensolver failed to reach the off-diagonal threshold
    /// within the sweep cap.
    SvdNonConvergence { sweeps: usize },
    /// The (possibly quantized) user channel matrix is numerically singular;
    /// the caller discards the realization and counts it.
    SingularChannel { cond: f64 },
    /// A numerical postcondition failed (non-finite output, residual above
    /// tolerance, or an exhausted redraw budget).
    Numerical(String),
}

impl SimError {
    /// True for errors that represent a probability-zero degenerate draw:
    /// the realization is discarded and redrawn rather than aborting.
    pub fn is_discardable(&self) -> bool {
        matches!(
            self,
            SimError::SingularChannel { .. } | SimError::SvdNonConvergence { .. }
        )
    }
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::Config(msg) => write!(f, "configuration error: {msg}"),
            SimError::Dimension(msg) => write!(f, "dimension mismatch: {msg}"),
            SimError::NonHermitian { deviation } => {
                write!(f, "matrix is not Hermitian (deviation {deviation:.3e})")
            }
            SimError::SvdNonConvergence { sweeps } => {
                write!(f, "eigensolver did not converge within {sweeps} sweeps")
            }
            SimError::SingularChannel { cond } => {
                write!(f, "singular channel matrix (condition estimate {cond:.3e})")
            }
            SimError::Numerical(msg) => write!(f, "numerical failure: {msg}"),
        }
    }
}

impl std::error::Error for SimError {}

pub type SimResult<T> = Result<T, SimError>;
