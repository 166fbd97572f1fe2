use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an argument was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Two fields or a field and a mesh were combined across different meshes.
    #[error("mesh mismatch: {0}")]
    MeshMismatch(String),

    /// An operation required a different field layout.
    #[error("unsupported layout: {0}")]
    Layout(String),

    /// The input vector field is not weakly divergence free.
    #[error("input field is not solenoidal: relative weak-divergence residual {residual:.3e} exceeds {tolerance:.1e}")]
    NotSolenoidal { residual: f64, tolerance: f64 },

    /// The input vector field has nonzero flux through the boundary.
    #[error("nonzero normal trace: boundary flux residual {flux:.3e} exceeds {tolerance:.1e}; for fields with boundary flux on the ball use poincare_potential_ball instead")]
    NormalTrace { flux: f64, tolerance: f64 },

    /// The iterative linear solver did not reach the requested residual.
    #[error("linear solver did not converge: relative residual {final_residual:.3e} after {iterations} iterations")]
    SolverDiverged {
        final_residual: f64,
        iterations: usize,
        history: Vec<f64>,
    },

    /// Configuration file problems (unknown keys, missing keys, bad values).
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("report serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Process exit code for the CLI: 2 for validation problems, 3 for
    /// numerical failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_)
            | Error::MeshMismatch(_)
            | Error::Layout(_)
            | Error::Config(_) => 2,
            Error::SolverDiverged { .. } | Error::NotSolenoidal { .. } | Error::NormalTrace { .. } => 3,
            Error::Io(_) | Error::Json(_) => 1,
        }
    }
}
