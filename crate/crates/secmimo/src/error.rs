//! Error taxonomy shared by every module.
//!
//! Each variant carries enough context to act on; [`Error::kind`] collapses
//! the taxonomy into the three classes the CLI maps to exit codes.

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad input: config, parameter ranges, shape mismatches. Exit code 2.
    Validation,
    /// Numerical failure: non-PSD input, singular system, non-convergence. Exit code 3.
    Numerical,
    /// Filesystem or serialization failure. Exit code 4.
    Io,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("validation: {0}")]
    Validation(String),

    #[error("not Hermitian: entry ({row},{col}) vs ({col},{row}) differ by {deviation:.3e} (tolerance {tol:.1e})")]
    NotHermitian {
        row: usize,
        col: usize,
        deviation: f64,
        tol: f64,
    },

    #[error("not PSD: smallest eigenvalue {min_eig:.6e} is below the threshold {threshold:.6e}")]
    NotPsd { min_eig: f64, threshold: f64 },

    #[error("numerically singular system: condition number estimate {cond:.3e}")]
    Singular { cond: f64 },

    #[error("eigendecomposition did not converge")]
    EigenFailed,

    #[error("infeasible power split: p = {p} outside [0, {max_p}] (artificial-noise share would be negative)")]
    InfeasibleSplit { p: f64, max_p: f64 },

    #[error("degenerate estimate: channel estimate has zero norm")]
    DegenerateEstimate,

    #[error("degenerate scenario: {0}")]
    DegenerateScenario(String),

    /// Estimate/filter mismatch detected through a non-PSD error covariance.
    #[error("estimation inconsistency: {0}")]
    Inconsistent(String),

    #[error("orthogonality precondition violated: largest user/eavesdropper trace product {max_product:.3e} exceeds {tol:.3e}")]
    OrthogonalityViolated { max_product: f64, tol: f64 },

    #[error("null-space design not applicable: eavesdropper correlation has full rank {rank}")]
    NullSpaceNotApplicable { rank: usize },

    #[error("config parse: {0}")]
    Parse(String),

    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Validation(_)
            | Error::NotHermitian { .. }
            | Error::InfeasibleSplit { .. }
            | Error::DegenerateEstimate
            | Error::NullSpaceNotApplicable { .. }
            | Error::Parse(_) => ErrorKind::Validation,
            Error::NotPsd { .. }
            | Error::Singular { .. }
            | Error::EigenFailed
            | Error::DegenerateScenario(_)
            | Error::Inconsistent(_)
            | Error::OrthogonalityViolated { .. } => ErrorKind::Numerical,
            Error::Io(_) => ErrorKind::Io,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
