use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix contains a non-finite entry at index {index}")]
    NonFinite { index: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{algorithm} did not converge for a {rows}x{cols} matrix after {sweeps} sweeps")]
    NonConvergence {
        algorithm: &'static str,
        rows: usize,
        cols: usize,
        sweeps: usize,
    },

    #[error("matrix is not positive definite (pivot {pivot}, value {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error(
        "substrate unstable: lambda_min(M) = {lambda_min:e} <= 0; try a smaller skip rank or a larger J2"
    )]
    UnstableSubstrate { lambda_min: f64 },

    #[error("cosine of a zero vector is undefined")]
    DegenerateVector,

    #[error("{which} Gram spectrum is degenerate (largest singular value {sigma_max:e})")]
    DegenerateSpectrum { which: &'static str, sigma_max: f64 },

    #[error("no-skip baseline equilibrium has norm {norm:e} for sample {sample}")]
    DegenerateBaseline { sample: usize, norm: f64 },

    #[error("skip rank {rank} outside 1..={dim}")]
    InvalidRank { rank: usize, dim: usize },

    #[error("Langevin state became non-finite at step {step}")]
    DivergedSimulation { step: usize },

    #[error("Euler-Maruyama step unstable: dt*mu*lambda_max = {product} >= 2")]
    UnstableStep { product: f64 },

    #[error("relaxation did not reach tolerance within {cap} steps")]
    RelaxationCap { cap: usize },

    #[error("training loss became non-finite at iteration {iteration}")]
    DivergedTraining { iteration: usize },

    #[error("{path}: bad magic {found:?}, expected \"TDIF\"")]
    BadMagic { path: PathBuf, found: [u8; 4] },

    #[error("{path}: unsupported TDIF version {found}")]
    VersionMismatch { path: PathBuf, found: u16 },

    #[error("{path}: truncated payload, expected {expected} bytes, found {found}")]
    TruncatedPayload {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("{path}: {message}")]
    Manifest { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerics rather than of inputs or files.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::NotPositiveDefinite { .. }
                | Error::UnstableSubstrate { .. }
                | Error::DegenerateVector
                | Error::DegenerateSpectrum { .. }
                | Error::DegenerateBaseline { .. }
                | Error::DivergedSimulation { .. }
                | Error::UnstableStep { .. }
                | Error::RelaxationCap { .. }
                | Error::DivergedTraining { .. }
                | Error::NonFinite { .. }
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
