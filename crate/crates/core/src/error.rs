use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter `{name}` must be strictly positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },

    #[error("boost converter requires V >= V_g (got V = {v}, V_g = {v_g})")]
    InvalidBoostRatio { v: f64, v_g: f64 },

    #[error("invalid argument: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("simulation diverged at t = {time} s")]
    SimulationDiverged { time: f64 },

    #[error("trajectory was rejected ({0:?})")]
    Rejected(crate::simulate::RejectReason),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Load(#[from] LoadError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Failures when reading one of the binary containers back.
#[derive(Debug, Error)]
pub enum LoadError {
    #[error("not a {expected} container (bad magic)")]
    BadMagic { expected: &'static str },
    #[error("unsupported container version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("container is truncated")]
    Truncated,
    #[error("checksum mismatch: file is corrupted")]
    Checksum,
    #[error("feature order in file does not match this build: {0}")]
    FeatureOrder(String),
    #[error("architecture mismatch: file holds {found}, expected {expected}")]
    Architecture { found: String, expected: String },
    #[error("scaler mismatch: weights were trained against a different normalization")]
    ScalerMismatch,
    #[error("malformed container: {0}")]
    Malformed(String),
}

pub(crate) fn ensure_positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositive { name, value })
    }
}
