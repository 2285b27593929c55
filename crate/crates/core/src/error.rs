use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("io error on {path}: {source}")]
    IoAt {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed PGM: {0}")]
    Pgm(String),

    #[error("pixel ({x}, {y}) is outside the {width}x{height} image")]
    OutOfBounds {
        x: i64,
        y: i64,
        width: usize,
        height: usize,
    },

    #[error(
        "could not place {objects} objects without violating separation after {attempts} attempts"
    )]
    PlacementInfeasible { objects: usize, attempts: usize },

    #[error("normalization target {target:.2} is infeasible: {reason}")]
    InfeasibleTarget { target: f64, reason: String },

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("dataset manifest corrupt: {0}")]
    ManifestCorrupt(String),

    #[error("shrinking did not reach a fixed point within {cycles} cycles")]
    NonConvergence { cycles: usize },

    #[error("input contains {holes} hole(s); the shrinking engine only counts hole-free objects")]
    HoleDetected { holes: usize },

    #[error("kernel bank: {0}")]
    KernelFormat(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("training diverged at step {step}: loss is {loss}")]
    Divergence { step: usize, loss: f64 },

    #[error("parameter file was written for network {found}, expected {expected}")]
    SpecMismatch { expected: String, found: String },

    #[error("class {0} has no samples")]
    EmptyClass(usize),

    #[error("config: {0}")]
    Config(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io_at(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::IoAt {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the data or the model rather than by IO or usage.
    pub fn is_domain(&self) -> bool {
        matches!(
            self,
            Error::PlacementInfeasible { .. }
                | Error::InfeasibleTarget { .. }
                | Error::InvalidScene(_)
                | Error::NonConvergence { .. }
                | Error::HoleDetected { .. }
                | Error::Divergence { .. }
                | Error::EmptyClass(_)
        )
    }

    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io(_) | Error::IoAt { .. } | Error::Pgm(_) | Error::ManifestCorrupt(_)
        )
    }
}
