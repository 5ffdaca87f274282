use std::path::PathBuf;

use thiserror::Error;

/// Failures of the closed-form geometry.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid acquisition geometry: {0}")]
    Invalid(String),

    #[error("scatterer lies on the segment from receiver {receiver:?} to emitter {emitter}")]
    SegmentViolation { emitter: u8, receiver: Option<(usize, usize)> },

    #[error("scatterer is not strictly below the receiver")]
    AboveReceiver,

    #[error("no positive artifact scale: the emitter-1 ellipsoid at this delay misses the receiver ray")]
    NoArtifact,

    #[error("covector xi must be nonzero")]
    ZeroCovector,

    #[error("upper bound undefined: (x - γ)·(γ - E1) <= 0")]
    BarUndefined,

    #[error("emitter baseline has no horizontal component; critical angle undefined")]
    DegenerateEmitterAxis,

    #[error("{source} (at iterate {iterate})")]
    AtIterate { iterate: usize, source: Box<GeometryError> },
}

impl GeometryError {
    /// Attaches a receiver index to a segment violation.
    pub fn at_receiver(self, idx: (usize, usize)) -> Self {
        match self {
            GeometryError::SegmentViolation { emitter, .. } => {
                GeometryError::SegmentViolation { emitter, receiver: Some(idx) }
            }
            other => other,
        }
    }

    pub fn at_iterate(self, iterate: usize) -> Self {
        GeometryError::AtIterate { iterate, source: Box::new(self) }
    }
}

/// Errors from simulation, imaging and mitigation.
#[derive(Debug, Error)]
pub enum XtalkError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("point scatterer at {0:?} lies outside the grid")]
    OutOfBounds([f64; 3]),

    #[error("no receiver contributes to any voxel")]
    EmptyAperture,

    #[error("plane |x-E1| = |x-E2| intersects the region of interest; enable the beam mask or move the ROI")]
    PlaneIntersectsRoi,

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl XtalkError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        XtalkError::Config { path: path.into(), message: message.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        XtalkError::Io { path: path.into(), source }
    }
}

pub type Result<T, E = XtalkError> = std::result::Result<T, E>;
