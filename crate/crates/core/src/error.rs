use thiserror::Error;

/// Errors raised by the estimation, preparation and rendering pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point lies on the cylinder axis; azimuth is undefined")]
    DegenerateRay,
    #[error("wrap padding of {pad} columns exceeds tensor width {width}")]
    BadPad { pad: usize, width: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no valid pixel left after masking")]
    EmptyMask,
    #[error("loss became non-finite at iteration {0}")]
    Diverged(usize),
    #[error("field of view {0} degrees is outside (0, 360]")]
    BadFov(f64),
    #[error("need at least 3 frames, got {0}")]
    TooFewFrames(usize),
    #[error("ray direction {0:?} is not covered by any cube face")]
    CoverageGap([f64; 3]),
    #[error("depth must be positive, found {0}")]
    NonPositiveDepth(f64),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("eye radius {radius} is not inside the geometry (nearest radial depth {nearest})")]
    EyeInsideGeometry { radius: f64, nearest: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("image codec error on {path}: {detail}")]
    Image { path: String, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }
}
