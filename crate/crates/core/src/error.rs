use thiserror::Error;

/// Every failure the estimation stack can report.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not a proper rotation (orthonormality error {0:.3e})")]
    NonOrthonormalInput(f64),
    #[error("rotation too close to gimbal lock (|cos beta| = {0:.3e})")]
    GimbalProximity(f64),
    #[error("camera index {index} out of range for a rig of {count} cameras")]
    InvalidCameraIndex { index: usize, count: usize },
    #[error("point at depth {0:.3e} m is behind the camera")]
    BehindCamera(f64),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid rig: {0}")]
    InvalidRig(String),

    #[error("stereo cameras have coincident centers (baseline {0:.3e} m)")]
    CoincidentCenters(f64),
    #[error("epipolar line is degenerate")]
    DegenerateLine,
    #[error("back-projected rays are parallel")]
    ParallelRays,

    #[error("measurement batch is empty")]
    EmptyBatch,
    #[error("innovation covariance is singular")]
    SingularInnovationCovariance,

    #[error("scale system needs exactly 3 non-reference cameras, got {0}")]
    WrongCameraCount(usize),
    #[error("scale system is ill-conditioned (cond(AtA) = {0:.3e})")]
    IllConditioned(f64),
    #[error("camera {0} has no pose for this frame")]
    MissingCamera(usize),

    #[error("need at least 4 matches, got {0}")]
    InsufficientMatches(usize),
    #[error("pose refinement diverged")]
    Diverged,
    #[error("none of the {0} runs produced a usable result")]
    NoValidRuns(usize),
    #[error("only {0} validated features available to start the sequence")]
    InsufficientFeatures(usize),
    #[error("series has {estimate} frames but truth has {truth}")]
    LengthMismatch { estimate: usize, truth: usize },

    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for failures caused by malformed user input rather than numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidIntrinsics(_)
                | Error::InvalidRig(_)
                | Error::InvalidCameraIndex { .. }
                | Error::Config(_)
                | Error::Parse { .. }
                | Error::Io(_)
                | Error::LengthMismatch { .. }
                | Error::WrongCameraCount(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
