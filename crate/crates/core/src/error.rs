use std::path::PathBuf;

/// Broad failure classes, used by the command line front end to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numeric,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("backward requires scalar, got shape {0:?}")]
    BackwardNonScalar(Vec<usize>),
    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate bounding box ({width} x {height})")]
    DegenerateBox { width: f64, height: f64 },
    #[error("zero row {0} in adjacency matrix")]
    ZeroAdjacencyRow(usize),
    #[error("scale index {0} out of range")]
    ScaleOutOfRange(usize),
    #[error("window must be odd, got {0}")]
    EvenWindow(usize),
    #[error("window too short: {len} frames for kernel {kernel}")]
    WindowTooShort { len: usize, kernel: usize },
    #[error("region outside image: {0}")]
    RegionOutsideImage(String),
    #[error("frame count mismatch: {0}")]
    FrameCountMismatch(String),
    #[error("landmarks not found: {0}")]
    LandmarksNotFound(PathBuf),
    #[error("bad magic in {0}")]
    BadMagic(String),
    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated payload: {0}")]
    TruncatedPayload(String),
    #[error("dimension overflow: {0}")]
    DimensionOverflow(String),
    #[error("conflicting annotation: {0}")]
    ConflictingAnnotation(String),
    #[error("invalid annotation: {0}")]
    InvalidAnnotation(String),
    #[error("need at least two subjects for leave-one-subject-out, got {0}")]
    TooFewSubjects(usize),
    #[error("unknown subject `{0}`")]
    UnknownSubject(String),
    #[error("subject leakage: training sample from test subject `{0}`")]
    SubjectLeakage(String),
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("non-finite loss at epoch {epoch}, batch {batch}; parameter norms: {norms}")]
    NonFiniteLoss { epoch: usize, batch: usize, norms: String },
    #[error("batch must hold at least two samples, got {0}")]
    BatchTooSmall(usize),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image error: {0}")]
    Image(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            EvenWindow(_) | InvalidArgument(_) | Config(_) | UnknownSubject(_) | ScaleOutOfRange(_)
            | TooFewSubjects(_) | LandmarksNotFound(_) => ErrorClass::Usage,
            NonFiniteGradient(_) | NonFiniteLoss { .. } | BackwardNonScalar(_) => ErrorClass::Numeric,
            _ => ErrorClass::Data,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
