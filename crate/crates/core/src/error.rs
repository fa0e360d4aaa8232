use std::path::PathBuf;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("singular attitude: |cos(theta)| = {cos_theta:.3e} is within the gimbal guard")]
    SingularAttitude { cos_theta: f64 },

    #[error("flight envelope violated: {0}")]
    EnvelopeViolation(String),

    #[error("model contract violation: {0}")]
    ModelContractViolation(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("malformed model file: field `{field}`: {reason}")]
    MalformedModelFile { field: String, reason: String },

    #[error("convex subproblem failed numerically: {0}")]
    QpNumericalFailure(String),

    #[error("Riccati recursion did not converge after {0} iterations")]
    RiccatiDiverged(usize),

    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch { what: String, expected: usize, got: usize },

    #[error("config error (line {line}): {msg}")]
    Config { line: usize, msg: String },

    #[error("parse error in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{stage} stage failed: {source}")]
    Stage { stage: &'static str, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Innermost error beneath any stage tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// A file that could not be opened or read, tagged with its path.
    pub(crate) fn unreadable(path: &std::path::Path, e: std::io::Error) -> Self {
        Error::parse(path, format!("cannot read: {e}"))
    }

    pub(crate) fn config(line: usize, msg: impl Into<String>) -> Self {
        Error::Config {
            line,
            msg: msg.into(),
        }
    }
}

/// Tags errors with the pipeline stage that raised them.
pub trait StageContext<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageContext<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage,
            source: Box::new(e),
        })
    }
}
