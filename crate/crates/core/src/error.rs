use thiserror::Error;

/// Errors produced by the keypoint, polygon and metric operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected_h}x{expected_w}, found {found_h}x{found_w}")]
    Shape {
        expected_h: usize,
        expected_w: usize,
        found_h: usize,
        found_w: usize,
    },

    #[error("keypoint (row={row}, col={col}) is outside the {height}x{width} grid")]
    OutOfBounds {
        row: usize,
        col: usize,
        height: usize,
        width: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid value: {0}")]
    Value(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("insufficient keypoints: need at least 3, found {found}")]
    InsufficientPoints { found: usize },

    #[error("duplicate keypoint at (row={row}, col={col})")]
    DuplicatePoint { row: usize, col: usize },

    #[error("degenerate polygon: {0}")]
    Degenerate(String),

    #[error("synthetic generation failed: {0}")]
    Generation(String),

    #[error("parse error in {what} at line {line}: {msg}")]
    Parse {
        what: &'static str,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    InFile {
        path: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(expected: (usize, usize), found: (usize, usize)) -> Self {
        Error::Shape {
            expected_h: expected.0,
            expected_w: expected.1,
            found_h: found.0,
            found_w: found.1,
        }
    }

    /// Attach the file the error came from.
    pub fn in_file(self, path: &std::path::Path) -> Self {
        Error::InFile {
            path: path.display().to_string(),
            source: Box::new(self),
        }
    }

    pub(crate) fn parse(what: &'static str, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            what,
            line,
            msg: msg.into(),
        }
    }
}

impl Error {
    /// Process exit code: 3 for pipeline degeneracy, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InsufficientPoints { .. } | Error::Degenerate(_) => 3,
            Error::InFile { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
