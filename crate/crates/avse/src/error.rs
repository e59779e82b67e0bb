use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

/// Failures surfaced by the CLI, each mapped to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    BadArgs(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: unsupported audio format: {detail}")]
    UnsupportedFormat { path: PathBuf, detail: String },
    #[error("{path}: {detail}")]
    Format { path: PathBuf, detail: String },
    #[error("{0}")]
    Numerical(String),
    #[error(transparent)]
    Core(#[from] avse_core::Error),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Serialize)]
struct ErrorLine<'a> {
    error: &'a str,
    code: i32,
    message: String,
}

impl CliError {
    pub fn io(path: impl AsRef<Path>, source: io::Error) -> Self {
        Self::Io { path: path.as_ref().to_path_buf(), source }
    }

    pub fn format(path: impl AsRef<Path>, detail: impl ToString) -> Self {
        Self::Format { path: path.as_ref().to_path_buf(), detail: detail.to_string() }
    }

    pub fn kind(&self) -> &'static str {
        use avse_core::Error as E;
        match self {
            Self::BadArgs(_) => "bad_arguments",
            Self::Io { .. } => "io",
            Self::UnsupportedFormat { .. } => "unsupported_format",
            Self::Format { .. } => "format",
            Self::Numerical(_) => "numerical",
            Self::Core(e) => match e {
                E::InvalidArgument(_) => "invalid_argument",
                E::ShapeMismatch(_) => "shape_mismatch",
                E::RewardModelMismatch { .. } => "reward_model_mismatch",
                E::DegenerateSignal(_) => "degenerate_signal",
                E::InsufficientSignal(_) => "insufficient_signal",
                E::NonFinite(_) => "non_finite",
            },
        }
    }

    /// 2 bad arguments or config, 3 I/O, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        use avse_core::Error as E;
        match self {
            Self::BadArgs(_) => 2,
            Self::Io { .. } | Self::UnsupportedFormat { .. } | Self::Format { .. } => 3,
            Self::Numerical(_) => 4,
            Self::Core(e) => match e {
                E::InvalidArgument(_) | E::ShapeMismatch(_) | E::RewardModelMismatch { .. } => 2,
                E::DegenerateSignal(_) | E::InsufficientSignal(_) | E::NonFinite(_) => 4,
            },
        }
    }

    /// Single-line JSON for stderr.
    pub fn to_json_line(&self) -> String {
        let line = ErrorLine { error: self.kind(), code: self.exit_code(), message: self.to_string().replace('\n', " ") };
        serde_json::to_string(&line).expect("error line serializes")
    }
}
