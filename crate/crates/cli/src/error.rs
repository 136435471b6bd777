use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("numeric blow-up at step {step}: {context}")]
    BlowUp { step: u64, context: String },

    #[error("{}: {reason}", path.display())]
    Io { path: PathBuf, reason: String },

    #[error(transparent)]
    Core(#[from] homeadam::Error),
}

impl CliError {
    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            reason: err.to_string(),
        }
    }

    /// 2 for configuration problems, 3 for numeric blow-ups, 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        use homeadam::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::BlowUp { .. } => 3,
            CliError::Io { .. } => 4,
            CliError::Core(e) => match e {
                E::InvalidHyperParams { .. }
                | E::KindMismatch { .. }
                | E::UnknownName { .. }
                | E::InvalidArgument(_)
                | E::DimensionMismatch { .. } => 2,
                E::NonFinite { .. }
                | E::TwinBlowUp { .. }
                | E::TrainBlowUp { .. }
                | E::RecursionOverflow { .. }
                | E::DivisionByZero { .. } => 3,
                E::Io(_) | E::Parse { .. } => 4,
                E::Precondition(_) => 1,
            },
        }
    }
}
