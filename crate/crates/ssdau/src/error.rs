use std::path::{Path, PathBuf};

use ssdau_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<AppError>,
    },
}

pub type AppResult<T> = std::result::Result<T, AppError>;

impl AppError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn json(path: &Path, source: serde_json::Error) -> Self {
        AppError::Json {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn in_stage(self, stage: &str) -> Self {
        match self {
            AppError::Stage { .. } => self,
            other => AppError::Stage {
                stage: stage.into(),
                source: Box::new(other),
            },
        }
    }

    /// 2 for bad input or configuration, 3 for failures inside a stage.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Stage { .. } => 3,
            AppError::Core(
                CoreError::Transport { .. }
                | CoreError::Provider(_)
                | CoreError::Divergence { .. }
                | CoreError::Reconstruction { .. },
            ) => 3,
            _ => 2,
        }
    }
}
