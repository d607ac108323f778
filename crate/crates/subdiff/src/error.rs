use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: subdiff_core::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Numerical(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("rate study needs at least {needed} noise levels spanning a decade, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
}

impl HarnessError {
    pub fn core(context: impl Into<String>, source: subdiff_core::Error) -> Self {
        HarnessError::Core {
            context: context.into(),
            source,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the failure comes from the inputs rather than the numerics.
    pub fn is_config(&self) -> bool {
        use subdiff_core::Error as E;
        match self {
            HarnessError::Config(_) | HarnessError::Json(_) | HarnessError::InsufficientPoints { .. } => true,
            HarnessError::Io { .. } | HarnessError::Numerical(_) => false,
            HarnessError::Core { source, .. } => matches!(
                source,
                E::InvalidOrder(_)
                    | E::InvalidSize(_)
                    | E::InvalidBounds(..)
                    | E::NonNestedGrid(_)
                    | E::InvalidWindow(_)
                    | E::InvalidParameter(_)
            ),
        }
    }

    /// Process exit code: 2 for configuration problems, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.is_config() {
            2
        } else {
            3
        }
    }

    /// Short tag used in the `termination` column of failed table cells.
    pub fn tag(&self) -> &'static str {
        use subdiff_core::Error as E;
        match self {
            HarnessError::Config(_) | HarnessError::Json(_) | HarnessError::InsufficientPoints { .. } => "error:config",
            HarnessError::Io { .. } => "error:io",
            HarnessError::Numerical(_) => "error:numerical",
            HarnessError::Core { source, .. } => match source {
                E::NonPositiveCoefficient(_) | E::Factorization(_) => "error:factorization",
                E::NonFinite(_) => "error:non_finite",
                E::Stalled => "error:stalled",
                _ => "error:config",
            },
        }
    }
}
