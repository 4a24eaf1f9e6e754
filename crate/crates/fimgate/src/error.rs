use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] fimgate_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: row {row}, column `{column}`: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: String,
        message: String,
    },
    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Toml {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>) -> impl FnOnce(csv::Error) -> Error {
        let path = path.into();
        move |source| Error::Csv { path, source }
    }

    pub(crate) fn json(path: impl Into<PathBuf>) -> impl FnOnce(serde_json::Error) -> Error {
        let path = path.into();
        move |source| Error::Json { path, source }
    }

    /// Whether the failure stems from bad user input (configuration, flags or
    /// an unparseable file) rather than from running the pipeline.
    pub fn is_usage_error(&self) -> bool {
        match self {
            Error::Model(e) => matches!(
                e,
                fimgate_core::Error::InvalidConfig(_)
                    | fimgate_core::Error::InvalidRange { .. }
                    | fimgate_core::Error::EmptyRequest
                    | fimgate_core::Error::InsufficientData { .. }
            ),
            Error::Io { .. } => false,
            Error::Csv { source, .. } => !source.is_io_error(),
            Error::Parse { .. }
            | Error::MissingColumn { .. }
            | Error::Json { .. }
            | Error::Toml { .. }
            | Error::Config(_)
            | Error::Checkpoint(_) => true,
        }
    }
}
