use std::path::PathBuf;

pub type Result<T, E = SvcError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum SvcError {
    #[error("sample rate {actual} Hz is not supported; expected {expected} Hz")]
    SampleRate { expected: u32, actual: u32 },

    #[error("invalid audio: {0}")]
    InvalidAudio(String),

    #[error("{path}: {reason}")]
    Wav { path: PathBuf, reason: String },

    #[error("feature file {path}: {reason}")]
    FeatureFile { path: PathBuf, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown singer `{requested}`; known singers: {}", known.join(", "))]
    UnknownSinger { requested: String, known: Vec<String> },

    #[error("non-finite {component} at step {step}")]
    NonFiniteLoss { component: &'static str, step: u64 },

    #[error("config key `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("manifest {path}, line {line}: {reason}")]
    Manifest { path: PathBuf, line: usize, reason: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("missing features: {0}")]
    MissingFeatures(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl SvcError {
    /// True for errors caused by bad user input rather than a failure while
    /// running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            SvcError::SampleRate { .. }
                | SvcError::InvalidAudio(_)
                | SvcError::InvalidInput(_)
                | SvcError::UnknownSinger { .. }
                | SvcError::Config { .. }
                | SvcError::Manifest { .. }
                | SvcError::MissingFeatures(_)
        )
    }

    pub(crate) fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> SvcError {
        let context = context.into();
        move |source| SvcError::Io { context, source }
    }
}
