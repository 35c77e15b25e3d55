use std::path::PathBuf;

/// Every failure the library can report.
///
/// The `Display` form of each variant starts with a stable kebab-case token
/// (`empty-trajectory`, `nan-gradient`, ...) so that callers and logs can match
/// on it without depending on the trailing detail.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty-trajectory")]
    EmptyTrajectory,
    #[error("malformed-subgoals: {0}")]
    MalformedSubgoals(String),
    #[error("empty-buffer")]
    EmptyBuffer,
    #[error("episode-finished")]
    EpisodeFinished,
    #[error("invalid-action: {action} (action space has {n_actions})")]
    InvalidAction { action: usize, n_actions: usize },
    #[error("invalid-env: {0}")]
    InvalidEnv(String),
    #[error("invalid-mdp: {0}")]
    InvalidMdp(String),
    #[error("enumeration-overflow: {count} trajectories exceeds the limit of {limit}")]
    EnumerationOverflow { count: u128, limit: u128 },
    #[error("no-script: {0}")]
    NoScript(String),
    #[error("generator-timeout")]
    GeneratorTimeout,
    #[error("generator-transport: {0}")]
    GeneratorTransport(String),
    #[error("malformed-plan: {0}")]
    MalformedPlan(String),
    #[error("invalid-plan: {0}")]
    InvalidPlan(String),
    #[error("shape-error: {0}")]
    Shape(String),
    #[error("no-tape")]
    NoTape,
    #[error("nan-gradient{}", context.as_deref().map(|c| format!(": {c}")).unwrap_or_default())]
    NanGradient { context: Option<String> },
    #[error("no-demos")]
    NoDemos,
    #[error("kl-infinite")]
    KlInfinite,
    #[error("additivity-premise-failed: trajectory {trajectory}")]
    AdditivityPremiseFailed { trajectory: String },
    #[error("incompatible-checkpoint: {0}")]
    IncompatibleCheckpoint(String),
    #[error("invalid-config: {0}")]
    InvalidConfig(String),
    #[error("training aborted at epoch {epoch}: {source}")]
    Training {
        epoch: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn nan(context: impl Into<String>) -> Self {
        Error::NanGradient {
            context: Some(context.into()),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
