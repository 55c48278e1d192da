use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input that could not be parsed. `line` is 1-based when known.
    #[error("{source_name}:{line}: {message}")]
    Parse { source_name: String, line: usize, message: String },

    /// Structurally valid input that violates a domain rule.
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("no regions")]
    NoRegions,

    #[error("unknown region `{0}`")]
    UnknownRegion(String),

    #[error("unknown camera `{0}`")]
    UnknownCamera(String),

    #[error("no route from `{from}` to `{to}`")]
    NoRoute { from: String, to: String },

    #[error("spatial fusion requires posed camera (camera `{camera}`, track {track_id} has no 3D box)")]
    MissingBox { camera: String, track_id: u32 },

    #[error("subgraphs in one tick must share a window end (got {first} and {other})")]
    MixedWindowEnds { first: f64, other: f64 },

    #[error("tick {got} rejected: must be greater than latest tick {latest}")]
    NonMonotoneTick { latest: u64, got: u64 },

    #[error("snapshot tick {0} is no longer in store history")]
    SnapshotEvicted(u64),

    #[error("feature dimension mismatch: stream uses {expected}, got {got}")]
    FeatureDimension { expected: usize, got: usize },

    #[error("malformed span ({start}, {end}): start must be before end")]
    MalformedSpan { start: f64, end: f64 },

    #[error("undefined recall: ground truth is empty")]
    UndefinedRecall,

    #[error("no actionable plan")]
    NoActionablePlan,

    #[error("plan rejected: {}", .0.iter().map(|r| r.to_string()).collect::<Vec<_>>().join("; "))]
    PlanRejected(Vec<crate::agent::StepRejection>),

    #[error("llm request failed after {attempts} attempt(s): {message}")]
    LlmExhausted { attempts: u32, message: String },

    #[error("llm endpoint returned HTTP {status}")]
    LlmStatus { status: u16 },

    #[error("mock script has no reply for tick {0}")]
    MockMissing(u64),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("http service: {0}")]
    Service(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// True for errors caused by bad input rather than by the environment.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io { .. } | Error::LlmExhausted { .. } | Error::LlmStatus { .. } | Error::Service(_))
    }
}
