use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = TractError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
#[non_exhaustive]
pub enum TractError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    MalformedLine { line: usize, message: String },

    #[error("line {line}: duplicate prompt_id {prompt_id:?}")]
    DuplicatePromptId { line: usize, prompt_id: String },

    #[error("prompt {prompt_id:?}: K must be ≥ 2 (got {k})")]
    TooFewResponses { prompt_id: String, k: usize },

    #[error("prompt {prompt_id:?}: {message}")]
    InvalidSampleSet { prompt_id: String, message: String },

    #[error("prompt {prompt_id:?}: first response has neither a correct flag nor an extractable final answer")]
    Unlabelable { prompt_id: String },

    #[error("reasoning body is empty after cleaning")]
    EmptyReasoningBody,

    #[error("need at least 2 usable traces, found {found}")]
    DegenerateSampleSet { found: usize },

    #[error("need at least {needed} items, got {got}")]
    NotEnoughData { needed: usize, got: usize },

    #[error("labels contain a single class")]
    SingleClass,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty block mask")]
    EmptyBlockMask,

    #[error("unknown feature {0:?}")]
    UnknownFeature(String),

    #[error("missing score for prompt {0:?}")]
    MissingScore(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
