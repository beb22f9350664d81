use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("trajectory log line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("trajectory log has no final_answer record")]
    MissingFinalAnswer,
}

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("encoder dimension must be at least 8, got {0}")]
    InvalidDimension(usize),
    #[error("remote encoder failed: {0}")]
    Remote(#[from] ProviderError),
}

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("script exhausted for role {role_tag} at turn {turn}")]
    ScriptExhausted { role_tag: String, turn: usize },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: usize, message: String },
    #[error("could not parse provider response: {reason}; body: {body}")]
    Parse { reason: String, body: String },
    #[error("provider does not support {0}")]
    Unsupported(&'static str),
    #[error("environment variable {0} is not set")]
    MissingApiKey(String),
}

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("memory bank {path}: line {line}: {reason}")]
    Malformed { path: PathBuf, line: usize, reason: String },
    #[error("memory bank i/o on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid memory item: {0}")]
    InvalidItem(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("unknown memory key: {0}")]
    UnknownKey(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("invalid ground truth: {0}")]
    InvalidGroundTruth(&'static str),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error("all {0} exploration variants aborted")]
    AllVariantsAborted(usize),
    #[error("cannot select from an empty candidate set")]
    NoCandidates,
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("dataset {path}: {reason}")]
    Dataset { path: PathBuf, reason: String },
    #[error("fixture {path}: {reason}")]
    Fixture { path: PathBuf, reason: String },
    #[error("i/o on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("manifest {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.into(), source }
    }
}
