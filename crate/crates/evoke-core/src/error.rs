//! Error types for every subsystem.

use alloc::string::String;
use thiserror::Error;

/// Sampler precondition violations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SamplerError {
    /// The requested step is earlier than the record's last update.
    #[error("clock regression: current step {current} is before last update step {last}")]
    ClockRegression { current: u64, last: u64 },
    #[error("reward {0} outside [0, 1]")]
    RewardOutOfRange(f64),
    #[error("batch size {batch} exceeds pool size {pool}")]
    BatchTooLarge { batch: usize, pool: usize },
    #[error("weight at index {index} is not strictly positive: {value}")]
    NonPositiveWeight { index: usize, value: f64 },
    #[error("{0} weights for {1} pool entries")]
    LengthMismatch(usize, usize),
}

/// Embedding and similarity failures.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmbedError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("embedding dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite embedding component at index {0}")]
    NonFinite(usize),
    /// Provider-side failure; `retryable` distinguishes transport errors
    /// from permanent ones such as missing credentials.
    #[error("embedding provider failed for `{text_id}`: {message}")]
    Provider {
        text_id: String,
        message: String,
        retryable: bool,
    },
    #[error("embedding provider misconfigured: missing {0}")]
    MissingConfiguration(String),
}

/// k-means fitting and routing failures.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum KmeansError {
    #[error("cannot fit on an empty point set")]
    EmptyInput,
    #[error("k={k} exceeds the {distinct} distinct input vectors")]
    TooManyClusters { k: usize, distinct: usize },
    #[error("k must be at least 1")]
    ZeroClusters,
    #[error("max_iters must be at least 1")]
    ZeroIterations,
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

/// Knowledge store failures. Synthesizer failures abort the operation and
/// leave the store unchanged.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum KnowledgeError {
    #[error("experience candidate text is empty")]
    EmptyCandidate,
    #[error("synthesizer failed: {0}")]
    Synthesizer(String),
    #[error("synthesizer returned empty output")]
    EmptySynthesis,
    /// The synthesizer's compressed output still exceeds the word budget;
    /// this is a contract violation, not a retryable condition.
    #[error("compressed skill has {words} words, budget is {budget}")]
    BudgetViolation { words: usize, budget: usize },
    #[error("no cluster with index {0}")]
    UnknownCluster(u32),
    /// Persisted parts violate a store invariant.
    #[error("invalid knowledge state: {0}")]
    Invalid(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

/// Agent/verifier provider failure; the engine skips the affected sample.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("provider `{provider}` failed on sample `{sample_id}`: {message}")]
pub struct ProviderError {
    pub provider: String,
    pub sample_id: String,
    pub message: String,
}

/// Configuration validation failure, naming the offending key.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid config: {key} {reason}")]
pub struct ConfigError {
    pub key: &'static str,
    pub reason: String,
}

impl ConfigError {
    pub fn new(key: &'static str, reason: impl Into<String>) -> Self {
        Self {
            key,
            reason: reason.into(),
        }
    }
}

/// Engine-level failures.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Kmeans(#[from] KmeansError),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("duplicate sample id `{0}`")]
    DuplicateSampleId(String),
    #[error("sample `{id}` difficulty {value} outside [0, 1]")]
    DifficultyOutOfRange { id: String, value: f64 },
    #[error("bank has {bank} clusters, config expects {config}")]
    ClusterCountMismatch { bank: usize, config: usize },
    #[error("checkpoint step {checkpoint} does not precede target step {target}")]
    BadResumeStep { checkpoint: u64, target: u64 },
    #[error("checkpoint has {records} records for {dataset} samples")]
    RecordCountMismatch { records: usize, dataset: usize },
    /// An observer (checkpoint writer, report sink) failed; the run stops
    /// with the last completed checkpoint intact.
    #[error("observer failed: {0}")]
    Observer(String),
}
