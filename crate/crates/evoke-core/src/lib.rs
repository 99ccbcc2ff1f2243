//! Self-evolution engine for agent systems.
//!
//! Two coupled mechanisms drive the loop: a prioritized sampler that tracks
//! per-sample proficiency with lazily decayed Beta statistics and spends
//! rollout budget on uncertain or hard samples, and a clustered knowledge
//! bank that keeps distilled lessons isolated per semantic cluster at two
//! granularities (an embedding-indexed experience pool and a word-budgeted
//! skill document).
//!
//! The crate is `no_std` + `alloc`; everything here is pure given the
//! provider traits ([`embedding::EmbeddingProvider`],
//! [`knowledge::KnowledgeSynthesizer`], [`engine::AgentProvider`],
//! [`engine::VerifierProvider`], [`engine::RolloutProvider`]). IO, file
//! formats and the CLI live in the companion `evoke` crate. Deterministic
//! mock providers are bundled so the whole training and inference pipeline
//! runs hermetically.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod config;
pub mod embedding;
pub mod engine;
pub mod error;
pub mod inference;
pub mod kmeans;
pub mod knowledge;
pub mod rng;
pub mod sampler;
pub mod stats;

pub use config::{EvolutionConfig, KnowledgeConfig, SamplingPolicy};
pub use embedding::{cosine_similarity, embed, EmbeddingProvider, EmbeddingVector, HashEmbedder};
pub use engine::{
    compare_policies, run_sweep, EvolutionEngine, EvolutionObserver, NoopObserver, RunReport,
    Sample, SimulatedWorldConfig, StepReport, TrainingState,
};
pub use error::{
    ConfigError, EmbedError, EngineError, KmeansError, KnowledgeError, ProviderError,
    SamplerError,
};
pub use kmeans::{fit_kmeans, route, CentroidSet, ClusterId};
pub use knowledge::{Cluster, ExperiencePool, KnowledgeBank, KnowledgeSynthesizer, SkillDocument};
pub use sampler::{draw_batch, sampling_weight, ProficiencyRecord, SamplerConfig};
