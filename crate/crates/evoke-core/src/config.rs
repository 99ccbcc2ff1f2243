//! Run configuration shared by the engine, the stores, and the harness.

use alloc::format;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::sampler::SamplerConfig;

/// Knowledge-store parameters. Defaults: `tau=0.70`, `L=120`, `W=1000`,
/// `top_k=5`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnowledgeConfig {
    pub similarity_threshold: f64,
    pub experience_capacity: usize,
    pub skill_word_budget: usize,
    pub retrieval_top_k: usize,
}

impl Default for KnowledgeConfig {
    fn default() -> Self {
        Self {
            similarity_threshold: 0.70,
            experience_capacity: 120,
            skill_word_budget: 1000,
            retrieval_top_k: 5,
        }
    }
}

/// Clustering parameters. `k` defaults to 4; the k-means init stream is
/// derived from the run seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringConfig {
    pub k: usize,
    pub max_iters: usize,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self { k: 4, max_iters: 100 }
    }
}

/// Batch selection policy; `Uniform` exists for ablation comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SamplingPolicy {
    #[default]
    Prioritized,
    Uniform,
}

/// Simulated environment parameters: difficulty-`d` samples succeed with
/// probability `clamp((1-d) + transfer_gain * d * q, 0, 1)` where a
/// cluster's quality `q` ramps from 0 to `quality_max` over `saturation`
/// accepted integrations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulatedWorldConfig {
    pub transfer_gain: f64,
    pub saturation: u64,
    pub quality_max: f64,
    pub seed: u64,
}

impl Default for SimulatedWorldConfig {
    fn default() -> Self {
        Self {
            transfer_gain: 0.6,
            saturation: 20,
            quality_max: 1.0,
            seed: 0,
        }
    }
}

/// Full engine configuration with the published defaults: 50 steps of batch
/// size 8, checkpoint every 10 steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolutionConfig {
    pub sampler: SamplerConfig,
    pub knowledge: KnowledgeConfig,
    pub clustering: ClusteringConfig,
    pub world: SimulatedWorldConfig,
    pub total_steps: u64,
    pub checkpoint_every: u64,
    pub seed: u64,
    pub policy: SamplingPolicy,
    pub max_turns: u32,
    /// Upper bound on concurrent rollouts for providers that support it;
    /// results never depend on it (rollout streams are derived per sample).
    pub rollout_workers: u32,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            sampler: SamplerConfig::default(),
            knowledge: KnowledgeConfig::default(),
            clustering: ClusteringConfig::default(),
            world: SimulatedWorldConfig::default(),
            total_steps: 50,
            checkpoint_every: 10,
            seed: 0,
            policy: SamplingPolicy::Prioritized,
            max_turns: 10,
            rollout_workers: 4,
        }
    }
}

impl EvolutionConfig {
    /// Validate the whole configuration, naming the offending key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.sampler;
        if !(s.rho > 0.0 && s.rho <= 1.0) {
            return Err(ConfigError::new(
                "sampler.rho",
                format!("must be in (0, 1], got {}", s.rho),
            ));
        }
        if !(s.gamma >= 0.0 && s.gamma.is_finite()) {
            return Err(ConfigError::new(
                "sampler.gamma",
                format!("must be nonnegative, got {}", s.gamma),
            ));
        }
        if !(s.epsilon > 0.0 && s.epsilon.is_finite()) {
            return Err(ConfigError::new(
                "sampler.epsilon",
                format!("must be > 0 (starvation guard), got {}", s.epsilon),
            ));
        }
        if s.batch_size == 0 {
            return Err(ConfigError::new("sampler.batch_size", "must be >= 1"));
        }
        if !(s.prior_alpha >= 0.0) || !(s.prior_beta >= 0.0) {
            return Err(ConfigError::new(
                "sampler.prior",
                format!("prior mass must be nonnegative, got ({}, {})", s.prior_alpha, s.prior_beta),
            ));
        }
        let k = &self.knowledge;
        if !(k.similarity_threshold > 0.0 && k.similarity_threshold < 1.0) {
            return Err(ConfigError::new(
                "knowledge.similarity_threshold",
                format!("must be in (0, 1), got {}", k.similarity_threshold),
            ));
        }
        if k.experience_capacity == 0 {
            return Err(ConfigError::new(
                "knowledge.experience_capacity",
                "must be >= 1",
            ));
        }
        if k.skill_word_budget == 0 {
            return Err(ConfigError::new(
                "knowledge.skill_word_budget",
                "must be >= 1",
            ));
        }
        if self.clustering.k == 0 {
            return Err(ConfigError::new("clustering.k", "must be >= 1"));
        }
        if self.clustering.max_iters == 0 {
            return Err(ConfigError::new("clustering.max_iters", "must be >= 1"));
        }
        let w = &self.world;
        if !(0.0..=1.0).contains(&w.transfer_gain) {
            return Err(ConfigError::new(
                "world.transfer_gain",
                format!("must be in [0, 1], got {}", w.transfer_gain),
            ));
        }
        if w.saturation == 0 {
            return Err(ConfigError::new("world.saturation", "must be >= 1"));
        }
        if !(w.quality_max >= 0.0) || w.transfer_gain * w.quality_max > 1.0 {
            return Err(ConfigError::new(
                "world.quality_max",
                format!(
                    "needs quality_max >= 0 and transfer_gain * quality_max <= 1, got {}",
                    w.quality_max
                ),
            ));
        }
        if self.total_steps == 0 {
            return Err(ConfigError::new("total_steps", "must be >= 1"));
        }
        if self.checkpoint_every == 0 {
            return Err(ConfigError::new("checkpoint_every", "must be >= 1"));
        }
        if self.max_turns == 0 {
            return Err(ConfigError::new("max_turns", "must be >= 1"));
        }
        if self.rollout_workers == 0 {
            return Err(ConfigError::new("rollout_workers", "must be >= 1"));
        }
        Ok(())
    }
}
