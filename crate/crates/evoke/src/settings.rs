//! Effective run configuration: TOML file plus environment plus CLI
//! overrides, resolved with precedence flags > file > environment >
//! defaults. The engine parameters live at the top level / their own
//! tables; std-only concerns (provider selection, cache paths) have their
//! own sections.

use evoke_core::config::EvolutionConfig;
use evoke_core::embedding::{EmbeddingProvider, HashEmbedder};
use evoke_core::engine::{
    AgentProvider, EchoAgent, ExactMatchVerifier, RolloutContext, RolloutOutcome,
    RolloutProvider, SimulatedRollout,
};
use evoke_core::error::ProviderError;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::error::CliError;
use crate::remote::{CachedEmbedder, RemoteEmbedder};

/// Embedding provider selection and client settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSettings {
    /// `mock` (deterministic token-hash embedder) or `remote`.
    pub provider: String,
    pub dimension: usize,
    pub cache_dir: Option<PathBuf>,
    /// Remote endpoint; falls back to `EVOKE_EMBED_URL`.
    pub url: Option<String>,
    /// Remote model name; falls back to `EVOKE_EMBED_MODEL`.
    pub model: Option<String>,
    pub max_in_flight: usize,
}

impl Default for EmbeddingSettings {
    fn default() -> Self {
        Self {
            provider: "mock".into(),
            dimension: HashEmbedder::DEFAULT_DIMENSION,
            cache_dir: None,
            url: None,
            model: None,
            max_in_flight: 4,
        }
    }
}

/// Rollout provider selection for training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolloutSettings {
    /// `simulated` or `echo` (echo agent + exact-match verifier).
    pub provider: String,
}

impl Default for RolloutSettings {
    fn default() -> Self {
        Self {
            provider: "simulated".into(),
        }
    }
}

/// Full run configuration as read from `--config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct RunConfig {
    #[serde(flatten)]
    pub engine: EvolutionConfig,
    pub embedding: EmbeddingSettings,
    pub rollout: RolloutSettings,
    /// Use the run seed for the world unless the file sets one explicitly.
    #[serde(skip)]
    world_seed_pinned: bool,
}

/// CLI-side overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub total_steps: Option<u64>,
    pub batch_size: Option<usize>,
    pub policy: Option<evoke_core::config::SamplingPolicy>,
    pub k: Option<usize>,
    pub top_k: Option<usize>,
}

impl RunConfig {
    /// Load the file (or defaults when absent) and apply overrides.
    pub fn resolve(path: Option<&Path>, overrides: &Overrides) -> Result<Self, CliError> {
        let mut config = match path {
            Some(p) => {
                let raw = std::fs::read_to_string(p).map_err(|e| {
                    CliError::validation(format!("cannot read config {}: {e}", p.display()))
                })?;
                let mut parsed: RunConfig = toml::from_str(&raw).map_err(|e| {
                    CliError::validation(format!("config {}: {e}", p.display()))
                })?;
                parsed.world_seed_pinned = raw.contains("[world]") && raw.contains("seed");
                parsed
            }
            None => RunConfig::default(),
        };
        if let Some(seed) = overrides.seed {
            config.engine.seed = seed;
        }
        if let Some(steps) = overrides.total_steps {
            config.engine.total_steps = steps;
        }
        if let Some(batch) = overrides.batch_size {
            config.engine.sampler.batch_size = batch;
        }
        if let Some(policy) = overrides.policy {
            config.engine.policy = policy;
        }
        if let Some(k) = overrides.k {
            config.engine.clustering.k = k;
        }
        if let Some(top_k) = overrides.top_k {
            config.engine.knowledge.retrieval_top_k = top_k;
        }
        if !config.world_seed_pinned {
            config.engine.world.seed = config.engine.seed;
        }
        config.engine.validate().map_err(CliError::from)?;
        if config.embedding.dimension == 0 {
            return Err(CliError::validation(
                "invalid config: embedding.dimension must be >= 1",
            ));
        }
        match config.embedding.provider.as_str() {
            "mock" | "remote" => {}
            other => {
                return Err(CliError::validation(format!(
                    "invalid config: embedding.provider must be `mock` or `remote`, got `{other}`"
                )))
            }
        }
        match config.rollout.provider.as_str() {
            "simulated" | "echo" => {}
            other => {
                return Err(CliError::validation(format!(
                    "invalid config: rollout.provider must be `simulated` or `echo`, got `{other}`"
                )))
            }
        }
        Ok(config)
    }

    /// Build the configured embedding provider, wrapped in the disk cache
    /// when one is configured.
    pub fn build_embedder(&self) -> Result<Box<dyn EmbeddingProvider>, CliError> {
        let base: Box<dyn EmbeddingProvider> = match self.embedding.provider.as_str() {
            "mock" => Box::new(HashEmbedder::new(self.embedding.dimension)),
            "remote" => Box::new(
                RemoteEmbedder::from_config(
                    self.embedding.url.clone(),
                    self.embedding.model.clone(),
                    None,
                    self.embedding.dimension,
                    self.embedding.max_in_flight,
                )
                .map_err(CliError::from)?,
            ),
            other => {
                return Err(CliError::validation(format!(
                    "unknown embedding provider `{other}`"
                )))
            }
        };
        match &self.embedding.cache_dir {
            Some(dir) => Ok(Box::new(
                CachedEmbedder::new(base, dir.clone()).map_err(|e| {
                    CliError::validation(format!("cannot open embedding cache: {e}"))
                })?,
            )),
            None => Ok(base),
        }
    }

    /// Build the configured training rollout provider.
    pub fn build_rollout(&self) -> Result<Box<dyn RolloutProvider>, CliError> {
        match self.rollout.provider.as_str() {
            "simulated" => Ok(Box::new(SimulatedRollout {
                world: self.engine.world,
            })),
            "echo" => Ok(Box::new(EchoRollout {
                seed: self.engine.seed,
            })),
            other => Err(CliError::validation(format!(
                "unknown rollout provider `{other}`"
            ))),
        }
    }

    /// Build the named inference agent.
    pub fn build_agent(&self, name: &str) -> Result<Box<dyn AgentProvider>, CliError> {
        match name {
            "echo" => Ok(Box::new(EchoAgent)),
            other => Err(CliError::validation(format!(
                "unknown agent provider `{other}` (bundled: echo)"
            ))),
        }
    }

    /// Effective config echoed into report files.
    pub fn as_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("serializable config")
    }
}

/// Owned echo-agent rollout (echo agent graded by exact match), the
/// hermetic stand-in for a real agent/verifier pair.
struct EchoRollout {
    seed: u64,
}

impl RolloutProvider for EchoRollout {
    fn rollout(&self, ctx: &RolloutContext<'_>) -> Result<RolloutOutcome, ProviderError> {
        evoke_core::engine::ComposedRollout {
            agent: &EchoAgent,
            verifier: &ExactMatchVerifier,
            seed: self.seed,
        }
        .rollout(ctx)
    }

    fn name(&self) -> &str {
        "echo"
    }
}

/// Parse a seeds argument: either a comma list (`0,1,2`) or a range
/// (`0..10`, end exclusive).
pub fn parse_seeds(raw: &str) -> Result<Vec<u64>, CliError> {
    let raw = raw.trim();
    if let Some((start, end)) = raw.split_once("..") {
        let start: u64 = start
            .trim()
            .parse()
            .map_err(|_| CliError::validation(format!("bad seed range `{raw}`")))?;
        let end: u64 = end
            .trim()
            .parse()
            .map_err(|_| CliError::validation(format!("bad seed range `{raw}`")))?;
        if end <= start {
            return Err(CliError::validation(format!("empty seed range `{raw}`")));
        }
        return Ok((start..end).collect());
    }
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| CliError::validation(format!("bad seed `{s}`")))
        })
        .collect()
}

/// Parse a comma-separated float list for sweep grids.
pub fn parse_grid(raw: &str, flag: &str) -> Result<Vec<f64>, CliError> {
    let values: Result<Vec<f64>, _> = raw.split(',').map(|s| s.trim().parse::<f64>()).collect();
    match values {
        Ok(v) if !v.is_empty() => Ok(v),
        _ => Err(CliError::validation(format!(
            "--{flag} expects a comma-separated list of numbers, got `{raw}`"
        ))),
    }
}
