//! The bootstrapping loop: prioritized batch draw, rollout with routed
//! cluster context, verification, proficiency update, clustered
//! integration.
//!
//! Step order per training step `t`: refresh decayed statistics and weights
//! for every sample, draw the batch, then per sample (in draw order) route,
//! roll out against the pre-step bank, verify, and update proficiency. All
//! knowledge writes are deferred to the integration phase at the end of the
//! step: clusters in ascending order, deltas within a cluster in dataset
//! order, experiences before skills.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use crate::config::SimulatedWorldConfig;
use crate::config::{EvolutionConfig, SamplingPolicy};
use crate::embedding::{embed, EmbeddingProvider, EmbeddingVector};
use crate::error::{ConfigError, EngineError, KnowledgeError, ProviderError};
use crate::inference::render_knowledge_block;
use crate::kmeans::{fit_kmeans, ClusterId};
use crate::knowledge::{
    Cluster, IntegrationOutcome, KnowledgeBank, KnowledgeSynthesizer,
};
use crate::rng::{fnv1a64, stream, StreamDomain};
use crate::sampler::{draw_batch, sampling_weight, ProficiencyRecord};
use crate::stats::{mean, sign_test_p};

/// One training/eval unit. The description is the sole input surface; the
/// latent `sim_difficulty` drives the simulated world and is ignored by
/// real providers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub description: String,
    pub answer: String,
    pub sim_difficulty: f64,
}

/// Result of one agent episode: scalar reward plus distilled knowledge
/// candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutOutcome {
    pub reward: f64,
    pub transcript: String,
    pub delta_experience: Option<String>,
    pub delta_skill: Option<String>,
    pub turns_used: u32,
}

/// Agent answer plus its trajectory record.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentResponse {
    pub answer: String,
    pub transcript: String,
}

/// Verifier grade plus distilled deltas.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub reward: f64,
    pub delta_experience: Option<String>,
    pub delta_skill: Option<String>,
}

/// Reasoning agent contract. Real LLM-backed agents are out-of-repo
/// adapters conforming to this; deterministic mocks live here.
pub trait AgentProvider {
    fn respond(
        &self,
        sample: &Sample,
        knowledge: &str,
        max_turns: u32,
        seed: u64,
    ) -> Result<AgentResponse, ProviderError>;

    fn name(&self) -> &str;
}

/// Trajectory grading and distillation contract.
pub trait VerifierProvider {
    fn verify(
        &self,
        sample: &Sample,
        answer: &str,
        transcript: &str,
    ) -> Result<Verdict, ProviderError>;

    fn name(&self) -> &str;
}

/// Everything a rollout sees: the sample, an immutable view of its routed
/// cluster as of batch start, and the rendered knowledge block.
pub struct RolloutContext<'a> {
    pub sample: &'a Sample,
    pub cluster: &'a Cluster,
    pub knowledge: &'a str,
    pub step: u64,
    pub max_turns: u32,
}

/// One full rollout+verify episode. Implemented by the simulated world and
/// by [`ComposedRollout`] for agent/verifier pairs.
pub trait RolloutProvider {
    fn rollout(&self, ctx: &RolloutContext<'_>) -> Result<RolloutOutcome, ProviderError>;

    fn name(&self) -> &str;
}

/// Success probability of `sample` against `cluster` under the simulated
/// world: `clamp((1-d) + λ·d·q, 0, 1)` with cluster quality
/// `q = min(1, events/saturation) · quality_max`.
pub fn success_probability(
    sample: &Sample,
    cluster: &Cluster,
    world: &SimulatedWorldConfig,
) -> f64 {
    let events = cluster.integration_events() as f64;
    let q = (events / world.saturation as f64).min(1.0) * world.quality_max;
    let d = sample.sim_difficulty;
    ((1.0 - d) + world.transfer_gain * d * q).clamp(0.0, 1.0)
}

/// Simulated rollout: Bernoulli reward at the world's success probability,
/// an experience delta on every outcome, and a skill delta half the time.
/// Deterministic per `rng` state.
pub fn simulated_rollout(
    sample: &Sample,
    cluster: &Cluster,
    world: &SimulatedWorldConfig,
    rng: &mut ChaCha8Rng,
) -> RolloutOutcome {
    let p = success_probability(sample, cluster, world);
    let success = rng.random::<f64>() < p;
    let reward = if success { 1.0 } else { 0.0 };
    let outcome_word = if success { "solved" } else { "missed" };
    let delta_experience = Some(format!(
        "[{outcome_word}] {} :: {}.",
        sample.id, sample.description
    ));
    let delta_skill = (rng.random::<f64>() < 0.5).then(|| {
        format!(
            "For tasks like {}: {}.",
            sample.id,
            if success {
                "the direct approach held up; keep verifying the final result"
            } else {
                "the first approach failed; re-check assumptions before answering"
            }
        )
    });
    RolloutOutcome {
        reward,
        transcript: format!(
            "simulated sample={} cluster={} p={:.4} reward={}",
            sample.id,
            cluster.id(),
            p,
            reward
        ),
        delta_experience,
        delta_skill,
        turns_used: 1,
    }
}

/// [`RolloutProvider`] over the simulated world. Each episode's stream is
/// derived from `(world.seed, step, sample id)`, so outcomes are
/// independent of execution order.
#[derive(Debug, Clone)]
pub struct SimulatedRollout {
    pub world: SimulatedWorldConfig,
}

impl RolloutProvider for SimulatedRollout {
    fn rollout(&self, ctx: &RolloutContext<'_>) -> Result<RolloutOutcome, ProviderError> {
        let mut rng = stream(
            self.world.seed,
            StreamDomain::Rollout,
            ctx.step,
            fnv1a64(ctx.sample.id.as_bytes()),
        );
        Ok(simulated_rollout(ctx.sample, ctx.cluster, &self.world, &mut rng))
    }

    fn name(&self) -> &str {
        "simulated"
    }
}

/// Adapter composing an agent and a verifier into one rollout, the seam
/// real LLM deployments plug into.
pub struct ComposedRollout<'a> {
    pub agent: &'a dyn AgentProvider,
    pub verifier: &'a dyn VerifierProvider,
    pub seed: u64,
}

impl RolloutProvider for ComposedRollout<'_> {
    fn rollout(&self, ctx: &RolloutContext<'_>) -> Result<RolloutOutcome, ProviderError> {
        let episode_seed = crate::rng::splitmix64(
            self.seed ^ crate::rng::splitmix64(ctx.step ^ fnv1a64(ctx.sample.id.as_bytes())),
        );
        let response =
            self.agent
                .respond(ctx.sample, ctx.knowledge, ctx.max_turns, episode_seed)?;
        let verdict = self
            .verifier
            .verify(ctx.sample, &response.answer, &response.transcript)?;
        if !(0.0..=1.0).contains(&verdict.reward) {
            return Err(ProviderError {
                provider: self.verifier.name().to_string(),
                sample_id: ctx.sample.id.clone(),
                message: format!("reward {} outside [0, 1]", verdict.reward),
            });
        }
        Ok(RolloutOutcome {
            reward: verdict.reward,
            transcript: response.transcript,
            delta_experience: verdict.delta_experience,
            delta_skill: verdict.delta_skill,
            turns_used: 1,
        })
    }

    fn name(&self) -> &str {
        "composed"
    }
}

/// Knowledge-free mock agent: echoes the task back. Its transcript embeds
/// the injected knowledge block verbatim, which is what injection tests
/// inspect.
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoAgent;

impl AgentProvider for EchoAgent {
    fn respond(
        &self,
        sample: &Sample,
        knowledge: &str,
        _max_turns: u32,
        _seed: u64,
    ) -> Result<AgentResponse, ProviderError> {
        Ok(AgentResponse {
            answer: format!("echo:{}", sample.description),
            transcript: format!(
                "[context]\n{knowledge}\n[question]\n{}\n[answer]\necho:{}",
                sample.description, sample.description
            ),
        })
    }

    fn name(&self) -> &str {
        "echo"
    }
}

/// Mock verifier: exact string match against the ground truth, an
/// experience delta on every outcome, a skill delta on success.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactMatchVerifier;

impl VerifierProvider for ExactMatchVerifier {
    fn verify(
        &self,
        sample: &Sample,
        answer: &str,
        _transcript: &str,
    ) -> Result<Verdict, ProviderError> {
        let correct = answer.trim() == sample.answer.trim();
        Ok(Verdict {
            reward: if correct { 1.0 } else { 0.0 },
            delta_experience: Some(format!(
                "[{}] {} :: {}.",
                if correct { "solved" } else { "missed" },
                sample.id,
                sample.description
            )),
            delta_skill: correct
                .then(|| format!("For tasks like {}: answer format verified.", sample.id)),
        })
    }

    fn name(&self) -> &str {
        "exact-match"
    }
}

/// Rollout provider that always fails; exercises the skip-on-failure path.
#[derive(Debug, Clone, Copy)]
pub struct FailingRollout;

impl RolloutProvider for FailingRollout {
    fn rollout(&self, ctx: &RolloutContext<'_>) -> Result<RolloutOutcome, ProviderError> {
        Err(ProviderError {
            provider: "failing".to_string(),
            sample_id: ctx.sample.id.clone(),
            message: "injected rollout fault".to_string(),
        })
    }

    fn name(&self) -> &str {
        "failing"
    }
}

/// Per-cluster integration tallies for one step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClusterIntegrationReport {
    pub inserted: u32,
    pub merged: u32,
    pub skill_updates: u32,
    pub failed: u32,
}

/// Post-integration cluster sizes for one step (growth curves).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSnapshot {
    pub pool_entries: usize,
    pub merge_mass: u64,
    pub skill_words: usize,
    pub skill_revision: u64,
}

/// Structured record of one completed step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: u64,
    /// Sample ids in draw order.
    pub batch: Vec<String>,
    /// Rewards aligned with `batch`; `None` marks a provider failure whose
    /// sample was skipped (no proficiency update, no deltas).
    pub rewards: Vec<Option<f64>>,
    pub failures: Vec<String>,
    pub integrations: BTreeMap<u32, ClusterIntegrationReport>,
    pub clusters: BTreeMap<u32, ClusterSnapshot>,
    pub mean_reward: f64,
}

/// Aggregates over a run (or the portion of it this process executed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub policy: SamplingPolicy,
    pub seed: u64,
    pub steps: Vec<StepReport>,
    pub visit_counts: BTreeMap<String, u64>,
    pub final_success_rate: f64,
    pub hardest_quartile_mean_proficiency: f64,
}

impl RunReport {
    /// Build the aggregate view from step records plus final-state metrics;
    /// also used by report files to summarize resumed runs over their full
    /// step history.
    pub fn from_steps(
        policy: SamplingPolicy,
        seed: u64,
        steps: Vec<StepReport>,
        final_success_rate: f64,
        hardest_quartile_mean_proficiency: f64,
    ) -> Self {
        let mut visit_counts = BTreeMap::new();
        for step in &steps {
            for (id, reward) in step.batch.iter().zip(&step.rewards) {
                if reward.is_some() {
                    *visit_counts.entry(id.clone()).or_insert(0) += 1;
                }
            }
        }
        Self {
            policy,
            seed,
            steps,
            visit_counts,
            final_success_rate,
            hardest_quartile_mean_proficiency,
        }
    }
}

/// Mutable training state: everything a checkpoint has to capture besides
/// the immutable config and dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingState {
    /// Last completed step (0 before training).
    pub step: u64,
    /// Proficiency records aligned with the dataset.
    pub records: Vec<ProficiencyRecord>,
    pub bank: KnowledgeBank,
}

/// Sink for step reports and checkpoints during training. Errors abort the
/// run (the previous checkpoint stays valid).
pub trait EvolutionObserver {
    fn step_completed(&mut self, report: &StepReport) -> Result<(), String> {
        let _ = report;
        Ok(())
    }

    fn checkpoint(&mut self, state: &TrainingState) -> Result<(), String> {
        let _ = state;
        Ok(())
    }
}

/// Observer that drops everything; used by in-memory experiment runs.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoopObserver;

impl EvolutionObserver for NoopObserver {}

/// The training engine. Construction embeds and routes the full dataset;
/// routing is then fixed for the run (centroids are immutable).
pub struct EvolutionEngine<'a> {
    config: EvolutionConfig,
    dataset: &'a [Sample],
    embeddings: Vec<EmbeddingVector>,
    routes: Vec<ClusterId>,
    embedder: &'a dyn EmbeddingProvider,
    synthesizer: &'a dyn KnowledgeSynthesizer,
    rollout: &'a dyn RolloutProvider,
    state: TrainingState,
}

impl<'a> EvolutionEngine<'a> {
    /// Start a fresh run against an initialized (possibly empty) bank.
    pub fn new(
        config: EvolutionConfig,
        dataset: &'a [Sample],
        bank: KnowledgeBank,
        embedder: &'a dyn EmbeddingProvider,
        synthesizer: &'a dyn KnowledgeSynthesizer,
        rollout: &'a dyn RolloutProvider,
    ) -> Result<Self, EngineError> {
        let records = vec![
            ProficiencyRecord::new(config.sampler.prior_alpha, config.sampler.prior_beta);
            dataset.len()
        ];
        let state = TrainingState {
            step: 0,
            records,
            bank,
        };
        Self::from_state(config, dataset, state, embedder, synthesizer, rollout)
    }

    /// Resume from a restored state (checkpoint + bank).
    pub fn from_state(
        config: EvolutionConfig,
        dataset: &'a [Sample],
        state: TrainingState,
        embedder: &'a dyn EmbeddingProvider,
        synthesizer: &'a dyn KnowledgeSynthesizer,
        rollout: &'a dyn RolloutProvider,
    ) -> Result<Self, EngineError> {
        config.validate()?;
        validate_dataset(dataset)?;
        if config.sampler.batch_size > dataset.len() {
            return Err(ConfigError::new(
                "sampler.batch_size",
                format!(
                    "batch size {} exceeds dataset size {}",
                    config.sampler.batch_size,
                    dataset.len()
                ),
            )
            .into());
        }
        if state.bank.k() != config.clustering.k {
            return Err(EngineError::ClusterCountMismatch {
                bank: state.bank.k(),
                config: config.clustering.k,
            });
        }
        if state.records.len() != dataset.len() {
            return Err(EngineError::RecordCountMismatch {
                records: state.records.len(),
                dataset: dataset.len(),
            });
        }
        for record in &state.records {
            if record.last_step > state.step {
                return Err(EngineError::BadResumeStep {
                    checkpoint: state.step,
                    target: record.last_step,
                });
            }
        }

        let mut embeddings = Vec::with_capacity(dataset.len());
        let mut routes = Vec::with_capacity(dataset.len());
        for sample in dataset {
            let embedding = embed(embedder, &sample.description)?;
            routes.push(state.bank.route(&embedding)?);
            embeddings.push(embedding);
        }
        Ok(Self {
            config,
            dataset,
            embeddings,
            routes,
            embedder,
            synthesizer,
            rollout,
            state,
        })
    }

    pub fn config(&self) -> &EvolutionConfig {
        &self.config
    }

    pub fn state(&self) -> &TrainingState {
        &self.state
    }

    pub fn into_state(self) -> TrainingState {
        self.state
    }

    pub fn routes(&self) -> &[ClusterId] {
        &self.routes
    }

    /// Execute one full step of the loop.
    pub fn run_step(&mut self) -> Result<StepReport, EngineError> {
        let step = self.state.step + 1;
        let rho = self.config.sampler.rho;
        let top_k = self.config.knowledge.retrieval_top_k;

        let weights: Vec<f64> = match self.config.policy {
            SamplingPolicy::Prioritized => {
                let mut w = Vec::with_capacity(self.state.records.len());
                for record in &self.state.records {
                    let estimate = record.estimate(step, rho)?;
                    w.push(sampling_weight(estimate.proficiency, &self.config.sampler));
                }
                w
            }
            SamplingPolicy::Uniform => vec![1.0; self.state.records.len()],
        };

        let mut draw_rng = stream(self.config.seed, StreamDomain::BatchDraw, step, 0);
        let batch = draw_batch(&weights, self.config.sampler.batch_size, &mut draw_rng)?;

        // Rollout phase: the bank is read-only; writes wait for integration.
        let mut batch_ids = Vec::with_capacity(batch.len());
        let mut rewards: Vec<Option<f64>> = Vec::with_capacity(batch.len());
        let mut failures = Vec::new();
        let mut completed: Vec<(usize, ClusterId, RolloutOutcome)> = Vec::new();
        for &pos in &batch {
            let sample = &self.dataset[pos];
            batch_ids.push(sample.id.clone());
            let cluster_id = self.routes[pos];
            let outcome = {
                let retrieved =
                    self.state
                        .bank
                        .retrieve(cluster_id, &self.embeddings[pos], top_k)?;
                let knowledge = render_knowledge_block(
                    retrieved
                        .experiences
                        .iter()
                        .map(|(entry, _)| entry.text.as_str()),
                    retrieved.skill_text,
                );
                let ctx = RolloutContext {
                    sample,
                    cluster: self.state.bank.cluster(cluster_id)?,
                    knowledge: &knowledge,
                    step,
                    max_turns: self.config.max_turns,
                };
                self.rollout.rollout(&ctx)
            };
            match outcome {
                Ok(outcome) if (0.0..=1.0).contains(&outcome.reward) => {
                    self.state.records[pos] =
                        self.state.records[pos].updated(outcome.reward, step, rho)?;
                    rewards.push(Some(outcome.reward));
                    completed.push((pos, cluster_id, outcome));
                }
                Ok(outcome) => {
                    log::warn!(
                        "provider returned out-of-range reward {} for `{}`; skipping",
                        outcome.reward,
                        sample.id
                    );
                    rewards.push(None);
                    failures.push(sample.id.clone());
                }
                Err(error) => {
                    log::warn!("rollout failed, skipping sample: {error}");
                    rewards.push(None);
                    failures.push(sample.id.clone());
                }
            }
        }

        // Integration phase: clusters ascending, deltas in dataset order,
        // experiences before skills. A failed delta leaves its store
        // untouched and the step continues.
        let mut by_cluster: BTreeMap<ClusterId, Vec<usize>> = BTreeMap::new();
        for (slot, (_, cluster_id, _)) in completed.iter().enumerate() {
            by_cluster.entry(*cluster_id).or_default().push(slot);
        }
        let mut integrations: BTreeMap<u32, ClusterIntegrationReport> = BTreeMap::new();
        for (cluster_id, mut slots) in by_cluster {
            slots.sort_by_key(|&slot| completed[slot].0);
            let tally = integrations.entry(cluster_id.get()).or_default();
            for &slot in &slots {
                if let Some(delta) = completed[slot].2.delta_experience.as_deref() {
                    match self.state.bank.integrate_experience(
                        cluster_id,
                        delta,
                        self.embedder,
                        self.synthesizer,
                        step,
                    ) {
                        Ok(IntegrationOutcome::Inserted { .. }) => tally.inserted += 1,
                        Ok(IntegrationOutcome::Merged { .. }) => tally.merged += 1,
                        Err(KnowledgeError::UnknownCluster(i)) => {
                            return Err(KnowledgeError::UnknownCluster(i).into())
                        }
                        Err(error) => {
                            log::warn!("experience integration failed, delta dropped: {error}");
                            tally.failed += 1;
                        }
                    }
                }
            }
            for &slot in &slots {
                if let Some(delta) = completed[slot].2.delta_skill.as_deref() {
                    match self
                        .state
                        .bank
                        .update_skill(cluster_id, delta, self.synthesizer)
                    {
                        Ok(true) => tally.skill_updates += 1,
                        Ok(false) => {}
                        Err(KnowledgeError::UnknownCluster(i)) => {
                            return Err(KnowledgeError::UnknownCluster(i).into())
                        }
                        Err(error) => {
                            log::warn!("skill update failed, delta dropped: {error}");
                            tally.failed += 1;
                        }
                    }
                }
            }
        }

        let clusters = self
            .state
            .bank
            .clusters()
            .map(|c| {
                (
                    c.id().get(),
                    ClusterSnapshot {
                        pool_entries: c.pool().len(),
                        merge_mass: c.pool().total_merge_mass(),
                        skill_words: crate::knowledge::word_count(c.skill().text()),
                        skill_revision: c.skill().revision(),
                    },
                )
            })
            .collect();

        let observed: Vec<f64> = rewards.iter().flatten().copied().collect();
        self.state.step = step;
        Ok(StepReport {
            step,
            batch: batch_ids,
            rewards,
            failures,
            integrations,
            clusters,
            mean_reward: mean(&observed),
        })
    }

    /// Run from the current step to `total_steps`, reporting each step and
    /// checkpointing every `checkpoint_every` steps and at termination.
    pub fn run_training(
        &mut self,
        observer: &mut dyn EvolutionObserver,
    ) -> Result<RunReport, EngineError> {
        let total = self.config.total_steps;
        if self.state.step >= total {
            return Err(EngineError::BadResumeStep {
                checkpoint: self.state.step,
                target: total,
            });
        }
        let mut steps = Vec::with_capacity((total - self.state.step) as usize);
        while self.state.step < total {
            let report = self.run_step()?;
            observer
                .step_completed(&report)
                .map_err(EngineError::Observer)?;
            steps.push(report);
            let done = self.state.step;
            if done % self.config.checkpoint_every == 0 || done == total {
                observer
                    .checkpoint(&self.state)
                    .map_err(EngineError::Observer)?;
            }
        }
        let final_success = self.expected_success_rate();
        let hardest = self.hardest_quartile_mean_proficiency()?;
        Ok(RunReport::from_steps(
            self.config.policy,
            self.config.seed,
            steps,
            final_success,
            hardest,
        ))
    }

    /// Greedy evaluation sweep: mean expected success probability over the
    /// whole dataset against the current bank, no sampling noise.
    /// Meaningful under the simulated world.
    pub fn expected_success_rate(&self) -> f64 {
        let total: f64 = self
            .dataset
            .iter()
            .zip(&self.routes)
            .map(|(sample, &cluster_id)| {
                let cluster = self.state.bank.cluster(cluster_id).expect("routed id");
                success_probability(sample, cluster, &self.config.world)
            })
            .sum();
        total / self.dataset.len() as f64
    }

    /// Mean proficiency over the hardest quartile of samples (by latent
    /// difficulty), estimated at the current step.
    pub fn hardest_quartile_mean_proficiency(&self) -> Result<f64, EngineError> {
        let mut order: Vec<usize> = (0..self.dataset.len()).collect();
        order.sort_by(|&a, &b| {
            self.dataset[b]
                .sim_difficulty
                .partial_cmp(&self.dataset[a].sim_difficulty)
                .expect("difficulties are finite")
                .then(a.cmp(&b))
        });
        let quartile = (self.dataset.len() / 4).max(1);
        let mut total = 0.0;
        for &i in order.iter().take(quartile) {
            total += self.state.records[i]
                .estimate(self.state.step, self.config.sampler.rho)?
                .proficiency;
        }
        Ok(total / quartile as f64)
    }
}

fn validate_dataset(dataset: &[Sample]) -> Result<(), EngineError> {
    if dataset.is_empty() {
        return Err(EngineError::EmptyDataset);
    }
    let mut seen = alloc::collections::BTreeSet::new();
    for sample in dataset {
        if !seen.insert(sample.id.as_str()) {
            return Err(EngineError::DuplicateSampleId(sample.id.clone()));
        }
        if !(0.0..=1.0).contains(&sample.sim_difficulty) {
            return Err(EngineError::DifficultyOutOfRange {
                id: sample.id.clone(),
                value: sample.sim_difficulty,
            });
        }
    }
    Ok(())
}

/// Fit centroids for a dataset under a config (embeds every description).
pub fn fit_dataset_centroids(
    dataset: &[Sample],
    config: &EvolutionConfig,
    embedder: &dyn EmbeddingProvider,
) -> Result<crate::kmeans::KmeansFit, EngineError> {
    validate_dataset(dataset)?;
    let mut points = Vec::with_capacity(dataset.len());
    for sample in dataset {
        points.push(embed(embedder, &sample.description)?);
    }
    fit_kmeans(
        &points,
        config.clustering.k,
        config.seed,
        config.clustering.max_iters,
    )
    .map_err(EngineError::Kmeans)
}

/// Metrics of one policy run inside a comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyMetrics {
    pub final_success_rate: f64,
    pub hardest_quartile_mean_proficiency: f64,
    pub mean_training_reward: f64,
}

/// Paired prioritized-vs-uniform metrics for one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedComparison {
    pub seed: u64,
    pub prioritized: PolicyMetrics,
    pub uniform: PolicyMetrics,
}

/// Output of [`compare_policies`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyComparison {
    pub per_seed: Vec<SeedComparison>,
    pub mean_prioritized_success: f64,
    pub mean_uniform_success: f64,
    pub mean_prioritized_hard_proficiency: f64,
    pub mean_uniform_hard_proficiency: f64,
    /// Seeds where prioritized beat or tied uniform on hardest-quartile
    /// proficiency.
    pub prioritized_hard_wins: usize,
    /// Two-sided exact sign test over per-seed final success rates.
    pub sign_test_p_success: f64,
}

fn run_once(
    base: &EvolutionConfig,
    dataset: &[Sample],
    centroids: &crate::kmeans::CentroidSet,
    embedder: &dyn EmbeddingProvider,
    synthesizer: &dyn KnowledgeSynthesizer,
    seed: u64,
    policy: SamplingPolicy,
) -> Result<PolicyMetrics, EngineError> {
    let mut config = base.clone();
    config.seed = seed;
    config.world.seed = seed;
    config.policy = policy;
    let bank = KnowledgeBank::new(centroids.clone(), &config.knowledge);
    let rollout = SimulatedRollout {
        world: config.world,
    };
    let mut engine =
        EvolutionEngine::new(config, dataset, bank, embedder, synthesizer, &rollout)?;
    let report = engine.run_training(&mut NoopObserver)?;
    let step_rewards: Vec<f64> = report.steps.iter().map(|s| s.mean_reward).collect();
    Ok(PolicyMetrics {
        final_success_rate: report.final_success_rate,
        hardest_quartile_mean_proficiency: report.hardest_quartile_mean_proficiency,
        mean_training_reward: mean(&step_rewards),
    })
}

/// Run the prioritized and uniform policies per seed with everything else
/// identical, on a shared set of centroids fit from the base config.
pub fn compare_policies(
    dataset: &[Sample],
    base: &EvolutionConfig,
    embedder: &dyn EmbeddingProvider,
    synthesizer: &dyn KnowledgeSynthesizer,
    seeds: &[u64],
) -> Result<PolicyComparison, EngineError> {
    if seeds.len() < 5 {
        return Err(
            ConfigError::new("compare.seeds", format!("need >= 5 seeds, got {}", seeds.len()))
                .into(),
        );
    }
    base.validate()?;
    let centroids = fit_dataset_centroids(dataset, base, embedder)?.centroids;
    let mut per_seed = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let prioritized = run_once(
            base,
            dataset,
            &centroids,
            embedder,
            synthesizer,
            seed,
            SamplingPolicy::Prioritized,
        )?;
        let uniform = run_once(
            base,
            dataset,
            &centroids,
            embedder,
            synthesizer,
            seed,
            SamplingPolicy::Uniform,
        )?;
        per_seed.push(SeedComparison {
            seed,
            prioritized,
            uniform,
        });
    }
    let success_pairs: Vec<(f64, f64)> = per_seed
        .iter()
        .map(|s| {
            (
                s.prioritized.final_success_rate,
                s.uniform.final_success_rate,
            )
        })
        .collect();
    let hard_wins = per_seed
        .iter()
        .filter(|s| {
            s.prioritized.hardest_quartile_mean_proficiency
                >= s.uniform.hardest_quartile_mean_proficiency
        })
        .count();
    Ok(PolicyComparison {
        mean_prioritized_success: mean(
            &per_seed
                .iter()
                .map(|s| s.prioritized.final_success_rate)
                .collect::<Vec<_>>(),
        ),
        mean_uniform_success: mean(
            &per_seed
                .iter()
                .map(|s| s.uniform.final_success_rate)
                .collect::<Vec<_>>(),
        ),
        mean_prioritized_hard_proficiency: mean(
            &per_seed
                .iter()
                .map(|s| s.prioritized.hardest_quartile_mean_proficiency)
                .collect::<Vec<_>>(),
        ),
        mean_uniform_hard_proficiency: mean(
            &per_seed
                .iter()
                .map(|s| s.uniform.hardest_quartile_mean_proficiency)
                .collect::<Vec<_>>(),
        ),
        prioritized_hard_wins: hard_wins,
        sign_test_p_success: sign_test_p(&success_pairs),
        per_seed,
    })
}

/// One cell of a hyperparameter sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub rho: f64,
    pub gamma: f64,
    /// `(seed, final success rate)` pairs, aligned across cells.
    pub per_seed: Vec<(u64, f64)>,
    pub mean_success: f64,
}

/// Grid sweep over `(rho, gamma)` with the prioritized policy; every cell
/// shares seeds and centroids so cells are directly comparable.
pub fn run_sweep(
    dataset: &[Sample],
    base: &EvolutionConfig,
    embedder: &dyn EmbeddingProvider,
    synthesizer: &dyn KnowledgeSynthesizer,
    rho_values: &[f64],
    gamma_values: &[f64],
    seeds: &[u64],
) -> Result<Vec<SweepCell>, EngineError> {
    if rho_values.is_empty() || gamma_values.is_empty() || seeds.is_empty() {
        return Err(ConfigError::new("sweep.grid", "grids and seeds must be non-empty").into());
    }
    base.validate()?;
    let centroids = fit_dataset_centroids(dataset, base, embedder)?.centroids;
    let mut cells = Vec::new();
    for &rho in rho_values {
        for &gamma in gamma_values {
            let mut cell_config = base.clone();
            cell_config.sampler.rho = rho;
            cell_config.sampler.gamma = gamma;
            cell_config.validate()?;
            let mut per_seed = Vec::with_capacity(seeds.len());
            for &seed in seeds {
                let metrics = run_once(
                    &cell_config,
                    dataset,
                    &centroids,
                    embedder,
                    synthesizer,
                    seed,
                    SamplingPolicy::Prioritized,
                )?;
                per_seed.push((seed, metrics.final_success_rate));
            }
            let mean_success = mean(&per_seed.iter().map(|p| p.1).collect::<Vec<_>>());
            cells.push(SweepCell {
                rho,
                gamma,
                per_seed,
                mean_success,
            });
        }
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::KnowledgeConfig;
    use crate::embedding::HashEmbedder;
    use crate::knowledge::{FailingSynthesizer, MockSynthesizer};

    fn sample(id: &str, description: &str, difficulty: f64) -> Sample {
        Sample {
            id: id.to_string(),
            description: description.to_string(),
            answer: "42".to_string(),
            sim_difficulty: difficulty,
        }
    }

    fn family_dataset(n: usize) -> Vec<Sample> {
        let families = [
            "transcribe the faded serial code printed on the label",
            "read the bar chart and report the quarterly total",
            "navigate the maze grid from the red marker to the exit",
            "search the web for the original release year",
        ];
        (0..n)
            .map(|i| {
                let family = families[i % families.len()];
                sample(
                    &format!("s{i:03}"),
                    &format!("{family} variant token{i}"),
                    (i as f64 * 0.37) % 1.0,
                )
            })
            .collect()
    }

    fn build_engine<'a>(
        config: &EvolutionConfig,
        dataset: &'a [Sample],
        embedder: &'a HashEmbedder,
        synthesizer: &'a MockSynthesizer,
        rollout: &'a SimulatedRollout,
    ) -> EvolutionEngine<'a> {
        let centroids = fit_dataset_centroids(dataset, config, embedder)
            .unwrap()
            .centroids;
        let bank = KnowledgeBank::new(centroids, &config.knowledge);
        EvolutionEngine::new(config.clone(), dataset, bank, embedder, synthesizer, rollout)
            .unwrap()
    }

    fn empty_cluster() -> Cluster {
        Cluster::new(ClusterId::new(1), &KnowledgeConfig::default())
    }

    fn saturated_cluster(events: u64) -> Cluster {
        let mut cluster = empty_cluster();
        let mut skill = crate::knowledge::SkillDocument::new(1_000_000);
        for i in 0..events {
            skill
                .update(&format!("note number {i}."), &MockSynthesizer)
                .unwrap();
        }
        cluster = Cluster::from_parts(cluster.id(), cluster.pool().clone(), skill);
        assert_eq!(cluster.integration_events(), events);
        cluster
    }

    #[test]
    fn zero_difficulty_always_succeeds() {
        let world = SimulatedWorldConfig::default();
        let s = sample("a", "anything", 0.0);
        let cluster = empty_cluster();
        for trial in 0..50 {
            let mut rng = stream(1, StreamDomain::Rollout, trial, 0);
            let outcome = simulated_rollout(&s, &cluster, &world, &mut rng);
            assert_eq!(outcome.reward, 1.0);
            assert!(outcome.delta_experience.is_some());
        }
    }

    #[test]
    fn max_difficulty_empty_cluster_always_fails() {
        let world = SimulatedWorldConfig::default();
        let s = sample("a", "anything", 1.0);
        let cluster = empty_cluster();
        for trial in 0..50 {
            let mut rng = stream(1, StreamDomain::Rollout, trial, 0);
            assert_eq!(simulated_rollout(&s, &cluster, &world, &mut rng).reward, 0.0);
        }
    }

    #[test]
    fn saturated_cluster_success_rate_matches_closed_form() {
        // d=1, q=1, λ=0.6 → p=0.6; Monte-Carlo over 10k derived streams.
        let world = SimulatedWorldConfig::default();
        let s = sample("hard", "anything", 1.0);
        let cluster = saturated_cluster(world.saturation);
        let mut successes = 0u32;
        let trials = 10_000u64;
        for trial in 0..trials {
            let mut rng = stream(77, StreamDomain::Rollout, trial, 0);
            if simulated_rollout(&s, &cluster, &world, &mut rng).reward == 1.0 {
                successes += 1;
            }
        }
        let rate = successes as f64 / trials as f64;
        assert!((0.58..=0.62).contains(&rate), "rate {rate}");
    }

    #[test]
    fn quality_ramp_is_clamped() {
        let world = SimulatedWorldConfig::default();
        let s = sample("hard", "anything", 1.0);
        let half = saturated_cluster(world.saturation / 2);
        let over = saturated_cluster(world.saturation * 3);
        assert!((success_probability(&s, &half, &world) - 0.3).abs() < 1e-12);
        assert!((success_probability(&s, &over, &world) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn single_sample_forced_selection_updates_its_record() {
        let dataset = alloc::vec![sample("only", "navigate the maze grid", 0.0)];
        let mut config = EvolutionConfig::default();
        config.sampler.batch_size = 1;
        config.clustering.k = 1;
        config.total_steps = 1;
        let embedder = HashEmbedder::default();
        let rollout = SimulatedRollout {
            world: config.world,
        };
        let mut engine = build_engine(&config, &dataset, &embedder, &MockSynthesizer, &rollout);
        let report = engine.run_step().unwrap();
        assert_eq!(report.batch, alloc::vec!["only".to_string()]);
        assert_eq!(engine.state().records[0].last_step, 1);
        assert_eq!(report.rewards, alloc::vec![Some(1.0)]);
    }

    #[test]
    fn uncertain_sample_is_selected_more_than_mastered_one() {
        // λ=0 keeps the hard sample at p=0.5 (uncertain forever) while the
        // easy one is mastered immediately.
        let dataset = alloc::vec![
            sample("easy", "navigate the maze grid", 0.0),
            sample("hard", "search the web for a year", 0.5),
        ];
        let mut config = EvolutionConfig::default();
        config.sampler.batch_size = 1;
        config.clustering.k = 2;
        config.total_steps = 200;
        config.world.transfer_gain = 0.0;
        let embedder = HashEmbedder::default();
        let rollout = SimulatedRollout {
            world: config.world,
        };
        let mut engine = build_engine(&config, &dataset, &embedder, &MockSynthesizer, &rollout);
        let report = engine.run_training(&mut NoopObserver).unwrap();
        let easy = report.visit_counts.get("easy").copied().unwrap_or(0);
        let hard = report.visit_counts.get("hard").copied().unwrap_or(0);
        assert_eq!(easy + hard, 200);
        assert!(hard > easy, "hard={hard} easy={easy}");
    }

    #[test]
    fn provider_failure_skips_sample_but_step_completes() {
        let dataset = family_dataset(8);
        let mut config = EvolutionConfig::default();
        config.sampler.batch_size = 4;
        config.total_steps = 1;
        let embedder = HashEmbedder::default();
        let centroids = fit_dataset_centroids(&dataset, &config, &embedder)
            .unwrap()
            .centroids;
        let bank = KnowledgeBank::new(centroids, &config.knowledge);
        let mut engine = EvolutionEngine::new(
            config,
            &dataset,
            bank,
            &embedder,
            &MockSynthesizer,
            &FailingRollout,
        )
        .unwrap();
        let report = engine.run_step().unwrap();
        assert_eq!(report.failures.len(), 4);
        assert!(report.rewards.iter().all(Option::is_none));
        assert!(engine.state().records.iter().all(|r| r.last_step == 0));
        assert!(report.integrations.is_empty());
        assert_eq!(report.mean_reward, 0.0);
    }

    #[test]
    fn synthesizer_fault_drops_one_delta_and_keeps_the_rest() {
        // One family, difficulty 0: every rollout succeeds and emits an
        // experience delta. A low gate makes every delta after the first a
        // merge; merges call the synthesizer once each and experiences are
        // integrated before any skill delta, so call order is exact.
        let dataset: Vec<Sample> = (0..8)
            .map(|i| {
                sample(
                    &format!("s{i}"),
                    &format!("navigate the maze grid from marker number {i}"),
                    0.0,
                )
            })
            .collect();
        let mut config = EvolutionConfig::default();
        config.sampler.batch_size = 8;
        config.total_steps = 1;
        config.clustering.k = 1;
        config.knowledge.similarity_threshold = 0.1;
        let embedder = HashEmbedder::default();
        let centroids = fit_dataset_centroids(&dataset, &config, &embedder)
            .unwrap()
            .centroids;
        let bank = KnowledgeBank::new(centroids.clone(), &config.knowledge);
        let rollout = SimulatedRollout {
            world: config.world,
        };
        // merges 1 and 2 succeed, everything after fails
        let synthesizer = FailingSynthesizer::after(2);
        let mut engine = EvolutionEngine::new(
            config,
            &dataset,
            bank,
            &embedder,
            &synthesizer,
            &rollout,
        )
        .unwrap();
        let report = engine.run_step().unwrap();
        let tally = &report.integrations[&1];
        assert_eq!(tally.inserted, 1, "first delta inserted without a synth call");
        assert_eq!(tally.merged, 2, "two merges before the injected fault");
        assert_eq!(tally.skill_updates, 0, "skill deltas all hit the fault");
        assert!(tally.failed >= 5, "remaining deltas dropped: {tally:?}");
        // dropped deltas left the pool exactly as the last success did
        let pool = engine.state().bank.cluster(ClusterId::new(1)).unwrap().pool();
        assert_eq!(pool.len(), 1);
        assert_eq!(pool.total_merge_mass(), 3);
    }

    #[test]
    fn full_runs_are_bit_reproducible() {
        let dataset = family_dataset(24);
        let mut config = EvolutionConfig::default();
        config.total_steps = 12;
        config.sampler.batch_size = 6;
        let embedder = HashEmbedder::default();
        let rollout = SimulatedRollout {
            world: config.world,
        };
        let mut a = build_engine(&config, &dataset, &embedder, &MockSynthesizer, &rollout);
        let mut b = build_engine(&config, &dataset, &embedder, &MockSynthesizer, &rollout);
        let ra = a.run_training(&mut NoopObserver).unwrap();
        let rb = b.run_training(&mut NoopObserver).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(a.state(), b.state());
    }

    #[test]
    fn state_resume_replays_identically() {
        let dataset = family_dataset(24);
        let mut config = EvolutionConfig::default();
        config.total_steps = 10;
        config.sampler.batch_size = 6;
        let embedder = HashEmbedder::default();
        let rollout = SimulatedRollout {
            world: config.world,
        };

        let mut uninterrupted =
            build_engine(&config, &dataset, &embedder, &MockSynthesizer, &rollout);
        uninterrupted.run_training(&mut NoopObserver).unwrap();

        let mut half_config = config.clone();
        half_config.total_steps = 5;
        let mut first_half =
            build_engine(&half_config, &dataset, &embedder, &MockSynthesizer, &rollout);
        first_half.run_training(&mut NoopObserver).unwrap();
        let mid_state = first_half.into_state();

        let mut resumed = EvolutionEngine::from_state(
            config.clone(),
            &dataset,
            mid_state,
            &embedder,
            &MockSynthesizer,
            &rollout,
        )
        .unwrap();
        resumed.run_training(&mut NoopObserver).unwrap();
        assert_eq!(uninterrupted.state(), resumed.state());
    }

    #[test]
    fn visit_counts_conserve_batch_slots() {
        let dataset = family_dataset(16);
        let mut config = EvolutionConfig::default();
        config.total_steps = 8;
        config.sampler.batch_size = 4;
        let embedder = HashEmbedder::default();
        let rollout = SimulatedRollout {
            world: config.world,
        };
        let mut engine = build_engine(&config, &dataset, &embedder, &MockSynthesizer, &rollout);
        let report = engine.run_training(&mut NoopObserver).unwrap();
        let visits: u64 = report.visit_counts.values().sum();
        assert_eq!(visits, 8 * 4);
    }

    #[test]
    fn lambda_zero_makes_policies_indistinguishable() {
        let dataset = family_dataset(16);
        let mut config = EvolutionConfig::default();
        config.total_steps = 6;
        config.sampler.batch_size = 4;
        config.world.transfer_gain = 0.0;
        let embedder = HashEmbedder::default();
        let comparison = compare_policies(
            &dataset,
            &config,
            &embedder,
            &MockSynthesizer,
            &[0, 1, 2, 3, 4, 5],
        )
        .unwrap();
        for seed in &comparison.per_seed {
            assert_eq!(
                seed.prioritized.final_success_rate,
                seed.uniform.final_success_rate
            );
        }
        assert!(comparison.sign_test_p_success > 0.05);
    }

    #[test]
    fn compare_requires_five_seeds_and_train_rejects_t_zero() {
        let dataset = family_dataset(8);
        let config = EvolutionConfig::default();
        let embedder = HashEmbedder::default();
        assert!(matches!(
            compare_policies(&dataset, &config, &embedder, &MockSynthesizer, &[0, 1]),
            Err(EngineError::Config(_))
        ));

        let mut bad = config.clone();
        bad.total_steps = 0;
        assert_eq!(bad.validate().unwrap_err().key, "total_steps");
    }

    #[test]
    fn composed_rollout_grades_echo_agent() {
        let agent = EchoAgent;
        let verifier = ExactMatchVerifier;
        let rollout = ComposedRollout {
            agent: &agent,
            verifier: &verifier,
            seed: 0,
        };
        let cluster = empty_cluster();
        let right = Sample {
            id: "r".to_string(),
            description: "ping".to_string(),
            answer: "echo:ping".to_string(),
            sim_difficulty: 0.5,
        };
        let wrong = sample("w", "ping", 0.5);
        let ok = rollout
            .rollout(&RolloutContext {
                sample: &right,
                cluster: &cluster,
                knowledge: "",
                step: 1,
                max_turns: 10,
            })
            .unwrap();
        assert_eq!(ok.reward, 1.0);
        assert!(ok.delta_skill.is_some());
        let miss = rollout
            .rollout(&RolloutContext {
                sample: &wrong,
                cluster: &cluster,
                knowledge: "",
                step: 1,
                max_turns: 10,
            })
            .unwrap();
        assert_eq!(miss.reward, 0.0);
        assert!(miss.delta_experience.is_some());
    }
}
