//! Subcommand implementations.

use evoke_core::config::EvolutionConfig;
use evoke_core::embedding::{embed, EmbeddingProvider};
use evoke_core::engine::{
    compare_policies, fit_dataset_centroids, run_sweep, EvolutionEngine, EvolutionObserver,
    RunReport, Sample, StepReport, TrainingState,
};
use evoke_core::inference::{inject_and_answer, TemplateAdapter};
use evoke_core::kmeans::{fit_kmeans, silhouette};
use evoke_core::knowledge::{KnowledgeBank, MockSynthesizer};
use evoke_core::stats::visit_histogram;
use serde::Serialize;
use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::dataset::{load_dataset, LoadedDataset};
use crate::error::CliError;
use crate::persist::{
    replay_config_hash, BankLock, BankStore, CheckpointPayload, ProviderBinding,
};
use crate::report::{read_report, write_summary, ConfigRecord, ReportWriter, RunSummary};
use crate::settings::RunConfig;

pub struct Ctx {
    pub config: RunConfig,
    pub quiet: bool,
}

impl Ctx {
    fn say(&self, line: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", line.as_ref());
        }
    }
}

fn binding_of(embedder: &dyn EmbeddingProvider) -> ProviderBinding {
    ProviderBinding {
        fingerprint: embedder.fingerprint(),
        dimension: embedder.dimension(),
    }
}

fn write_json_out<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable");
    bytes.push(b'\n');
    std::fs::write(path, bytes)
        .map_err(|e| CliError::validation(format!("cannot write {}: {e}", path.display())))
}

// ---------------------------------------------------------------- validate

pub fn cmd_validate(ctx: &Ctx, dataset_path: &Path) -> Result<(), CliError> {
    let dataset = load_dataset(dataset_path, ctx.config.engine.seed)?;
    let n = dataset.samples.len();
    let mut difficulties: Vec<f64> = dataset.samples.iter().map(|s| s.sim_difficulty).collect();
    difficulties.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut families: BTreeMap<&str, usize> = BTreeMap::new();
    for hint in dataset.hints.values() {
        *families.entry(hint.as_str()).or_default() += 1;
    }
    ctx.say(format!("dataset {} is valid", dataset_path.display()));
    ctx.say(format!(
        "  samples: {n}   difficulty min/median/max: {:.3}/{:.3}/{:.3}",
        difficulties[0],
        difficulties[n / 2],
        difficulties[n - 1]
    ));
    ctx.say(format!("  content hash: {}", dataset.content_hash));
    if !families.is_empty() {
        let summary: Vec<String> = families
            .iter()
            .map(|(name, count)| format!("{name}={count}"))
            .collect();
        ctx.say(format!("  cluster hints: {}", summary.join(" ")));
    }
    Ok(())
}

// ----------------------------------------------------------------- cluster

pub fn cmd_cluster(ctx: &Ctx, dataset_path: &Path, bank_path: &Path) -> Result<(), CliError> {
    let config = &ctx.config.engine;
    let dataset = load_dataset(dataset_path, config.seed)?;
    if config.clustering.k > dataset.samples.len() {
        return Err(CliError::validation(format!(
            "invalid config: clustering.k {} exceeds dataset size {}",
            config.clustering.k,
            dataset.samples.len()
        )));
    }
    let embedder = ctx.config.build_embedder()?;
    let mut points = Vec::with_capacity(dataset.samples.len());
    for sample in &dataset.samples {
        points.push(embed(embedder.as_ref(), &sample.description).map_err(CliError::from)?);
    }

    // silhouette guidance table, independent of the chosen K
    ctx.say("K    silhouette   objective");
    let max_probe = dataset.samples.len().min(10);
    for k in 2..=max_probe {
        match fit_kmeans(&points, k, config.seed, config.clustering.max_iters) {
            Ok(fit) => {
                let score = silhouette(&points, &fit.assignments, k);
                ctx.say(format!("{k:<4} {score:>10.4} {:>11.4}", fit.objective()));
            }
            Err(e) => {
                ctx.say(format!("{k:<4} (skipped: {e})"));
                break;
            }
        }
    }

    let fit = fit_dataset_centroids(&dataset.samples, config, embedder.as_ref())
        .map_err(CliError::from)?;
    let bank = KnowledgeBank::new(fit.centroids, &config.knowledge);
    let store = BankStore::init(bank_path, &bank, &binding_of(embedder.as_ref()), config)?;
    ctx.say(format!(
        "bank initialized at {} with K={} (objective {:.4}, converged={})",
        store.root().display(),
        config.clustering.k,
        fit.objective_trace.last().copied().unwrap_or(0.0),
        fit.converged
    ));

    let mut sizes: BTreeMap<u32, usize> = BTreeMap::new();
    for id in &fit.assignments {
        *sizes.entry(id.get()).or_default() += 1;
    }
    for (cluster, count) in &sizes {
        ctx.say(format!("  cluster {cluster}: {count} samples"));
    }
    if !dataset.hints.is_empty() {
        let mut table: BTreeMap<(&str, u32), usize> = BTreeMap::new();
        for (sample, id) in dataset.samples.iter().zip(&fit.assignments) {
            if let Some(hint) = dataset.hints.get(&sample.id) {
                *table.entry((hint.as_str(), id.get())).or_default() += 1;
            }
        }
        ctx.say("  hint breakdown (hint -> cluster: count):");
        for ((hint, cluster), count) in &table {
            ctx.say(format!("    {hint} -> {cluster}: {count}"));
        }
    }
    Ok(())
}

// ------------------------------------------------------------------- train

struct PersistObserver<'a> {
    store: &'a BankStore,
    binding: &'a ProviderBinding,
    config: &'a EvolutionConfig,
    dataset: &'a [Sample],
    config_hash: &'a str,
    writer: ReportWriter,
    error: Option<CliError>,
}

impl PersistObserver<'_> {
    fn stash(&mut self, error: CliError) -> String {
        let message = error.to_string();
        self.error = Some(error);
        message
    }
}

impl EvolutionObserver for PersistObserver<'_> {
    fn step_completed(&mut self, report: &StepReport) -> Result<(), String> {
        self.writer
            .append_step(report)
            .map_err(|e| self.stash(e.into()))
    }

    fn checkpoint(&mut self, state: &TrainingState) -> Result<(), String> {
        let payload = CheckpointPayload::from_state(
            state,
            self.dataset,
            self.config_hash,
            self.config.seed,
        );
        self.store
            .save_snapshot(&state.bank, self.binding, self.config, Some(payload))
            .map_err(|e| self.stash(e.into()))
    }
}

/// Default report path for a bank: a sibling `<bank>.report.jsonl` (the
/// bank directory itself is replaced wholesale on every checkpoint).
pub fn default_report_path(bank_path: &Path) -> PathBuf {
    let name = bank_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "bank".into());
    bank_path.with_file_name(format!("{name}.report.jsonl"))
}

pub fn summary_path_for(report_path: &Path) -> PathBuf {
    report_path.with_extension("summary.json")
}

pub fn cmd_train(
    ctx: &Ctx,
    dataset_path: &Path,
    bank_path: &Path,
    out: Option<PathBuf>,
    resume: bool,
) -> Result<(), CliError> {
    let embedder = ctx.config.build_embedder()?;
    let binding = binding_of(embedder.as_ref());
    let store = BankStore::open(bank_path)?;
    let _lock = BankLock::acquire(bank_path)?;
    let (bank, manifest) = store.load_bank(&binding)?;

    // the bank is the authority on its own structure: adopt K and the
    // knowledge limits it was built with
    let mut config = ctx.config.engine.clone();
    if config.clustering.k != manifest.k
        || config.knowledge.similarity_threshold != manifest.similarity_threshold
        || config.knowledge.experience_capacity != manifest.experience_capacity
        || config.knowledge.skill_word_budget != manifest.skill_word_budget
    {
        log::info!("adopting bank parameters from the manifest (K, tau, L, W)");
    }
    config.clustering.k = manifest.k;
    config.knowledge.similarity_threshold = manifest.similarity_threshold;
    config.knowledge.experience_capacity = manifest.experience_capacity;
    config.knowledge.skill_word_budget = manifest.skill_word_budget;

    let dataset = load_dataset(dataset_path, config.seed)?;
    let config_hash = replay_config_hash(&config, &binding, &dataset.content_hash);
    let report_path = out.unwrap_or_else(|| default_report_path(bank_path));
    let config_record = ConfigRecord {
        config_hash: config_hash.clone(),
        policy: config.policy,
        seed: config.seed,
        dataset_hash: dataset.content_hash.clone(),
        dataset_size: dataset.samples.len(),
        provider_fingerprint: binding.fingerprint.clone(),
        effective_config: ctx.config.as_json(),
    };

    let synthesizer = MockSynthesizer;
    let rollout = ctx.config.build_rollout()?;

    let (mut engine, writer) = if resume {
        let payload = store.load_checkpoint(None, &config_hash)?;
        if payload.step >= config.total_steps {
            return Err(CliError::validation(format!(
                "checkpoint step {} is already at or past total_steps {}; nothing to resume",
                payload.step, config.total_steps
            )));
        }
        let records = payload.records_for(&dataset.samples)?;
        let state = TrainingState {
            step: payload.step,
            records,
            bank,
        };
        let writer = ReportWriter::reopen(&report_path, &config_record, payload.step + 1)?;
        let engine = EvolutionEngine::from_state(
            config.clone(),
            &dataset.samples,
            state,
            embedder.as_ref(),
            &synthesizer,
            rollout.as_ref(),
        )
        .map_err(CliError::from)?;
        (engine, writer)
    } else {
        let existing = store.checkpoint_steps()?;
        if !existing.is_empty() {
            return Err(CliError::validation(format!(
                "bank already holds checkpoints (latest step {}); pass --resume to continue \
                 or start from a freshly clustered bank",
                existing.last().unwrap()
            )));
        }
        let writer = ReportWriter::create(&report_path, &config_record)?;
        let engine = EvolutionEngine::new(
            config.clone(),
            &dataset.samples,
            bank,
            embedder.as_ref(),
            &synthesizer,
            rollout.as_ref(),
        )
        .map_err(CliError::from)?;
        (engine, writer)
    };

    let mut observer = PersistObserver {
        store: &store,
        binding: &binding,
        config: &config,
        dataset: &dataset.samples,
        config_hash: &config_hash,
        writer,
        error: None,
    };
    let started = Instant::now();
    let run = engine.run_training(&mut observer);
    if let Some(error) = observer.error.take() {
        return Err(error);
    }
    let partial = run.map_err(CliError::from)?;

    // summarize over the full step history (prior segments included)
    let (_, all_steps) = read_report(&report_path)?;
    let full = RunReport::from_steps(
        config.policy,
        config.seed,
        all_steps,
        partial.final_success_rate,
        partial.hardest_quartile_mean_proficiency,
    );
    let summary = RunSummary {
        config_hash,
        total_steps_recorded: full.steps.len(),
        report: full,
    };
    let summary_path = summary_path_for(&report_path);
    write_summary(&summary_path, &summary)?;

    ctx.say(format!(
        "trained to step {} in {:.2?} ({} rollouts this run)",
        engine.state().step,
        started.elapsed(),
        partial
            .steps
            .iter()
            .map(|s| s.batch.len() - s.failures.len())
            .sum::<usize>(),
    ));
    ctx.say(format!(
        "final expected success rate {:.4}, hardest-quartile proficiency {:.4}",
        partial.final_success_rate, partial.hardest_quartile_mean_proficiency
    ));
    ctx.say(format!(
        "report: {}   summary: {}",
        report_path.display(),
        summary_path.display()
    ));
    Ok(())
}

// ------------------------------------------------------------------- infer

#[derive(Debug, Serialize)]
struct InferenceRecord {
    id: String,
    answer: String,
    source_cluster: u32,
    experience_ids: Vec<u64>,
    skill_revision: u64,
    cold_start: bool,
    elapsed_us: u128,
}

pub fn cmd_infer(
    ctx: &Ctx,
    bank_path: &Path,
    dataset_path: Option<&Path>,
    inline_text: Option<&str>,
    agent_name: &str,
    top_k: Option<usize>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let embedder = ctx.config.build_embedder()?;
    let binding = binding_of(embedder.as_ref());
    let store = BankStore::open(bank_path)?;
    let (bank, _manifest) = store.load_bank(&binding)?;
    let agent = ctx.config.build_agent(agent_name)?;
    let top_k = top_k.unwrap_or(ctx.config.engine.knowledge.retrieval_top_k);

    let samples: Vec<Sample> = match (dataset_path, inline_text) {
        (Some(path), None) => load_dataset(path, ctx.config.engine.seed)?.samples,
        (None, Some(text)) => {
            if text.trim().is_empty() {
                return Err(CliError::validation("--text must not be empty"));
            }
            vec![Sample {
                id: "inline-1".into(),
                description: text.to_string(),
                answer: String::new(),
                sim_difficulty: 0.0,
            }]
        }
        _ => {
            return Err(CliError::validation(
                "pass exactly one of --dataset or --text",
            ))
        }
    };

    let mut sink: Box<dyn std::io::Write> = match &out {
        Some(path) => Box::new(std::io::BufWriter::new(
            std::fs::File::create(path).map_err(|e| {
                CliError::validation(format!("cannot write {}: {e}", path.display()))
            })?,
        )),
        None => Box::new(std::io::stdout()),
    };
    for sample in &samples {
        let started = Instant::now();
        let outcome = inject_and_answer(
            sample,
            &bank,
            embedder.as_ref(),
            agent.as_ref(),
            &TemplateAdapter,
            top_k,
            ctx.config.engine.max_turns,
            ctx.config.engine.seed,
        )
        .map_err(CliError::from)?;
        let record = InferenceRecord {
            id: sample.id.clone(),
            answer: outcome.answer,
            source_cluster: outcome.adapted.source_cluster,
            experience_ids: outcome.adapted.experience_ids,
            skill_revision: outcome.adapted.skill_revision,
            cold_start: outcome.adapted.cold_start,
            elapsed_us: started.elapsed().as_micros(),
        };
        let line = serde_json::to_string(&record).expect("serializable record");
        writeln!(sink, "{line}")
            .map_err(|e| CliError::validation(format!("cannot write output: {e}")))?;
    }
    sink.flush()
        .map_err(|e| CliError::validation(format!("cannot flush output: {e}")))?;
    Ok(())
}

// ------------------------------------------------------------------- stats

#[derive(Debug, Serialize)]
struct StatsOutput {
    histogram: Vec<(u64, usize)>,
    rewards: Vec<(u64, f64)>,
    growth: BTreeMap<u32, Vec<GrowthPoint>>,
}

#[derive(Debug, Serialize)]
struct GrowthPoint {
    step: u64,
    pool_entries: usize,
    skill_words: usize,
    skill_revision: u64,
}

pub fn cmd_stats(
    ctx: &Ctx,
    report_path: &Path,
    plot: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let (config_record, steps) = read_report(report_path)?;
    if steps.is_empty() {
        ctx.say("no steps recorded");
        if let Some(path) = out {
            write_json_out(
                &path,
                &StatsOutput {
                    histogram: Vec::new(),
                    rewards: Vec::new(),
                    growth: BTreeMap::new(),
                },
            )?;
        }
        return Ok(());
    }

    let mut visits: BTreeMap<&str, u64> = BTreeMap::new();
    for step in &steps {
        for (id, reward) in step.batch.iter().zip(&step.rewards) {
            if reward.is_some() {
                *visits.entry(id).or_default() += 1;
            }
        }
    }
    let mut counts: Vec<u64> = visits.values().copied().collect();
    counts.resize(config_record.dataset_size.max(counts.len()), 0);
    let histogram = visit_histogram(&counts);

    ctx.say(format!(
        "run seed {} policy {:?}: {} steps, {} distinct samples visited of {}",
        config_record.seed,
        config_record.policy,
        steps.len(),
        visits.len(),
        config_record.dataset_size
    ));
    ctx.say("visits  samples");
    for (bucket, count) in &histogram {
        ctx.say(format!(
            "{bucket:>6}  {count:<6} {}",
            "#".repeat((*count).min(60))
        ));
    }

    let rewards: Vec<(u64, f64)> = steps.iter().map(|s| (s.step, s.mean_reward)).collect();
    ctx.say("step  mean_reward");
    for (step, reward) in &rewards {
        ctx.say(format!("{step:>4}  {reward:.4}"));
    }

    let mut growth: BTreeMap<u32, Vec<GrowthPoint>> = BTreeMap::new();
    for step in &steps {
        for (cluster, snapshot) in &step.clusters {
            growth.entry(*cluster).or_default().push(GrowthPoint {
                step: step.step,
                pool_entries: snapshot.pool_entries,
                skill_words: snapshot.skill_words,
                skill_revision: snapshot.skill_revision,
            });
        }
    }
    ctx.say("cluster growth (final step):");
    for (cluster, points) in &growth {
        if let Some(last) = points.last() {
            ctx.say(format!(
                "  cluster {cluster}: {} entries, {} skill words (rev {})",
                last.pool_entries, last.skill_words, last.skill_revision
            ));
        }
    }

    if let Some(path) = plot {
        write_histogram_svg(&path, &histogram)?;
        ctx.say(format!("histogram plot: {}", path.display()));
    }
    if let Some(path) = out {
        write_json_out(
            &path,
            &StatsOutput {
                histogram,
                rewards,
                growth,
            },
        )?;
    }
    Ok(())
}

fn write_histogram_svg(path: &Path, histogram: &[(u64, usize)]) -> Result<(), CliError> {
    let width = 640.0;
    let height = 360.0;
    let margin = 40.0;
    let max_count = histogram.iter().map(|(_, c)| *c).max().unwrap_or(1).max(1) as f64;
    let bar_span = (width - 2.0 * margin) / histogram.len().max(1) as f64;
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    ));
    for (i, (bucket, count)) in histogram.iter().enumerate() {
        let bar_height = (height - 2.0 * margin) * (*count as f64) / max_count;
        let x = margin + i as f64 * bar_span;
        let y = height - margin - bar_height;
        svg.push_str(&format!(
            "<rect x=\"{:.1}\" y=\"{y:.1}\" width=\"{:.1}\" height=\"{bar_height:.1}\" \
             fill=\"#4878a8\"/>\n",
            x + bar_span * 0.1,
            bar_span * 0.8,
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"middle\">{bucket}</text>\n",
            x + bar_span * 0.5,
            height - margin + 14.0,
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"16\" font-size=\"12\" text-anchor=\"middle\">samples per visit count \
         (max {max_count})</text>\n</svg>\n",
        width / 2.0
    ));
    std::fs::write(path, svg)
        .map_err(|e| CliError::validation(format!("cannot write {}: {e}", path.display())))
}

// ------------------------------------------------------------------- sweep

pub fn cmd_sweep(
    ctx: &Ctx,
    dataset_path: &Path,
    rho_values: &[f64],
    gamma_values: &[f64],
    seeds: &[u64],
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let dataset = load_dataset(dataset_path, ctx.config.engine.seed)?;
    let embedder = ctx.config.build_embedder()?;
    let cells = run_sweep(
        &dataset.samples,
        &ctx.config.engine,
        embedder.as_ref(),
        &MockSynthesizer,
        rho_values,
        gamma_values,
        seeds,
    )
    .map_err(CliError::from)?;

    ctx.say(format!(
        "sweep over {} cells x {} seeds (mean final success rate)",
        cells.len(),
        seeds.len()
    ));
    ctx.say("rho     gamma   mean_success");
    for cell in &cells {
        ctx.say(format!(
            "{:<7} {:<7} {:.4}",
            cell.rho, cell.gamma, cell.mean_success
        ));
    }
    if let Some(path) = out {
        write_json_out(&path, &cells)?;
    }
    Ok(())
}

// ----------------------------------------------------------------- compare

pub fn cmd_compare(
    ctx: &Ctx,
    dataset_path: &Path,
    seeds: &[u64],
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let dataset = load_dataset(dataset_path, ctx.config.engine.seed)?;
    let embedder = ctx.config.build_embedder()?;
    let comparison = compare_policies(
        &dataset.samples,
        &ctx.config.engine,
        embedder.as_ref(),
        &MockSynthesizer,
        seeds,
    )
    .map_err(CliError::from)?;

    ctx.say("seed  prio_success  unif_success  prio_hardq  unif_hardq");
    for row in &comparison.per_seed {
        ctx.say(format!(
            "{:<5} {:>12.4} {:>13.4} {:>11.4} {:>11.4}",
            row.seed,
            row.prioritized.final_success_rate,
            row.uniform.final_success_rate,
            row.prioritized.hardest_quartile_mean_proficiency,
            row.uniform.hardest_quartile_mean_proficiency
        ));
    }
    ctx.say(format!(
        "means: success {:.4} vs {:.4}; hardest-quartile proficiency {:.4} vs {:.4}",
        comparison.mean_prioritized_success,
        comparison.mean_uniform_success,
        comparison.mean_prioritized_hard_proficiency,
        comparison.mean_uniform_hard_proficiency
    ));
    ctx.say(format!(
        "prioritized wins hardest quartile in {}/{} seeds; sign test p (success) = {:.4}",
        comparison.prioritized_hard_wins,
        comparison.per_seed.len(),
        comparison.sign_test_p_success
    ));
    if let Some(path) = out {
        write_json_out(&path, &comparison)?;
    }
    Ok(())
}

/// Shared helper for tests and the acceptance suite: run a full training
/// against a fresh in-memory bank with mock providers.
pub fn train_in_memory(
    config: &EvolutionConfig,
    dataset: &LoadedDataset,
    embedder: &dyn EmbeddingProvider,
) -> Result<(RunReport, TrainingState), CliError> {
    let fit = fit_dataset_centroids(&dataset.samples, config, embedder).map_err(CliError::from)?;
    let bank = KnowledgeBank::new(fit.centroids, &config.knowledge);
    let rollout = evoke_core::engine::SimulatedRollout {
        world: config.world,
    };
    let mut engine = EvolutionEngine::new(
        config.clone(),
        &dataset.samples,
        bank,
        embedder,
        &MockSynthesizer,
        &rollout,
    )
    .map_err(CliError::from)?;
    let report = engine
        .run_training(&mut evoke_core::engine::NoopObserver)
        .map_err(CliError::from)?;
    Ok((report, engine.into_state()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{family_of, synthetic_samples};
    use evoke_core::config::SamplingPolicy;
    use evoke_core::embedding::HashEmbedder;
    use std::path::PathBuf;

    #[test]
    fn report_paths_derive_from_bank_name() {
        assert_eq!(
            default_report_path(Path::new("/x/bank")),
            PathBuf::from("/x/bank.report.jsonl")
        );
        assert_eq!(
            summary_path_for(Path::new("/x/bank.report.jsonl")),
            PathBuf::from("/x/bank.report.summary.json")
        );
    }

    #[test]
    fn two_textual_groups_land_in_their_own_clusters() {
        // grid vs web families from the shared generator
        let samples: Vec<_> = synthetic_samples(40)
            .into_iter()
            .enumerate()
            .filter(|(i, _)| matches!(family_of(*i).hint, "grid" | "web"))
            .map(|(_, s)| s)
            .collect();
        let mut config = EvolutionConfig::default();
        config.clustering.k = 2;
        let embedder = HashEmbedder::default();
        let fit = fit_dataset_centroids(&samples, &config, &embedder).unwrap();
        // every sample routes with the rest of its family
        let grid_cluster = fit.assignments[0];
        for (sample, assigned) in samples.iter().zip(&fit.assignments) {
            let is_grid = sample.description.contains("maze");
            assert_eq!(
                *assigned == grid_cluster,
                is_grid,
                "sample {} crossed families",
                sample.id
            );
        }
    }

    #[test]
    fn uniform_visit_histogram_matches_binomial_oracle() {
        // uniform policy at 4 epochs: per-sample visits ~ Binomial(T·B, 1/n)
        let samples = synthetic_samples(100);
        let dataset = LoadedDataset {
            samples,
            hints: Default::default(),
            content_hash: String::new(),
        };
        let mut config = EvolutionConfig::default();
        config.total_steps = 50; // 50 * 8 = 4 * 100
        config.policy = SamplingPolicy::Uniform;
        let embedder = HashEmbedder::default();
        let (report, _) = train_in_memory(&config, &dataset, &embedder).unwrap();

        // binomial oracle for the central mass P(3 <= X <= 5), X ~ B(400, 0.01)
        let n = 400u64;
        let p = 0.01f64;
        let mut oracle = 0.0;
        for k in 3..=5u64 {
            let mut coeff = 1.0f64;
            for i in 0..k {
                coeff = coeff * (n - i) as f64 / (i + 1) as f64;
            }
            oracle += coeff * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32);
        }
        let central = dataset
            .samples
            .iter()
            .map(|s| *report.visit_counts.get(&s.id).unwrap_or(&0))
            .filter(|&v| (3..=5).contains(&v))
            .count() as f64
            / 100.0;
        // one seeded run of 100 samples: allow a generous sampling margin
        assert!(
            (central - oracle).abs() < 0.2,
            "central mass {central:.2} vs binomial oracle {oracle:.2}"
        );
    }

    #[test]
    fn stats_handles_empty_reports() {
        let dir = tempfile::tempdir().unwrap();
        let report_path = dir.path().join("report.jsonl");
        let record = crate::report::ConfigRecord {
            config_hash: "h".into(),
            policy: SamplingPolicy::Prioritized,
            seed: 0,
            dataset_hash: "d".into(),
            dataset_size: 3,
            provider_fingerprint: "p".into(),
            effective_config: serde_json::json!({}),
        };
        drop(crate::report::ReportWriter::create(&report_path, &record).unwrap());
        let ctx = Ctx {
            config: crate::settings::RunConfig::default(),
            quiet: true,
        };
        let out = dir.path().join("stats.json");
        cmd_stats(&ctx, &report_path, None, Some(out.clone())).unwrap();
        let value: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
        assert_eq!(value["histogram"], serde_json::json!([]));
    }
}
