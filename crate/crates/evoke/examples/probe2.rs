//! Scratch probe: equilibrium weight/visit profile by difficulty decile.

use evoke::dataset::load_dataset;
use evoke_core::config::EvolutionConfig;
use evoke_core::embedding::HashEmbedder;
use evoke_core::engine::{
    fit_dataset_centroids, success_probability, EvolutionEngine, NoopObserver, SimulatedRollout,
};
use evoke_core::knowledge::{KnowledgeBank, MockSynthesizer};
use evoke_core::sampler::sampling_weight;
use std::path::Path;

fn main() {
    let dataset = load_dataset(Path::new("data/synthetic_200.jsonl"), 0).unwrap();
    let embedder = HashEmbedder::default();
    // seed-averaged visit counts across shapes
    for (t, b) in [(100u64, 8usize), (50, 16), (25, 32)] {
        let mut avg_visits = vec![0.0f64; dataset.samples.len()];
        let mut per_seed = Vec::new();
        for seed in 0..10u64 {
            let mut config = EvolutionConfig::default();
            config.total_steps = t;
            config.sampler.batch_size = b;
            config.seed = seed;
            config.world.seed = seed;
            let fit = fit_dataset_centroids(&dataset.samples, &config, &embedder).unwrap();
            let bank = KnowledgeBank::new(fit.centroids, &config.knowledge);
            let rollout = SimulatedRollout { world: config.world };
            let mut engine = EvolutionEngine::new(
                config.clone(), &dataset.samples, bank, &embedder, &MockSynthesizer, &rollout,
            ).unwrap();
            let report = engine.run_training(&mut NoopObserver).unwrap();
            let visits: Vec<f64> = dataset.samples.iter()
                .map(|s| *report.visit_counts.get(&s.id).unwrap_or(&0) as f64).collect();
            for (acc, v) in avg_visits.iter_mut().zip(&visits) { *acc += v / 10.0; }
            let d: Vec<f64> = dataset.samples.iter().map(|s| s.sim_difficulty).collect();
            per_seed.push(evoke_core::stats::spearman(&d, &visits));
        }
        let d: Vec<f64> = dataset.samples.iter().map(|s| s.sim_difficulty).collect();
        let rho_avg = evoke_core::stats::spearman(&d, &avg_visits);
        let per: Vec<f64> = per_seed.iter().map(|r| (r * 1000.0f64).round() / 1000.0).collect();
        println!("T={t} B={b}: seed-averaged spearman {rho_avg:.3}; per-seed {per:?}");
    }
    // Spearman ceiling vs saturation horizon
    for eta in [20u64, 60, 200, 100000] {
        let mut spearmans = Vec::new();
        for seed in 0..10u64 {
            let mut config = EvolutionConfig::default();
            config.total_steps = 100;
            config.seed = seed;
            config.world.seed = seed;
            config.world.saturation = eta;
            let fit = fit_dataset_centroids(&dataset.samples, &config, &embedder).unwrap();
            let bank = KnowledgeBank::new(fit.centroids, &config.knowledge);
            let rollout = SimulatedRollout { world: config.world };
            let mut engine = EvolutionEngine::new(
                config.clone(), &dataset.samples, bank, &embedder, &MockSynthesizer, &rollout,
            ).unwrap();
            let report = engine.run_training(&mut NoopObserver).unwrap();
            let visits: Vec<f64> = dataset.samples.iter()
                .map(|s| *report.visit_counts.get(&s.id).unwrap_or(&0) as f64).collect();
            let d: Vec<f64> = dataset.samples.iter().map(|s| s.sim_difficulty).collect();
            spearmans.push(evoke_core::stats::spearman(&d, &visits));
        }
        let pass = spearmans.iter().filter(|&&r| r >= 0.3).count();
        println!("eta={eta}: spearman per seed {:?} pass {pass}/10",
            spearmans.iter().map(|r| (r * 1000.0).round() / 1000.0).collect::<Vec<_>>());
    }
    for (t, b) in [(100u64, 8usize), (25, 32)] {
        let mut config = EvolutionConfig::default();
        config.total_steps = t;
        config.sampler.batch_size = b;
        config.seed = 3;
        config.world.seed = 3;
        let fit = fit_dataset_centroids(&dataset.samples, &config, &embedder).unwrap();
        let bank = KnowledgeBank::new(fit.centroids, &config.knowledge);
        let rollout = SimulatedRollout {
            world: config.world,
        };
        let mut engine = EvolutionEngine::new(
            config.clone(),
            &dataset.samples,
            bank,
            &embedder,
            &MockSynthesizer,
            &rollout,
        )
        .unwrap();
        let report = engine.run_training(&mut NoopObserver).unwrap();
        let state = engine.state();

        // per-difficulty-decile: mean final v, mean final weight, mean visits, mean p
        let mut rows = vec![(0.0f64, 0.0f64, 0.0f64, 0.0f64, 0usize); 10];
        for (i, sample) in dataset.samples.iter().enumerate() {
            let decile = ((sample.sim_difficulty * 10.0) as usize).min(9);
            let est = state.records[i].estimate(state.step, config.sampler.rho).unwrap();
            let weight = sampling_weight(est.proficiency, &config.sampler);
            let visits = *report.visit_counts.get(&sample.id).unwrap_or(&0) as f64;
            let cluster = state.bank.cluster(engine.routes()[i]).unwrap();
            let p = success_probability(sample, cluster, &config.world);
            let row = &mut rows[decile];
            row.0 += est.proficiency;
            row.1 += weight;
            row.2 += visits;
            row.3 += p;
            row.4 += 1;
        }
        println!("--- T={t} B={b}: decile  n  mean_v  mean_w  mean_visits  mean_p ---");
        for (decile, row) in rows.iter().enumerate() {
            if row.4 == 0 {
                continue;
            }
            let n = row.4 as f64;
            println!(
                "d{decile}  {:>3}  {:.3}  {:.3}  {:.2}  {:.3}",
                row.4,
                row.0 / n,
                row.1 / n,
                row.2 / n,
                row.3 / n
            );
        }
        let events: Vec<u64> = state.bank.clusters().map(|c| c.integration_events()).collect();
        println!("cluster events at end: {events:?}");
    }
}
