//! Scratch experiment probe (not part of the test suite).

use evoke::commands::train_in_memory;
use evoke::dataset::load_dataset;
use evoke_core::config::EvolutionConfig;
use evoke_core::embedding::HashEmbedder;
use evoke_core::engine::{compare_policies, fit_dataset_centroids, run_sweep};
use evoke_core::knowledge::MockSynthesizer;
use evoke_core::stats::spearman;
use std::path::Path;

fn main() {
    let dataset = load_dataset(Path::new("data/synthetic_200.jsonl"), 0).unwrap();
    let embedder = HashEmbedder::default();

    // cluster-hint alignment at K=4
    let config = EvolutionConfig::default();
    let fit = fit_dataset_centroids(&dataset.samples, &config, &embedder).unwrap();
    let mut table = std::collections::BTreeMap::new();
    for (s, a) in dataset.samples.iter().zip(&fit.assignments) {
        *table
            .entry((dataset.hints[&s.id].clone(), a.get()))
            .or_insert(0usize) += 1;
    }
    println!("hint x cluster: {table:?}");

    // criterion 7 probe
    for (t, b) in [(100u64, 8usize), (25, 32), (50, 16)] {
    println!("--- frequency skew (T={t}, B={b}) ---");
    let mut pass7 = 0;
    for seed in 0..10u64 {
        let mut c = EvolutionConfig::default();
        c.total_steps = t;
        c.sampler.batch_size = b;
        c.seed = seed;
        c.world.seed = seed;
        let (report, _) = train_in_memory(&c, &dataset, &embedder).unwrap();
        let visits: Vec<f64> = dataset
            .samples
            .iter()
            .map(|s| *report.visit_counts.get(&s.id).unwrap_or(&0) as f64)
            .collect();
        let d: Vec<f64> = dataset.samples.iter().map(|s| s.sim_difficulty).collect();
        let rho = spearman(&d, &visits);
        let over = visits.iter().filter(|&&v| v > 4.0).count() as f64 / 200.0;
        let under = visits.iter().filter(|&&v| v < 4.0).count() as f64 / 200.0;
        let ok = rho >= 0.3 && over > 0.15 && under > 0.15;
        if ok {
            pass7 += 1;
        }
        println!("seed {seed}: spearman={rho:.3} over4={over:.2} under4={under:.2} ok={ok}");
    }
    println!("criterion7 pass in {pass7}/10");
    }

    // criterion 8 probe
    for (t, b) in [(100u64, 32usize), (150, 32), (100, 16), (200, 16)] {
    println!("--- compare (default world) T={t} B={b} ---");
    let mut base = EvolutionConfig::default();
    base.total_steps = t;
    base.sampler.batch_size = b;
    for seeds in [(0u64..10).collect::<Vec<_>>(), (100..110).collect()] {
        let cmp =
            compare_policies(&dataset.samples, &base, &embedder, &MockSynthesizer, &seeds).unwrap();
        println!(
            "seeds {}..: hard wins {}/10, sign p = {:.4}, mean prio hardq {:.4} vs {:.4}",
            seeds[0],
            cmp.prioritized_hard_wins,
            cmp.sign_test_p_success,
            cmp.mean_prioritized_hard_proficiency,
            cmp.mean_uniform_hard_proficiency
        );
    }
    let seeds: Vec<u64> = (0..10).collect();
    let mut flat = base.clone();
    flat.world.transfer_gain = 0.0;
    let cmp0 = compare_policies(&dataset.samples, &flat, &embedder, &MockSynthesizer, &seeds).unwrap();
    println!("lambda=0 sign p = {:.4}", cmp0.sign_test_p_success);
    }
    let base = EvolutionConfig::default();
    let seeds: Vec<u64> = (0..10).collect();

    // criterion 9 probe
    println!("--- sweep ---");
    let gammas = run_sweep(
        &dataset.samples,
        &base,
        &embedder,
        &MockSynthesizer,
        &[0.95],
        &[0.0, 0.4, 5.0],
        &seeds,
    )
    .unwrap();
    for cell in &gammas {
        println!("gamma {}: mean {:.5}", cell.gamma, cell.mean_success);
    }
    let rhos = run_sweep(
        &dataset.samples,
        &base,
        &embedder,
        &MockSynthesizer,
        &[0.5, 0.95, 1.0],
        &[0.4],
        &seeds,
    )
    .unwrap();
    for cell in &rhos {
        println!("rho {}: mean {:.5}", cell.rho, cell.mean_success);
    }
    let interior = &rhos[1];
    let low = &rhos[0];
    let high = &rhos[2];
    let mut not_worse = 0;
    for i in 0..seeds.len() {
        if interior.per_seed[i].1 >= low.per_seed[i].1 && interior.per_seed[i].1 >= high.per_seed[i].1 {
            not_worse += 1;
        }
    }
    println!("rho interior not worse in {not_worse}/10");
}
