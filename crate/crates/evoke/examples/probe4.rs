//! Scratch probe: timing of one training run at the compare shape.

use evoke::commands::train_in_memory;
use evoke::synth::synthetic_samples;
use evoke_core::config::EvolutionConfig;
use evoke_core::embedding::HashEmbedder;
use std::time::Instant;

fn main() {
    let samples = synthetic_samples(600);
    let embedder = HashEmbedder::default();
    let mut config = EvolutionConfig::default();
    config.total_steps = 100;
    config.sampler.batch_size = 96;
    config.seed = 0;
    config.world.seed = 0;
    let dataset = evoke::dataset::LoadedDataset {
        samples,
        hints: Default::default(),
        content_hash: String::new(),
    };
    let t0 = Instant::now();
    let (report, state) = train_in_memory(&config, &dataset, &embedder).unwrap();
    println!("one run: {:?}", t0.elapsed());
    for c in state.bank.clusters() {
        let max_len = c.pool().entries().iter().map(|e| e.text.len()).max().unwrap_or(0);
        println!(
            "cluster {}: {} entries, max text {} bytes, skill words {}, events {}",
            c.id(),
            c.pool().len(),
            max_len,
            evoke_core::knowledge::word_count(c.skill().text()),
            c.integration_events()
        );
    }
    println!(
        "mean final reward {:.3}",
        report.steps.last().unwrap().mean_reward
    );
}
