//! Scratch probe: criterion-8 shape at a 1000-sample pool.

use evoke::synth::synthetic_samples_scaled;
use evoke_core::config::EvolutionConfig;
use evoke_core::embedding::HashEmbedder;
use evoke_core::engine::compare_policies;
use evoke_core::knowledge::MockSynthesizer;
use std::time::Instant;

fn main() {
    let samples = synthetic_samples(1000);
    let embedder = HashEmbedder::default();
    let mut base = EvolutionConfig::default();
    base.total_steps = 100;
    base.sampler.batch_size = 160;

    for start in [0u64, 100, 200] {
        let seeds: Vec<u64> = (start..start + 10).collect();
        let t0 = Instant::now();
        let cmp = compare_policies(&samples, &base, &embedder, &MockSynthesizer, &seeds).unwrap();
        println!(
            "seeds {start}..+10: hard wins {}/10, sign p {:.4}, prio hardq {:.4} vs {:.4} ({:?})",
            cmp.prioritized_hard_wins,
            cmp.sign_test_p_success,
            cmp.mean_prioritized_hard_proficiency,
            cmp.mean_uniform_hard_proficiency,
            t0.elapsed()
        );
        for row in &cmp.per_seed {
            print!(
                "  {}:{:+.4}",
                row.seed,
                row.prioritized.hardest_quartile_mean_proficiency
                    - row.uniform.hardest_quartile_mean_proficiency
            );
        }
        println!();
    }

    let mut flat = base.clone();
    flat.world.transfer_gain = 0.0;
    let seeds: Vec<u64> = (0..10).collect();
    let cmp0 = compare_policies(&samples, &flat, &embedder, &MockSynthesizer, &seeds).unwrap();
    println!("lambda=0: sign p {:.4}", cmp0.sign_test_p_success);
}
