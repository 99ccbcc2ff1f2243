//! Regenerates the bundled synthetic dataset (`data/synthetic_200.jsonl`).
//!
//! Usage: `cargo run -p evoke --example gen_dataset [-- <out-path>]`

use evoke::synth::{family_of, synthetic_samples};
use std::fmt::Write as _;

fn main() {
    let out_path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "data/synthetic_200.jsonl".to_string());
    let mut out = String::new();
    for (i, sample) in synthetic_samples(200).into_iter().enumerate() {
        let record = serde_json::json!({
            "id": sample.id,
            "description": sample.description,
            "answer": sample.answer,
            "sim_difficulty": sample.sim_difficulty,
            "cluster_hint": family_of(i).hint,
        });
        let _ = writeln!(out, "{record}");
    }
    std::fs::write(&out_path, out).expect("write dataset");
    println!("wrote 200 samples to {out_path}");
}
