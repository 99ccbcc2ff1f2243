//! Dataset file loading: JSON Lines, one record per sample, validated with
//! line-precise errors.
//!
//! Record schema:
//!
//! ```json
//! {"id": "s001", "description": "...", "answer": "...",
//!  "sim_difficulty": 0.42, "cluster_hint": "grid"}
//! ```
//!
//! `sim_difficulty` is optional; absent values are drawn from a stream
//! seeded by `(run seed, sample id)` so a given run sees stable
//! difficulties. `cluster_hint` is never used for routing; it only feeds
//! evaluation breakdowns.

use evoke_core::engine::Sample;
use evoke_core::rng::{fnv1a64, stream, StreamDomain};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::hashes::sha256_json;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read dataset {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {detail}")]
    Line {
        path: PathBuf,
        line: usize,
        detail: String,
    },
    #[error("dataset {0} contains no samples")]
    Empty(PathBuf),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetRecord {
    id: String,
    description: String,
    answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sim_difficulty: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cluster_hint: Option<String>,
}

/// Parsed dataset plus side information.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub samples: Vec<Sample>,
    /// sample id → cluster hint, for evaluation breakdowns only.
    pub hints: BTreeMap<String, String>,
    /// Hash over the resolved samples (ids, texts, difficulties); feeds the
    /// replay config hash so a resumed run must see the same data.
    pub content_hash: String,
}

pub fn load_dataset(path: &Path, seed: u64) -> Result<LoadedDataset, DatasetError> {
    let raw = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut samples = Vec::new();
    let mut hints = BTreeMap::new();
    let mut seen = BTreeMap::new();
    for (index, line) in raw.lines().enumerate() {
        let line_no = index + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: DatasetRecord =
            serde_json::from_str(line).map_err(|e| DatasetError::Line {
                path: path.to_path_buf(),
                line: line_no,
                detail: e.to_string(),
            })?;
        let fail = |detail: String| DatasetError::Line {
            path: path.to_path_buf(),
            line: line_no,
            detail,
        };
        if record.id.trim().is_empty() {
            return Err(fail("empty sample id".into()));
        }
        if let Some(first) = seen.insert(record.id.clone(), line_no) {
            return Err(fail(format!(
                "duplicate sample id `{}` (first seen on line {first})",
                record.id
            )));
        }
        if record.description.trim().is_empty() {
            return Err(fail(format!("sample `{}` has an empty description", record.id)));
        }
        if let Some(d) = record.sim_difficulty {
            if !(0.0..=1.0).contains(&d) {
                return Err(fail(format!(
                    "sample `{}` sim_difficulty {d} outside [0, 1]",
                    record.id
                )));
            }
        }
        let sim_difficulty = record.sim_difficulty.unwrap_or_else(|| {
            stream(seed, StreamDomain::Difficulty, fnv1a64(record.id.as_bytes()), 0)
                .random::<f64>()
        });
        if let Some(hint) = record.cluster_hint {
            hints.insert(record.id.clone(), hint);
        }
        samples.push(Sample {
            id: record.id,
            description: record.description,
            answer: record.answer,
            sim_difficulty,
        });
    }
    if samples.is_empty() {
        return Err(DatasetError::Empty(path.to_path_buf()));
    }
    let content_hash = sha256_json(&samples);
    Ok(LoadedDataset {
        samples,
        hints,
        content_hash,
    })
}
