//! On-disk knowledge-bank and checkpoint formats.
//!
//! Bank directory layout (all files JSON, text-inspectable):
//!
//! ```text
//! <bank>/
//!   manifest                    format, provider binding, limits, file hashes
//!   centroids                   fitted centroid vectors
//!   clusters/<index>/experiences
//!   clusters/<index>/skill
//!   checkpoints/<step>          sampler records + config/bank binding
//! ```
//!
//! Floats round-trip exactly (shortest-representation JSON encoding), so a
//! loaded bank is bit-identical to the saved one. Saves stage the complete
//! new tree in a sibling `<bank>.tmp` directory and swap it in; a crash
//! mid-save never yields a loadable-but-wrong bank because the manifest
//! hashes every data file. Checkpoints are written in the same swap as the
//! bank they describe, which keeps the pair mutually consistent.

use evoke_core::config::EvolutionConfig;
use evoke_core::embedding::EmbeddingVector;
use evoke_core::engine::{Sample, TrainingState};
use evoke_core::kmeans::{CentroidSet, ClusterId};
use evoke_core::knowledge::{Cluster, ExperienceEntry, ExperiencePool, KnowledgeBank, SkillDocument};
use evoke_core::sampler::ProficiencyRecord;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};
use thiserror::Error;

use crate::hashes::{sha256_file, sha256_hex, sha256_json};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path} is corrupt: {detail}")]
    Corrupt { path: PathBuf, detail: String },
    #[error("{path}: format version {found} is not supported (this build reads {supported})")]
    VersionMismatch {
        path: PathBuf,
        found: u32,
        supported: u32,
    },
    #[error("bank was built with embedding provider `{bank}` but the active provider is `{active}`")]
    FingerprintMismatch { bank: String, active: String },
    #[error("bank embedding dimension {bank} does not match the active provider's {active}")]
    DimensionMismatch { bank: usize, active: usize },
    #[error("checkpoint config hash {checkpoint} does not match the current run config {current}")]
    ConfigHashMismatch { checkpoint: String, current: String },
    #[error("bank {0} is locked by another writer (remove the stale lock file if no run is active)")]
    Locked(PathBuf),
    #[error("{0} is not a bank directory (no manifest)")]
    NotABank(PathBuf),
    #[error("bank {0} already exists")]
    AlreadyExists(PathBuf),
    #[error("no checkpoint found under {0}")]
    NoCheckpoint(PathBuf),
    #[error("checkpoint holds {checkpoint} records but the dataset has {dataset} samples ({detail})")]
    RecordMismatch {
        checkpoint: usize,
        dataset: usize,
        detail: String,
    },
    #[error("invalid bank state: {0}")]
    Invalid(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PersistError + '_ {
    move |source| PersistError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn corrupt(path: &Path, detail: impl Into<String>) -> PersistError {
    PersistError::Corrupt {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

/// Identity of the active embedding provider; banks refuse to load under a
/// different one because every stored embedding depends on it. The agent
/// provider is deliberately unbound, which is what makes a bank portable
/// across agents.
#[derive(Debug, Clone, PartialEq)]
pub struct ProviderBinding {
    pub fingerprint: String,
    pub dimension: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BankManifest {
    pub format_version: u32,
    pub k: usize,
    pub embedding_dimension: usize,
    pub provider_fingerprint: String,
    pub similarity_threshold: f64,
    pub experience_capacity: usize,
    pub skill_word_budget: usize,
    pub created_unix: u64,
    pub updated_unix: u64,
    /// sha256 of every data file, keyed by bank-relative path.
    pub file_hashes: BTreeMap<String, String>,
}

impl BankManifest {
    /// Content hash of the bank: a digest over the per-file hashes. Stable
    /// across wall-clock metadata, which is what replay-equality checks
    /// need.
    pub fn bank_hash(&self) -> String {
        let mut lines = String::new();
        for (path, hash) in &self.file_hashes {
            lines.push_str(path);
            lines.push('=');
            lines.push_str(hash);
            lines.push('\n');
        }
        sha256_hex(lines.as_bytes())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CentroidsFile {
    k: usize,
    dimension: usize,
    centroids: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ExperiencesFile {
    next_id: u64,
    entries: Vec<ExperienceEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SkillFile {
    text: String,
    revision: u64,
}

/// Flat sampler record inside a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRecord {
    pub sample_id: String,
    pub alpha: f64,
    pub beta: f64,
    pub last_step: u64,
}

/// Checkpoint payload: sampler state plus the bindings that make resuming
/// safe (config hash, bank content hash, root RNG seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointPayload {
    pub step: u64,
    pub config_hash: String,
    pub rng_seed: u64,
    pub bank_hash: String,
    pub records: Vec<CheckpointRecord>,
}

impl CheckpointPayload {
    /// Build a payload from live state; `bank_hash` is filled in by
    /// [`BankStore::save_snapshot`] when the paired bank is written.
    pub fn from_state(
        state: &TrainingState,
        dataset: &[Sample],
        config_hash: &str,
        rng_seed: u64,
    ) -> Self {
        let records = dataset
            .iter()
            .zip(&state.records)
            .map(|(sample, record)| CheckpointRecord {
                sample_id: sample.id.clone(),
                alpha: record.alpha,
                beta: record.beta,
                last_step: record.last_step,
            })
            .collect();
        Self {
            step: state.step,
            config_hash: config_hash.to_string(),
            rng_seed,
            bank_hash: String::new(),
            records,
        }
    }

    /// Map records back onto dataset order, refusing id-set drift.
    pub fn records_for(&self, dataset: &[Sample]) -> Result<Vec<ProficiencyRecord>, PersistError> {
        if self.records.len() != dataset.len() {
            return Err(PersistError::RecordMismatch {
                checkpoint: self.records.len(),
                dataset: dataset.len(),
                detail: "count differs".into(),
            });
        }
        let by_id: BTreeMap<&str, &CheckpointRecord> = self
            .records
            .iter()
            .map(|r| (r.sample_id.as_str(), r))
            .collect();
        let mut records = Vec::with_capacity(dataset.len());
        for sample in dataset {
            let found = by_id.get(sample.id.as_str()).ok_or_else(|| {
                PersistError::RecordMismatch {
                    checkpoint: self.records.len(),
                    dataset: dataset.len(),
                    detail: format!("sample `{}` missing from checkpoint", sample.id),
                }
            })?;
            if found.last_step > self.step {
                return Err(PersistError::Invalid(format!(
                    "record `{}` updated at step {} after checkpoint step {}",
                    found.sample_id, found.last_step, self.step
                )));
            }
            records.push(ProficiencyRecord {
                alpha: found.alpha,
                beta: found.beta,
                last_step: found.last_step,
            });
        }
        Ok(records)
    }

    pub fn payload_hash(&self) -> String {
        sha256_json(self)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    sha256: String,
    payload: CheckpointPayload,
}

/// Replay-relevant parameters, hashed into checkpoints. `total_steps` and
/// the checkpoint cadence are deliberately excluded: per-step randomness
/// never depends on them, so a run stopped early can be resumed to a longer
/// horizon. `rollout_workers` is excluded because results never depend on
/// it.
#[derive(Serialize)]
struct ReplayBinding<'a> {
    seed: u64,
    sampler: &'a evoke_core::sampler::SamplerConfig,
    knowledge: &'a evoke_core::config::KnowledgeConfig,
    clustering: &'a evoke_core::config::ClusteringConfig,
    world: &'a evoke_core::config::SimulatedWorldConfig,
    policy: evoke_core::config::SamplingPolicy,
    max_turns: u32,
    provider_fingerprint: &'a str,
    embedding_dimension: usize,
    dataset_hash: &'a str,
}

pub fn replay_config_hash(
    config: &EvolutionConfig,
    binding: &ProviderBinding,
    dataset_hash: &str,
) -> String {
    sha256_json(&ReplayBinding {
        seed: config.seed,
        sampler: &config.sampler,
        knowledge: &config.knowledge,
        clustering: &config.clustering,
        world: &config.world,
        policy: config.policy,
        max_turns: config.max_turns,
        provider_fingerprint: &binding.fingerprint,
        embedding_dimension: binding.dimension,
        dataset_hash,
    })
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn sibling(root: &Path, suffix: &str) -> PathBuf {
    let name = root
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "bank".to_string());
    root.with_file_name(format!("{name}{suffix}"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PersistError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable value");
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(io_err(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, PersistError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|e| corrupt(path, e.to_string()))
}

/// Advisory writer lock: a sibling `<bank>.lock` file created exclusively
/// and removed on drop. Readers do not take it.
pub struct BankLock {
    path: PathBuf,
}

impl BankLock {
    pub fn acquire(root: &Path) -> Result<Self, PersistError> {
        let path = sibling(root, ".lock");
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut file) => {
                use std::io::Write as _;
                let _ = writeln!(file, "pid={} unix={}", std::process::id(), now_unix());
                Ok(Self { path })
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                Err(PersistError::Locked(path))
            }
            Err(e) => Err(io_err(&path)(e)),
        }
    }
}

impl Drop for BankLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Handle on a bank directory.
#[derive(Debug, Clone)]
pub struct BankStore {
    root: PathBuf,
}

impl BankStore {
    /// Create a fresh bank directory (fails if one already exists there).
    pub fn init(
        root: &Path,
        bank: &KnowledgeBank,
        binding: &ProviderBinding,
        config: &EvolutionConfig,
    ) -> Result<Self, PersistError> {
        if root.join("manifest").exists() {
            return Err(PersistError::AlreadyExists(root.to_path_buf()));
        }
        let store = Self {
            root: root.to_path_buf(),
        };
        store.save_snapshot(bank, binding, config, None)?;
        Ok(store)
    }

    /// Open an existing bank directory.
    pub fn open(root: &Path) -> Result<Self, PersistError> {
        if !root.join("manifest").exists() {
            return Err(PersistError::NotABank(root.to_path_buf()));
        }
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> Result<BankManifest, PersistError> {
        let path = self.root.join("manifest");
        if !path.exists() {
            return Err(PersistError::NotABank(self.root.clone()));
        }
        let manifest: BankManifest = read_json(&path)?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(PersistError::VersionMismatch {
                path,
                found: manifest.format_version,
                supported: FORMAT_VERSION,
            });
        }
        Ok(manifest)
    }

    /// Write the complete bank state (and optionally a new checkpoint) as
    /// one staged-and-swapped snapshot. Existing checkpoints are carried
    /// over, the new checkpoint's `bank_hash` is bound to the data files
    /// written in this snapshot, and the manifest is written last inside
    /// the staging tree.
    pub fn save_snapshot(
        &self,
        bank: &KnowledgeBank,
        binding: &ProviderBinding,
        config: &EvolutionConfig,
        checkpoint: Option<CheckpointPayload>,
    ) -> Result<(), PersistError> {
        let staging = sibling(&self.root, ".tmp");
        let old = sibling(&self.root, ".old");
        for leftover in [&staging, &old] {
            if leftover.exists() {
                fs::remove_dir_all(leftover).map_err(io_err(leftover))?;
            }
        }
        fs::create_dir_all(staging.join("checkpoints")).map_err(io_err(&staging))?;

        let created = match self.manifest() {
            Ok(existing) => existing.created_unix,
            Err(_) => now_unix(),
        };

        let mut file_hashes = BTreeMap::new();
        let centroids_path = staging.join("centroids");
        write_json(
            &centroids_path,
            &CentroidsFile {
                k: bank.centroids().k(),
                dimension: bank.centroids().dimension(),
                centroids: bank
                    .centroids()
                    .iter()
                    .map(|(_, c)| c.as_slice().to_vec())
                    .collect(),
            },
        )?;
        file_hashes.insert(
            "centroids".to_string(),
            sha256_file(&centroids_path).map_err(io_err(&centroids_path))?,
        );

        for cluster in bank.clusters() {
            let dir = staging.join("clusters").join(cluster.id().to_string());
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            let experiences = dir.join("experiences");
            write_json(
                &experiences,
                &ExperiencesFile {
                    next_id: cluster.pool().next_id(),
                    entries: cluster.pool().entries().to_vec(),
                },
            )?;
            let skill = dir.join("skill");
            write_json(
                &skill,
                &SkillFile {
                    text: cluster.skill().text().to_string(),
                    revision: cluster.skill().revision(),
                },
            )?;
            file_hashes.insert(
                format!("clusters/{}/experiences", cluster.id()),
                sha256_file(&experiences).map_err(io_err(&experiences))?,
            );
            file_hashes.insert(
                format!("clusters/{}/skill", cluster.id()),
                sha256_file(&skill).map_err(io_err(&skill))?,
            );
        }

        // carry existing checkpoints forward, then add the new one
        let existing = self.root.join("checkpoints");
        if existing.is_dir() {
            for entry in fs::read_dir(&existing).map_err(io_err(&existing))? {
                let entry = entry.map_err(io_err(&existing))?;
                let target = staging.join("checkpoints").join(entry.file_name());
                fs::copy(entry.path(), &target).map_err(io_err(&target))?;
            }
        }
        let manifest = BankManifest {
            format_version: FORMAT_VERSION,
            k: bank.k(),
            embedding_dimension: bank.centroids().dimension(),
            provider_fingerprint: binding.fingerprint.clone(),
            similarity_threshold: config.knowledge.similarity_threshold,
            experience_capacity: config.knowledge.experience_capacity,
            skill_word_budget: config.knowledge.skill_word_budget,
            created_unix: created,
            updated_unix: now_unix(),
            file_hashes,
        };
        if let Some(mut payload) = checkpoint {
            payload.bank_hash = manifest.bank_hash();
            let path = staging.join("checkpoints").join(payload.step.to_string());
            write_json(
                &path,
                &CheckpointFile {
                    format_version: FORMAT_VERSION,
                    sha256: payload.payload_hash(),
                    payload,
                },
            )?;
        }
        write_json(&staging.join("manifest"), &manifest)?;

        // swap: the old tree is either fully in place or fully replaced
        if self.root.exists() {
            fs::rename(&self.root, &old).map_err(io_err(&self.root))?;
        }
        fs::rename(&staging, &self.root).map_err(io_err(&staging))?;
        if old.exists() {
            fs::remove_dir_all(&old).map_err(io_err(&old))?;
        }
        Ok(())
    }

    /// Load and revalidate the bank, checking every file hash and the
    /// provider binding.
    pub fn load_bank(
        &self,
        binding: &ProviderBinding,
    ) -> Result<(KnowledgeBank, BankManifest), PersistError> {
        let manifest = self.manifest()?;
        for (rel, expected) in &manifest.file_hashes {
            let path = self.root.join(rel);
            let actual = sha256_file(&path).map_err(io_err(&path))?;
            if &actual != expected {
                return Err(corrupt(&path, "content hash does not match the manifest"));
            }
        }
        if manifest.provider_fingerprint != binding.fingerprint {
            return Err(PersistError::FingerprintMismatch {
                bank: manifest.provider_fingerprint.clone(),
                active: binding.fingerprint.clone(),
            });
        }
        if manifest.embedding_dimension != binding.dimension {
            return Err(PersistError::DimensionMismatch {
                bank: manifest.embedding_dimension,
                active: binding.dimension,
            });
        }

        let centroids_path = self.root.join("centroids");
        let centroids_file: CentroidsFile = read_json(&centroids_path)?;
        if centroids_file.k != manifest.k || centroids_file.dimension != manifest.embedding_dimension {
            return Err(corrupt(&centroids_path, "centroid shape disagrees with manifest"));
        }
        let mut centroid_vectors = Vec::with_capacity(centroids_file.k);
        for values in centroids_file.centroids {
            centroid_vectors.push(
                EmbeddingVector::new(values)
                    .map_err(|e| corrupt(&centroids_path, e.to_string()))?,
            );
        }
        let centroids = CentroidSet::new(centroid_vectors)
            .map_err(|e| corrupt(&centroids_path, e.to_string()))?;

        let mut clusters = Vec::with_capacity(manifest.k);
        for index in 1..=manifest.k as u32 {
            let dir = self.root.join("clusters").join(index.to_string());
            let experiences_path = dir.join("experiences");
            let experiences: ExperiencesFile = read_json(&experiences_path)?;
            let pool = ExperiencePool::from_parts(
                experiences.entries,
                experiences.next_id,
                manifest.experience_capacity,
                manifest.similarity_threshold,
            )
            .map_err(|e| corrupt(&experiences_path, e.to_string()))?;
            let skill_path = dir.join("skill");
            let skill_file: SkillFile = read_json(&skill_path)?;
            let skill =
                SkillDocument::from_parts(skill_file.text, manifest.skill_word_budget, skill_file.revision)
                    .map_err(|e| corrupt(&skill_path, e.to_string()))?;
            clusters.push(Cluster::from_parts(ClusterId::new(index), pool, skill));
        }
        let bank = KnowledgeBank::from_parts(centroids, clusters)
            .map_err(|e| PersistError::Invalid(e.to_string()))?;
        Ok((bank, manifest))
    }

    pub fn checkpoint_steps(&self) -> Result<Vec<u64>, PersistError> {
        let dir = self.root.join("checkpoints");
        if !dir.is_dir() {
            return Ok(Vec::new());
        }
        let mut steps = Vec::new();
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let entry = entry.map_err(io_err(&dir))?;
            if let Ok(step) = entry.file_name().to_string_lossy().parse::<u64>() {
                steps.push(step);
            }
        }
        steps.sort_unstable();
        Ok(steps)
    }

    /// Load a checkpoint (the latest when `step` is `None`), verifying its
    /// self-hash, its config binding, and that it matches the bank on disk.
    pub fn load_checkpoint(
        &self,
        step: Option<u64>,
        expected_config_hash: &str,
    ) -> Result<CheckpointPayload, PersistError> {
        let step = match step {
            Some(s) => s,
            None => *self
                .checkpoint_steps()?
                .last()
                .ok_or_else(|| PersistError::NoCheckpoint(self.root.clone()))?,
        };
        let path = self.root.join("checkpoints").join(step.to_string());
        if !path.exists() {
            return Err(PersistError::NoCheckpoint(path));
        }
        let file: CheckpointFile = read_json(&path)?;
        if file.format_version != FORMAT_VERSION {
            return Err(PersistError::VersionMismatch {
                path,
                found: file.format_version,
                supported: FORMAT_VERSION,
            });
        }
        if file.sha256 != file.payload.payload_hash() {
            return Err(corrupt(&path, "payload hash mismatch"));
        }
        if file.payload.config_hash != expected_config_hash {
            return Err(PersistError::ConfigHashMismatch {
                checkpoint: file.payload.config_hash,
                current: expected_config_hash.to_string(),
            });
        }
        let manifest = self.manifest()?;
        if file.payload.bank_hash != manifest.bank_hash() {
            return Err(corrupt(
                &path,
                "checkpoint does not match the bank state on disk",
            ));
        }
        Ok(file.payload)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use evoke_core::embedding::{embed, HashEmbedder};
    use evoke_core::engine::fit_dataset_centroids;
    use evoke_core::knowledge::MockSynthesizer;
    use evoke_core::EmbeddingProvider as _;

    fn binding(provider: &HashEmbedder) -> ProviderBinding {
        ProviderBinding {
            fingerprint: provider.fingerprint(),
            dimension: provider.dimension(),
        }
    }

    fn dataset() -> Vec<Sample> {
        (0..8)
            .map(|i| Sample {
                id: format!("s{i}"),
                description: format!(
                    "{} number {i}",
                    ["navigate the maze grid", "search the web for facts"][i % 2]
                ),
                answer: "x".into(),
                sim_difficulty: 0.5,
            })
            .collect()
    }

    fn build_bank(provider: &HashEmbedder, config: &EvolutionConfig) -> KnowledgeBank {
        let samples = dataset();
        let fit = fit_dataset_centroids(&samples, config, provider).unwrap();
        let mut bank = KnowledgeBank::new(fit.centroids, &config.knowledge);
        for (i, sample) in samples.iter().enumerate() {
            let embedding = embed(provider, &sample.description).unwrap();
            let id = bank.route(&embedding).unwrap();
            bank.integrate_experience(
                id,
                &format!("lesson from {}: {}", sample.id, sample.description),
                provider,
                &MockSynthesizer,
                i as u64,
            )
            .unwrap();
            bank.update_skill(id, &format!("note {i} about family work."), &MockSynthesizer)
                .unwrap();
        }
        bank
    }

    fn config() -> EvolutionConfig {
        let mut c = EvolutionConfig::default();
        c.clustering.k = 2;
        c
    }

    #[test]
    fn empty_bank_roundtrips_equal() {
        let provider = HashEmbedder::default();
        let config = config();
        let samples = dataset();
        let fit = fit_dataset_centroids(&samples, &config, &provider).unwrap();
        let bank = KnowledgeBank::new(fit.centroids, &config.knowledge);
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("bank");
        let store = BankStore::init(&root, &bank, &binding(&provider), &config).unwrap();
        let (loaded, _) = store.load_bank(&binding(&provider)).unwrap();
        assert_eq!(loaded, bank);
    }

    #[test]
    fn populated_bank_roundtrips_bit_exactly() {
        let provider = HashEmbedder::default();
        let config = config();
        let bank = build_bank(&provider, &config);
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("bank");
        let store = BankStore::init(&root, &bank, &binding(&provider), &config).unwrap();
        let (loaded, manifest) = store.load_bank(&binding(&provider)).unwrap();
        assert_eq!(loaded, bank);

        // independent content-hash oracle: resaving an unchanged bank under
        // a second directory yields identical data hashes
        let root2 = dir.path().join("bank2");
        let store2 = BankStore::init(&root2, &loaded, &binding(&provider), &config).unwrap();
        let manifest2 = store2.manifest().unwrap();
        assert_eq!(manifest.file_hashes, manifest2.file_hashes);
        assert_eq!(manifest.bank_hash(), manifest2.bank_hash());

        // float bit-exactness through the JSON encoding
        for (a, b) in bank
            .clusters()
            .flat_map(|c| c.pool().entries())
            .zip(loaded.clusters().flat_map(|c| c.pool().entries()))
        {
            for (x, y) in a.embedding.as_slice().iter().zip(b.embedding.as_slice()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn fingerprint_and_dimension_mismatches_are_named() {
        let provider = HashEmbedder::default();
        let config = config();
        let bank = build_bank(&provider, &config);
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("bank");
        let store = BankStore::init(&root, &bank, &binding(&provider), &config).unwrap();

        let other = ProviderBinding {
            fingerprint: "other-provider:d=64".into(),
            dimension: 64,
        };
        let err = store.load_bank(&other).unwrap_err().to_string();
        assert!(err.contains("hash-embedder-v1:d=64") && err.contains("other-provider:d=64"));

        let narrow = ProviderBinding {
            fingerprint: provider.fingerprint(),
            dimension: 32,
        };
        assert!(matches!(
            store.load_bank(&narrow),
            Err(PersistError::DimensionMismatch { bank: 64, active: 32 })
        ));
    }

    #[test]
    fn tampered_file_is_reported_as_corrupt() {
        let provider = HashEmbedder::default();
        let config = config();
        let bank = build_bank(&provider, &config);
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("bank");
        let store = BankStore::init(&root, &bank, &binding(&provider), &config).unwrap();
        let victim = root.join("clusters/1/skill");
        fs::write(&victim, "{\"text\":\"forged\",\"revision\":1}\n").unwrap();
        let err = store.load_bank(&binding(&provider)).unwrap_err();
        match err {
            PersistError::Corrupt { path, .. } => assert!(path.ends_with("clusters/1/skill")),
            other => panic!("expected corruption, got {other}"),
        }
    }

    #[test]
    fn unknown_format_version_is_refused() {
        let provider = HashEmbedder::default();
        let config = config();
        let bank = build_bank(&provider, &config);
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("bank");
        let store = BankStore::init(&root, &bank, &binding(&provider), &config).unwrap();
        let manifest_path = root.join("manifest");
        let mut manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&manifest_path).unwrap()).unwrap();
        manifest["format_version"] = serde_json::json!(99);
        fs::write(&manifest_path, serde_json::to_string(&manifest).unwrap()).unwrap();
        assert!(matches!(
            store.manifest(),
            Err(PersistError::VersionMismatch { found: 99, .. })
        ));
    }

    #[test]
    fn checkpoint_roundtrip_and_bindings() {
        let provider = HashEmbedder::default();
        let config = config();
        let bank = build_bank(&provider, &config);
        let samples = dataset();
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("bank");
        let store = BankStore::init(&root, &bank, &binding(&provider), &config).unwrap();

        let config_hash = replay_config_hash(&config, &binding(&provider), "datasethash");
        let state = TrainingState {
            step: 10,
            records: samples
                .iter()
                .enumerate()
                .map(|(i, _)| ProficiencyRecord {
                    alpha: 0.1 * i as f64,
                    beta: 1.0 / (1.0 + i as f64),
                    last_step: (i as u64).min(10),
                })
                .collect(),
            bank: bank.clone(),
        };
        let payload = CheckpointPayload::from_state(&state, &samples, &config_hash, config.seed);
        store
            .save_snapshot(&bank, &binding(&provider), &config, Some(payload.clone()))
            .unwrap();

        assert_eq!(store.checkpoint_steps().unwrap(), vec![10]);
        let loaded = store.load_checkpoint(None, &config_hash).unwrap();
        assert_eq!(loaded.bank_hash, store.manifest().unwrap().bank_hash());
        assert_eq!(loaded.records, payload.records);
        assert_eq!(loaded.step, payload.step);
        let records = loaded.records_for(&samples).unwrap();
        for (a, b) in records.iter().zip(&state.records) {
            assert_eq!(a.alpha.to_bits(), b.alpha.to_bits());
            assert_eq!(a.beta.to_bits(), b.beta.to_bits());
            assert_eq!(a.last_step, b.last_step);
        }

        // config drift is refused
        let err = store.load_checkpoint(None, "differenthash").unwrap_err();
        assert!(matches!(err, PersistError::ConfigHashMismatch { .. }));

        // truncation is detected before any state is handed out
        let path = root.join("checkpoints/10");
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(
            store.load_checkpoint(None, &config_hash),
            Err(PersistError::Corrupt { .. })
        ));
    }

    #[test]
    fn lock_excludes_second_writer_and_clears_on_drop() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("bank");
        let lock = BankLock::acquire(&root).unwrap();
        assert!(matches!(
            BankLock::acquire(&root),
            Err(PersistError::Locked(_))
        ));
        drop(lock);
        let again = BankLock::acquire(&root).unwrap();
        drop(again);
    }

    #[test]
    fn interrupted_save_leaves_old_bank_loadable() {
        let provider = HashEmbedder::default();
        let config = config();
        let bank = build_bank(&provider, &config);
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("bank");
        let store = BankStore::init(&root, &bank, &binding(&provider), &config).unwrap();
        let before = store.load_bank(&binding(&provider)).unwrap().0;

        // simulate a crash mid-stage: a half-written staging tree next to
        // the live bank
        let staging = dir.path().join("bank.tmp");
        fs::create_dir_all(staging.join("clusters/1")).unwrap();
        fs::write(staging.join("centroids"), b"{ truncated").unwrap();

        // the live bank still loads, and the next save clears the debris
        let (loaded, _) = store.load_bank(&binding(&provider)).unwrap();
        assert_eq!(loaded, before);
        store
            .save_snapshot(&bank, &binding(&provider), &config, None)
            .unwrap();
        assert!(!staging.exists());
        store.load_bank(&binding(&provider)).unwrap();
    }

    #[test]
    fn replay_hash_ignores_horizon_but_binds_semantics() {
        let provider = HashEmbedder::default();
        let b = binding(&provider);
        let base = config();
        let hash = replay_config_hash(&base, &b, "d");

        let mut longer = base.clone();
        longer.total_steps = 500;
        longer.checkpoint_every = 3;
        assert_eq!(replay_config_hash(&longer, &b, "d"), hash);

        let mut different = base.clone();
        different.sampler.gamma = 0.5;
        assert_ne!(replay_config_hash(&different, &b, "d"), hash);
        assert_ne!(replay_config_hash(&base, &b, "other"), hash);
    }
}
