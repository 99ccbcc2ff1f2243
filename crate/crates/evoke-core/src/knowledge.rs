//! Cluster-isolated knowledge stores at two granularities.
//!
//! Each cluster owns a tactical experience pool (embedding-indexed textual
//! lessons with similarity-gated insert-or-merge and capacity compaction)
//! and a strategic skill document (merge-and-compress under a word budget).
//! All mutating operations are atomic: a synthesizer failure leaves the
//! store exactly as it was.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cell::Cell;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{cosine_similarity, embed, EmbeddingProvider, EmbeddingVector};
use crate::error::KnowledgeError;
use crate::kmeans::{route, CentroidSet, ClusterId};

/// Count of maximal whitespace-separated tokens; the unit of the skill
/// document's budget.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Synthesizer-side failure message.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{0}")]
pub struct SynthesisError(pub String);

/// Text consolidation capabilities, realized by an LLM client in real
/// deployments or by [`MockSynthesizer`] for hermetic runs.
pub trait KnowledgeSynthesizer {
    /// Consolidate several experience texts into one.
    fn merge_experiences(&self, texts: &[&str]) -> Result<String, SynthesisError>;

    /// Fold a skill delta into the current skill document.
    fn merge_skill(&self, base: &str, delta: &str) -> Result<String, SynthesisError>;

    /// Compress a document to at most `word_budget` words. Output exceeding
    /// the budget is a contract violation and is rejected by the caller.
    fn compress_skill(&self, text: &str, word_budget: usize) -> Result<String, SynthesisError>;
}

/// One consolidated lesson in a pool.
///
/// `merge_count` tracks how many raw candidates this entry absorbed; merges
/// sum it, so the pool-wide total equals the number of candidates ever
/// accepted. The embedding is always `embed(text)` under the run's
/// provider; merged entries are re-embedded from their merged text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperienceEntry {
    pub id: u64,
    pub text: String,
    pub embedding: EmbeddingVector,
    pub merge_count: u64,
    pub created_step: u64,
    pub updated_step: u64,
}

/// Outcome of one experience integration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum IntegrationOutcome {
    Inserted { id: u64 },
    /// Candidate was consolidated with `neighbors` existing entries.
    Merged { id: u64, neighbors: usize },
}

/// Tactical experience pool: at most `capacity` entries, gated by the
/// cosine `similarity_threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperiencePool {
    entries: Vec<ExperienceEntry>,
    next_id: u64,
    capacity: usize,
    similarity_threshold: f64,
}

impl ExperiencePool {
    pub fn new(capacity: usize, similarity_threshold: f64) -> Self {
        Self {
            entries: Vec::new(),
            next_id: 0,
            capacity,
            similarity_threshold,
        }
    }

    /// Rebuild a pool from persisted parts, revalidating every invariant.
    pub fn from_parts(
        entries: Vec<ExperienceEntry>,
        next_id: u64,
        capacity: usize,
        similarity_threshold: f64,
    ) -> Result<Self, KnowledgeError> {
        if entries.len() > capacity {
            return Err(KnowledgeError::Invalid(format!(
                "pool holds {} entries, capacity is {capacity}",
                entries.len()
            )));
        }
        let mut seen = alloc::collections::BTreeSet::new();
        for e in &entries {
            if e.text.trim().is_empty() {
                return Err(KnowledgeError::EmptyCandidate);
            }
            if e.merge_count == 0 || e.id >= next_id || !seen.insert(e.id) {
                return Err(KnowledgeError::Invalid(format!(
                    "bad entry id or merge_count (id {})",
                    e.id
                )));
            }
        }
        Ok(Self {
            entries,
            next_id,
            capacity,
            similarity_threshold,
        })
    }

    pub fn entries(&self) -> &[ExperienceEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn similarity_threshold(&self) -> f64 {
        self.similarity_threshold
    }

    /// Total raw candidates ever accepted (merging preserves this mass).
    pub fn total_merge_mass(&self) -> u64 {
        self.entries.iter().map(|e| e.merge_count).sum()
    }

    /// Insert-or-merge a candidate lesson.
    ///
    /// Neighbors are the entries with cosine similarity strictly above the
    /// threshold. No neighbors: the candidate is inserted. Otherwise the
    /// candidate and all neighbors are consolidated into one re-embedded
    /// entry whose `merge_count` is the sum plus one. Compaction then
    /// restores the capacity bound if needed. Atomic under any failure.
    pub fn integrate(
        &mut self,
        candidate_text: &str,
        embedder: &dyn EmbeddingProvider,
        synthesizer: &dyn KnowledgeSynthesizer,
        step: u64,
    ) -> Result<IntegrationOutcome, KnowledgeError> {
        if candidate_text.trim().is_empty() {
            return Err(KnowledgeError::EmptyCandidate);
        }
        let candidate_embedding = embed(embedder, candidate_text)?;

        let mut undo = UndoLog::new(self.next_id);
        let result = self
            .apply_integration(
                candidate_text,
                candidate_embedding,
                embedder,
                synthesizer,
                step,
                &mut undo,
            )
            .and_then(|outcome| {
                while self.entries.len() > self.capacity {
                    self.compact_once(embedder, synthesizer, &mut undo)?;
                }
                Ok(outcome)
            });
        if result.is_err() {
            self.rollback(undo);
        }
        result
    }

    fn apply_integration(
        &mut self,
        candidate_text: &str,
        candidate_embedding: EmbeddingVector,
        embedder: &dyn EmbeddingProvider,
        synthesizer: &dyn KnowledgeSynthesizer,
        step: u64,
        undo: &mut UndoLog,
    ) -> Result<IntegrationOutcome, KnowledgeError> {
        let neighbors: Vec<usize> = self
            .entries
            .iter()
            .enumerate()
            .filter_map(|(i, e)| {
                let sim = cosine_similarity(&candidate_embedding, &e.embedding).ok()?;
                (sim > self.similarity_threshold).then_some(i)
            })
            .collect();

        if neighbors.is_empty() {
            let id = self.push_entry(
                candidate_text.to_string(),
                candidate_embedding,
                1,
                step,
                step,
            );
            undo.added.push(id);
            return Ok(IntegrationOutcome::Inserted { id });
        }

        // all fallible work happens before any mutation
        let mut texts: Vec<&str> = Vec::with_capacity(neighbors.len() + 1);
        texts.push(candidate_text);
        texts.extend(neighbors.iter().map(|&i| self.entries[i].text.as_str()));
        let merged_text = non_empty(synthesizer.merge_experiences(&texts)?)?;
        let merged_embedding = embed(embedder, &merged_text)?;
        let merge_count = 1 + neighbors
            .iter()
            .map(|&i| self.entries[i].merge_count)
            .sum::<u64>();
        let created = neighbors
            .iter()
            .map(|&i| self.entries[i].created_step)
            .min()
            .unwrap_or(step)
            .min(step);

        let count = neighbors.len();
        for &i in neighbors.iter().rev() {
            undo.removed.push(self.entries.remove(i));
        }
        let id = self.push_entry(merged_text, merged_embedding, merge_count, created, step);
        undo.added.push(id);
        Ok(IntegrationOutcome::Merged {
            id,
            neighbors: count,
        })
    }

    /// Merge the most similar pair until the pool is within capacity.
    /// No-op when already within the bound. Atomic under any failure.
    pub fn compact(
        &mut self,
        embedder: &dyn EmbeddingProvider,
        synthesizer: &dyn KnowledgeSynthesizer,
    ) -> Result<usize, KnowledgeError> {
        let mut undo = UndoLog::new(self.next_id);
        let mut merges = 0;
        while self.entries.len() > self.capacity {
            if let Err(e) = self.compact_once(embedder, synthesizer, &mut undo) {
                self.rollback(undo);
                return Err(e);
            }
            merges += 1;
        }
        Ok(merges)
    }

    /// One compaction iteration: merge the maximal-similarity pair (ties
    /// resolved toward the smallest id pair), shrinking the pool by one.
    fn compact_once(
        &mut self,
        embedder: &dyn EmbeddingProvider,
        synthesizer: &dyn KnowledgeSynthesizer,
        undo: &mut UndoLog,
    ) -> Result<(), KnowledgeError> {
        debug_assert!(self.entries.len() >= 2);
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..self.entries.len() {
            for j in (i + 1)..self.entries.len() {
                let sim =
                    cosine_similarity(&self.entries[i].embedding, &self.entries[j].embedding)?;
                let better = match best {
                    None => true,
                    Some((bi, bj, bs)) => {
                        sim > bs
                            || (sim == bs
                                && (self.entries[i].id, self.entries[j].id)
                                    < (self.entries[bi].id, self.entries[bj].id))
                    }
                };
                if better {
                    best = Some((i, j, sim));
                }
            }
        }
        let (i, j, _) = best.expect("compaction requires at least two entries");
        let (a, b) = (&self.entries[i], &self.entries[j]);
        let merged_text = non_empty(synthesizer.merge_experiences(&[&a.text, &b.text])?)?;
        let merged_embedding = embed(embedder, &merged_text)?;
        let merge_count = a.merge_count + b.merge_count;
        let created = a.created_step.min(b.created_step);
        let updated = a.updated_step.max(b.updated_step);
        undo.removed.push(self.entries.remove(j));
        undo.removed.push(self.entries.remove(i));
        let id = self.push_entry(merged_text, merged_embedding, merge_count, created, updated);
        undo.added.push(id);
        Ok(())
    }

    /// Reverse every journaled mutation, restoring the exact pre-operation
    /// pool (entries stay ordered by id, which is their invariant order).
    fn rollback(&mut self, undo: UndoLog) {
        self.entries.retain(|e| !undo.added.contains(&e.id));
        self.entries.extend(undo.removed);
        self.entries.sort_by_key(|e| e.id);
        self.next_id = undo.prev_next_id;
    }

    fn push_entry(
        &mut self,
        text: String,
        embedding: EmbeddingVector,
        merge_count: u64,
        created_step: u64,
        updated_step: u64,
    ) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        self.entries.push(ExperienceEntry {
            id,
            text,
            embedding,
            merge_count,
            created_step,
            updated_step,
        });
        id
    }

    /// Top-k entries by descending cosine similarity to the query; ties go
    /// to the older entry. Returns fewer than `top_k` when the pool is
    /// smaller.
    pub fn top_k(
        &self,
        query: &EmbeddingVector,
        top_k: usize,
    ) -> Result<Vec<(&ExperienceEntry, f64)>, KnowledgeError> {
        let mut scored: Vec<(&ExperienceEntry, f64)> = self
            .entries
            .iter()
            .map(|e| cosine_similarity(query, &e.embedding).map(|s| (e, s)))
            .collect::<Result<_, _>>()?;
        // entries are in ascending-id (age) order; a stable sort keeps the
        // older entry first among equal similarities
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("similarities are finite"));
        scored.truncate(top_k);
        Ok(scored)
    }
}

fn non_empty(text: String) -> Result<String, KnowledgeError> {
    if text.trim().is_empty() {
        Err(KnowledgeError::EmptySynthesis)
    } else {
        Ok(text)
    }
}

/// Mutation journal for atomic pool operations.
struct UndoLog {
    added: Vec<u64>,
    removed: Vec<ExperienceEntry>,
    prev_next_id: u64,
}

impl UndoLog {
    fn new(prev_next_id: u64) -> Self {
        Self {
            added: Vec::new(),
            removed: Vec::new(),
            prev_next_id,
        }
    }
}

/// Strategic skill document bounded to `word_budget` words.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillDocument {
    text: String,
    word_budget: usize,
    revision: u64,
}

impl SkillDocument {
    pub fn new(word_budget: usize) -> Self {
        Self {
            text: String::new(),
            word_budget,
            revision: 0,
        }
    }

    pub fn from_parts(
        text: String,
        word_budget: usize,
        revision: u64,
    ) -> Result<Self, KnowledgeError> {
        let words = word_count(&text);
        if words > word_budget {
            return Err(KnowledgeError::BudgetViolation {
                words,
                budget: word_budget,
            });
        }
        Ok(Self {
            text,
            word_budget,
            revision,
        })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn word_budget(&self) -> usize {
        self.word_budget
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    /// Merge a delta into the document, compressing when the merge exceeds
    /// the budget. An empty delta is a no-op (returns `false`). The
    /// document is unchanged on any failure, including a compressor that
    /// violates its budget contract.
    pub fn update(
        &mut self,
        delta_text: &str,
        synthesizer: &dyn KnowledgeSynthesizer,
    ) -> Result<bool, KnowledgeError> {
        if delta_text.trim().is_empty() {
            return Ok(false);
        }
        let merged = non_empty(synthesizer.merge_skill(&self.text, delta_text)?)?;
        let text = if word_count(&merged) > self.word_budget {
            let compressed = synthesizer.compress_skill(&merged, self.word_budget)?;
            let words = word_count(&compressed);
            if words > self.word_budget {
                return Err(KnowledgeError::BudgetViolation {
                    words,
                    budget: self.word_budget,
                });
            }
            compressed
        } else {
            merged
        };
        self.text = text;
        self.revision += 1;
        Ok(true)
    }
}

/// One knowledge cluster: a centroid-bound experience pool plus skill
/// document.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    id: ClusterId,
    pool: ExperiencePool,
    skill: SkillDocument,
}

impl Cluster {
    pub fn new(id: ClusterId, config: &crate::config::KnowledgeConfig) -> Self {
        Self {
            id,
            pool: ExperiencePool::new(config.experience_capacity, config.similarity_threshold),
            skill: SkillDocument::new(config.skill_word_budget),
        }
    }

    pub fn from_parts(id: ClusterId, pool: ExperiencePool, skill: SkillDocument) -> Self {
        Self { id, pool, skill }
    }

    pub fn id(&self) -> ClusterId {
        self.id
    }

    pub fn pool(&self) -> &ExperiencePool {
        &self.pool
    }

    pub fn skill(&self) -> &SkillDocument {
        &self.skill
    }

    /// Accepted integration operations so far: total candidate mass in the
    /// pool (conserved under merging) plus skill revisions. Derivable from
    /// persisted state, so resumed runs see exactly the same count.
    pub fn integration_events(&self) -> u64 {
        self.pool.total_merge_mass() + self.skill.revision()
    }
}

/// Everything retrieved from one cluster for a query.
#[derive(Debug, Clone)]
pub struct Retrieved<'a> {
    pub experiences: Vec<(&'a ExperienceEntry, f64)>,
    pub skill_text: &'a str,
    pub skill_revision: u64,
}

/// The full bank: fitted centroids plus one cluster per centroid. The only
/// mutation paths take a [`ClusterId`], which is what makes cross-cluster
/// writes impossible.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeBank {
    centroids: CentroidSet,
    clusters: Vec<Cluster>,
}

impl KnowledgeBank {
    /// Fresh bank with empty clusters, one per centroid.
    pub fn new(centroids: CentroidSet, config: &crate::config::KnowledgeConfig) -> Self {
        let clusters = (1..=centroids.k() as u32)
            .map(|i| Cluster::new(ClusterId::new(i), config))
            .collect();
        Self {
            centroids,
            clusters,
        }
    }

    /// Rebuild from persisted parts; clusters must be exactly 1..=K in order
    /// and every entry embedding must match the centroid dimension.
    pub fn from_parts(
        centroids: CentroidSet,
        clusters: Vec<Cluster>,
    ) -> Result<Self, KnowledgeError> {
        if clusters.len() != centroids.k() {
            return Err(KnowledgeError::Invalid(format!(
                "{} clusters for {} centroids",
                clusters.len(),
                centroids.k()
            )));
        }
        for (i, cluster) in clusters.iter().enumerate() {
            if cluster.id().index0() != i {
                return Err(KnowledgeError::UnknownCluster(cluster.id().get()));
            }
            for entry in cluster.pool().entries() {
                if entry.embedding.dimension() != centroids.dimension() {
                    return Err(KnowledgeError::Embed(
                        crate::error::EmbedError::DimensionMismatch {
                            expected: centroids.dimension(),
                            got: entry.embedding.dimension(),
                        },
                    ));
                }
            }
        }
        Ok(Self {
            centroids,
            clusters,
        })
    }

    pub fn centroids(&self) -> &CentroidSet {
        &self.centroids
    }

    pub fn k(&self) -> usize {
        self.clusters.len()
    }

    pub fn cluster(&self, id: ClusterId) -> Result<&Cluster, KnowledgeError> {
        self.clusters
            .get(id.index0())
            .ok_or(KnowledgeError::UnknownCluster(id.get()))
    }

    pub fn clusters(&self) -> impl Iterator<Item = &Cluster> {
        self.clusters.iter()
    }

    /// Route an embedding to its nearest cluster.
    pub fn route(&self, embedding: &EmbeddingVector) -> Result<ClusterId, KnowledgeError> {
        route(embedding, &self.centroids).map_err(KnowledgeError::Embed)
    }

    pub fn integrate_experience(
        &mut self,
        id: ClusterId,
        candidate_text: &str,
        embedder: &dyn EmbeddingProvider,
        synthesizer: &dyn KnowledgeSynthesizer,
        step: u64,
    ) -> Result<IntegrationOutcome, KnowledgeError> {
        let cluster = self
            .clusters
            .get_mut(id.index0())
            .ok_or(KnowledgeError::UnknownCluster(id.get()))?;
        cluster.pool.integrate(candidate_text, embedder, synthesizer, step)
    }

    pub fn update_skill(
        &mut self,
        id: ClusterId,
        delta_text: &str,
        synthesizer: &dyn KnowledgeSynthesizer,
    ) -> Result<bool, KnowledgeError> {
        let cluster = self
            .clusters
            .get_mut(id.index0())
            .ok_or(KnowledgeError::UnknownCluster(id.get()))?;
        cluster.skill.update(delta_text, synthesizer)
    }

    /// Read-only retrieval from one cluster: top-k experiences by cosine
    /// plus the full skill document.
    pub fn retrieve(
        &self,
        id: ClusterId,
        query: &EmbeddingVector,
        top_k: usize,
    ) -> Result<Retrieved<'_>, KnowledgeError> {
        let cluster = self.cluster(id)?;
        Ok(Retrieved {
            experiences: cluster.pool.top_k(query, top_k)?,
            skill_text: cluster.skill.text(),
            skill_revision: cluster.skill.revision(),
        })
    }
}

/// Deterministic synthesizer for hermetic runs.
///
/// - `merge_experiences`: sentence-level union of the inputs in first-seen
///   order, prefixed with `[merged n=<inputs>]`; prior merge markers are
///   stripped so they do not pile up across re-merges.
/// - `merge_skill`: base, blank line, delta (delta verbatim on empty base).
/// - `compress_skill`: first `W` whitespace tokens.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockSynthesizer;

fn strip_marker(text: &str) -> &str {
    let trimmed = text.trim_start();
    if let Some(rest) = trimmed.strip_prefix("[merged n=") {
        if let Some(close) = rest.find(']') {
            return rest[close + 1..].trim_start();
        }
    }
    trimmed
}

fn split_sentences(text: &str) -> Vec<&str> {
    let mut sentences = Vec::new();
    let mut start = 0;
    for (i, c) in text.char_indices() {
        if matches!(c, '.' | '!' | '?') {
            let sentence = text[start..=i].trim();
            if !sentence.is_empty() {
                sentences.push(sentence);
            }
            start = i + 1;
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        sentences.push(tail);
    }
    sentences
}

impl KnowledgeSynthesizer for MockSynthesizer {
    fn merge_experiences(&self, texts: &[&str]) -> Result<String, SynthesisError> {
        let mut seen = alloc::collections::BTreeSet::new();
        let mut ordered: Vec<&str> = Vec::new();
        for text in texts {
            for sentence in split_sentences(strip_marker(text)) {
                if seen.insert(sentence) {
                    ordered.push(sentence);
                }
            }
        }
        Ok(format!("[merged n={}] {}", texts.len(), ordered.join(" ")))
    }

    fn merge_skill(&self, base: &str, delta: &str) -> Result<String, SynthesisError> {
        if base.trim().is_empty() {
            Ok(delta.to_string())
        } else if delta.trim().is_empty() {
            Ok(base.to_string())
        } else {
            Ok(format!("{base}\n\n{delta}"))
        }
    }

    fn compress_skill(&self, text: &str, word_budget: usize) -> Result<String, SynthesisError> {
        if word_count(text) <= word_budget {
            return Ok(text.to_string());
        }
        Ok(text
            .split_whitespace()
            .take(word_budget)
            .collect::<Vec<_>>()
            .join(" "))
    }
}

/// Synthesizer that fails after a configurable number of successful calls;
/// exercises atomicity paths.
#[derive(Debug)]
pub struct FailingSynthesizer {
    remaining: Cell<u64>,
    inner: MockSynthesizer,
}

impl FailingSynthesizer {
    /// Fails on every call.
    pub fn always() -> Self {
        Self::after(0)
    }

    /// Succeeds (delegating to the mock) for `calls` calls, then fails.
    pub fn after(calls: u64) -> Self {
        Self {
            remaining: Cell::new(calls),
            inner: MockSynthesizer,
        }
    }

    fn tick(&self) -> Result<(), SynthesisError> {
        let left = self.remaining.get();
        if left == 0 {
            return Err(SynthesisError("injected synthesizer fault".to_string()));
        }
        self.remaining.set(left - 1);
        Ok(())
    }
}

impl KnowledgeSynthesizer for FailingSynthesizer {
    fn merge_experiences(&self, texts: &[&str]) -> Result<String, SynthesisError> {
        self.tick()?;
        self.inner.merge_experiences(texts)
    }

    fn merge_skill(&self, base: &str, delta: &str) -> Result<String, SynthesisError> {
        self.tick()?;
        self.inner.merge_skill(base, delta)
    }

    fn compress_skill(&self, text: &str, word_budget: usize) -> Result<String, SynthesisError> {
        self.tick()?;
        self.inner.compress_skill(text, word_budget)
    }
}

impl From<SynthesisError> for KnowledgeError {
    fn from(e: SynthesisError) -> Self {
        KnowledgeError::Synthesizer(e.0)
    }
}
