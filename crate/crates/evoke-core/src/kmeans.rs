//! Seeded k-means over embeddings and nearest-centroid routing.
//!
//! Clusters are fit once per run and immutable afterwards; routing an
//! embedding to its nearest centroid is what confines all knowledge
//! operations to one cluster.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingVector;
use crate::error::{EmbedError, KmeansError};
use crate::rng::{stream, StreamDomain};

/// 1-based cluster index, matching the on-disk `clusters/<index>` layout.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ClusterId(u32);

impl ClusterId {
    pub fn new(one_based: u32) -> Self {
        assert!(one_based >= 1, "cluster ids are 1-based");
        Self(one_based)
    }

    pub fn get(self) -> u32 {
        self.0
    }

    /// Zero-based position for slice indexing.
    pub fn index0(self) -> usize {
        (self.0 - 1) as usize
    }
}

impl fmt::Display for ClusterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Immutable set of K centroids sharing one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidSet {
    centroids: Vec<EmbeddingVector>,
}

impl CentroidSet {
    pub fn new(centroids: Vec<EmbeddingVector>) -> Result<Self, KmeansError> {
        if centroids.is_empty() {
            return Err(KmeansError::ZeroClusters);
        }
        let dim = centroids[0].dimension();
        for c in &centroids[1..] {
            if c.dimension() != dim {
                return Err(KmeansError::Embed(EmbedError::DimensionMismatch {
                    expected: dim,
                    got: c.dimension(),
                }));
            }
        }
        Ok(Self { centroids })
    }

    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn dimension(&self) -> usize {
        self.centroids[0].dimension()
    }

    pub fn get(&self, id: ClusterId) -> &EmbeddingVector {
        &self.centroids[id.index0()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ClusterId, &EmbeddingVector)> {
        self.centroids
            .iter()
            .enumerate()
            .map(|(i, c)| (ClusterId::new(i as u32 + 1), c))
    }
}

/// Result of one k-means fit, including the per-iteration objective trace
/// (within-cluster sum of squares, which Lloyd's must never increase).
#[derive(Debug, Clone)]
pub struct KmeansFit {
    pub centroids: CentroidSet,
    pub assignments: Vec<ClusterId>,
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl KmeansFit {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace is never empty")
    }
}

/// Route an embedding to its nearest centroid by squared Euclidean
/// distance; ties break toward the lowest index.
pub fn route(
    embedding: &EmbeddingVector,
    centroids: &CentroidSet,
) -> Result<ClusterId, EmbedError> {
    if embedding.dimension() != centroids.dimension() {
        return Err(EmbedError::DimensionMismatch {
            expected: centroids.dimension(),
            got: embedding.dimension(),
        });
    }
    let mut best = ClusterId::new(1);
    let mut best_distance = f64::INFINITY;
    for (id, centroid) in centroids.iter() {
        let distance = embedding
            .squared_distance(centroid)
            .expect("dimensions checked above");
        if distance < best_distance {
            best_distance = distance;
            best = id;
        }
    }
    Ok(best)
}

/// Independent k-means++ restarts per fit; the best final objective wins.
/// All restarts derive from the caller's seed, so the fit stays
/// deterministic.
const RESTARTS: u64 = 10;

/// Lloyd's algorithm with seeded k-means++ initialization (best of
/// [`RESTARTS`] independent seeded inits).
///
/// Each restart stops at an assignment fixed-point or after `max_iters`
/// refinement rounds; an empty cluster is reseeded to the point farthest
/// from its own centroid. Deterministic per seed.
pub fn fit_kmeans(
    points: &[EmbeddingVector],
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<KmeansFit, KmeansError> {
    if points.is_empty() {
        return Err(KmeansError::EmptyInput);
    }
    if k == 0 {
        return Err(KmeansError::ZeroClusters);
    }
    if max_iters == 0 {
        return Err(KmeansError::ZeroIterations);
    }
    let dim = points[0].dimension();
    for p in points {
        if p.dimension() != dim {
            return Err(KmeansError::Embed(EmbedError::DimensionMismatch {
                expected: dim,
                got: p.dimension(),
            }));
        }
    }
    let distinct = count_distinct(points);
    if k > distinct {
        return Err(KmeansError::TooManyClusters { k, distinct });
    }

    let mut best: Option<KmeansFit> = None;
    for restart in 0..RESTARTS {
        let fit = lloyd_once(points, k, seed, restart, max_iters)?;
        let replace = match &best {
            None => true,
            Some(b) => fit.objective() < b.objective(),
        };
        if replace {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn lloyd_once(
    points: &[EmbeddingVector],
    k: usize,
    seed: u64,
    restart: u64,
    max_iters: usize,
) -> Result<KmeansFit, KmeansError> {
    let mut rng = stream(seed, StreamDomain::Kmeans, k as u64, restart);
    let mut centroids = plus_plus_init(points, k, &mut rng);
    let mut assignments = assign_all(points, &centroids);
    let mut trace = vec![wcss(points, &centroids, &assignments)];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iters {
        iterations += 1;
        update_means(points, &assignments, &mut centroids);
        reseed_empty(points, &assignments, &mut centroids);
        let next = assign_all(points, &centroids);
        trace.push(wcss(points, &centroids, &next));
        if next == assignments {
            converged = true;
            break;
        }
        assignments = next;
    }
    if !converged {
        // Capped run: one final mean update so returned centroids are the
        // means of the returned assignment.
        update_means(points, &assignments, &mut centroids);
        trace.push(wcss(points, &centroids, &assignments));
    }

    debug_assert!(trace.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    Ok(KmeansFit {
        centroids: CentroidSet::new(
            centroids
                .into_iter()
                .map(|c| EmbeddingVector::new(c).expect("means of finite points are finite"))
                .collect(),
        )?,
        assignments,
        objective_trace: trace,
        iterations,
        converged,
    })
}

fn count_distinct(points: &[EmbeddingVector]) -> usize {
    let mut seen: BTreeSet<Vec<u64>> = BTreeSet::new();
    for p in points {
        seen.insert(p.as_slice().iter().map(|v| v.to_bits()).collect());
    }
    seen.len()
}

fn plus_plus_init(points: &[EmbeddingVector], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    let first = rng.random_range(0..points.len());
    centroids.push(points[first].as_slice().to_vec());

    let mut nearest: Vec<f64> = points
        .iter()
        .map(|p| sq_dist(p.as_slice(), &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = nearest.iter().sum();
        // distinct-count precondition guarantees some positive mass remains
        let mut target = rng.random::<f64>() * total;
        let mut chosen = points.len() - 1;
        for (i, &d) in nearest.iter().enumerate() {
            target -= d;
            if target < 0.0 {
                chosen = i;
                break;
            }
        }
        let candidate = points[chosen].as_slice().to_vec();
        for (i, p) in points.iter().enumerate() {
            let d = sq_dist(p.as_slice(), &candidate);
            if d < nearest[i] {
                nearest[i] = d;
            }
        }
        centroids.push(candidate);
    }
    centroids
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn assign_all(points: &[EmbeddingVector], centroids: &[Vec<f64>]) -> Vec<ClusterId> {
    points
        .iter()
        .map(|p| {
            let mut best = 0usize;
            let mut best_distance = f64::INFINITY;
            for (i, c) in centroids.iter().enumerate() {
                let d = sq_dist(p.as_slice(), c);
                if d < best_distance {
                    best_distance = d;
                    best = i;
                }
            }
            ClusterId::new(best as u32 + 1)
        })
        .collect()
}

fn update_means(points: &[EmbeddingVector], assignments: &[ClusterId], centroids: &mut [Vec<f64>]) {
    let dim = points[0].dimension();
    let mut sums = vec![vec![0.0f64; dim]; centroids.len()];
    let mut counts = vec![0usize; centroids.len()];
    for (p, id) in points.iter().zip(assignments.iter()) {
        let slot = id.index0();
        counts[slot] += 1;
        for (acc, v) in sums[slot].iter_mut().zip(p.as_slice()) {
            *acc += v;
        }
    }
    for (slot, sum) in sums.into_iter().enumerate() {
        if counts[slot] > 0 {
            centroids[slot] = sum.into_iter().map(|s| s / counts[slot] as f64).collect();
        }
        // empty clusters keep their old position until reseeded
    }
}

fn reseed_empty(points: &[EmbeddingVector], assignments: &[ClusterId], centroids: &mut [Vec<f64>]) {
    let mut counts = vec![0usize; centroids.len()];
    for id in assignments {
        counts[id.index0()] += 1;
    }
    let mut taken: BTreeSet<usize> = BTreeSet::new();
    for slot in 0..centroids.len() {
        if counts[slot] > 0 {
            continue;
        }
        // farthest point from its own centroid, skipping points already
        // used to reseed another empty cluster this round
        let mut far_point = None;
        let mut far_distance = -1.0;
        for (i, p) in points.iter().enumerate() {
            if taken.contains(&i) {
                continue;
            }
            let own = assignments[i].index0();
            let d = sq_dist(p.as_slice(), &centroids[own]);
            if d > far_distance {
                far_distance = d;
                far_point = Some(i);
            }
        }
        if let Some(i) = far_point {
            centroids[slot] = points[i].as_slice().to_vec();
            taken.insert(i);
        }
    }
}

fn wcss(points: &[EmbeddingVector], centroids: &[Vec<f64>], assignments: &[ClusterId]) -> f64 {
    points
        .iter()
        .zip(assignments.iter())
        .map(|(p, id)| sq_dist(p.as_slice(), &centroids[id.index0()]))
        .sum()
}

/// Mean silhouette score of a fitted partition (Euclidean distances).
/// Singleton clusters contribute 0 for their lone member.
pub fn silhouette(points: &[EmbeddingVector], assignments: &[ClusterId], k: usize) -> f64 {
    if points.len() < 2 || k < 2 {
        return 0.0;
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, id) in assignments.iter().enumerate() {
        members[id.index0()].push(i);
    }
    let dist = |a: usize, b: usize| {
        libm::sqrt(sq_dist(points[a].as_slice(), points[b].as_slice()))
    };
    let mut total = 0.0;
    for (i, id) in assignments.iter().enumerate() {
        let own = &members[id.index0()];
        if own.len() == 1 {
            continue; // s(i) = 0
        }
        let a: f64 = own
            .iter()
            .filter(|&&j| j != i)
            .map(|&j| dist(i, j))
            .sum::<f64>()
            / (own.len() - 1) as f64;
        let mut b = f64::INFINITY;
        for (slot, group) in members.iter().enumerate() {
            if slot == id.index0() || group.is_empty() {
                continue;
            }
            let mean = group.iter().map(|&j| dist(i, j)).sum::<f64>() / group.len() as f64;
            if mean < b {
                b = mean;
            }
        }
        if b.is_finite() {
            let denom = if a > b { a } else { b };
            if denom > 0.0 {
                total += (b - a) / denom;
            }
        }
    }
    total / points.len() as f64
}
