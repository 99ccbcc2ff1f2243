//! Deterministic stream derivation.
//!
//! Every random decision in a run is drawn from a ChaCha stream derived from
//! the run seed plus a domain tag and per-use keys. Streams never carry
//! state across steps, which is what makes checkpoint resume bit-exact: the
//! randomness for step `t` depends only on `(seed, t, ...)`, never on how
//! many draws earlier steps consumed.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream domains, kept disjoint so distinct uses of the same seed never
/// share a stream.
#[derive(Debug, Clone, Copy)]
pub enum StreamDomain {
    /// Batch selection for one training step.
    BatchDraw,
    /// One simulated rollout (keyed by step and sample id).
    Rollout,
    /// k-means initialization for one fit.
    Kmeans,
    /// Default difficulty assignment for dataset records that omit it.
    Difficulty,
}

impl StreamDomain {
    fn tag(self) -> u64 {
        match self {
            StreamDomain::BatchDraw => 0x9e37_79b9_7f4a_7c15,
            StreamDomain::Rollout => 0x2545_f491_4f6c_dd1d,
            StreamDomain::Kmeans => 0x8538_ecb5_bd45_6ea3,
            StreamDomain::Difficulty => 0x27d4_eb2f_1656_67c5,
        }
    }
}

/// splitmix64 finalizer; the standard 64-bit mixer.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// FNV-1a over bytes; stable across platforms and releases (unlike the
/// std hasher), used wherever a string has to key a stream or a bucket.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Derive the ChaCha stream for `(seed, domain, a, b)`.
pub fn stream(seed: u64, domain: StreamDomain, a: u64, b: u64) -> ChaCha8Rng {
    let mut h = splitmix64(seed ^ domain.tag());
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ b);
    ChaCha8Rng::seed_from_u64(h)
}

/// `base^exp` by exponentiation by squaring over the integer gap, so a decay
/// over `n` steps is one computation rather than `n` drifting multiplies.
pub fn pow_int(base: f64, mut exp: u64) -> f64 {
    let mut acc = 1.0f64;
    let mut b = base;
    while exp > 0 {
        if exp & 1 == 1 {
            acc *= b;
        }
        b *= b;
        exp >>= 1;
    }
    acc
}
