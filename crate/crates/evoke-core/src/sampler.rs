//! Prioritized sampling over lazily decayed Beta proficiency statistics.
//!
//! Each sample carries success/failure mass `(alpha, beta)` plus the step of
//! its last update. Statistics are discounted by `rho^(elapsed steps)` only
//! when the sample is next touched (lazy decay), smoothed into a proficiency
//! estimate `v = (1 + α̃) / (2 + α̃ + β̃)`, and converted into a sampling
//! weight `sqrt(v(1−v)) + γ(1−v) + ε` that balances uncertainty, hardness,
//! and an exploration floor.

use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::SamplerError;
use crate::rng::pow_int;

/// Per-sample Beta statistics with the step of their last update.
///
/// `alpha`/`beta` hold raw (undecayed) mass as of `last_step`; decay is
/// applied lazily by [`ProficiencyRecord::estimate`] and folded in
/// permanently only on update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProficiencyRecord {
    pub alpha: f64,
    pub beta: f64,
    pub last_step: u64,
}

/// Decayed view of a record at some step: `α̃`, `β̃`, and the smoothed
/// proficiency `v ∈ (0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayedStats {
    pub alpha: f64,
    pub beta: f64,
    pub proficiency: f64,
}

impl ProficiencyRecord {
    /// Fresh record carrying only the configured prior mass.
    pub fn new(prior_alpha: f64, prior_beta: f64) -> Self {
        Self {
            alpha: prior_alpha,
            beta: prior_beta,
            last_step: 0,
        }
    }

    /// Apply lazy decay at `current_step` and estimate proficiency.
    ///
    /// Pure: the stored statistics are untouched. Rejects a clock that runs
    /// backwards relative to `last_step`.
    pub fn estimate(&self, current_step: u64, rho: f64) -> Result<DecayedStats, SamplerError> {
        if current_step < self.last_step {
            return Err(SamplerError::ClockRegression {
                current: current_step,
                last: self.last_step,
            });
        }
        let decay = pow_int(rho, current_step - self.last_step);
        let alpha = self.alpha * decay;
        let beta = self.beta * decay;
        Ok(DecayedStats {
            alpha,
            beta,
            proficiency: (1.0 + alpha) / (2.0 + alpha + beta),
        })
    }

    /// Fold a reward into the decayed statistics, adding exactly unit mass:
    /// `α ← α̃ + r`, `β ← β̃ + (1 − r)`, `last_step ← current_step`.
    pub fn updated(
        &self,
        reward: f64,
        current_step: u64,
        rho: f64,
    ) -> Result<Self, SamplerError> {
        if !(0.0..=1.0).contains(&reward) {
            return Err(SamplerError::RewardOutOfRange(reward));
        }
        let decayed = self.estimate(current_step, rho)?;
        Ok(Self {
            alpha: decayed.alpha + reward,
            beta: decayed.beta + (1.0 - reward),
            last_step: current_step,
        })
    }
}

/// Sampler parameters. Defaults: `rho=0.95`, `gamma=0.4`, `epsilon=0.1`,
/// `batch_size=8`, prior mass `(0, 0)` (the smoothing in the proficiency
/// estimate already encodes a uniform prior; the prior pair is exposed for
/// sweep experiments).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub rho: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub prior_alpha: f64,
    pub prior_beta: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            rho: 0.95,
            gamma: 0.4,
            epsilon: 0.1,
            batch_size: 8,
            prior_alpha: 0.0,
            prior_beta: 0.0,
        }
    }
}

/// Unnormalized sampling weight `sqrt(v(1−v)) + γ(1−v) + ε`.
///
/// Caller guarantees `v ∈ (0, 1)`, which every [`DecayedStats`] satisfies by
/// construction. Weights are kept unnormalized so they stay comparable
/// across steps; normalization happens inside [`draw_batch`].
pub fn sampling_weight(proficiency: f64, config: &SamplerConfig) -> f64 {
    debug_assert!(proficiency > 0.0 && proficiency < 1.0);
    libm::sqrt(proficiency * (1.0 - proficiency))
        + config.gamma * (1.0 - proficiency)
        + config.epsilon
}

/// Draw `batch_size` distinct positions without replacement, each draw
/// proportional to the remaining weights. Deterministic for a fixed RNG
/// state. Returns positions into `weights`; callers map them to ids.
pub fn draw_batch<R: Rng>(
    weights: &[f64],
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<usize>, SamplerError> {
    if batch_size > weights.len() {
        return Err(SamplerError::BatchTooLarge {
            batch: batch_size,
            pool: weights.len(),
        });
    }
    for (index, &value) in weights.iter().enumerate() {
        if !(value > 0.0) || !value.is_finite() {
            return Err(SamplerError::NonPositiveWeight { index, value });
        }
    }

    let mut alive: Vec<usize> = (0..weights.len()).collect();
    let mut picked = Vec::with_capacity(batch_size);
    for _ in 0..batch_size {
        let total: f64 = alive.iter().map(|&i| weights[i]).sum();
        let mut target = rng.random::<f64>() * total;
        let mut chosen = alive.len() - 1;
        for (slot, &i) in alive.iter().enumerate() {
            target -= weights[i];
            if target < 0.0 {
                chosen = slot;
                break;
            }
        }
        picked.push(alive.remove(chosen));
    }
    Ok(picked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamDomain};
    use proptest::prelude::*;

    const TOL: f64 = 1e-9;

    fn cfg() -> SamplerConfig {
        SamplerConfig::default()
    }

    #[test]
    fn empty_statistics_give_symmetric_prior() {
        let record = ProficiencyRecord::new(0.0, 0.0);
        for step in [0, 1, 57] {
            let est = record.estimate(step, 0.95).unwrap();
            assert_eq!(est.proficiency, 0.5);
        }
    }

    #[test]
    fn lazy_decay_matches_hand_computed_oracle() {
        // (α=2, β=1), ρ=0.95, 10 elapsed steps. Constants frozen from a
        // high-precision evaluation of α·ρ^10 etc.
        let record = ProficiencyRecord {
            alpha: 2.0,
            beta: 1.0,
            last_step: 5,
        };
        let est = record.estimate(15, 0.95).unwrap();
        assert!((est.alpha - 1.1974738784767578).abs() < TOL);
        assert!((est.beta - 0.5987369392383789).abs() < TOL);
        assert!((est.proficiency - 0.5788598115315875).abs() < TOL);
    }

    #[test]
    fn zero_elapsed_decay_is_identity() {
        let record = ProficiencyRecord {
            alpha: 3.0,
            beta: 5.0,
            last_step: 9,
        };
        let est = record.estimate(9, 0.95).unwrap();
        assert_eq!(est.alpha, 3.0);
        assert_eq!(est.beta, 5.0);
        assert!((est.proficiency - 0.4).abs() < TOL);
    }

    #[test]
    fn clock_regression_is_rejected() {
        let record = ProficiencyRecord {
            alpha: 1.0,
            beta: 0.0,
            last_step: 4,
        };
        assert_eq!(
            record.estimate(3, 0.95),
            Err(SamplerError::ClockRegression {
                current: 3,
                last: 4
            })
        );
        assert!(record.updated(1.0, 3, 0.95).is_err());
    }

    #[test]
    fn weight_matches_defaults_oracle() {
        assert!((sampling_weight(0.5, &cfg()) - 0.8).abs() < TOL);
        // v → 0: the hardness term dominates, γ + ε.
        assert!((sampling_weight(1e-12, &cfg()) - 0.5).abs() < 1e-5);
        // v → 1: only the exploration floor remains.
        assert!((sampling_weight(1.0 - 1e-12, &cfg()) - 0.1).abs() < 1e-5);
    }

    #[test]
    fn update_success_then_failure_oracle() {
        let fresh = ProficiencyRecord::new(0.0, 0.0);
        let won = fresh.updated(1.0, 1, 0.95).unwrap();
        assert_eq!((won.alpha, won.beta, won.last_step), (1.0, 0.0, 1));
        assert!((won.estimate(1, 0.95).unwrap().proficiency - 2.0 / 3.0).abs() < TOL);

        let lost = fresh.updated(0.0, 1, 0.95).unwrap();
        assert_eq!((lost.alpha, lost.beta), (0.0, 1.0));
        assert!((lost.estimate(1, 0.95).unwrap().proficiency - 1.0 / 3.0).abs() < TOL);

        let half = fresh.updated(0.5, 1, 0.95).unwrap();
        assert_eq!((half.alpha, half.beta), (0.5, 0.5));
    }

    #[test]
    fn update_rejects_bad_rewards() {
        let fresh = ProficiencyRecord::new(0.0, 0.0);
        for r in [-0.1, 1.1, f64::NAN] {
            assert!(fresh.updated(r, 1, 0.95).is_err());
        }
    }

    #[test]
    fn exhaustive_draw_returns_whole_pool() {
        let weights = [1.0; 6];
        let mut rng = stream(3, StreamDomain::BatchDraw, 0, 0);
        let mut batch = draw_batch(&weights, 6, &mut rng).unwrap();
        batch.sort_unstable();
        assert_eq!(batch, alloc::vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn draw_rejects_oversized_batch_and_bad_weights() {
        let mut rng = stream(3, StreamDomain::BatchDraw, 0, 0);
        assert!(matches!(
            draw_batch(&[1.0, 1.0], 3, &mut rng),
            Err(SamplerError::BatchTooLarge { .. })
        ));
        assert!(matches!(
            draw_batch(&[1.0, 0.0], 1, &mut rng),
            Err(SamplerError::NonPositiveWeight { index: 1, .. })
        ));
        assert!(matches!(
            draw_batch(&[1.0, -2.0], 1, &mut rng),
            Err(SamplerError::NonPositiveWeight { index: 1, .. })
        ));
        assert!(matches!(
            draw_batch(&[1.0, f64::NAN], 1, &mut rng),
            Err(SamplerError::NonPositiveWeight { index: 1, .. })
        ));
    }

    #[test]
    fn dominant_weight_wins_nearly_always() {
        let weights = [1e6, 1e-6, 1e-6, 1e-6];
        let mut dominant = 0u32;
        for trial in 0..1000u64 {
            let mut rng = stream(11, StreamDomain::BatchDraw, trial, 0);
            if draw_batch(&weights, 1, &mut rng).unwrap()[0] == 0 {
                dominant += 1;
            }
        }
        assert!(dominant >= 999, "dominant picked {dominant}/1000");
    }

    #[test]
    fn single_draw_frequencies_match_weights() {
        // Monte-Carlo against normalized weights: L1 ≤ 0.02 over 1e5 trials.
        let weights = [0.8, 0.1, 0.1];
        let trials = 100_000u64;
        let mut counts = [0u64; 3];
        for trial in 0..trials {
            let mut rng = stream(29, StreamDomain::BatchDraw, trial, 0);
            counts[draw_batch(&weights, 1, &mut rng).unwrap()[0]] += 1;
        }
        let l1: f64 = counts
            .iter()
            .zip(weights.iter())
            .map(|(&c, &w)| (c as f64 / trials as f64 - w).abs())
            .sum();
        assert!(l1 <= 0.02, "L1 distance {l1}");
    }

    #[test]
    fn batch_draws_are_deterministic_per_seed() {
        let weights = [0.3, 0.9, 0.2, 0.5, 0.7];
        let a = draw_batch(&weights, 3, &mut stream(5, StreamDomain::BatchDraw, 1, 0)).unwrap();
        let b = draw_batch(&weights, 3, &mut stream(5, StreamDomain::BatchDraw, 1, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn checkpoint_record_roundtrips_bit_exactly() {
        let record = ProficiencyRecord {
            alpha: 0.1 + 0.2,
            beta: 1.0 / 3.0,
            last_step: 42,
        };
        let json = serde_json::to_string(&record).unwrap();
        let back: ProficiencyRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(record.alpha.to_bits(), back.alpha.to_bits());
        assert_eq!(record.beta.to_bits(), back.beta.to_bits());
        assert_eq!(record.last_step, back.last_step);
    }

    proptest! {
        #[test]
        fn decay_pulls_proficiency_toward_prior(
            alpha in 0.0f64..50.0,
            beta in 0.0f64..50.0,
            rho in 0.05f64..0.999,
            short in 0u64..20,
            extra in 1u64..40,
        ) {
            prop_assume!(alpha + beta > 1e-9);
            let record = ProficiencyRecord { alpha, beta, last_step: 0 };
            let near = (record.estimate(short, rho).unwrap().proficiency - 0.5).abs();
            let far = (record.estimate(short + extra, rho).unwrap().proficiency - 0.5).abs();
            if (alpha - beta).abs() < 1e-12 {
                prop_assert!(near < 1e-12 && far < 1e-12);
            } else if near > 1e-13 {
                // strictly closer to the prior whenever the distance is
                // still representable above float noise
                prop_assert!(far < near);
            } else {
                prop_assert!(far <= near);
            }
        }

        #[test]
        fn update_adds_exactly_unit_mass(
            alpha in 0.0f64..100.0,
            beta in 0.0f64..100.0,
            reward in 0.0f64..=1.0,
            gap in 0u64..50,
        ) {
            let record = ProficiencyRecord { alpha, beta, last_step: 3 };
            let step = 3 + gap;
            let decayed = record.estimate(step, 0.95).unwrap();
            let updated = record.updated(reward, step, 0.95).unwrap();
            let added = (updated.alpha + updated.beta) - (decayed.alpha + decayed.beta);
            prop_assert!((added - 1.0).abs() <= 1e-12);
            prop_assert_eq!(updated.last_step, step);
        }

        #[test]
        fn weights_are_bounded_below_by_epsilon(v in 1e-9f64..1.0) {
            prop_assume!(v < 1.0);
            let config = cfg();
            prop_assert!(sampling_weight(v, &config) >= config.epsilon);
        }

        #[test]
        fn hardness_breaks_weight_symmetry(p in 0.01f64..0.49) {
            let config = cfg();
            prop_assert!(sampling_weight(p, &config) > sampling_weight(1.0 - p, &config));
        }

        #[test]
        fn uncertainty_peaks_at_half(v in 0.01f64..0.99) {
            let flat = SamplerConfig { gamma: 0.0, epsilon: 0.1, ..cfg() };
            prop_assert!(sampling_weight(v, &flat) <= sampling_weight(0.5, &flat) + 1e-12);
        }

        #[test]
        fn batches_never_contain_duplicates(
            n in 1usize..40,
            seed in 0u64..500,
        ) {
            let weights: alloc::vec::Vec<f64> =
                (0..n).map(|i| 0.05 + (i as f64 * 0.37) % 1.0).collect();
            let batch_size = 1 + seed as usize % n;
            let mut rng = stream(seed, StreamDomain::BatchDraw, 7, 0);
            let batch = draw_batch(&weights, batch_size, &mut rng).unwrap();
            let mut sorted = batch.clone();
            sorted.sort_unstable();
            sorted.dedup();
            prop_assert_eq!(sorted.len(), batch.len());
        }
    }
}
