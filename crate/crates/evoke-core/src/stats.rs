//! Small statistics helpers for run analysis: rank correlation, the exact
//! sign test, and visit histograms.

use alloc::vec;
use alloc::vec::Vec;

/// Average ranks (1-based) with ties sharing their mean rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let shared = (i + j) as f64 / 2.0 + 1.0;
        for &slot in &order[i..=j] {
            ranks[slot] = shared;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties. Returns 0 when
/// either side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    if a.len() < 2 {
        return 0.0;
    }
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    pearson(&ra, &rb)
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        let dx = x - mean_a;
        let dy = y - mean_b;
        cov += dx * dy;
        var_a += dx * dx;
        var_b += dy * dy;
    }
    if var_a <= 0.0 || var_b <= 0.0 {
        return 0.0;
    }
    cov / libm::sqrt(var_a * var_b)
}

/// Two-sided exact sign test over paired differences. Ties are dropped;
/// with no informative pairs the p-value is 1 (no evidence either way).
pub fn sign_test_p(pairs: &[(f64, f64)]) -> f64 {
    let mut n = 0u64;
    let mut wins = 0u64;
    for &(a, b) in pairs {
        if a > b {
            wins += 1;
            n += 1;
        } else if b > a {
            n += 1;
        }
    }
    if n == 0 {
        return 1.0;
    }
    let k = wins.min(n - wins);
    // P(X <= k) for X ~ Binomial(n, 1/2), doubled and capped at 1
    let mut tail = 0.0f64;
    for i in 0..=k {
        tail += binomial_coefficient(n, i) * libm::pow(0.5, n as f64);
    }
    (2.0 * tail).min(1.0)
}

fn binomial_coefficient(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Visit-count histogram with one bucket per count `0..=max`.
pub fn visit_histogram(counts: &[u64]) -> Vec<(u64, usize)> {
    let max = counts.iter().copied().max().unwrap_or(0);
    let mut buckets = vec![0usize; max as usize + 1];
    for &c in counts {
        buckets[c as usize] += 1;
    }
    buckets
        .into_iter()
        .enumerate()
        .map(|(visits, n)| (visits as u64, n))
        .collect()
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}
