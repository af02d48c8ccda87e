//! Per-step aggregation across seeds with percentile-bootstrap confidence
//! intervals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::run::RunRecord;

/// Mean normalized reward of one variant at one step, with a 95% bootstrap
/// confidence interval over seeds.
#[derive(Debug, Clone, Serialize)]
pub struct AggregateCurve {
    pub strategy: String,
    pub t: usize,
    pub mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n_seeds: usize,
}

/// Stable 64-bit FNV-1a, used to derive a bootstrap substream per
/// (variant, step) independent of execution order.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.len() == 1 {
        return sorted[0];
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Percentile bootstrap of the mean: `resamples` resampled means, 2.5% and
/// 97.5% percentiles as the interval.
fn bootstrap_ci(values: &[f64], resamples: usize, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let n = values.len();
    let mut means = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let mut sum = 0.0;
        for _ in 0..n {
            sum += values[rng.random_range(0..n)];
        }
        means.push(sum / n as f64);
    }
    means.sort_by(|a, b| a.partial_cmp(b).unwrap());
    (percentile(&means, 0.025), percentile(&means, 0.975))
}

/// Groups records by (strategy, t) and computes means with bootstrap CIs.
/// Records must be sorted by (strategy, seed, t); output is sorted by
/// (strategy, t).
pub fn aggregate(records: &[RunRecord], resamples: usize) -> Vec<AggregateCurve> {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<(String, usize), Vec<f64>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.strategy.clone(), r.t))
            .or_default()
            .push(r.normalized_reward);
    }
    groups
        .into_iter()
        .map(|((strategy, t), values)| {
            let n_seeds = values.len();
            let mean = values.iter().sum::<f64>() / n_seeds as f64;
            let mut rng = ChaCha8Rng::seed_from_u64(0xB005_EED0_57A7_5EEDu64 ^ fnv1a(strategy.as_bytes()));
            rng.set_stream(t as u64);
            let (ci_lo, ci_hi) = bootstrap_ci(&values, resamples, &mut rng);
            AggregateCurve { strategy, t, mean, ci_lo, ci_hi, n_seeds }
        })
        .collect()
}
