//! Binary classification metrics over (gold, predicted) pairs.

use memeguard_core::Label;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_RESAMPLES: usize = 1000;
pub const CONFIDENCE: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("no predictions to score")]
    EmptyInput,
    #[error("bootstrap needs at least one resample")]
    NoResamples,
}

/// (gold, predicted)
pub type Pair = (Label, Label);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    WeightedF1,
}

impl Metric {
    pub fn score(self, pairs: &[Pair]) -> Result<f64, MetricError> {
        match self {
            Metric::Accuracy => accuracy(pairs),
            Metric::WeightedF1 => weighted_f1(pairs),
        }
    }
}

pub fn accuracy(pairs: &[Pair]) -> Result<f64, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let correct = pairs.iter().filter(|(g, p)| g == p).count();
    Ok(correct as f64 / pairs.len() as f64)
}

/// Per-class F1 averaged with weights equal to each class's gold support.
pub fn weighted_f1(pairs: &[Pair]) -> Result<f64, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let mut total = 0.0;
    for class in [Label::NotHateful, Label::Hateful] {
        let support = pairs.iter().filter(|(g, _)| *g == class).count();
        if support == 0 {
            continue;
        }
        let tp = pairs.iter().filter(|(g, p)| *g == class && *p == class).count() as f64;
        let predicted = pairs.iter().filter(|(_, p)| *p == class).count() as f64;
        let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let recall = tp / support as f64;
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        total += f1 * support as f64;
    }
    Ok(total / pairs.len() as f64)
}

/// Percentile bootstrap interval at [`CONFIDENCE`]: `resamples` draws of
/// `pairs.len()` items with replacement from a ChaCha8 stream seeded by
/// `seed`, quantiles by linear interpolation between order statistics.
pub fn bootstrap_interval(
    pairs: &[Pair],
    metric: Metric,
    resamples: usize,
    seed: u64,
) -> Result<(f64, f64), MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    if resamples == 0 {
        return Err(MetricError::NoResamples);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = pairs.len();
    let mut sample = Vec::with_capacity(n);
    let mut stats = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        sample.clear();
        sample.extend((0..n).map(|_| pairs[rng.random_range(0..n)]));
        stats.push(metric.score(&sample)?);
    }
    stats.sort_by(f64::total_cmp);
    let tail = (1.0 - CONFIDENCE) / 2.0;
    Ok((quantile(&stats, tail), quantile(&stats, 1.0 - tail)))
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}
