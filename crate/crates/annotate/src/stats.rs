//! Summary statistics over completed annotations.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Ratings, Verdict, LIKERT_MAX};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("no completed tasks")]
    EmptyInput,
}

/// Fraction of verdicts that are `agree`.
pub fn agreement_rate(verdicts: &[Verdict]) -> Result<f64, StatsError> {
    if verdicts.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let agree = verdicts.iter().filter(|v| **v == Verdict::Agree).count();
    Ok(agree as f64 / verdicts.len() as f64)
}

pub type Histogram = [usize; LIKERT_MAX as usize + 1];

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityDistributions {
    pub completed: usize,
    pub formatting: Histogram,
    pub background_alignment: Histogram,
    /// Excludes pairs flagged `caption_missing`.
    pub caption_alignment: Histogram,
    pub overall: Histogram,
    pub caption_missing: usize,
}

/// Per-dimension counts of each 0-5 score. Input items are
/// `(ratings, caption_missing)` of completed pair tasks.
pub fn quality_distributions(items: &[(Ratings, bool)]) -> Result<QualityDistributions, StatsError> {
    if items.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let mut d = QualityDistributions {
        completed: items.len(),
        ..Default::default()
    };
    for (r, missing) in items {
        d.formatting[usize::from(r.formatting)] += 1;
        d.background_alignment[usize::from(r.background_alignment)] += 1;
        d.overall[usize::from(r.overall)] += 1;
        if *missing {
            d.caption_missing += 1;
        } else if let Some(c) = r.caption_alignment {
            d.caption_alignment[usize::from(c)] += 1;
        }
    }
    Ok(d)
}
