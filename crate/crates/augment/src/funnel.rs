use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::record::{AugmentationRecord, Status};

/// Per-status counts of one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunnelReport {
    pub inputs: usize,
    /// Every terminal status, zeros included.
    pub counts: BTreeMap<Status, usize>,
    /// Typology of records that got through attribution.
    pub typology: BTreeMap<String, usize>,
    pub fallback_renders: usize,
    pub augmented: usize,
    pub render_mode: String,
    pub similarity_method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jaccard_threshold: Option<f64>,
}

impl FunnelReport {
    pub fn from_records(
        records: &[AugmentationRecord],
        render_mode: &str,
        similarity_method: &str,
        jaccard_threshold: Option<f64>,
    ) -> Self {
        let mut counts: BTreeMap<Status, usize> = Status::TERMINAL.iter().map(|s| (*s, 0)).collect();
        let mut typology = BTreeMap::new();
        let mut fallback_renders = 0;
        for r in records {
            *counts.entry(r.status).or_default() += 1;
            if let Some(a) = &r.attribution {
                *typology.entry(a.typology.to_string()).or_default() += 1;
            }
            if r.render_fallback {
                fallback_renders += 1;
            }
        }
        FunnelReport {
            inputs: records.len(),
            augmented: counts[&Status::Verified],
            counts,
            typology,
            fallback_renders,
            render_mode: render_mode.to_string(),
            similarity_method: similarity_method.to_string(),
            jaccard_threshold,
        }
    }

    /// Every input ended in exactly one terminal status.
    pub fn is_conserved(&self) -> bool {
        let terminal: usize = self
            .counts
            .iter()
            .filter(|(s, _)| s.is_terminal())
            .map(|(_, n)| n)
            .sum();
        terminal == self.inputs && self.counts.iter().all(|(s, n)| s.is_terminal() || *n == 0)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<20}{:>8}", "inputs", self.inputs);
        for (status, n) in &self.counts {
            let _ = writeln!(out, "  {:<18}{:>8}", status.as_str(), n);
        }
        let _ = writeln!(out, "{:<20}{:>8}", "augmented", self.augmented);
        let _ = writeln!(out, "{:<20}{:>8}", "fallback renders", self.fallback_renders);
        for (t, n) in &self.typology {
            let _ = writeln!(out, "typology {:<11}{:>8}", t, n);
        }
        let _ = write!(out, "render={} similarity={}", self.render_mode, self.similarity_method);
        if let Some(t) = self.jaccard_threshold {
            let _ = write!(out, " threshold={t}");
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "conserved: {}", if self.is_conserved() { "yes" } else { "NO" });
        out
    }
}
