use std::fmt;

use chrono::{DateTime, Utc};
use memeguard_core::Typology;
use serde::{Deserialize, Serialize};

/// Which modality carries the hate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HateModality {
    Image,
    Text,
    Both,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributionResult {
    pub meme_id: String,
    pub caption_hateful: bool,
    pub background_hateful: bool,
    pub modality: HateModality,
    pub typology: Typology,
}

impl AttributionResult {
    pub fn from_verdicts(meme_id: impl Into<String>, caption_hateful: bool, background_hateful: bool) -> Self {
        let modality = match (caption_hateful, background_hateful) {
            (true, true) => HateModality::Both,
            (true, false) => HateModality::Text,
            (false, true) => HateModality::Image,
            (false, false) => HateModality::None,
        };
        AttributionResult {
            meme_id: meme_id.into(),
            caption_hateful,
            background_hateful,
            modality,
            typology: Typology::from_verdicts(background_hateful, caption_hateful),
        }
    }

    /// Only caption-carried hate is rewritten.
    pub fn is_eligible(&self) -> bool {
        self.modality == HateModality::Text
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pending,
    Described,
    Attributed,
    Ineligible,
    Neutralized,
    RewriteRejected,
    Rendered,
    RenderFailed,
    Verified,
    SimilarityFailed,
    /// A stage errored (refusal, unparseable verdict, backend outage, bad image).
    Failed,
}

impl Status {
    pub const TERMINAL: [Status; 6] = [
        Status::Ineligible,
        Status::RewriteRejected,
        Status::RenderFailed,
        Status::Verified,
        Status::SimilarityFailed,
        Status::Failed,
    ];

    pub fn is_terminal(self) -> bool {
        Self::TERMINAL.contains(&self)
    }

    pub fn can_transition_to(self, next: Status) -> bool {
        use Status::*;
        if next == Failed {
            return !self.is_terminal();
        }
        matches!(
            (self, next),
            (Pending, Described)
                | (Described, Attributed)
                | (Attributed, Ineligible | Neutralized | RewriteRejected)
                | (Neutralized, Rendered | RenderFailed)
                | (Rendered, Verified | SimilarityFailed)
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Pending => "pending",
            Status::Described => "described",
            Status::Attributed => "attributed",
            Status::Ineligible => "ineligible",
            Status::Neutralized => "neutralized",
            Status::RewriteRejected => "rewrite_rejected",
            Status::Rendered => "rendered",
            Status::RenderFailed => "render_failed",
            Status::Verified => "verified",
            Status::SimilarityFailed => "similarity_failed",
            Status::Failed => "failed",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageLogEntry {
    pub stage: String,
    pub cache_key: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimilarityMethod {
    Judge,
    Jaccard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityOutcome {
    pub method: SimilarityMethod,
    pub passed: bool,
    /// Jaccard score; absent for judge decisions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

/// Lineage and state of one counterfactual candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationRecord {
    pub source_id: String,
    pub original_caption: String,
    #[serde(default)]
    pub description: Option<String>,
    #[serde(default)]
    pub attribution: Option<AttributionResult>,
    #[serde(default)]
    pub new_caption: Option<String>,
    #[serde(default)]
    pub rendered_image_ref: Option<String>,
    /// The local overlay produced the image instead of the render backend.
    #[serde(default)]
    pub render_fallback: bool,
    #[serde(default)]
    pub new_description: Option<String>,
    #[serde(default)]
    pub similarity: Option<SimilarityOutcome>,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default)]
    pub stage_log: Vec<StageLogEntry>,
}

impl AugmentationRecord {
    pub fn new(source_id: impl Into<String>, original_caption: impl Into<String>) -> Self {
        AugmentationRecord {
            source_id: source_id.into(),
            original_caption: original_caption.into(),
            description: None,
            attribution: None,
            new_caption: None,
            rendered_image_ref: None,
            render_fallback: false,
            new_description: None,
            similarity: None,
            status: Status::Pending,
            error: None,
            stage_log: Vec::new(),
        }
    }

    /// Moves to `next`. Panics on a transition the state machine forbids,
    /// which would be a pipeline bug.
    pub fn advance(&mut self, next: Status) {
        assert!(
            self.status.can_transition_to(next),
            "illegal status transition {} -> {next} for {}",
            self.status,
            self.source_id
        );
        self.status = next;
    }

    pub fn fail(&mut self, stage: &str, error: impl fmt::Display) {
        self.error = Some(format!("{stage}: {error}"));
        self.advance(Status::Failed);
    }

    /// Checks the invariants a verified record must satisfy.
    pub fn is_consistent(&self) -> bool {
        if self.status != Status::Verified {
            return true;
        }
        self.attribution.as_ref().is_some_and(AttributionResult::is_eligible)
            && self.new_caption.as_deref().is_some_and(|c| !c.trim().is_empty())
            && self.rendered_image_ref.is_some()
            && self.similarity.as_ref().is_some_and(|s| s.passed)
    }
}
