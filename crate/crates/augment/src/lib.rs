//! Counterfactual augmentation of caption-hateful memes.
//!
//! Each hateful record is described, attributed to a modality, and, when only
//! its caption is hateful, given a rewritten non-hateful caption, re-rendered
//! and checked for background similarity. Verified candidates become new
//! non-hateful records that point back at their source.

pub mod error;
pub mod funnel;
pub mod pipeline;
pub mod record;
pub mod render;
pub mod similarity;

pub use error::{PipelineError, StageError};
pub use funnel::FunnelReport;
pub use pipeline::{
    clean_caption, Agents, Pipeline, PipelineOptions, RenderMode, Rendered, RunOutput, SimilarityMode,
    AUGMENTATIONS_FILE, FUNNEL_JSON, FUNNEL_TEXT, MANIFEST_FILE, PROGRESS_FILE,
};
pub use record::{
    AttributionResult, AugmentationRecord, HateModality, SimilarityMethod, SimilarityOutcome, StageLogEntry, Status,
};
pub use render::{render_overlay, wrap_caption, OverlayStyle, RenderError, RENDERER_VERSION};
pub use similarity::{jaccard, token_set, DEFAULT_JACCARD_THRESHOLD};
