//! Data model and prompt components for hateful-meme classification and
//! counterfactual augmentation.
//!
//! * [`record`] / [`manifest`] -- meme records and line-delimited manifests.
//! * [`image_store`] -- content-addressed image files.
//! * [`labels`] / [`balance`] -- 0-9 score mapping, teacher-label filtering,
//!   class balancing and split utilities.
//! * [`prompt`] / [`parse`] -- classification prompt composition and verdict parsing.
//! * [`templates`] -- prompts for the augmentation agents.

pub mod balance;
pub mod error;
pub mod image_store;
pub mod labels;
pub mod manifest;
pub mod parse;
pub mod prompt;
pub mod record;
pub mod templates;

pub use balance::{downsample_balance, split_train_val, DEFAULT_SEED};
pub use error::DatasetError;
pub use image_store::{sha256_hex, sniff_extension, ImageStore};
pub use labels::{filter_consistent, scale_to_binary, FilterOutcome};
pub use manifest::{load_manifest, write_atomic, LoadedManifest, Manifest};
pub use parse::{parse_binary, parse_scale, render_binary, ParseError};
pub use prompt::{
    compose_prompt, enumerate_configs, filter_configs, Component, LabelFormat, LearningType,
    PromptConfig, PromptLibrary, PromptText, Strategy,
};
pub use record::{Label, MemeRecord, Origin, ScaledLabel, Split, Typology};
pub use templates::AugmentPrompts;
