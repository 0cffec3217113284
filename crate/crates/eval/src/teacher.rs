//! Scale-label generation with a teacher model, and training-file export
//! for externally fine-tuned configurations.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use memeguard_core::{
    downsample_balance, filter_consistent, render_binary, split_train_val, write_atomic, FilterOutcome, LabelFormat,
    LearningType, LoadedManifest, MemeRecord, PromptConfig, PromptLibrary, ScaledLabel, Split, Strategy,
};
use memeguard_gateway::{AgentProfile, Gateway, GatewayError};
use rayon::prelude::*;
use serde::Serialize;

use crate::harness::{classification_text, classify_one, EvalError, EvalOptions, Parsed, Prediction};

pub const TEACHER_STAGE: &str = "teacher";

#[derive(Debug, Clone)]
pub struct TeacherRun {
    pub outcome: FilterOutcome,
    /// Memes whose teacher answer never parsed.
    pub invalid: Vec<Prediction>,
}

/// Asks the teacher for a 0-9 score on every record of `options.split`
/// (image and caption), then keeps scores consistent with the binary labels.
pub fn run_teacher(
    gateway: &Gateway,
    teacher: &AgentProfile,
    input: &LoadedManifest,
    strategy: Strategy,
    options: &EvalOptions,
) -> Result<TeacherRun, EvalError> {
    let config = PromptConfig {
        learning: LearningType::MultimodalPrompt,
        strategy,
        label_format: LabelFormat::Scale,
    };
    let prompt = PromptLibrary::builtin().compose(strategy, LabelFormat::Scale);
    let records: Vec<&MemeRecord> = input
        .manifest
        .records
        .iter()
        .filter(|r| r.split == options.split)
        .collect();
    if records.is_empty() {
        return Err(EvalError::EmptySplit(options.split));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers.max(1))
        .build()
        .map_err(|e| EvalError::Pool(e.to_string()))?;
    let predictions: Result<Vec<Prediction>, GatewayError> = pool.install(|| {
        records
            .par_iter()
            .map(|record| {
                let image = input.read_image(record).ok();
                classify_one(
                    gateway,
                    TEACHER_STAGE,
                    teacher,
                    &prompt.text,
                    config,
                    record,
                    image,
                    options.retry_budget,
                )
            })
            .collect()
    });
    let predictions = predictions.map_err(|source| EvalError::Backend {
        config: "teacher".into(),
        source,
    })?;
    let mut scaled = Vec::new();
    let mut invalid = Vec::new();
    for p in predictions {
        match p.parsed {
            Some(Parsed::Score(score)) if p.valid => scaled.push(ScaledLabel {
                meme_id: p.meme_id,
                score,
                teacher_id: teacher.model_id.clone(),
                consistent: false,
            }),
            _ => invalid.push(p),
        }
    }
    let outcome = filter_consistent(&scaled, &input.manifest)?;
    Ok(TeacherRun { outcome, invalid })
}

#[derive(Debug, Clone)]
pub struct ExportOptions {
    /// Fraction of train moved to val when the manifest has no val records.
    pub val_fraction: f64,
    pub seed: u64,
    /// Downsample the train part to equal class counts.
    pub balance: bool,
}

impl Default for ExportOptions {
    fn default() -> Self {
        ExportOptions {
            val_fraction: 0.1,
            seed: memeguard_core::DEFAULT_SEED,
            balance: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainingExample {
    pub id: String,
    pub prompt: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    pub target: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ExportCounts {
    pub train: usize,
    pub val: usize,
    /// Scale cells skip memes without a consistent scaled label.
    pub skipped_no_score: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExportSummary {
    pub val_fraction: f64,
    pub val_from_manifest: bool,
    pub seed: u64,
    pub balanced: bool,
    pub cells: BTreeMap<String, ExportCounts>,
}

/// Writes `train/<cell>.jsonl` and `val/<cell>.jsonl` for each fine-tuned
/// configuration (prompting configurations are skipped). Targets are the
/// bare canonical token: `TRUE`/`FALSE`, or the consistent teacher score.
pub fn export_training(
    input: &LoadedManifest,
    configs: &[PromptConfig],
    options: &ExportOptions,
    out_dir: &Path,
) -> Result<ExportSummary, EvalError> {
    let mut records: Vec<MemeRecord> = input
        .manifest
        .records
        .iter()
        .filter(|r| r.split != Split::Test)
        .cloned()
        .collect();
    let val_from_manifest = records.iter().any(|r| r.split == Split::Val);
    if !val_from_manifest {
        split_train_val(&mut records, options.val_fraction, options.seed);
    }
    let (mut train, val): (Vec<MemeRecord>, Vec<MemeRecord>) =
        records.into_iter().partition(|r| r.split == Split::Train);
    if options.balance {
        train = downsample_balance(&train, options.seed)?;
    }
    let scores: HashMap<&str, u8> = input
        .manifest
        .scaled_labels
        .iter()
        .filter(|s| s.consistent)
        .map(|s| (s.meme_id.as_str(), s.score))
        .collect();
    let library = PromptLibrary::builtin();

    let mut cells = BTreeMap::new();
    for &config in configs.iter().filter(|c| c.learning != LearningType::MultimodalPrompt) {
        let prompt = library.compose(config.strategy, config.label_format);
        let mut counts = ExportCounts::default();
        for (split, part) in [(Split::Train, &train), (Split::Val, &val)] {
            let mut lines = String::new();
            for record in part {
                let target = match config.label_format {
                    LabelFormat::Binary => render_binary(record.label).to_string(),
                    LabelFormat::Scale => match scores.get(record.id.as_str()) {
                        Some(score) => score.to_string(),
                        None => {
                            counts.skipped_no_score += 1;
                            continue;
                        }
                    },
                };
                let example = TrainingExample {
                    id: record.id.clone(),
                    prompt: classification_text(&prompt.text, &record.caption),
                    image: config
                        .learning
                        .is_multimodal()
                        .then(|| input.image_path(record).display().to_string()),
                    target,
                };
                lines.push_str(&serde_json::to_string(&example).expect("examples serialize"));
                lines.push('\n');
                match split {
                    Split::Train => counts.train += 1,
                    _ => counts.val += 1,
                }
            }
            let path = out_dir
                .join(split.to_string())
                .join(format!("{}.jsonl", config.file_stem()));
            write_atomic(&path, lines.as_bytes())?;
        }
        cells.insert(config.name(), counts);
    }
    let summary = ExportSummary {
        val_fraction: options.val_fraction,
        val_from_manifest,
        seed: options.seed,
        balanced: options.balance,
        cells,
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    write_atomic(&out_dir.join("export_summary.json"), json.as_bytes())?;
    Ok(summary)
}
