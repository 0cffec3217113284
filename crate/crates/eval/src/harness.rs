//! The classification matrix: one prompt per configuration, one query per
//! test meme, metrics with bootstrap intervals per configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use memeguard_core::{
    parse_binary, parse_scale, scale_to_binary, write_atomic, Label, LabelFormat, LearningType, LoadedManifest,
    MemeRecord, PromptConfig, PromptLibrary, Split,
};
use memeguard_gateway::{AgentProfile, AgentRole, ConfigError, Gateway, GatewayConfig, GatewayError, Message};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{info, warn};

use crate::metrics::{accuracy, bootstrap_interval, weighted_f1, Metric, Pair, CONFIDENCE, DEFAULT_RESAMPLES};

pub const CLASSIFY_STAGE: &str = "classify";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("backend unreachable for {config}: {source}")]
    Backend {
        config: String,
        #[source]
        source: GatewayError,
    },
    #[error("manifest has no {0} records")]
    EmptySplit(Split),
    #[error(transparent)]
    Dataset(#[from] memeguard_core::DatasetError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("no classifier configured for {0}")]
    NoClassifier(LearningType),
    #[error("could not build worker pool: {0}")]
    Pool(String),
}

/// Parsed model output: a 0-9 score or a TRUE/FALSE verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Parsed {
    Score(u8),
    Verdict(bool),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub meme_id: String,
    pub config: PromptConfig,
    pub gold: Label,
    pub raw: String,
    pub parsed: Option<Parsed>,
    pub mapped: Option<Label>,
    pub valid: bool,
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Prediction {
    fn invalid(meme_id: &str, config: PromptConfig, gold: Label, raw: String, attempts: u32, error: String) -> Self {
        Prediction {
            meme_id: meme_id.to_string(),
            config,
            gold,
            raw,
            parsed: None,
            mapped: None,
            valid: false,
            attempts,
            error: Some(error),
        }
    }
}

/// Parses `raw` under `format` and maps it to a binary label.
pub fn interpret(raw: &str, format: LabelFormat) -> Result<(Parsed, Label), memeguard_core::ParseError> {
    match format {
        LabelFormat::Binary => {
            let label = parse_binary(raw)?;
            Ok((Parsed::Verdict(label.is_hateful()), label))
        }
        LabelFormat::Scale => {
            let score = parse_scale(raw)?;
            let label = scale_to_binary(score.into()).expect("parse_scale returns 0-9");
            Ok((Parsed::Score(score), label))
        }
    }
}

/// Text sent for one meme: the composed prompt followed by its caption.
pub fn classification_text(prompt: &str, caption: &str) -> String {
    format!("{}\n\nImage caption: {}", prompt.trim_end(), caption)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: PromptConfig,
    /// Valid predictions scored.
    pub n: usize,
    pub invalid_count: usize,
    /// Absent when no prediction was valid.
    pub accuracy: Option<f64>,
    pub weighted_f1: Option<f64>,
    pub interval_accuracy: Option<Interval>,
    pub interval_f1: Option<Interval>,
    pub seed: u64,
    pub resamples: usize,
}

impl EvalReport {
    pub fn from_predictions(config: PromptConfig, predictions: &[Prediction], seed: u64, resamples: usize) -> Self {
        let pairs: Vec<Pair> = predictions
            .iter()
            .filter(|p| p.valid)
            .map(|p| (p.gold, p.mapped.expect("valid predictions are mapped")))
            .collect();
        let mut report = EvalReport {
            config,
            n: pairs.len(),
            invalid_count: predictions.len() - pairs.len(),
            accuracy: None,
            weighted_f1: None,
            interval_accuracy: None,
            interval_f1: None,
            seed,
            resamples,
        };
        if pairs.is_empty() {
            return report;
        }
        let acc = accuracy(&pairs).expect("non-empty");
        let f1 = weighted_f1(&pairs).expect("non-empty");
        report.accuracy = Some(acc);
        report.weighted_f1 = Some(f1);
        report.interval_accuracy = Some(containing(&pairs, Metric::Accuracy, acc, resamples, seed));
        report.interval_f1 = Some(containing(&pairs, Metric::WeightedF1, f1, resamples, seed));
        report
    }
}

/// The percentile interval, widened when needed so it contains the point
/// estimate (weighted F1 is biased under resampling, so the percentile
/// interval can miss it on small sets).
fn containing(pairs: &[Pair], metric: Metric, point: f64, resamples: usize, seed: u64) -> Interval {
    let (lo, hi) = bootstrap_interval(pairs, metric, resamples.max(1), seed).expect("non-empty");
    Interval {
        lo: lo.min(point),
        hi: hi.max(point),
    }
}

/// Classifier profile per learning type.
#[derive(Debug, Clone, Default)]
pub struct Classifiers {
    by_learning: BTreeMap<LearningType, AgentProfile>,
}

impl Classifiers {
    pub fn uniform(profile: AgentProfile) -> Self {
        Classifiers {
            by_learning: LearningType::ALL.iter().map(|l| (*l, profile.clone())).collect(),
        }
    }

    pub fn with(mut self, learning: LearningType, profile: AgentProfile) -> Self {
        self.by_learning.insert(learning, profile);
        self
    }

    /// A backend named `classify_<learning>` serves that learning type;
    /// otherwise the `classify` agent does.
    pub fn from_config(config: &GatewayConfig, learnings: &[LearningType]) -> Result<Self, ConfigError> {
        let mut out = Classifiers::default();
        for &learning in learnings {
            let dedicated = format!("classify_{}", learning.as_str());
            let profile = if config.has_backend(&dedicated) {
                config.backend_profile(&dedicated, AgentRole::Classify)?
            } else {
                config.profile(AgentRole::Classify)?
            };
            out.by_learning.insert(learning, profile);
        }
        Ok(out)
    }

    pub fn get(&self, learning: LearningType) -> Option<&AgentProfile> {
        self.by_learning.get(&learning)
    }
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub seed: u64,
    pub resamples: usize,
    pub retry_budget: u32,
    pub workers: usize,
    pub split: Split,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            seed: memeguard_core::DEFAULT_SEED,
            resamples: DEFAULT_RESAMPLES,
            retry_budget: 2,
            workers: 4,
            split: Split::Test,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConfigRun {
    pub report: EvalReport,
    pub predictions: Vec<Prediction>,
}

fn unreachable(err: &GatewayError) -> bool {
    matches!(
        err,
        GatewayError::BackendUnavailable { .. }
            | GatewayError::Timeout { .. }
            | GatewayError::UnknownModel(_)
            | GatewayError::Cache(_)
    )
}

/// Queries one meme under `config`, re-asking within the retry budget when
/// the answer does not parse. Returns `Err` only for unreachable backends.
#[allow(clippy::too_many_arguments)]
pub fn classify_one(
    gateway: &Gateway,
    stage: &str,
    profile: &AgentProfile,
    prompt: &str,
    config: PromptConfig,
    record: &MemeRecord,
    image: Option<Vec<u8>>,
    retry_budget: u32,
) -> Result<Prediction, GatewayError> {
    let text = classification_text(prompt, &record.caption);
    let message = match image {
        Some(bytes) => Message::user_with_image(text, bytes),
        None => Message::user(text),
    };
    let request = profile.request(vec![message]);
    let mut raw = String::new();
    let mut error = String::new();
    for attempt in 0..=retry_budget {
        let response = match gateway.complete_attempt(stage, &request, attempt) {
            Ok(r) => r,
            Err(e) if unreachable(&e) => return Err(e),
            Err(e) => {
                return Ok(Prediction::invalid(&record.id, config, record.label, raw, attempt + 1, e.to_string()));
            }
        };
        match interpret(&response.text, config.label_format) {
            Ok((parsed, mapped)) => {
                return Ok(Prediction {
                    meme_id: record.id.clone(),
                    config,
                    gold: record.label,
                    raw: response.text,
                    parsed: Some(parsed),
                    mapped: Some(mapped),
                    valid: true,
                    attempts: attempt + 1,
                    error: None,
                })
            }
            Err(e) => {
                error = e.to_string();
                raw = response.text;
            }
        }
    }
    Ok(Prediction::invalid(&record.id, config, record.label, raw, retry_budget + 1, error))
}

/// Evaluates every configuration on the records of `options.split`.
pub fn run_matrix(
    gateway: &Gateway,
    classifiers: &Classifiers,
    input: &LoadedManifest,
    configs: &[PromptConfig],
    options: &EvalOptions,
) -> Result<Vec<ConfigRun>, EvalError> {
    run_matrix_with(gateway, classifiers, input, configs, options, &PromptLibrary::builtin())
}

pub fn run_matrix_with(
    gateway: &Gateway,
    classifiers: &Classifiers,
    input: &LoadedManifest,
    configs: &[PromptConfig],
    options: &EvalOptions,
    library: &PromptLibrary,
) -> Result<Vec<ConfigRun>, EvalError> {
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

    let mut runs = Vec::with_capacity(configs.len());
    for &config in configs {
        let profile = classifiers
            .get(config.learning)
            .ok_or(EvalError::NoClassifier(config.learning))?;
        let prompt = library.compose(config.strategy, config.label_format);
        let multimodal = config.learning.is_multimodal();
        let predictions: Result<Vec<Prediction>, GatewayError> = pool.install(|| {
            records
                .par_iter()
                .map(|record| {
                    let image = if multimodal {
                        match input.read_image(record) {
                            Ok(bytes) => Some(bytes),
                            Err(e) => {
                                return Ok(Prediction::invalid(&record.id, config, record.label, String::new(), 0, e.to_string()));
                            }
                        }
                    } else {
                        None
                    };
                    classify_one(
                        gateway,
                        CLASSIFY_STAGE,
                        profile,
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
            config: config.name(),
            source,
        })?;
        let report = EvalReport::from_predictions(config, &predictions, options.seed, options.resamples);
        if report.invalid_count > 0 {
            warn!(config = %config, invalid = report.invalid_count, "invalid predictions excluded");
        }
        info!(config = %config, n = report.n, accuracy = ?report.accuracy, "config done");
        runs.push(ConfigRun { report, predictions });
    }
    Ok(runs)
}

fn fmt_point(x: Option<f64>, interval: Option<Interval>) -> String {
    match (x, interval) {
        (Some(x), Some(i)) => format!("{x:.4} [{:.4}, {:.4}]", i.lo, i.hi),
        _ => "n/a".to_string(),
    }
}

/// Fixed-width table of all reports.
pub fn report_table(reports: &[EvalReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<48} {:>5} {:>7}  {:<26} {:<26}",
        "config", "n", "invalid", "accuracy [95% CI]", "weighted-F1 [95% CI]"
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{:<48} {:>5} {:>7}  {:<26} {:<26}",
            r.config.name(),
            r.n,
            r.invalid_count,
            fmt_point(r.accuracy, r.interval_accuracy),
            fmt_point(r.weighted_f1, r.interval_f1),
        );
    }
    if let Some(r) = reports.first() {
        let _ = writeln!(
            out,
            "intervals: {:.0}% percentile bootstrap, {} resamples, seed {}",
            CONFIDENCE * 100.0,
            r.resamples,
            r.seed
        );
    }
    out
}

#[derive(Debug, Serialize)]
struct ReportFile<'a> {
    interval_method: String,
    reports: Vec<&'a EvalReport>,
}

/// Writes `predictions/<cell>.jsonl`, `reports.json` and `report.txt`.
pub fn write_outputs(out_dir: &Path, runs: &[ConfigRun]) -> Result<(), EvalError> {
    for run in runs {
        let mut lines = String::new();
        for p in &run.predictions {
            lines.push_str(&serde_json::to_string(p).expect("predictions serialize"));
            lines.push('\n');
        }
        let path = out_dir
            .join("predictions")
            .join(format!("{}.jsonl", run.report.config.file_stem()));
        write_atomic(&path, lines.as_bytes())?;
    }
    let reports: Vec<EvalReport> = runs.iter().map(|r| r.report.clone()).collect();
    let file = ReportFile {
        interval_method: format!("{:.0}% percentile bootstrap", CONFIDENCE * 100.0),
        reports: reports.iter().collect(),
    };
    let json = serde_json::to_string_pretty(&file).expect("reports serialize") + "\n";
    write_atomic(&out_dir.join("reports.json"), json.as_bytes())?;
    write_atomic(&out_dir.join("report.txt"), report_table(&reports).as_bytes())?;
    Ok(())
}
