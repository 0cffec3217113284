use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::Utc;
use memeguard_core::{
    parse_binary, sha256_hex, sniff_extension, write_atomic, AugmentPrompts, DatasetError, ImageStore, Label,
    LoadedManifest, Manifest, MemeRecord, Origin, Split,
};
use memeguard_gateway::{
    AgentProfile, AgentRole, CacheEntry, CacheKey, ConfigError, Gateway, GatewayConfig, GatewayError, Message,
    ModelResponse, Stored,
};
use rayon::prelude::*;
use tracing::{info, warn};

use crate::error::{PipelineError, StageError};
use crate::funnel::FunnelReport;
use crate::record::{
    AttributionResult, AugmentationRecord, SimilarityMethod, SimilarityOutcome, StageLogEntry, Status,
};
use crate::render::{render_overlay, OverlayStyle, RENDERER_VERSION};
use crate::similarity::{jaccard, DEFAULT_JACCARD_THRESHOLD};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const AUGMENTATIONS_FILE: &str = "augmentations.jsonl";
pub const PROGRESS_FILE: &str = "augmentations.partial.jsonl";
pub const FUNNEL_JSON: &str = "funnel.json";
pub const FUNNEL_TEXT: &str = "funnel.txt";

const LOCAL_RENDER_STAGE: &str = "render-local";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderMode {
    /// Ask the render agent; optionally fall back to the local overlay when
    /// no image comes back.
    Remote { fallback: bool },
    Local,
}

impl RenderMode {
    pub fn name(self) -> &'static str {
        match self {
            RenderMode::Remote { fallback: true } => "remote+fallback",
            RenderMode::Remote { fallback: false } => "remote",
            RenderMode::Local => "local",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SimilarityMode {
    Judge,
    Jaccard { threshold: f64 },
}

impl SimilarityMode {
    pub fn jaccard() -> Self {
        SimilarityMode::Jaccard {
            threshold: DEFAULT_JACCARD_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub render: RenderMode,
    pub similarity: SimilarityMode,
    pub workers: usize,
    /// Re-queries after an unparseable verdict or a rejected rewrite.
    pub retry_budget: u32,
    /// Skip inputs that already reached a terminal status (other than
    /// `failed`) in `out_dir`.
    pub resume: bool,
    /// Only these splits are augmented; `None` means all.
    pub splits: Option<Vec<Split>>,
    pub style: OverlayStyle,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            render: RenderMode::Remote { fallback: true },
            similarity: SimilarityMode::Judge,
            workers: 4,
            retry_budget: 2,
            resume: false,
            splits: None,
            style: OverlayStyle::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Agents {
    pub describe: AgentProfile,
    pub attribute: AgentProfile,
    pub rewrite: AgentProfile,
    pub render: Option<AgentProfile>,
    pub similarity: Option<AgentProfile>,
}

impl Agents {
    /// Resolves the agents the options need from a gateway config.
    pub fn from_config(config: &GatewayConfig, options: &PipelineOptions) -> Result<Self, ConfigError> {
        let render = match options.render {
            RenderMode::Remote { .. } => Some(config.profile(AgentRole::Render)?),
            RenderMode::Local => None,
        };
        let similarity = match options.similarity {
            SimilarityMode::Judge => Some(config.profile(AgentRole::Similarity)?),
            SimilarityMode::Jaccard { .. } => None,
        };
        Ok(Agents {
            describe: config.profile(AgentRole::Describe)?,
            attribute: config.profile(AgentRole::Attribute)?,
            rewrite: config.profile(AgentRole::Rewrite)?,
            render,
            similarity,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rendered {
    pub bytes: Vec<u8>,
    pub fallback: bool,
}

#[derive(Debug)]
pub struct RunOutput {
    pub manifest: Manifest,
    pub records: Vec<AugmentationRecord>,
    pub funnel: FunnelReport,
}

pub struct Pipeline<'g> {
    gateway: &'g Gateway,
    agents: Agents,
    prompts: AugmentPrompts,
    options: PipelineOptions,
}

impl<'g> Pipeline<'g> {
    pub fn new(gateway: &'g Gateway, agents: Agents, options: PipelineOptions) -> Result<Self, PipelineError> {
        if matches!(options.render, RenderMode::Remote { .. }) && agents.render.is_none() {
            return Err(PipelineError::Config("remote rendering needs a render agent".into()));
        }
        if options.similarity == SimilarityMode::Judge && agents.similarity.is_none() {
            return Err(PipelineError::Config("judged similarity needs a similarity agent".into()));
        }
        if let SimilarityMode::Jaccard { threshold } = options.similarity {
            if !(0.0..=1.0).contains(&threshold) {
                return Err(PipelineError::Config(format!("jaccard threshold {threshold} outside [0, 1]")));
            }
        }
        Ok(Pipeline {
            gateway,
            agents,
            prompts: AugmentPrompts::default(),
            options,
        })
    }

    pub fn with_prompts(mut self, prompts: AugmentPrompts) -> Self {
        self.prompts = prompts;
        self
    }

    pub fn options(&self) -> &PipelineOptions {
        &self.options
    }

    fn call(
        &self,
        stage: &str,
        profile: &AgentProfile,
        messages: Vec<Message>,
        attempt: u32,
        log: &mut Vec<StageLogEntry>,
    ) -> Result<ModelResponse, StageError> {
        let response = self
            .gateway
            .complete_attempt(stage, &profile.request(messages), attempt)?;
        log.push(StageLogEntry {
            stage: stage.to_string(),
            cache_key: response.key.hex(),
            timestamp: response.created_at,
        });
        Ok(response)
    }

    /// Asks a yes/no question, re-querying on unparseable answers.
    fn yes_no(
        &self,
        stage: &'static str,
        profile: &AgentProfile,
        prompt: String,
        log: &mut Vec<StageLogEntry>,
    ) -> Result<bool, StageError> {
        let mut last = String::new();
        for attempt in 0..=self.options.retry_budget {
            let response = self.call(stage, profile, vec![Message::user(prompt.clone())], attempt, log)?;
            match parse_binary(&response.text) {
                Ok(label) => return Ok(label == Label::Hateful),
                Err(_) => {
                    warn!(stage, attempt, text = %response.text, "unparseable verdict");
                    last = response.text;
                }
            }
        }
        Err(StageError::Unparseable {
            stage,
            text: last,
            attempts: self.options.retry_budget + 1,
        })
    }

    pub fn describe_background(&self, image: &[u8], log: &mut Vec<StageLogEntry>) -> Result<String, StageError> {
        if image.is_empty() {
            return Err(StageError::InvalidImage("zero-byte image".into()));
        }
        image::load_from_memory(image).map_err(|e| StageError::InvalidImage(e.to_string()))?;
        let message = Message::user_with_image(self.prompts.describe(), image.to_vec());
        let response = self.call("describe", &self.agents.describe, vec![message], 0, log)?;
        let text = response.text.trim();
        if text.is_empty() {
            return Err(StageError::EmptyDescription);
        }
        Ok(text.to_string())
    }

    pub fn attribute(
        &self,
        meme_id: &str,
        description: &str,
        caption: &str,
        log: &mut Vec<StageLogEntry>,
    ) -> Result<AttributionResult, StageError> {
        let caption_hateful = self.yes_no(
            "attribute_caption",
            &self.agents.attribute,
            self.prompts.judge_caption(caption),
            log,
        )?;
        let background_hateful = self.yes_no(
            "attribute_background",
            &self.agents.attribute,
            self.prompts.judge_background(description),
            log,
        )?;
        Ok(AttributionResult::from_verdicts(meme_id, caption_hateful, background_hateful))
    }

    /// Rewrites the caption and accepts it only once the caption judge calls
    /// it non-hateful. Rejected or empty rewrites are re-queried within the
    /// retry budget.
    pub fn neutralize_caption(
        &self,
        caption: &str,
        description: &str,
        log: &mut Vec<StageLogEntry>,
    ) -> Result<String, StageError> {
        let prompt = self.prompts.rewrite(caption, description);
        let mut reason = String::new();
        for attempt in 0..=self.options.retry_budget {
            let response = self.call("rewrite", &self.agents.rewrite, vec![Message::user(prompt.clone())], attempt, log)?;
            let candidate = clean_caption(&response.text);
            if candidate.is_empty() {
                reason = "empty caption".into();
                continue;
            }
            let hateful = self.yes_no(
                "verify_caption",
                &self.agents.attribute,
                self.prompts.judge_caption(&candidate),
                log,
            )?;
            if !hateful {
                return Ok(candidate);
            }
            reason = format!("{candidate:?} judged hateful");
        }
        Err(StageError::VerificationFailed(reason))
    }

    pub fn render_meme(
        &self,
        description: &str,
        new_caption: &str,
        source_image: &[u8],
        log: &mut Vec<StageLogEntry>,
    ) -> Result<Rendered, StageError> {
        let fallback = match self.options.render {
            RenderMode::Local => return self.render_local(new_caption, source_image, log),
            RenderMode::Remote { fallback } => fallback,
        };
        let profile = self
            .agents
            .render
            .as_ref()
            .ok_or_else(|| StageError::RenderFailed("no render agent".into()))?;
        let prompt = self.prompts.render(description, new_caption);
        let reason = match self.call("render", profile, vec![Message::user(prompt)], 0, log) {
            Ok(response) => match response.image {
                Some(bytes) if image::load_from_memory(&bytes).is_ok() => {
                    return Ok(Rendered { bytes, fallback: false })
                }
                Some(_) => "response image is not decodable".to_string(),
                None => "response contained no image".to_string(),
            },
            Err(StageError::Gateway(GatewayError::SafetyRefusal { reason, .. })) => format!("refused: {reason}"),
            Err(e) => return Err(e),
        };
        if fallback {
            self.render_local(new_caption, source_image, log)
        } else {
            Err(StageError::RenderFailed(reason))
        }
    }

    /// Local overlay, memoized in the gateway cache so replayed runs reuse the
    /// original timestamp.
    fn render_local(
        &self,
        new_caption: &str,
        source_image: &[u8],
        log: &mut Vec<StageLogEntry>,
    ) -> Result<Rendered, StageError> {
        let style = format!("{:?}", self.options.style);
        let source_digest = sha256_hex(source_image);
        let key = CacheKey::from_parts([LOCAL_RENDER_STAGE, RENDERER_VERSION, &style, new_caption, &source_digest]);
        let cache = self.gateway.cache();
        if let Some((entry, Some(bytes))) = cache.and_then(|c| c.get(LOCAL_RENDER_STAGE, &key)) {
            log.push(StageLogEntry {
                stage: LOCAL_RENDER_STAGE.into(),
                cache_key: key.hex(),
                timestamp: entry.created_at,
            });
            return Ok(Rendered { bytes, fallback: true });
        }
        let mut bytes = render_overlay(source_image, new_caption, &self.options.style)?;
        let mut created_at = Utc::now();
        if let Some(cache) = cache {
            let entry = CacheEntry {
                stage: LOCAL_RENDER_STAGE.into(),
                model_id: RENDERER_VERSION.into(),
                text: String::new(),
                image_sha256: None,
                backend_meta: Default::default(),
                refusal: None,
                created_at,
            };
            let stored = cache
                .put(&key, &entry, Some(&bytes))
                .map_err(|e| StageError::Gateway(GatewayError::Cache(e)))?;
            if let Stored::Existing(existing, Some(image)) = stored {
                created_at = existing.created_at;
                bytes = image;
            }
        }
        log.push(StageLogEntry {
            stage: LOCAL_RENDER_STAGE.into(),
            cache_key: key.hex(),
            timestamp: created_at,
        });
        Ok(Rendered { bytes, fallback: true })
    }

    /// Describes the new image and compares it with the old description.
    /// Returns the outcome and the new description.
    pub fn verify_similarity(
        &self,
        old_description: &str,
        new_image: &[u8],
        log: &mut Vec<StageLogEntry>,
    ) -> Result<(SimilarityOutcome, String), StageError> {
        let new_description = self.describe_background(new_image, log)?;
        let outcome = match self.options.similarity {
            SimilarityMode::Jaccard { threshold } => {
                let score = jaccard(old_description, &new_description);
                SimilarityOutcome {
                    method: SimilarityMethod::Jaccard,
                    passed: score >= threshold,
                    score: Some(score),
                }
            }
            SimilarityMode::Judge => {
                let profile = self
                    .agents
                    .similarity
                    .as_ref()
                    .expect("checked in Pipeline::new");
                let similar = self.yes_no(
                    "similarity",
                    profile,
                    self.prompts.similarity(old_description, &new_description),
                    log,
                )?;
                SimilarityOutcome {
                    method: SimilarityMethod::Judge,
                    passed: similar,
                    score: None,
                }
            }
        };
        Ok((outcome, new_description))
    }

    /// Runs one hateful record through every stage. Never fails; errors end
    /// up in the record's status.
    pub fn process_record(
        &self,
        source: &MemeRecord,
        image: Result<Vec<u8>, DatasetError>,
        store: &ImageStore,
    ) -> AugmentationRecord {
        let mut record = AugmentationRecord::new(&source.id, &source.caption);
        if let Err((stage, err)) = self.drive(&mut record, source, image, store) {
            match err {
                StageError::VerificationFailed(reason) => {
                    record.error = Some(reason);
                    record.advance(Status::RewriteRejected);
                }
                StageError::RenderFailed(reason) => {
                    record.error = Some(reason);
                    record.advance(Status::RenderFailed);
                }
                err => {
                    warn!(id = %source.id, stage, error = %err, "record failed");
                    record.fail(stage, err);
                }
            }
        }
        record
    }

    fn drive(
        &self,
        record: &mut AugmentationRecord,
        source: &MemeRecord,
        image: Result<Vec<u8>, DatasetError>,
        store: &ImageStore,
    ) -> Result<(), (&'static str, StageError)> {
        let image = image.map_err(|e| ("load", e.into()))?;

        let description = self
            .describe_background(&image, &mut record.stage_log)
            .map_err(|e| ("describe", e))?;
        record.description = Some(description.clone());
        record.advance(Status::Described);

        let attribution = self
            .attribute(&source.id, &description, &source.caption, &mut record.stage_log)
            .map_err(|e| ("attribute", e))?;
        let eligible = attribution.is_eligible();
        record.attribution = Some(attribution);
        record.advance(Status::Attributed);
        if !eligible {
            record.advance(Status::Ineligible);
            return Ok(());
        }

        let new_caption = self
            .neutralize_caption(&source.caption, &description, &mut record.stage_log)
            .map_err(|e| ("rewrite", e))?;
        record.new_caption = Some(new_caption.clone());
        record.advance(Status::Neutralized);

        let rendered = self
            .render_meme(&description, &new_caption, &image, &mut record.stage_log)
            .map_err(|e| ("render", e))?;
        let reference = store
            .put(&rendered.bytes, sniff_extension(&rendered.bytes))
            .map_err(|e| ("render", e.into()))?;
        record.rendered_image_ref = Some(reference);
        record.render_fallback = rendered.fallback;
        record.advance(Status::Rendered);

        let (outcome, new_description) = self
            .verify_similarity(&description, &rendered.bytes, &mut record.stage_log)
            .map_err(|e| ("similarity", e))?;
        record.new_description = Some(new_description);
        let passed = outcome.passed;
        record.similarity = Some(outcome);
        record.advance(if passed { Status::Verified } else { Status::SimilarityFailed });
        Ok(())
    }

    /// Augments every hateful record of `input` and writes the extended
    /// dataset to `out_dir`: `manifest.jsonl` with images under `images/`,
    /// the per-record lineage in `augmentations.jsonl`, and the funnel report.
    pub fn run(&self, input: &LoadedManifest, out_dir: &Path) -> Result<RunOutput, PipelineError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| PipelineError::Io { path, source }
        };
        fs::create_dir_all(out_dir).map_err(io(out_dir))?;
        let store = ImageStore::open(out_dir)?;
        let progress_path = out_dir.join(PROGRESS_FILE);
        let final_path = out_dir.join(AUGMENTATIONS_FILE);

        let mut finished: HashMap<String, AugmentationRecord> = HashMap::new();
        if self.options.resume {
            for path in [&final_path, &progress_path] {
                for record in read_progress(path)? {
                    // Failed records are retried; their finished stages replay from cache.
                    if record.status.is_terminal() && record.status != Status::Failed {
                        finished.insert(record.source_id.clone(), record);
                    }
                }
            }
        } else if progress_path.exists() {
            fs::remove_file(&progress_path).map_err(io(&progress_path))?;
        }

        let inputs: Vec<&MemeRecord> = input
            .manifest
            .records
            .iter()
            .filter(|r| r.label == Label::Hateful && r.origin == Origin::Original)
            .filter(|r| self.options.splits.as_ref().is_none_or(|s| s.contains(&r.split)))
            .collect();
        let todo: Vec<&MemeRecord> = inputs
            .iter()
            .copied()
            .filter(|r| !finished.contains_key(&r.id))
            .collect();
        info!(inputs = inputs.len(), resumed = inputs.len() - todo.len(), "augmenting");

        let progress = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&progress_path)
            .map_err(io(&progress_path))?;
        let progress = Mutex::new(progress);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.options.workers.max(1))
            .build()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        let done: Vec<Result<AugmentationRecord, PipelineError>> = pool.install(|| {
            todo.par_iter()
                .map(|source| {
                    let record = self.process_record(source, input.read_image(source), &store);
                    let mut line = serde_json::to_string(&record).expect("records serialize");
                    line.push('\n');
                    let mut file = progress.lock().unwrap_or_else(|p| p.into_inner());
                    file.write_all(line.as_bytes())
                        .and_then(|()| file.flush())
                        .map_err(io(&progress_path))?;
                    Ok(record)
                })
                .collect()
        });
        for record in done {
            let record = record?;
            finished.insert(record.source_id.clone(), record);
        }

        let records: Vec<AugmentationRecord> = inputs
            .iter()
            .map(|r| finished.remove(&r.id).expect("every input was processed"))
            .collect();
        let manifest = self.merge(input, &records, &store)?;
        let (render, method, threshold) = self.describe_options();
        let funnel = FunnelReport::from_records(&records, render, method, threshold);

        manifest.save(&out_dir.join(MANIFEST_FILE))?;
        let mut lines = String::new();
        for r in &records {
            lines.push_str(&serde_json::to_string(r).expect("records serialize"));
            lines.push('\n');
        }
        write_atomic(&final_path, lines.as_bytes())?;
        let funnel_json = serde_json::to_string_pretty(&funnel).expect("funnel serializes") + "\n";
        write_atomic(&out_dir.join(FUNNEL_JSON), funnel_json.as_bytes())?;
        write_atomic(&out_dir.join(FUNNEL_TEXT), funnel.to_text().as_bytes())?;
        fs::remove_file(&progress_path).map_err(io(&progress_path))?;

        Ok(RunOutput {
            manifest,
            records,
            funnel,
        })
    }

    fn describe_options(&self) -> (&'static str, &'static str, Option<f64>) {
        let (method, threshold) = match self.options.similarity {
            SimilarityMode::Judge => ("judge", None),
            SimilarityMode::Jaccard { threshold } => ("jaccard", Some(threshold)),
        };
        (self.options.render.name(), method, threshold)
    }

    /// D ∪ D̃: originals (images copied into the output store) followed by one
    /// augmented record per verified candidate, in input order.
    fn merge(
        &self,
        input: &LoadedManifest,
        records: &[AugmentationRecord],
        store: &ImageStore,
    ) -> Result<Manifest, PipelineError> {
        let mut out = Vec::with_capacity(input.manifest.records.len() + records.len());
        for r in &input.manifest.records {
            let bytes = input.read_image(r)?;
            let image_ref = store.put(&bytes, sniff_extension(&bytes))?;
            out.push(MemeRecord { image_ref, ..r.clone() });
        }
        let index = input.manifest.index();
        let mut taken: std::collections::HashSet<String> = out.iter().map(|r| r.id.clone()).collect();
        for aug in records.iter().filter(|r| r.status == Status::Verified) {
            debug_assert!(aug.is_consistent());
            let source = index[aug.source_id.as_str()];
            let mut id = format!("{}_aug", source.id);
            let mut n = 2;
            while taken.contains(&id) {
                id = format!("{}_aug{n}", source.id);
                n += 1;
            }
            taken.insert(id.clone());
            out.push(MemeRecord {
                id,
                image_ref: aug.rendered_image_ref.clone().expect("verified records are rendered"),
                caption: aug.new_caption.clone().expect("verified records have a caption"),
                label: Label::NotHateful,
                split: source.split,
                origin: Origin::Augmented,
                source_id: Some(source.id.clone()),
            });
        }
        let manifest = Manifest {
            schema_version: input.manifest.schema_version,
            records: out,
            scaled_labels: input.manifest.scaled_labels.clone(),
        };
        manifest.check()?;
        Ok(manifest)
    }
}

/// Trims whitespace and one pair of wrapping quotes.
pub fn clean_caption(raw: &str) -> String {
    let t = raw.trim();
    for q in ['"', '\'', '“'] {
        let close = if q == '“' { '”' } else { q };
        if t.len() >= 2 && t.starts_with(q) && t.ends_with(close) {
            return t[q.len_utf8()..t.len() - close.len_utf8()].trim().to_string();
        }
    }
    t.to_string()
}

fn read_progress(path: &PathBuf) -> Result<Vec<AugmentationRecord>, PipelineError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(source) => return Err(PipelineError::Io { path: path.clone(), source }),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| PipelineError::Io { path: path.clone(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(r) => out.push(r),
            // A torn final line from an interrupted run is dropped and redone.
            Err(e) if e.is_eof() => break,
            Err(e) => {
                return Err(PipelineError::Progress {
                    path: path.clone(),
                    line: i + 1,
                    reason: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}
