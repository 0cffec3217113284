//! Task store: a directory holding the task list, the memes it shows, and
//! an append-only event log of claims and responses.
//!
//! ```text
//! <store>/store.json     StoreConfig
//! <store>/tasks.jsonl    one Task per line
//! <store>/memes.jsonl    manifest of every meme a task shows
//! <store>/images/        content-addressed copies of their images
//! <store>/events.jsonl   Event log
//! ```

use std::collections::{HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, MutexGuard};
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use memeguard_core::{
    load_manifest, sniff_extension, write_atomic, DatasetError, ImageStore, LoadedManifest, Manifest, MemeRecord,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Answer, InvalidAnswer, Ratings, Submission, Task, TaskKind, Verdict};
use crate::stats::{agreement_rate, quality_distributions, QualityDistributions};

pub const CONFIG_FILE: &str = "store.json";
pub const TASKS_FILE: &str = "tasks.jsonl";
pub const MEMES_FILE: &str = "memes.jsonl";
pub const EVENTS_FILE: &str = "events.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreConfig {
    /// Accept one response per annotator instead of one per task.
    #[serde(default)]
    pub multi_annotator: bool,
    /// How long a served task stays reserved for its annotator.
    #[serde(default = "default_lease")]
    pub lease_secs: u64,
    /// Rewrite the log without claim events once this many have accumulated.
    #[serde(default = "default_compact")]
    pub compact_after: usize,
}

fn default_lease() -> u64 {
    30 * 60
}

fn default_compact() -> usize {
    1000
}

impl Default for StoreConfig {
    fn default() -> Self {
        StoreConfig {
            multi_annotator: false,
            lease_secs: default_lease(),
            compact_after: default_compact(),
        }
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("{path} line {line}: {reason}")]
    Corrupt { path: PathBuf, line: usize, reason: String },
    #[error("task store already initialized at {0}")]
    Exists(PathBuf),
    #[error("task {0:?} refers to a meme missing from the manifest")]
    UnknownMeme(String),
    #[error("duplicate task id {0:?}")]
    DuplicateTask(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Claimed {
        task_id: String,
        annotator: String,
        at: DateTime<Utc>,
    },
    Responded {
        task_id: String,
        annotator: String,
        at: DateTime<Utc>,
        answer: Answer,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StoredResponse {
    pub annotator: String,
    pub at: DateTime<Utc>,
    pub answer: Answer,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NextTask {
    pub task: Option<Task>,
    /// Tasks still open to this annotator, including the one returned.
    pub remaining: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubmitOutcome {
    Stored,
    /// Identical resubmission; nothing written.
    Unchanged,
}

#[derive(Debug, Error)]
pub enum SubmitError {
    #[error("unknown task {0:?}")]
    UnknownTask(String),
    #[error(transparent)]
    Invalid(#[from] InvalidAnswer),
    #[error("{0}")]
    Conflict(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskCounts {
    pub total: usize,
    /// Tasks with at least one response.
    pub completed: usize,
    pub responses: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementStats {
    pub responses: usize,
    pub agree: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    /// `single` (one response per task) or `multi` (one per annotator).
    pub annotator_mode: String,
    pub agreement_tasks: TaskCounts,
    pub pair_tasks: TaskCounts,
    pub agreement: Option<AgreementStats>,
    pub pair_quality: Option<QualityDistributions>,
}

impl Stats {
    pub fn to_text(&self) -> String {
        let mut out = format!("annotator mode: {}\n", self.annotator_mode);
        let counts = |name: &str, c: &TaskCounts| {
            format!(
                "{name}: {}/{} tasks completed, {} responses\n",
                c.completed, c.total, c.responses
            )
        };
        out += &counts("agreement", &self.agreement_tasks);
        out += &counts("pair quality", &self.pair_tasks);
        if let Some(a) = &self.agreement {
            out += &format!("agreement rate: {:.4} ({}/{})\n", a.rate, a.agree, a.responses);
        }
        if let Some(q) = &self.pair_quality {
            out += "score                 0    1    2    3    4    5\n";
            for (name, h) in [
                ("formatting", &q.formatting),
                ("background_alignment", &q.background_alignment),
                ("caption_alignment", &q.caption_alignment),
                ("overall", &q.overall),
            ] {
                out += &format!("{name:<20}");
                for n in h {
                    out += &format!(" {n:>4}");
                }
                out.push('\n');
            }
            out += &format!("caption missing: {}\n", q.caption_missing);
        }
        out
    }
}

/// Copies the memes `tasks` show (and the sources of any augmented ones)
/// with their images into `dir` and writes the task list and config.
pub fn init_store(dir: &Path, source: &LoadedManifest, tasks: &[Task], config: &StoreConfig) -> Result<(), StoreError> {
    if dir.join(TASKS_FILE).exists() {
        return Err(StoreError::Exists(dir.to_path_buf()));
    }
    let index = source.manifest.index();
    let mut ids = HashSet::new();
    let mut wanted: Vec<&MemeRecord> = Vec::new();
    let mut task_ids = HashSet::new();
    for task in tasks {
        if !task_ids.insert(task.task_id.as_str()) {
            return Err(StoreError::DuplicateTask(task.task_id.clone()));
        }
        for id in task.meme_ids() {
            let record = *index.get(id).ok_or_else(|| StoreError::UnknownMeme(task.task_id.clone()))?;
            let lineage = std::iter::once(record).chain(record.source_id.as_deref().and_then(|s| index.get(s).copied()));
            for r in lineage {
                if ids.insert(r.id.as_str()) {
                    wanted.push(r);
                }
            }
        }
    }
    let images = ImageStore::open(dir)?;
    let mut records = Vec::with_capacity(wanted.len());
    for record in wanted {
        let bytes = source.read_image(record)?;
        let mut copy = record.clone();
        copy.image_ref = images.put(&bytes, sniff_extension(&bytes))?;
        records.push(copy);
    }
    Manifest::new(records).save(&dir.join(MEMES_FILE))?;
    write_atomic(&dir.join(TASKS_FILE), &to_jsonl(tasks))?;
    let json = serde_json::to_string_pretty(config).expect("config serializes") + "\n";
    write_atomic(&dir.join(CONFIG_FILE), json.as_bytes())?;
    Ok(())
}

fn to_jsonl<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).expect("items serialize");
        out.push(b'\n');
    }
    out
}

struct Claim {
    annotator: String,
    expires: Instant,
}

struct State {
    responses: HashMap<String, Vec<StoredResponse>>,
    claims: HashMap<String, Vec<Claim>>,
    log: File,
    claim_events: usize,
}

pub struct Store {
    dir: PathBuf,
    config: StoreConfig,
    tasks: Vec<Task>,
    task_index: HashMap<String, usize>,
    memes: LoadedManifest,
    state: Mutex<State>,
}

impl Store {
    pub fn open(dir: &Path) -> Result<Store, StoreError> {
        let config_path = dir.join(CONFIG_FILE);
        let text = fs::read_to_string(&config_path).map_err(io_err(&config_path))?;
        let config: StoreConfig = serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
            path: config_path.clone(),
            line: e.line(),
            reason: e.to_string(),
        })?;

        let tasks_path = dir.join(TASKS_FILE);
        let text = fs::read_to_string(&tasks_path).map_err(io_err(&tasks_path))?;
        let mut tasks = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let task: Task = serde_json::from_str(line).map_err(|e| StoreError::Corrupt {
                path: tasks_path.clone(),
                line: i + 1,
                reason: e.to_string(),
            })?;
            tasks.push(task);
        }
        let mut task_index = HashMap::new();
        for (i, task) in tasks.iter().enumerate() {
            if task_index.insert(task.task_id.clone(), i).is_some() {
                return Err(StoreError::DuplicateTask(task.task_id.clone()));
            }
        }
        let memes = load_manifest(&dir.join(MEMES_FILE))?;
        let meme_index = memes.manifest.index();
        for task in &tasks {
            if task.meme_ids().iter().any(|id| !meme_index.contains_key(id)) {
                return Err(StoreError::UnknownMeme(task.task_id.clone()));
            }
        }

        let events_path = dir.join(EVENTS_FILE);
        let events = read_events(&events_path)?;
        let mut responses: HashMap<String, Vec<StoredResponse>> = HashMap::new();
        let mut claim_events = 0;
        for (line, event) in events {
            let corrupt = |reason: String| StoreError::Corrupt {
                path: events_path.clone(),
                line,
                reason,
            };
            match event {
                Event::Claimed { .. } => claim_events += 1,
                Event::Responded {
                    task_id,
                    annotator,
                    at,
                    answer,
                } => {
                    let task = task_index
                        .get(&task_id)
                        .map(|&i| &tasks[i])
                        .ok_or_else(|| corrupt(format!("unknown task {task_id:?}")))?;
                    if answer.kind() != task.kind() {
                        return Err(corrupt(format!("{} answer for {} task", answer.kind(), task.kind())));
                    }
                    answer.check().map_err(|e| corrupt(e.to_string()))?;
                    let list = responses.entry(task_id).or_default();
                    if list.iter().any(|r| r.annotator == annotator) {
                        return Err(corrupt(format!("second response from {annotator:?}")));
                    }
                    list.push(StoredResponse { annotator, at, answer });
                }
            }
        }
        let log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&events_path)
            .map_err(io_err(&events_path))?;
        Ok(Store {
            dir: dir.to_path_buf(),
            config,
            tasks,
            task_index,
            memes,
            state: Mutex::new(State {
                responses,
                claims: HashMap::new(),
                log,
                claim_events,
            }),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn config(&self) -> &StoreConfig {
        &self.config
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn task(&self, task_id: &str) -> Option<&Task> {
        self.task_index.get(task_id).map(|&i| &self.tasks[i])
    }

    pub fn meme(&self, id: &str) -> Option<&MemeRecord> {
        self.memes.manifest.get(id)
    }

    pub fn meme_image(&self, id: &str) -> Option<(PathBuf, Vec<u8>)> {
        let record = self.meme(id)?;
        let path = self.memes.image_path(record);
        let bytes = fs::read(&path).ok()?;
        Some((path, bytes))
    }

    /// Image by content address (`<sha256>.<ext>`); anything else is `None`.
    pub fn image_by_name(&self, name: &str) -> Option<Vec<u8>> {
        let (digest, ext) = name.split_once('.')?;
        let valid = digest.len() == 64
            && digest.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
            && !ext.is_empty()
            && ext.bytes().all(|b| b.is_ascii_alphanumeric());
        if !valid {
            return None;
        }
        fs::read(self.dir.join("images").join(name)).ok()
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn lease(&self) -> Duration {
        Duration::from_secs(self.config.lease_secs)
    }

    fn open_for(&self, state: &State, task: &Task, annotator: &str, now: Instant) -> bool {
        let responses = state.responses.get(&task.task_id);
        if responses.is_some_and(|rs| rs.iter().any(|r| r.annotator == annotator)) {
            return false;
        }
        if self.config.multi_annotator {
            return true;
        }
        if responses.is_some_and(|rs| !rs.is_empty()) {
            return false;
        }
        !state
            .claims
            .get(&task.task_id)
            .is_some_and(|cs| cs.iter().any(|c| c.annotator != annotator && c.expires > now))
    }

    /// The task this annotator should work on next, claimed for the lease
    /// period. An annotator holding an open claim gets the same task back;
    /// a task they already answered is never served to them again.
    pub fn next_task(&self, annotator: &str, kind: Option<TaskKind>) -> Result<NextTask, StoreError> {
        let now = Instant::now();
        let mut state = self.lock();
        let open: Vec<&Task> = self
            .tasks
            .iter()
            .filter(|t| kind.is_none_or(|k| t.kind() == k))
            .filter(|t| self.open_for(&state, t, annotator, now))
            .collect();
        let held = open.iter().find(|t| {
            state
                .claims
                .get(&t.task_id)
                .is_some_and(|cs| cs.iter().any(|c| c.annotator == annotator && c.expires > now))
        });
        let Some(task) = held.or(open.first()).copied() else {
            return Ok(NextTask {
                task: None,
                remaining: 0,
            });
        };
        let claims = state.claims.entry(task.task_id.clone()).or_default();
        claims.retain(|c| c.expires > now && c.annotator != annotator);
        claims.push(Claim {
            annotator: annotator.to_string(),
            expires: now + self.lease(),
        });
        if held.is_none() {
            self.append(
                &mut state,
                &Event::Claimed {
                    task_id: task.task_id.clone(),
                    annotator: annotator.to_string(),
                    at: Utc::now(),
                },
            )?;
            state.claim_events += 1;
            if state.claim_events >= self.config.compact_after {
                self.compact_locked(&mut state)?;
            }
        }
        Ok(NextTask {
            task: Some(task.clone()),
            remaining: open.len(),
        })
    }

    /// Validates and records a response. Responses are immutable: the same
    /// answer again is a no-op, a different one is a conflict.
    pub fn submit(&self, task_id: &str, submission: Submission) -> Result<SubmitOutcome, SubmitError> {
        let task = self
            .task(task_id)
            .ok_or_else(|| SubmitError::UnknownTask(task_id.to_string()))?;
        let (annotator, answer) = submission.into_answer(task.kind())?;
        let mut state = self.lock();
        if let Some(existing) = state.responses.get(task_id) {
            if let Some(mine) = existing.iter().find(|r| r.annotator == annotator) {
                return if mine.answer == answer {
                    Ok(SubmitOutcome::Unchanged)
                } else {
                    Err(SubmitError::Conflict(format!(
                        "{annotator:?} already answered task {task_id:?} differently"
                    )))
                };
            }
            if !self.config.multi_annotator && !existing.is_empty() {
                return Err(SubmitError::Conflict(format!("task {task_id:?} already has a response")));
            }
        }
        let at = Utc::now();
        self.append(
            &mut state,
            &Event::Responded {
                task_id: task_id.to_string(),
                annotator: annotator.clone(),
                at,
                answer: answer.clone(),
            },
        )?;
        state
            .responses
            .entry(task_id.to_string())
            .or_default()
            .push(StoredResponse { annotator: annotator.clone(), at, answer });
        if let Some(claims) = state.claims.get_mut(task_id) {
            claims.retain(|c| c.annotator != annotator);
        }
        Ok(SubmitOutcome::Stored)
    }

    pub fn responses(&self, task_id: &str) -> Vec<StoredResponse> {
        self.lock().responses.get(task_id).cloned().unwrap_or_default()
    }

    pub fn stats(&self) -> Stats {
        let state = self.lock();
        let mut agreement_tasks = TaskCounts::default();
        let mut pair_tasks = TaskCounts::default();
        let mut verdicts: Vec<Verdict> = Vec::new();
        let mut ratings: Vec<(Ratings, bool)> = Vec::new();
        for task in &self.tasks {
            let responses = state.responses.get(&task.task_id).map(Vec::as_slice).unwrap_or(&[]);
            let counts = match task.kind() {
                TaskKind::Agreement => &mut agreement_tasks,
                TaskKind::PairQuality => &mut pair_tasks,
            };
            counts.total += 1;
            counts.completed += usize::from(!responses.is_empty());
            counts.responses += responses.len();
            for r in responses {
                match &r.answer {
                    Answer::Agreement { response } => verdicts.push(*response),
                    Answer::PairQuality {
                        ratings: x,
                        caption_missing,
                    } => ratings.push((*x, *caption_missing)),
                }
            }
        }
        let agreement = agreement_rate(&verdicts).ok().map(|rate| AgreementStats {
            responses: verdicts.len(),
            agree: verdicts.iter().filter(|v| **v == Verdict::Agree).count(),
            rate,
        });
        Stats {
            annotator_mode: if self.config.multi_annotator { "multi" } else { "single" }.to_string(),
            agreement_tasks,
            pair_tasks,
            agreement,
            pair_quality: quality_distributions(&ratings).ok(),
        }
    }

    /// Rewrites the log keeping only responses.
    pub fn compact(&self) -> Result<(), StoreError> {
        let mut state = self.lock();
        self.compact_locked(&mut state)
    }

    fn compact_locked(&self, state: &mut State) -> Result<(), StoreError> {
        let path = self.dir.join(EVENTS_FILE);
        let kept: Vec<Event> = read_events(&path)?
            .into_iter()
            .map(|(_, e)| e)
            .filter(|e| matches!(e, Event::Responded { .. }))
            .collect();
        write_atomic(&path, &to_jsonl(&kept))?;
        state.log = OpenOptions::new().append(true).open(&path).map_err(io_err(&path))?;
        state.claim_events = 0;
        Ok(())
    }

    fn append(&self, state: &mut State, event: &Event) -> Result<(), StoreError> {
        let mut line = serde_json::to_vec(event).expect("events serialize");
        line.push(b'\n');
        let path = self.dir.join(EVENTS_FILE);
        state.log.write_all(&line).map_err(io_err(&path))?;
        if matches!(event, Event::Responded { .. }) {
            state.log.sync_data().map_err(io_err(&path))?;
        }
        Ok(())
    }
}

/// Parses the event log. A torn final line (no trailing newline, not
/// parseable) is cut off so later appends start on a clean line.
fn read_events(path: &Path) -> Result<Vec<(usize, Event)>, StoreError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    let mut events = Vec::new();
    let mut offset = 0;
    for (i, line) in text.split_inclusive('\n').enumerate() {
        let complete = line.ends_with('\n');
        if !line.trim().is_empty() {
            match serde_json::from_str::<Event>(line.trim_end()) {
                Ok(event) => events.push((i + 1, event)),
                Err(_) if !complete => {
                    tracing::warn!(path = %path.display(), "dropping torn final event line");
                    let file = OpenOptions::new().write(true).open(path).map_err(io_err(path))?;
                    file.set_len(offset as u64).map_err(io_err(path))?;
                    break;
                }
                Err(e) => {
                    return Err(StoreError::Corrupt {
                        path: path.to_path_buf(),
                        line: i + 1,
                        reason: e.to_string(),
                    })
                }
            }
        }
        offset += line.len();
    }
    Ok(events)
}
