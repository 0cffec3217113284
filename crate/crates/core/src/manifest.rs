//! Line-delimited manifest files.
//!
//! A manifest is UTF-8 text with one JSON object per line. Three line shapes
//! are recognised:
//!
//! * `{"schema_version": 1}` -- optional header, first line only;
//! * `{"id", "img", "text", "label", "split", "origin", "source_id"?}` -- a meme record;
//! * `{"scaled": {"meme_id", "score", "teacher_id", "consistent"}}` -- a teacher score.
//!
//! Image paths are resolved relative to the directory holding the manifest.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::DatasetError;
use crate::record::{MemeRecord, ScaledLabel};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub schema_version: u32,
    pub records: Vec<MemeRecord>,
    pub scaled_labels: Vec<ScaledLabel>,
}

impl Default for Manifest {
    fn default() -> Self {
        Manifest {
            schema_version: SCHEMA_VERSION,
            records: Vec::new(),
            scaled_labels: Vec::new(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    schema_version: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScaledLine {
    scaled: ScaledLabel,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Line {
    Header(Header),
    Scaled(ScaledLine),
    Record(MemeRecord),
}

impl Manifest {
    pub fn new(records: Vec<MemeRecord>) -> Self {
        Manifest {
            records,
            ..Manifest::default()
        }
    }

    /// Parses manifest text and checks every structural invariant except
    /// image resolution.
    pub fn parse(text: &str) -> Result<Self, DatasetError> {
        let mut manifest = Manifest::default();
        let mut seen_header = false;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let line: Line = serde_json::from_str(raw).map_err(|e| DatasetError::MalformedLine {
                line: line_no,
                reason: e.to_string(),
            })?;
            match line {
                Line::Header(h) => {
                    if seen_header || !manifest.records.is_empty() || !manifest.scaled_labels.is_empty() {
                        return Err(DatasetError::MalformedLine {
                            line: line_no,
                            reason: "schema header must be the first line".into(),
                        });
                    }
                    if h.schema_version != SCHEMA_VERSION {
                        return Err(DatasetError::MalformedLine {
                            line: line_no,
                            reason: format!("unsupported schema_version {}", h.schema_version),
                        });
                    }
                    seen_header = true;
                    manifest.schema_version = h.schema_version;
                }
                Line::Scaled(s) => manifest.scaled_labels.push(s.scaled),
                Line::Record(r) => manifest.records.push(r),
            }
        }
        manifest.check()?;
        Ok(manifest)
    }

    /// Verifies id uniqueness, per-record invariants and scaled-label references.
    pub fn check(&self) -> Result<(), DatasetError> {
        let mut ids = HashSet::with_capacity(self.records.len());
        for record in &self.records {
            if !ids.insert(record.id.as_str()) {
                return Err(DatasetError::DuplicateId(record.id.clone()));
            }
            record.validate()?;
        }
        for scaled in &self.scaled_labels {
            if !ids.contains(scaled.meme_id.as_str()) {
                return Err(DatasetError::UnknownMeme(scaled.meme_id.clone()));
            }
            if scaled.score > 9 {
                return Err(DatasetError::OutOfRange(scaled.score.into()));
            }
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let header = Header {
            schema_version: self.schema_version,
        };
        out.push_str(&serde_json::to_string(&header).expect("header serializes"));
        out.push('\n');
        for record in &self.records {
            out.push_str(&serde_json::to_string(record).expect("record serializes"));
            out.push('\n');
        }
        for scaled in &self.scaled_labels {
            let line = ScaledLine {
                scaled: scaled.clone(),
            };
            out.push_str(&serde_json::to_string(&line).expect("scaled label serializes"));
            out.push('\n');
        }
        out
    }

    /// Writes the manifest atomically (temp file in the same directory, then rename).
    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        write_atomic(path, self.to_jsonl().as_bytes())
    }

    pub fn get(&self, id: &str) -> Option<&MemeRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn index(&self) -> HashMap<&str, &MemeRecord> {
        self.records.iter().map(|r| (r.id.as_str(), r)).collect()
    }

    /// Concatenates manifests (e.g. seen + unseen test sets). A repeated id is
    /// accepted only when the record is identical; the first copy is kept.
    pub fn concat(parts: Vec<Manifest>) -> Result<Manifest, DatasetError> {
        let mut merged = Manifest::default();
        let mut by_id: HashMap<String, MemeRecord> = HashMap::new();
        for part in parts {
            for record in part.records {
                match by_id.get(&record.id) {
                    Some(existing) if *existing == record => continue,
                    Some(_) => return Err(DatasetError::DuplicateId(record.id)),
                    None => {
                        by_id.insert(record.id.clone(), record.clone());
                        merged.records.push(record);
                    }
                }
            }
            for scaled in part.scaled_labels {
                if !merged.scaled_labels.contains(&scaled) {
                    merged.scaled_labels.push(scaled);
                }
            }
        }
        merged.check()?;
        Ok(merged)
    }
}

/// A manifest together with the directory its image paths are relative to.
#[derive(Debug, Clone)]
pub struct LoadedManifest {
    pub manifest: Manifest,
    pub base_dir: PathBuf,
}

impl LoadedManifest {
    pub fn image_path(&self, record: &MemeRecord) -> PathBuf {
        resolve_image(&self.base_dir, &record.image_ref)
    }

    pub fn read_image(&self, record: &MemeRecord) -> Result<Vec<u8>, DatasetError> {
        let path = self.image_path(record);
        fs::read(&path).map_err(|_| DatasetError::MissingImage(record.id.clone()))
    }
}

pub fn resolve_image(base_dir: &Path, image_ref: &str) -> PathBuf {
    let p = Path::new(image_ref);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base_dir.join(p)
    }
}

/// Reads, parses and fully validates a manifest file, including that every
/// image reference resolves to a regular file.
pub fn load_manifest(path: &Path) -> Result<LoadedManifest, DatasetError> {
    let text = fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
    let manifest = Manifest::parse(&text)?;
    let base_dir = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    for record in &manifest.records {
        let image = resolve_image(&base_dir, &record.image_ref);
        if !image.is_file() {
            return Err(DatasetError::MissingImage(record.id.clone()));
        }
    }
    Ok(LoadedManifest { manifest, base_dir })
}

/// Writes via a temp file in the same directory and renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), DatasetError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).map_err(|e| DatasetError::io(&dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| DatasetError::io(&dir, e))?;
    tmp.write_all(bytes).map_err(|e| DatasetError::io(path, e))?;
    tmp.persist(path)
        .map_err(|e| DatasetError::io(path, e.error))?;
    Ok(())
}
