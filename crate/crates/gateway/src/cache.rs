//! On-disk response cache: `<root>/<stage>/<first-2-hex>/<digest>.json`, with
//! image payloads in a sibling `<digest>.<image-sha-prefix>.bin`.
//!
//! Every file is written to a temp file in the target directory and renamed
//! into place, so readers never observe partial entries. The `.bin` is
//! written before its `.json`; an entry exists once the `.json` does. The
//! first writer of a `.json` wins, so concurrent identical requests all end
//! up reporting the same stored response.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::request::CacheKey;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub stage: String,
    pub model_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_sha256: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub backend_meta: BTreeMap<String, String>,
    /// Set when the backend declined the request; replayed as a refusal.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refusal: Option<String>,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stored {
    Inserted,
    /// Another writer got there first.
    Existing(CacheEntry, Option<Vec<u8>>),
}

#[derive(Debug, Clone)]
pub struct ResponseCache {
    root: PathBuf,
}

impl ResponseCache {
    pub fn open(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(ResponseCache { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn base_path(&self, stage: &str, key: &CacheKey) -> PathBuf {
        let hex = key.hex();
        self.root.join(sanitize(stage)).join(&hex[..2]).join(hex)
    }

    pub fn json_path(&self, stage: &str, key: &CacheKey) -> PathBuf {
        self.base_path(stage, key).with_extension("json")
    }

    pub fn bin_path(&self, stage: &str, key: &CacheKey, image_sha256: &str) -> PathBuf {
        let prefix = &image_sha256[..image_sha256.len().min(16)];
        self.base_path(stage, key).with_extension(format!("{prefix}.bin"))
    }

    /// Returns the entry and its image bytes, or `None` on a miss. Entries
    /// whose image is missing or fails its digest check count as misses.
    pub fn get(&self, stage: &str, key: &CacheKey) -> Option<(CacheEntry, Option<Vec<u8>>)> {
        let raw = fs::read(self.json_path(stage, key)).ok()?;
        let entry: CacheEntry = serde_json::from_slice(&raw).ok()?;
        let image = match &entry.image_sha256 {
            Some(expected) => {
                let bytes = fs::read(self.bin_path(stage, key, expected)).ok()?;
                if &hex::encode(Sha256::digest(&bytes)) != expected {
                    return None;
                }
                Some(bytes)
            }
            None => None,
        };
        Some((entry, image))
    }

    /// Stores `entry` unless the key already has one, in which case the
    /// existing entry is returned untouched.
    pub fn put(&self, key: &CacheKey, entry: &CacheEntry, image: Option<&[u8]>) -> io::Result<Stored> {
        let mut entry = entry.clone();
        if let Some(bytes) = image {
            let digest = hex::encode(Sha256::digest(bytes));
            write_atomic(&self.bin_path(&entry.stage, key, &digest), bytes, true)?;
            entry.image_sha256 = Some(digest);
        } else {
            entry.image_sha256 = None;
        }
        let json = serde_json::to_vec_pretty(&entry).map_err(io::Error::other)?;
        if write_atomic(&self.json_path(&entry.stage, key), &json, false)? {
            return Ok(Stored::Inserted);
        }
        match self.get(&entry.stage, key) {
            Some((existing, image)) => Ok(Stored::Existing(existing, image)),
            // The existing entry is unreadable; replace it.
            None => {
                write_atomic(&self.json_path(&entry.stage, key), &json, true)?;
                Ok(Stored::Inserted)
            }
        }
    }

    pub fn contains(&self, stage: &str, key: &CacheKey) -> bool {
        self.json_path(stage, key).is_file()
    }
}

fn sanitize(stage: &str) -> String {
    stage
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Returns false when `overwrite` is off and `path` already exists.
fn write_atomic(path: &Path, bytes: &[u8], overwrite: bool) -> io::Result<bool> {
    let dir = path.parent().expect("cache paths have a parent");
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_data()?;
    if overwrite {
        tmp.persist(path).map_err(|e| e.error)?;
        return Ok(true);
    }
    match tmp.persist_noclobber(path) {
        Ok(_) => Ok(true),
        Err(e) if e.error.kind() == io::ErrorKind::AlreadyExists => Ok(false),
        Err(e) => Err(e.error),
    }
}
