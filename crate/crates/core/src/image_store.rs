use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::DatasetError;
use crate::manifest::write_atomic;

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Directory of image files named `<sha256-hex>.<ext>`.
///
/// References handed out by [`ImageStore::put`] are relative to the store's
/// parent directory (`images/<digest>.<ext>`), so a manifest written next to
/// the store directory resolves them directly.
#[derive(Debug, Clone)]
pub struct ImageStore {
    root: PathBuf,
    prefix: String,
}

impl ImageStore {
    /// Opens (creating if needed) `<base>/images`.
    pub fn open(base: &Path) -> Result<Self, DatasetError> {
        Self::open_named(base, "images")
    }

    pub fn open_named(base: &Path, name: &str) -> Result<Self, DatasetError> {
        let root = base.join(name);
        fs::create_dir_all(&root).map_err(|e| DatasetError::io(&root, e))?;
        Ok(ImageStore {
            root,
            prefix: name.to_string(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Stores `bytes` under their digest and returns the relative reference.
    /// Existing entries are left untouched.
    pub fn put(&self, bytes: &[u8], extension: &str) -> Result<String, DatasetError> {
        let name = format!("{}.{}", sha256_hex(bytes), extension.trim_start_matches('.'));
        let path = self.root.join(&name);
        if !path.is_file() {
            write_atomic(&path, bytes)?;
        }
        Ok(format!("{}/{}", self.prefix, name))
    }

    pub fn path_of(&self, reference: &str) -> PathBuf {
        let name = reference
            .strip_prefix(&format!("{}/", self.prefix))
            .unwrap_or(reference);
        self.root.join(name)
    }

    pub fn get(&self, reference: &str) -> Result<Vec<u8>, DatasetError> {
        let path = self.path_of(reference);
        fs::read(&path).map_err(|e| DatasetError::io(path, e))
    }
}

/// Guesses an image file extension from magic bytes; falls back to `bin`.
pub fn sniff_extension(bytes: &[u8]) -> &'static str {
    if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
        "png"
    } else if bytes.starts_with(&[0xFF, 0xD8, 0xFF]) {
        "jpg"
    } else if bytes.starts_with(b"GIF87a") || bytes.starts_with(b"GIF89a") {
        "gif"
    } else if bytes.len() >= 12 && &bytes[0..4] == b"RIFF" && &bytes[8..12] == b"WEBP" {
        "webp"
    } else if bytes.starts_with(b"BM") {
        "bmp"
    } else {
        "bin"
    }
}
