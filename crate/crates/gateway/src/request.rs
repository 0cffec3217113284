use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

/// A chat message with at most one inline image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub role: Role,
    pub text: String,
    pub image: Option<Vec<u8>>,
}

impl Message {
    pub fn user(text: impl Into<String>) -> Self {
        Message {
            role: Role::User,
            text: text.into(),
            image: None,
        }
    }

    pub fn user_with_image(text: impl Into<String>, image: Vec<u8>) -> Self {
        Message {
            role: Role::User,
            text: text.into(),
            image: Some(image),
        }
    }

    pub fn system(text: impl Into<String>) -> Self {
        Message {
            role: Role::System,
            text: text.into(),
            image: None,
        }
    }
}

/// Generation parameters. `None` leaves the backend default in place.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequestParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, Value>,
}

impl RequestParams {
    /// `other` wins wherever it sets a value.
    pub fn overlay(&self, other: &RequestParams) -> RequestParams {
        let mut extra = self.extra.clone();
        extra.extend(other.extra.iter().map(|(k, v)| (k.clone(), v.clone())));
        RequestParams {
            temperature: other.temperature.or(self.temperature),
            max_tokens: other.max_tokens.or(self.max_tokens),
            extra,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelRequest {
    pub model_id: String,
    pub messages: Vec<Message>,
    pub params: RequestParams,
}

impl ModelRequest {
    pub fn new(model_id: impl Into<String>, messages: Vec<Message>, params: RequestParams) -> Self {
        ModelRequest {
            model_id: model_id.into(),
            messages,
            params,
        }
    }

    pub fn image_digests(&self) -> Vec<String> {
        self.messages
            .iter()
            .filter_map(|m| m.image.as_deref())
            .map(|bytes| hex::encode(Sha256::digest(bytes)))
            .collect()
    }

    /// Key-sorted, whitespace-free JSON of the request with images replaced by
    /// their SHA-256 digests.
    pub fn canonical_json(&self) -> String {
        let messages: Vec<Value> = self
            .messages
            .iter()
            .map(|m| {
                json!({
                    "role": m.role.as_str(),
                    "text": m.text,
                    "image_sha256": m.image.as_deref().map(|b| hex::encode(Sha256::digest(b))),
                })
            })
            .collect();
        let value = json!({
            "model_id": self.model_id,
            "messages": messages,
            "params": serde_json::to_value(&self.params).expect("params serialize"),
        });
        canonical_string(&value)
    }

    /// Concatenated message text plus one `[image sha256:<hex>]` marker per image.
    pub fn haystack(&self) -> String {
        let mut out = String::new();
        for m in &self.messages {
            if !out.is_empty() {
                out.push('\n');
            }
            out.push_str(&m.text);
            if let Some(img) = &m.image {
                out.push_str(&format!("\n[image sha256:{}]", hex::encode(Sha256::digest(img))));
            }
        }
        out
    }
}

/// Serializes JSON with object keys sorted at every level, independent of the
/// map implementation serde_json was built with.
pub fn canonical_string(value: &Value) -> String {
    fn write(value: &Value, out: &mut String) {
        match value {
            Value::Object(map) => {
                let mut keys: Vec<&String> = map.keys().collect();
                keys.sort();
                out.push('{');
                for (i, k) in keys.into_iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push_str(&Value::String(k.clone()).to_string());
                    out.push(':');
                    write(&map[k], out);
                }
                out.push('}');
            }
            Value::Array(items) => {
                out.push('[');
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    write(v, out);
                }
                out.push(']');
            }
            other => out.push_str(&other.to_string()),
        }
    }
    let mut out = String::new();
    write(value, &mut out);
    out
}

/// 32-byte content key for a cached response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CacheKey([u8; 32]);

impl CacheKey {
    pub fn for_request(stage: &str, request: &ModelRequest, attempt: u32) -> Self {
        let mut parts: Vec<String> = vec![
            stage.to_string(),
            request.model_id.clone(),
            request.canonical_json(),
        ];
        parts.extend(request.image_digests());
        if attempt > 0 {
            parts.push(format!("attempt={attempt}"));
        }
        Self::from_parts(parts.iter().map(String::as_str))
    }

    /// Hashes length-prefixed parts so that no two part lists collide by
    /// concatenation.
    pub fn from_parts<'a>(parts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(b"memeguard-cache-v1");
        for part in parts {
            hasher.update((part.len() as u64).to_le_bytes());
            hasher.update(part.as_bytes());
        }
        let digest = hasher.finalize();
        let mut bytes = [0u8; 32];
        bytes.copy_from_slice(&digest);
        CacheKey(bytes)
    }

    pub fn hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let bytes = hex::decode(s).ok()?;
        let arr: [u8; 32] = bytes.try_into().ok()?;
        Some(CacheKey(arr))
    }
}

impl fmt::Display for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.hex())
    }
}

impl Serialize for CacheKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.hex())
    }
}

impl<'de> Deserialize<'de> for CacheKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        CacheKey::from_hex(&s).ok_or_else(|| serde::de::Error::custom("bad cache key"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelResponse {
    pub text: String,
    pub image: Option<Vec<u8>>,
    pub backend_meta: BTreeMap<String, String>,
    pub cached: bool,
    pub key: CacheKey,
    /// When the backend produced this response (the original call time for cache hits).
    pub created_at: DateTime<Utc>,
}
