//! Backend configuration file (TOML).
//!
//! ```toml
//! [cache]
//! dir = "cache"                      # relative to this file
//!
//! [retry]
//! max_attempts = 5
//! base_delay_ms = 500
//!
//! [backends.qwen]
//! kind = "http"                      # or "mock"
//! base_url = "http://localhost:8000/v1"
//! auth_env = "QWEN_API_KEY"          # API keys come from the environment only
//! model_id = "Qwen2.5-14B-Instruct"
//! requests_per_minute = 120
//! refusal_patterns = ["(?i)i can(no|')t help"]
//! params = { max_tokens = 1 }
//!
//! [backends.judge-mock]
//! kind = "mock"
//! model_id = "mock-judge"
//! default = { text = "No" }
//! rules = [{ pattern = "«H»", text = "Yes" }]
//!
//! [agents]
//! attribute = "qwen"                 # role -> backend name
//! ```
//!
//! A role without an `[agents]` entry falls back to a backend named after the role.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::num::NonZeroU32;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use regex::Regex;
use serde::Deserialize;
use serde_json::json;
use thiserror::Error;

use crate::backend::Backend;
use crate::cache::ResponseCache;
use crate::gateway::{Gateway, RetryPolicy};
use crate::http::HttpBackend;
use crate::mock::{mock_backend, MockReplySpec, MockRule, MockRuleSpec, MockScript};
use crate::request::{Message, ModelRequest, RequestParams};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("backend {backend:?}: {reason}")]
    Backend { backend: String, reason: String },
    #[error("no backend configured for agent role {0}")]
    MissingAgent(String),
    #[error("environment variable {var} (API key for backend {backend:?}) is not set")]
    MissingApiKey { backend: String, var: String },
}

/// Pipeline and harness agents. Each maps to one configured backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AgentRole {
    /// Background description of an image.
    Describe,
    /// Yes/No hatefulness moderator for captions and descriptions.
    Attribute,
    /// Caption rewriter.
    Rewrite,
    /// Meme image regeneration.
    Render,
    /// Yes/No judge comparing two descriptions.
    Similarity,
    /// Classifier queried by the evaluation harness.
    Classify,
    /// Scale-label teacher.
    Teacher,
}

impl AgentRole {
    pub const ALL: [AgentRole; 7] = [
        AgentRole::Describe,
        AgentRole::Attribute,
        AgentRole::Rewrite,
        AgentRole::Render,
        AgentRole::Similarity,
        AgentRole::Classify,
        AgentRole::Teacher,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentRole::Describe => "describe",
            AgentRole::Attribute => "attribute",
            AgentRole::Rewrite => "rewrite",
            AgentRole::Render => "render",
            AgentRole::Similarity => "similarity",
            AgentRole::Classify => "classify",
            AgentRole::Teacher => "teacher",
        }
    }

    pub fn default_model_id(self) -> &'static str {
        match self {
            AgentRole::Describe => "internlm-xcomposer2d5-7b",
            AgentRole::Attribute | AgentRole::Similarity => "Qwen2.5-14B-Instruct",
            AgentRole::Rewrite | AgentRole::Teacher => "gpt-4o-mini",
            AgentRole::Render => "gemini-2.0-flash-exp",
            AgentRole::Classify => "InternVL2-8B",
        }
    }

    /// Generation parameters applied before any per-backend overrides.
    pub fn default_params(self) -> RequestParams {
        match self {
            // Greedy decoding.
            AgentRole::Describe => RequestParams {
                temperature: Some(0.0),
                ..RequestParams::default()
            },
            AgentRole::Attribute | AgentRole::Similarity => RequestParams {
                max_tokens: Some(1),
                ..RequestParams::default()
            },
            AgentRole::Rewrite => RequestParams {
                temperature: Some(0.0),
                ..RequestParams::default()
            },
            AgentRole::Render => RequestParams {
                temperature: Some(0.0),
                max_tokens: Some(100),
                extra: BTreeMap::from([
                    ("response_modalities".to_string(), json!(["image", "text"])),
                    ("safety_settings".to_string(), json!("BLOCK_NONE")),
                    ("response_mime_type".to_string(), json!("text/plain")),
                ]),
            },
            AgentRole::Classify | AgentRole::Teacher => RequestParams::default(),
        }
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentRole {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AgentRole::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown agent role {s:?}"))
    }
}

/// Model id plus merged generation parameters for one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentProfile {
    pub backend: String,
    pub model_id: String,
    pub params: RequestParams,
}

impl AgentProfile {
    pub fn new(model_id: impl Into<String>, params: RequestParams) -> Self {
        let model_id = model_id.into();
        AgentProfile {
            backend: model_id.clone(),
            model_id,
            params,
        }
    }

    pub fn request(&self, messages: Vec<Message>) -> ModelRequest {
        ModelRequest::new(self.model_id.clone(), messages, self.params.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Mock,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub model_id: String,
    #[serde(default)]
    pub base_url: Option<String>,
    #[serde(default)]
    pub auth_env: Option<String>,
    #[serde(default)]
    pub params: RequestParams,
    #[serde(default)]
    pub requests_per_minute: Option<u32>,
    #[serde(default)]
    pub timeout_secs: Option<u64>,
    #[serde(default)]
    pub refusal_patterns: Vec<String>,
    #[serde(default)]
    pub rules: Vec<MockRuleSpec>,
    #[serde(default)]
    pub default: Option<MockReplySpec>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheConfig {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetryConfig {
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_base_ms")]
    pub base_delay_ms: u64,
    #[serde(default = "default_max_ms")]
    pub max_delay_ms: u64,
}

fn default_attempts() -> u32 {
    RetryPolicy::default().max_attempts
}
fn default_base_ms() -> u64 {
    RetryPolicy::default().base_delay.as_millis() as u64
}
fn default_max_ms() -> u64 {
    RetryPolicy::default().max_delay.as_millis() as u64
}

impl Default for RetryConfig {
    fn default() -> Self {
        RetryConfig {
            max_attempts: default_attempts(),
            base_delay_ms: default_base_ms(),
            max_delay_ms: default_max_ms(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayConfig {
    #[serde(default)]
    pub cache: CacheConfig,
    #[serde(default)]
    pub retry: RetryConfig,
    #[serde(default)]
    pub backends: BTreeMap<String, BackendConfig>,
    #[serde(default)]
    pub agents: BTreeMap<String, String>,
    /// Directory relative paths in the file resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl GatewayConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = Self::parse(&text)?;
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let config: GatewayConfig = toml::from_str(text)?;
        for role in config.agents.keys() {
            role.parse::<AgentRole>().map_err(|reason| ConfigError::Backend {
                backend: role.clone(),
                reason,
            })?;
        }
        let mut seen: HashMap<&str, &str> = HashMap::new();
        for (name, backend) in &config.backends {
            if let Some(other) = seen.insert(&backend.model_id, name) {
                return Err(ConfigError::Backend {
                    backend: name.clone(),
                    reason: format!("model_id {:?} already served by backend {other:?}", backend.model_id),
                });
            }
        }
        Ok(config)
    }

    pub fn cache_dir(&self) -> Option<PathBuf> {
        self.cache.dir.as_ref().map(|d| self.base_dir.join(d))
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_attempts: self.retry.max_attempts.max(1),
            base_delay: Duration::from_millis(self.retry.base_delay_ms),
            max_delay: Duration::from_millis(self.retry.max_delay_ms),
        }
    }

    fn backend_name_for(&self, role: AgentRole) -> Option<&str> {
        match self.agents.get(role.as_str()) {
            Some(name) => Some(name.as_str()),
            None => self
                .backends
                .contains_key(role.as_str())
                .then_some(role.as_str()),
        }
    }

    pub fn has_agent(&self, role: AgentRole) -> bool {
        self.backend_name_for(role).is_some()
    }

    /// Role defaults overlaid with the backend's own `params`.
    pub fn profile(&self, role: AgentRole) -> Result<AgentProfile, ConfigError> {
        let name = self
            .backend_name_for(role)
            .ok_or_else(|| ConfigError::MissingAgent(role.to_string()))?;
        self.backend_profile(name, role)
    }

    /// Profile for the backend called `name`, with `role` defaults.
    pub fn backend_profile(&self, name: &str, role: AgentRole) -> Result<AgentProfile, ConfigError> {
        let backend = self.backends.get(name).ok_or_else(|| ConfigError::Backend {
            backend: name.to_string(),
            reason: format!("referenced by agent {role} but not defined"),
        })?;
        Ok(AgentProfile {
            backend: name.to_string(),
            model_id: backend.model_id.clone(),
            params: role.default_params().overlay(&backend.params),
        })
    }

    pub fn has_backend(&self, name: &str) -> bool {
        self.backends.contains_key(name)
    }

    /// Builds the gateway. `cache_override` replaces the configured cache dir.
    pub fn build_gateway(&self, cache_override: Option<&Path>) -> Result<Gateway, ConfigError> {
        let mut builder = Gateway::builder().retry(self.retry_policy());
        let cache_dir = cache_override.map(Path::to_path_buf).or_else(|| self.cache_dir());
        if let Some(dir) = cache_dir {
            let cache = ResponseCache::open(&dir).map_err(|source| ConfigError::Io { path: dir, source })?;
            builder = builder.cache(cache);
        }
        for (name, cfg) in &self.backends {
            let bad = |reason: String| ConfigError::Backend {
                backend: name.clone(),
                reason,
            };
            let backend: Arc<dyn Backend> = match cfg.kind {
                BackendKind::Mock => Arc::new(mock_backend(self.mock_script(name, cfg)?)),
                BackendKind::Http => {
                    let base_url = cfg
                        .base_url
                        .as_deref()
                        .ok_or_else(|| bad("http backends need base_url".into()))?;
                    let api_key = match &cfg.auth_env {
                        Some(var) => Some(std::env::var(var).map_err(|_| ConfigError::MissingApiKey {
                            backend: name.clone(),
                            var: var.clone(),
                        })?),
                        None => None,
                    };
                    let timeout = Duration::from_secs(cfg.timeout_secs.unwrap_or(120));
                    Arc::new(HttpBackend::new(base_url, api_key, timeout).map_err(|e| bad(e.to_string()))?)
                }
            };
            let patterns = cfg
                .refusal_patterns
                .iter()
                .map(|p| Regex::new(p).map_err(|e| bad(format!("bad refusal pattern {p:?}: {e}"))))
                .collect::<Result<Vec<_>, _>>()?;
            let rpm = match cfg.requests_per_minute {
                Some(n) => Some(NonZeroU32::new(n).ok_or_else(|| bad("requests_per_minute must be > 0".into()))?),
                None => None,
            };
            builder = builder.route_with(name.clone(), cfg.model_id.clone(), backend, rpm, patterns);
        }
        Ok(builder.build())
    }

    fn mock_script(&self, name: &str, cfg: &BackendConfig) -> Result<MockScript, ConfigError> {
        let io = |source: std::io::Error| ConfigError::Backend {
            backend: name.to_string(),
            reason: format!("cannot load mock reply image: {source}"),
        };
        let default = match &cfg.default {
            Some(spec) => spec.load(&self.base_dir).map_err(io)?,
            None => Default::default(),
        };
        let rules = cfg
            .rules
            .iter()
            .map(|r| {
                Ok(MockRule {
                    pattern: r.pattern.clone(),
                    reply: r.reply.load(&self.base_dir).map_err(io)?,
                })
            })
            .collect::<Result<Vec<_>, ConfigError>>()?;
        Ok(MockScript { rules, default })
    }
}
