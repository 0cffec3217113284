//! Deterministic keyword-rule backend.
//!
//! A script is an ordered list of `(substring pattern -> reply)` rules plus a
//! default reply. The pattern is matched against the request haystack: all
//! message texts joined by newlines, with one `[image sha256:<hex>]` marker per
//! attached image, so rules can key on specific image bytes too. The first
//! matching rule wins.

use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::backend::{Backend, BackendError, BackendReply};
use crate::request::ModelRequest;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MockReply {
    pub text: String,
    pub image: Option<Vec<u8>>,
    pub refuse: bool,
}

impl MockReply {
    pub fn text(text: impl Into<String>) -> Self {
        MockReply {
            text: text.into(),
            ..MockReply::default()
        }
    }

    pub fn image(bytes: Vec<u8>) -> Self {
        MockReply {
            image: Some(bytes),
            ..MockReply::default()
        }
    }

    pub fn refusal(text: impl Into<String>) -> Self {
        MockReply {
            text: text.into(),
            refuse: true,
            image: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MockRule {
    pub pattern: String,
    pub reply: MockReply,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MockScript {
    pub rules: Vec<MockRule>,
    pub default: MockReply,
}

impl MockScript {
    pub fn with_default(default: impl Into<String>) -> Self {
        MockScript {
            rules: Vec::new(),
            default: MockReply::text(default),
        }
    }

    pub fn rule(mut self, pattern: impl Into<String>, reply: impl Into<String>) -> Self {
        self.rules.push(MockRule {
            pattern: pattern.into(),
            reply: MockReply::text(reply),
        });
        self
    }

    pub fn rule_reply(mut self, pattern: impl Into<String>, reply: MockReply) -> Self {
        self.rules.push(MockRule {
            pattern: pattern.into(),
            reply,
        });
        self
    }

    pub fn reply_for(&self, request: &ModelRequest) -> &MockReply {
        let haystack = request.haystack();
        self.rules
            .iter()
            .find(|r| haystack.contains(&r.pattern))
            .map(|r| &r.reply)
            .unwrap_or(&self.default)
    }
}

#[derive(Debug, Clone)]
pub struct MockBackend {
    script: MockScript,
}

/// Builds a pure backend from a rule table.
pub fn mock_backend(script: MockScript) -> MockBackend {
    MockBackend { script }
}

impl MockBackend {
    pub fn script(&self) -> &MockScript {
        &self.script
    }
}

impl Backend for MockBackend {
    fn send(&self, request: &ModelRequest) -> Result<BackendReply, BackendError> {
        let reply = self.script.reply_for(request);
        Ok(BackendReply {
            text: reply.text.clone(),
            image: reply.image.clone(),
            meta: [("backend".to_string(), "mock".to_string())].into(),
            refusal: reply.refuse.then(|| reply.text.clone()),
        })
    }
}

/// TOML shape of a mock reply: `{ text = "...", image = "file.png", refuse = false }`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockReplySpec {
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub image: Option<String>,
    #[serde(default)]
    pub refuse: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockRuleSpec {
    pub pattern: String,
    #[serde(flatten)]
    pub reply: MockReplySpec,
}

impl MockReplySpec {
    /// Resolves image paths relative to `base`.
    pub fn load(&self, base: &Path) -> std::io::Result<MockReply> {
        let image = match &self.image {
            Some(p) => Some(fs::read(base.join(p))?),
            None => None,
        };
        Ok(MockReply {
            text: self.text.clone(),
            image,
            refuse: self.refuse,
        })
    }
}
