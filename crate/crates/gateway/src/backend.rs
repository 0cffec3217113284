use std::collections::BTreeMap;

use thiserror::Error;

use crate::request::ModelRequest;

/// What a backend produced for one request.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BackendReply {
    pub text: String,
    pub image: Option<Vec<u8>>,
    pub meta: BTreeMap<String, String>,
    /// Backend-signalled refusal (content filter, safety block, ...).
    pub refusal: Option<String>,
}

impl BackendReply {
    pub fn text(text: impl Into<String>) -> Self {
        BackendReply {
            text: text.into(),
            ..BackendReply::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    /// HTTP 429 or equivalent; retried.
    #[error("rate limited: {0}")]
    RateLimited(String),
    /// Connection failures and 5xx; retried.
    #[error("transient failure: {0}")]
    Transient(String),
    #[error("request timed out")]
    Timeout,
    /// The backend rejected the request itself (4xx other than 429); not retried.
    #[error("request rejected (status {status}): {message}")]
    Rejected { status: u16, message: String },
    #[error("malformed backend response: {0}")]
    Protocol(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            BackendError::RateLimited(_) | BackendError::Transient(_) | BackendError::Timeout
        )
    }
}

pub trait Backend: Send + Sync {
    fn send(&self, request: &ModelRequest) -> Result<BackendReply, BackendError>;
}

impl<F> Backend for F
where
    F: Fn(&ModelRequest) -> Result<BackendReply, BackendError> + Send + Sync,
{
    fn send(&self, request: &ModelRequest) -> Result<BackendReply, BackendError> {
        self(request)
    }
}
