//! Uniform client for chat and vision model backends.
//!
//! Every call goes through [`Gateway::complete`], which looks the request up in
//! a content-addressed [`ResponseCache`], and on a miss dispatches to the
//! backend serving the request's model id with rate limiting and bounded
//! exponential-backoff retries. Backends are either OpenAI-style HTTP endpoints
//! ([`HttpBackend`]) or deterministic keyword-rule scripts ([`MockBackend`]).

pub mod backend;
pub mod cache;
pub mod config;
pub mod gateway;
pub mod http;
pub mod mock;
pub mod request;

pub use backend::{Backend, BackendError, BackendReply};
pub use cache::{CacheEntry, ResponseCache, Stored};
pub use config::{AgentProfile, AgentRole, ConfigError, GatewayConfig};
pub use gateway::{Gateway, GatewayError, RetryPolicy};
pub use http::HttpBackend;
pub use mock::{mock_backend, MockBackend, MockReply, MockRule, MockScript};
pub use request::{CacheKey, Message, ModelRequest, ModelResponse, RequestParams, Role};
