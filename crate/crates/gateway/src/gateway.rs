use std::collections::HashMap;
use std::num::NonZeroU32;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use chrono::Utc;
use governor::clock::{Clock, DefaultClock};
use governor::{DefaultDirectRateLimiter, Quota, RateLimiter};
use regex::Regex;
use thiserror::Error;
use tracing::{debug, warn};

use crate::backend::{Backend, BackendError, BackendReply};
use crate::cache::{CacheEntry, ResponseCache, Stored};
use crate::request::{CacheKey, ModelRequest, ModelResponse};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("no backend configured for model {0:?}")]
    UnknownModel(String),
    #[error("backend for {model_id} unavailable after {attempts} attempts: {reason}")]
    BackendUnavailable {
        model_id: String,
        attempts: u32,
        reason: String,
    },
    #[error("backend for {model_id} timed out after {attempts} attempts")]
    Timeout { model_id: String, attempts: u32 },
    #[error("backend for {model_id} refused the request: {reason}")]
    SafetyRefusal { model_id: String, reason: String },
    #[error("backend for {model_id} rejected the request: {reason}")]
    Rejected { model_id: String, reason: String },
    #[error("cache io error: {0}")]
    Cache(#[from] std::io::Error),
}

/// Bounded exponential backoff: `base * 2^k`, capped at `max_delay`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    pub fn delay_for(&self, retry: u32) -> Duration {
        let factor = 1u32.checked_shl(retry).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

struct Route {
    name: String,
    backend: Arc<dyn Backend>,
    limiter: Option<DefaultDirectRateLimiter>,
    refusal_patterns: Vec<Regex>,
}

/// Uniform entry point for every model call.
///
/// Backends are selected by the request's `model_id`. Responses (including
/// refusals) are cached by [`CacheKey`] when a cache is attached; only
/// cache misses reach a backend and count towards [`Gateway::backend_calls`].
pub struct Gateway {
    routes: HashMap<String, Route>,
    cache: Option<ResponseCache>,
    retry: RetryPolicy,
    calls: AtomicU64,
}

pub struct GatewayBuilder {
    routes: HashMap<String, Route>,
    cache: Option<ResponseCache>,
    retry: RetryPolicy,
}

impl GatewayBuilder {
    pub fn cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Routes `model_id` to `backend`.
    pub fn route(self, model_id: impl Into<String>, backend: Arc<dyn Backend>) -> Self {
        let model_id = model_id.into();
        self.route_with(model_id.clone(), model_id, backend, None, Vec::new())
    }

    pub fn route_with(
        mut self,
        name: impl Into<String>,
        model_id: impl Into<String>,
        backend: Arc<dyn Backend>,
        requests_per_minute: Option<NonZeroU32>,
        refusal_patterns: Vec<Regex>,
    ) -> Self {
        let limiter = requests_per_minute.map(|rpm| {
            RateLimiter::direct(Quota::per_minute(rpm).allow_burst(NonZeroU32::MIN))
        });
        self.routes.insert(
            model_id.into(),
            Route {
                name: name.into(),
                backend,
                limiter,
                refusal_patterns,
            },
        );
        self
    }

    pub fn build(self) -> Gateway {
        Gateway {
            routes: self.routes,
            cache: self.cache,
            retry: self.retry,
            calls: AtomicU64::new(0),
        }
    }
}

impl Gateway {
    pub fn builder() -> GatewayBuilder {
        GatewayBuilder {
            routes: HashMap::new(),
            cache: None,
            retry: RetryPolicy::default(),
        }
    }

    pub fn cache(&self) -> Option<&ResponseCache> {
        self.cache.as_ref()
    }

    /// Number of requests that reached a backend (cache misses, counting retries once).
    pub fn backend_calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn complete(&self, stage: &str, request: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        self.complete_attempt(stage, request, 0)
    }

    /// Like [`Gateway::complete`], but `attempt > 0` addresses a distinct cache
    /// slot so that a deliberate re-query of an identical prompt reaches the
    /// backend again.
    pub fn complete_attempt(
        &self,
        stage: &str,
        request: &ModelRequest,
        attempt: u32,
    ) -> Result<ModelResponse, GatewayError> {
        let route = self
            .routes
            .get(&request.model_id)
            .ok_or_else(|| GatewayError::UnknownModel(request.model_id.clone()))?;
        let key = CacheKey::for_request(stage, request, attempt);

        if let Some((entry, image)) = self.cache.as_ref().and_then(|c| c.get(stage, &key)) {
            debug!(stage, key = %key, "cache hit");
            return replay(request, entry, image, key);
        }

        self.calls.fetch_add(1, Ordering::SeqCst);
        let reply = self.send_with_retries(route, request)?;
        let created_at = Utc::now();
        let refusal = reply.refusal.clone().or_else(|| detect_refusal(route, &reply));

        if let Some(cache) = &self.cache {
            let entry = CacheEntry {
                stage: stage.to_string(),
                model_id: request.model_id.clone(),
                text: reply.text.clone(),
                image_sha256: None,
                backend_meta: reply.meta.clone(),
                refusal: refusal.clone(),
                created_at,
            };
            if let Stored::Existing(entry, image) = cache.put(&key, &entry, reply.image.as_deref())? {
                // A concurrent identical request stored first; report its answer.
                return replay(request, entry, image, key);
            }
        }
        if let Some(reason) = refusal {
            return Err(GatewayError::SafetyRefusal {
                model_id: request.model_id.clone(),
                reason,
            });
        }
        Ok(ModelResponse {
            text: reply.text,
            image: reply.image,
            backend_meta: reply.meta,
            cached: false,
            key,
            created_at,
        })
    }

    fn send_with_retries(&self, route: &Route, request: &ModelRequest) -> Result<BackendReply, GatewayError> {
        let mut attempt = 0;
        loop {
            attempt += 1;
            if let Some(limiter) = &route.limiter {
                wait_for_permit(limiter);
            }
            let err = match route.backend.send(request) {
                Ok(reply) => return Ok(reply),
                Err(e) => e,
            };
            if !err.is_retryable() {
                return Err(GatewayError::Rejected {
                    model_id: request.model_id.clone(),
                    reason: err.to_string(),
                });
            }
            if attempt >= self.retry.max_attempts {
                return Err(match err {
                    BackendError::Timeout => GatewayError::Timeout {
                        model_id: request.model_id.clone(),
                        attempts: attempt,
                    },
                    other => GatewayError::BackendUnavailable {
                        model_id: request.model_id.clone(),
                        attempts: attempt,
                        reason: other.to_string(),
                    },
                });
            }
            let delay = self.retry.delay_for(attempt - 1);
            warn!(backend = %route.name, attempt, ?delay, error = %err, "retrying");
            thread::sleep(delay);
        }
    }
}

fn wait_for_permit(limiter: &DefaultDirectRateLimiter) {
    let clock = DefaultClock::default();
    while let Err(not_until) = limiter.check() {
        thread::sleep(not_until.wait_time_from(clock.now()));
    }
}

fn replay(
    request: &ModelRequest,
    entry: CacheEntry,
    image: Option<Vec<u8>>,
    key: CacheKey,
) -> Result<ModelResponse, GatewayError> {
    if let Some(reason) = entry.refusal {
        return Err(GatewayError::SafetyRefusal {
            model_id: request.model_id.clone(),
            reason,
        });
    }
    Ok(ModelResponse {
        text: entry.text,
        image,
        backend_meta: entry.backend_meta,
        cached: true,
        key,
        created_at: entry.created_at,
    })
}

fn detect_refusal(route: &Route, reply: &BackendReply) -> Option<String> {
    if reply.image.is_some() {
        return None;
    }
    route
        .refusal_patterns
        .iter()
        .find(|re| re.is_match(&reply.text))
        .map(|_| reply.text.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mock::{mock_backend, MockScript};
    use crate::request::{Message, RequestParams};
    use std::sync::atomic::AtomicU32;

    fn req(model: &str, text: &str) -> ModelRequest {
        ModelRequest::new(model, vec![Message::user(text)], RequestParams::default())
    }

    fn fast_retry() -> RetryPolicy {
        RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_millis(1),
            max_delay: Duration::from_millis(4),
        }
    }

    /// Fails with `error` for the first `failures` calls, then answers "ok".
    fn flaky(failures: u32, error: BackendError) -> (Arc<dyn Backend>, Arc<AtomicU32>) {
        let count = Arc::new(AtomicU32::new(0));
        let seen = Arc::clone(&count);
        let backend = move |_: &ModelRequest| {
            let n = seen.fetch_add(1, Ordering::SeqCst);
            if n < failures {
                Err(error.clone())
            } else {
                Ok(BackendReply::text("ok"))
            }
        };
        (Arc::new(backend), count)
    }

    #[test]
    fn second_identical_request_is_cached() {
        let dir = tempfile::tempdir().unwrap();
        let gw = Gateway::builder()
            .cache(ResponseCache::open(dir.path()).unwrap())
            .route("mock", Arc::new(mock_backend(MockScript::with_default("hello"))))
            .build();
        let a = gw.complete("s", &req("mock", "x")).unwrap();
        let b = gw.complete("s", &req("mock", "x")).unwrap();
        assert!(!a.cached);
        assert!(b.cached);
        assert_eq!(a.text, b.text);
        assert_eq!(a.key, b.key);
        assert_eq!(a.created_at, b.created_at);
        assert_eq!(gw.backend_calls(), 1);

        let c = gw.complete_attempt("s", &req("mock", "x"), 1).unwrap();
        assert!(!c.cached);
        assert_eq!(gw.backend_calls(), 2);
    }

    #[test]
    fn rate_limited_thrice_then_success() {
        let (backend, count) = flaky(3, BackendError::RateLimited("slow down".into()));
        let gw = Gateway::builder().retry(fast_retry()).route("m", backend).build();
        assert_eq!(gw.complete("s", &req("m", "x")).unwrap().text, "ok");
        assert_eq!(count.load(Ordering::SeqCst), 4);
    }

    #[test]
    fn exhausted_retries_are_unavailable() {
        let (backend, count) = flaky(100, BackendError::Transient("503".into()));
        let gw = Gateway::builder().retry(fast_retry()).route("m", backend).build();
        match gw.complete("s", &req("m", "x")) {
            Err(GatewayError::BackendUnavailable { attempts, .. }) => assert_eq!(attempts, 5),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(count.load(Ordering::SeqCst), 5);

        let (backend, _) = flaky(100, BackendError::Timeout);
        let gw = Gateway::builder().retry(fast_retry()).route("m", backend).build();
        assert!(matches!(gw.complete("s", &req("m", "x")), Err(GatewayError::Timeout { .. })));
    }

    #[test]
    fn rejections_are_not_retried() {
        let (backend, count) = flaky(
            100,
            BackendError::Rejected {
                status: 400,
                message: "bad".into(),
            },
        );
        let gw = Gateway::builder().retry(fast_retry()).route("m", backend).build();
        assert!(matches!(gw.complete("s", &req("m", "x")), Err(GatewayError::Rejected { .. })));
        assert_eq!(count.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn refusal_patterns_map_to_safety_refusal_and_are_cached() {
        let dir = tempfile::tempdir().unwrap();
        let gw = Gateway::builder()
            .cache(ResponseCache::open(dir.path()).unwrap())
            .route_with(
                "judge",
                "m",
                Arc::new(mock_backend(MockScript::with_default("I'm sorry, I can't help with that."))),
                None,
                vec![Regex::new(r"(?i)i'?m sorry|can'?t help").unwrap()],
            )
            .build();
        for _ in 0..2 {
            assert!(matches!(
                gw.complete("s", &req("m", "x")),
                Err(GatewayError::SafetyRefusal { .. })
            ));
        }
        assert_eq!(gw.backend_calls(), 1);
    }

    #[test]
    fn unknown_model() {
        let gw = Gateway::builder().build();
        assert!(matches!(gw.complete("s", &req("nope", "x")), Err(GatewayError::UnknownModel(_))));
    }

    #[test]
    fn backoff_is_bounded() {
        let p = RetryPolicy::default();
        assert_eq!(p.delay_for(0), Duration::from_millis(500));
        assert_eq!(p.delay_for(2), Duration::from_secs(2));
        assert_eq!(p.delay_for(40), Duration::from_secs(30));
    }

    #[test]
    fn rate_limiter_spaces_calls() {
        let gw = Gateway::builder()
            .route_with(
                "m",
                "m",
                Arc::new(mock_backend(MockScript::with_default("ok"))),
                NonZeroU32::new(1200),
                Vec::new(),
            )
            .build();
        let start = std::time::Instant::now();
        for i in 0..3 {
            gw.complete("s", &req("m", &i.to_string())).unwrap();
        }
        // 1200/min = one permit per 50ms after the first.
        assert!(start.elapsed() >= Duration::from_millis(90), "{:?}", start.elapsed());
    }
}
