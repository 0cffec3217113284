//! OpenAI-style chat-completions client.
//!
//! Requests go to `POST {base_url}/chat/completions`. Images are sent inline as
//! `data:` URLs in `image_url` content parts. Image output is read from either
//! `image_url` content parts or a `message.images` array, both carrying data
//! URLs.

use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde_json::{json, Map, Value};

use crate::backend::{Backend, BackendError, BackendReply};
use crate::request::ModelRequest;

#[derive(Debug, Clone)]
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    api_key: Option<String>,
}

impl HttpBackend {
    pub fn new(base_url: &str, api_key: Option<String>, timeout: Duration) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::Transient(e.to_string()))?;
        Ok(HttpBackend {
            client,
            endpoint: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            api_key,
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

/// Builds the JSON request body.
pub fn request_body(request: &ModelRequest) -> Value {
    let messages: Vec<Value> = request
        .messages
        .iter()
        .map(|m| {
            let content = match &m.image {
                None => Value::String(m.text.clone()),
                Some(bytes) => {
                    let mime = mime_for(bytes);
                    json!([
                        {"type": "text", "text": m.text},
                        {"type": "image_url", "image_url": {
                            "url": format!("data:{mime};base64,{}", STANDARD.encode(bytes))
                        }},
                    ])
                }
            };
            json!({"role": m.role.as_str(), "content": content})
        })
        .collect();
    let mut body = Map::new();
    body.insert("model".into(), Value::String(request.model_id.clone()));
    body.insert("messages".into(), Value::Array(messages));
    if let Some(t) = request.params.temperature {
        body.insert("temperature".into(), json!(t));
    }
    if let Some(n) = request.params.max_tokens {
        body.insert("max_tokens".into(), json!(n));
    }
    for (k, v) in &request.params.extra {
        body.insert(k.clone(), v.clone());
    }
    Value::Object(body)
}

fn mime_for(bytes: &[u8]) -> &'static str {
    if bytes.starts_with(&[0xFF, 0xD8, 0xFF]) {
        "image/jpeg"
    } else if bytes.starts_with(b"GIF8") {
        "image/gif"
    } else if bytes.len() >= 12 && &bytes[8..12] == b"WEBP" {
        "image/webp"
    } else {
        "image/png"
    }
}

fn decode_data_url(url: &str) -> Option<Vec<u8>> {
    let (_, payload) = url.strip_prefix("data:")?.split_once(";base64,")?;
    STANDARD.decode(payload).ok()
}

/// Extracts text, image and refusal from a chat-completions response body.
pub fn parse_response(body: &Value) -> Result<BackendReply, BackendError> {
    let choice = body
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| BackendError::Protocol("response has no choices".into()))?;
    let message = choice
        .get("message")
        .ok_or_else(|| BackendError::Protocol("choice has no message".into()))?;

    let mut reply = BackendReply::default();
    match message.get("content") {
        Some(Value::String(s)) => reply.text = s.clone(),
        Some(Value::Array(parts)) => {
            for part in parts {
                match part.get("type").and_then(Value::as_str) {
                    Some("text") => {
                        if let Some(t) = part.get("text").and_then(Value::as_str) {
                            reply.text.push_str(t);
                        }
                    }
                    Some("image_url") if reply.image.is_none() => {
                        reply.image = part
                            .pointer("/image_url/url")
                            .and_then(Value::as_str)
                            .and_then(decode_data_url);
                    }
                    _ => {}
                }
            }
        }
        _ => {}
    }
    if reply.image.is_none() {
        reply.image = message
            .get("images")
            .and_then(|imgs| imgs.get(0))
            .and_then(|img| img.pointer("/image_url/url"))
            .and_then(Value::as_str)
            .and_then(decode_data_url);
    }
    if let Some(r) = message.get("refusal").and_then(Value::as_str) {
        reply.refusal = Some(r.to_string());
    } else if choice.get("finish_reason").and_then(Value::as_str) == Some("content_filter") {
        reply.refusal = Some("content_filter".into());
    }
    if let Some(id) = body.get("id").and_then(Value::as_str) {
        reply.meta.insert("response_id".into(), id.to_string());
    }
    if let Some(model) = body.get("model").and_then(Value::as_str) {
        reply.meta.insert("model".into(), model.to_string());
    }
    if let Some(reason) = choice.get("finish_reason").and_then(Value::as_str) {
        reply.meta.insert("finish_reason".into(), reason.to_string());
    }
    Ok(reply)
}

impl Backend for HttpBackend {
    fn send(&self, request: &ModelRequest) -> Result<BackendReply, BackendError> {
        let mut call = self.client.post(&self.endpoint).json(&request_body(request));
        if let Some(key) = &self.api_key {
            call = call.bearer_auth(key);
        }
        let response = call.send().map_err(map_transport_error)?;
        let status = response.status().as_u16();
        let text = response.text().map_err(map_transport_error)?;
        match status {
            200..=299 => {
                let body: Value = serde_json::from_str(&text)
                    .map_err(|e| BackendError::Protocol(format!("invalid JSON: {e}")))?;
                parse_response(&body)
            }
            429 => Err(BackendError::RateLimited(truncate(&text))),
            408 | 500..=599 => Err(BackendError::Transient(format!("status {status}: {}", truncate(&text)))),
            _ => Err(BackendError::Rejected {
                status,
                message: truncate(&text),
            }),
        }
    }
}

fn map_transport_error(e: reqwest::Error) -> BackendError {
    if e.is_timeout() {
        BackendError::Timeout
    } else {
        BackendError::Transient(e.to_string())
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(300).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::request::{Message, RequestParams};

    #[test]
    fn body_carries_params_and_inline_image() {
        let mut params = RequestParams {
            temperature: Some(0.0),
            max_tokens: Some(1),
            ..RequestParams::default()
        };
        params.extra.insert("safety_settings".into(), json!("BLOCK_NONE"));
        let req = ModelRequest::new(
            "qwen",
            vec![Message::user_with_image("hi", b"\x89PNGxx".to_vec())],
            params,
        );
        let body = request_body(&req);
        assert_eq!(body["model"], "qwen");
        assert_eq!(body["max_tokens"], 1);
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["safety_settings"], "BLOCK_NONE");
        let url = body["messages"][0]["content"][1]["image_url"]["url"].as_str().unwrap();
        assert!(url.starts_with("data:image/png;base64,"));
        assert_eq!(decode_data_url(url).unwrap(), b"\x89PNGxx");
    }

    #[test]
    fn text_only_message_is_plain_string() {
        let req = ModelRequest::new("m", vec![Message::user("hello")], RequestParams::default());
        let body = request_body(&req);
        assert_eq!(body["messages"][0]["content"], "hello");
        assert!(body.get("temperature").is_none());
    }

    #[test]
    fn parses_text_image_and_refusal() {
        let img = STANDARD.encode(b"IMG");
        let body = json!({
            "id": "r1",
            "choices": [{"message": {"content": [
                {"type": "text", "text": "here"},
                {"type": "image_url", "image_url": {"url": format!("data:image/png;base64,{img}")}}
            ]}, "finish_reason": "stop"}]
        });
        let reply = parse_response(&body).unwrap();
        assert_eq!(reply.text, "here");
        assert_eq!(reply.image.as_deref(), Some(&b"IMG"[..]));
        assert_eq!(reply.meta["response_id"], "r1");

        let body = json!({"choices": [{"message": {"content": null, "refusal": "no can do"}}]});
        assert_eq!(parse_response(&body).unwrap().refusal.as_deref(), Some("no can do"));

        let body = json!({"choices": [{"message": {"content": ""}, "finish_reason": "content_filter"}]});
        assert_eq!(parse_response(&body).unwrap().refusal.as_deref(), Some("content_filter"));

        let body = json!({"choices": [{"message": {"content": "x", "images": [
            {"type": "image_url", "image_url": {"url": format!("data:image/png;base64,{img}")}}
        ]}}]});
        assert_eq!(parse_response(&body).unwrap().image.as_deref(), Some(&b"IMG"[..]));

        assert!(matches!(parse_response(&json!({})), Err(BackendError::Protocol(_))));
    }
}
