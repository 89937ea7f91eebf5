//! Chat-completions-shaped endpoint client.
//!
//! The wire contract is deliberately neutral: a POST with
//! `{"model", "messages": [...], "temperature"}` where message content is a
//! list of text and image parts, answered by JSON carrying a `text` field.
//! Concrete providers are mapped onto this shape by thin adapters.

use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

/// Connection profile for an LLM endpoint. The credential is never stored
/// here, only the name of the environment variable that carries it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlmEndpointConfig {
    pub base_url: String,
    pub model_name: String,
    pub api_key_env: String,
    /// Request timeout in seconds.
    pub timeout: f64,
    pub max_retries: u32,
    pub temperature: f64,
}

impl LlmEndpointConfig {
    pub fn validate(&self) -> Result<(), EndpointError> {
        if self.timeout <= 0.0 {
            return Err(EndpointError::BadConfig("timeout must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

/// One content part of a chat message: text or an image payload
/// (base64 data or a URL).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ContentPart {
    Text { text: String },
    Image { data: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: Vec<ContentPart>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

impl ChatRequest {
    pub fn new(model: impl Into<String>, temperature: f64) -> Self {
        ChatRequest { model: model.into(), messages: Vec::new(), temperature }
    }

    pub fn system(mut self, text: impl Into<String>) -> Self {
        self.messages.push(ChatMessage {
            role: Role::System,
            content: vec![ContentPart::Text { text: text.into() }],
        });
        self
    }

    pub fn user(mut self, content: Vec<ContentPart>) -> Self {
        self.messages.push(ChatMessage { role: Role::User, content });
        self
    }

    /// Text of the last user message, handy for scripted mocks.
    pub fn last_user_text(&self) -> String {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| {
                m.content
                    .iter()
                    .filter_map(|c| match c {
                        ContentPart::Text { text } => Some(text.as_str()),
                        ContentPart::Image { .. } => None,
                    })
                    .collect::<Vec<_>>()
                    .join("\n")
            })
            .unwrap_or_default()
    }
}

#[derive(Debug, Deserialize)]
struct ChatReply {
    text: String,
}

#[derive(Debug, thiserror::Error)]
pub enum EndpointError {
    #[error("endpoint config invalid: {0}")]
    BadConfig(String),
    #[error("transport error after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("HTTP {status}: {message}")]
    Http { status: u16, message: String },
    #[error("reply missing text field: {0}")]
    BadReply(String),
}

/// Anything that can answer a chat request with a text reply.
pub trait ChatEndpoint: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<String, EndpointError>;

    /// Whether image payloads should be attached to requests. Mocks that
    /// never look at pixels opt out so fixture runs need no image files.
    fn needs_images(&self) -> bool {
        true
    }
}

/// Backoff delay before retry `attempt` (0-based): base 1 s, factor 2,
/// jitter in [-20%, +20%].
pub fn backoff_delay(attempt: u32, jitter_unit: f64) -> Duration {
    let base = 1.0f64 * 2.0f64.powi(attempt as i32);
    let jitter = 1.0 + 0.2 * (2.0 * jitter_unit - 1.0);
    Duration::from_secs_f64(base * jitter)
}

/// HTTP implementation of the neutral wire contract.
pub struct HttpEndpoint {
    config: LlmEndpointConfig,
    client: reqwest::blocking::Client,
}

impl HttpEndpoint {
    pub fn new(config: LlmEndpointConfig) -> Result<Self, EndpointError> {
        config.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout))
            .build()
            .map_err(|e| EndpointError::BadConfig(e.to_string()))?;
        Ok(HttpEndpoint { config, client })
    }

    fn api_key(&self) -> Option<String> {
        std::env::var(&self.config.api_key_env).ok()
    }
}

impl ChatEndpoint for HttpEndpoint {
    fn complete(&self, req: &ChatRequest) -> Result<String, EndpointError> {
        let mut attempts = 0u32;
        loop {
            let mut builder = self.client.post(&self.config.base_url).json(req);
            if let Some(key) = self.api_key() {
                builder = builder.bearer_auth(key);
            }
            let result = builder.send();
            attempts += 1;
            let retryable_message = match result {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        let body = resp
                            .text()
                            .map_err(|e| EndpointError::BadReply(e.to_string()))?;
                        let reply: ChatReply = serde_json::from_str(&body)
                            .map_err(|_| EndpointError::BadReply(body.clone()))?;
                        return Ok(reply.text);
                    }
                    // 4xx other than 429 are terminal.
                    if status.is_client_error() && status.as_u16() != 429 {
                        return Err(EndpointError::Http {
                            status: status.as_u16(),
                            message: resp.text().unwrap_or_default(),
                        });
                    }
                    format!("HTTP {}", status)
                }
                Err(e) => e.to_string(),
            };
            if attempts > self.config.max_retries {
                return Err(EndpointError::Transport { attempts, message: retryable_message });
            }
            let jitter: f64 = rand::random();
            std::thread::sleep(backoff_delay(attempts - 1, jitter));
        }
    }
}

/// Scripted endpoint for tests and deterministic fixture runs: replies are
/// produced by a closure over the request.
pub struct MockEndpoint {
    reply_fn: Box<dyn Fn(&ChatRequest) -> Result<String, EndpointError> + Send + Sync>,
    pub calls: Mutex<Vec<ChatRequest>>,
}

impl MockEndpoint {
    pub fn new<F>(reply_fn: F) -> Self
    where
        F: Fn(&ChatRequest) -> Result<String, EndpointError> + Send + Sync + 'static,
    {
        MockEndpoint { reply_fn: Box::new(reply_fn), calls: Mutex::new(Vec::new()) }
    }

    /// Always replies with the same text.
    pub fn fixed(reply: impl Into<String>) -> Self {
        let reply = reply.into();
        MockEndpoint::new(move |_| Ok(reply.clone()))
    }

    /// Always fails with a transport error, as if retries were exhausted.
    pub fn failing() -> Self {
        MockEndpoint::new(|_| {
            Err(EndpointError::Transport { attempts: 1, message: "scripted failure".into() })
        })
    }

    pub fn call_count(&self) -> usize {
        self.calls.lock().unwrap().len()
    }
}

impl ChatEndpoint for MockEndpoint {
    fn complete(&self, req: &ChatRequest) -> Result<String, EndpointError> {
        self.calls.lock().unwrap().push(req.clone());
        (self.reply_fn)(req)
    }

    fn needs_images(&self) -> bool {
        false
    }
}

/// An endpoint bundled with the profile used to shape its requests.
#[derive(Clone)]
pub struct LlmClient {
    endpoint: std::sync::Arc<dyn ChatEndpoint>,
    pub config: LlmEndpointConfig,
}

impl LlmClient {
    pub fn new(endpoint: std::sync::Arc<dyn ChatEndpoint>, config: LlmEndpointConfig) -> Self {
        LlmClient { endpoint, config }
    }

    pub fn http(config: LlmEndpointConfig) -> Result<Self, EndpointError> {
        let ep = HttpEndpoint::new(config.clone())?;
        Ok(LlmClient { endpoint: std::sync::Arc::new(ep), config })
    }

    /// Wraps a scripted endpoint with a placeholder profile.
    pub fn mock(endpoint: MockEndpoint) -> Self {
        LlmClient {
            endpoint: std::sync::Arc::new(endpoint),
            config: LlmEndpointConfig {
                base_url: "mock://".into(),
                model_name: "mock".into(),
                api_key_env: "UNUSED".into(),
                timeout: 30.0,
                max_retries: 0,
                temperature: 0.0,
            },
        }
    }

    /// Starts a request with the profile's model and temperature.
    pub fn request(&self) -> ChatRequest {
        ChatRequest::new(self.config.model_name.clone(), self.config.temperature)
    }

    /// Request with an explicit temperature (classification runs use 0).
    pub fn request_at(&self, temperature: f64) -> ChatRequest {
        ChatRequest::new(self.config.model_name.clone(), temperature)
    }

    pub fn complete(&self, req: &ChatRequest) -> Result<String, EndpointError> {
        self.endpoint.complete(req)
    }

    pub fn needs_images(&self) -> bool {
        self.endpoint.needs_images()
    }
}

/// Extracts the last balanced-brace JSON object from free-form model output.
///
/// Scans backwards for the final `}` and matches braces while honoring JSON
/// string syntax, so braces inside strings do not confuse the match.
pub fn last_json_object(text: &str) -> Option<serde_json::Value> {
    let bytes = text.as_bytes();
    let ends: Vec<usize> = bytes
        .iter()
        .enumerate()
        .rev()
        .filter_map(|(i, &b)| (b == b'}').then_some(i))
        .collect();
    // Replies are short and the terminal object sits near the tail, so the
    // quadratic candidate walk is fine in practice.
    for &end in &ends {
        let mut starts: Vec<usize> = (0..=end).filter(|&i| bytes[i] == b'{').collect();
        starts.reverse();
        for start in starts {
            let candidate = &text[start..=end];
            if let Ok(v) = serde_json::from_str::<serde_json::Value>(candidate) {
                if v.is_object() {
                    return Some(v);
                }
            }
        }
    }
    None
}
