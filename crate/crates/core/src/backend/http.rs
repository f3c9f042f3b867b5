//! OpenAI-compatible chat-completions client.

use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{count_tokens, Backend, BackendError, BlockKind, GenerationRequest, GenerationResponse, Role};

/// Bearer token for the endpoint.
pub const API_KEY_ENV: &str = "PERSONASIM_API_KEY";
/// Overrides `endpoint_url` from configuration.
pub const ENDPOINT_ENV: &str = "PERSONASIM_ENDPOINT";

const BODY_EXCERPT: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub multiplier: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            initial_backoff: Duration::from_millis(500),
            multiplier: 2.0,
        }
    }
}

impl RetryPolicy {
    /// Delay before attempt `attempt + 1`, counting from 1.
    pub fn backoff(&self, attempt: u32) -> Duration {
        self.initial_backoff.mul_f64(self.multiplier.powi(attempt.saturating_sub(1) as i32))
    }
}

/// Chat body: non-scenario blocks form the system message, the scenario is
/// the first user message, then the history.
pub fn build_chat_body(request: &GenerationRequest) -> Value {
    let system: Vec<&str> = request
        .system_context
        .iter()
        .filter(|b| b.kind != BlockKind::Scenario)
        .map(|b| b.text.as_str())
        .collect();
    let mut messages = vec![json!({"role": "system", "content": system.join("\n\n")})];
    if let Some(s) = request.block(BlockKind::Scenario) {
        messages.push(json!({"role": "user", "content": s.text}));
    }
    for turn in &request.history {
        let role = match turn.role {
            Role::User => "user",
            Role::Assistant => "assistant",
        };
        messages.push(json!({"role": role, "content": turn.text}));
    }
    let c = &request.config;
    let mut body = json!({
        "model": c.model_name,
        "messages": messages,
        "temperature": c.temperature,
        "top_p": c.top_p,
        "max_tokens": c.max_tokens,
    });
    if let Some(seed) = c.seed {
        body["seed"] = json!(seed);
    }
    body
}

fn completions_url(base: &str) -> String {
    let base = base.trim_end_matches('/');
    if base.ends_with("/chat/completions") {
        base.to_owned()
    } else {
        format!("{base}/chat/completions")
    }
}

fn excerpt(body: &str) -> String {
    body.chars().take(BODY_EXCERPT).collect()
}

#[derive(Debug, Clone)]
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    endpoint: Option<String>,
    api_key: Option<String>,
    policy: RetryPolicy,
}

impl HttpBackend {
    /// Reads the endpoint override and key from the environment.
    pub fn from_env() -> Self {
        Self::new(std::env::var(ENDPOINT_ENV).ok(), std::env::var(API_KEY_ENV).ok())
    }

    /// `endpoint`, when set, wins over each request's `endpoint_url`.
    pub fn new(endpoint: Option<String>, api_key: Option<String>) -> Self {
        Self {
            client: reqwest::blocking::Client::new(),
            endpoint,
            api_key,
            policy: RetryPolicy::default(),
        }
    }

    pub fn with_retry(mut self, policy: RetryPolicy) -> Self {
        self.policy = policy;
        self
    }

    fn url_for(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        self.endpoint
            .as_deref()
            .or(request.config.endpoint_url.as_deref())
            .map(completions_url)
            .ok_or_else(|| BackendError::InvalidRequest("no endpoint configured".into()))
    }

    fn attempt(&self, url: &str, body: &Value, timeout: Duration) -> Result<(u16, String, u64), reqwest::Error> {
        let start = Instant::now();
        let mut req = self.client.post(url).timeout(timeout).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send()?;
        let status = resp.status();
        let text = resp.text()?;
        let latency = start.elapsed().as_millis() as u64;
        Ok((status.as_u16(), text, latency))
    }
}

fn parse_completion(text: &str) -> Result<(String, Option<usize>), BackendError> {
    let v: Value = serde_json::from_str(text).map_err(|e| BackendError::Malformed(e.to_string()))?;
    let content = v
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| BackendError::Malformed("missing choices[0].message.content".into()))?;
    let tokens = v
        .pointer("/usage/completion_tokens")
        .and_then(Value::as_u64)
        .map(|n| n as usize);
    Ok((content.to_owned(), tokens))
}

impl Backend for HttpBackend {
    fn id(&self) -> String {
        match &self.endpoint {
            Some(e) => format!("http({e})"),
            None => "http".into(),
        }
    }

    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        let url = self.url_for(request)?;
        let body = build_chat_body(request);
        let timeout = Duration::from_millis(request.config.timeout_ms);
        let attempts = self.policy.max_attempts.max(1);
        let mut last_err = String::new();
        for n in 1..=attempts {
            match self.attempt(&url, &body, timeout) {
                Ok((status, text, latency_ms)) => {
                    if !(200..300).contains(&status) {
                        return Err(BackendError::Rejected {
                            status,
                            body: excerpt(&text),
                        });
                    }
                    let (content, tokens) = parse_completion(&text)?;
                    return Ok(GenerationResponse {
                        token_count: tokens.unwrap_or_else(|| count_tokens(&content)),
                        text: content,
                        latency_ms,
                        backend_id: format!("http({})/{}", url, request.config.model_name),
                    });
                }
                Err(e) if e.is_connect() || e.is_timeout() => {
                    last_err = e.to_string();
                    if n < attempts {
                        std::thread::sleep(self.policy.backoff(n));
                    }
                }
                Err(e) => {
                    return Err(BackendError::Unavailable {
                        attempts: n,
                        message: e.to_string(),
                    })
                }
            }
        }
        Err(BackendError::Unavailable {
            attempts,
            message: last_err,
        })
    }
}
