//! Generation contract shared by the HTTP and scripted backends.

mod http;
mod scripted;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{build_chat_body, HttpBackend, RetryPolicy, API_KEY_ENV, ENDPOINT_ENV};
pub use scripted::{parse_trailer, scripted_respond, ScriptedBackend};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend unavailable after {attempts} attempt(s): {message}")]
    Unavailable { attempts: u32, message: String },
    #[error("backend rejected request with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("context overflow: {needed} tokens needed, {budget} available")]
    ContextOverflow { needed: usize, budget: usize },
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl BackendError {
    /// Connection failures and timeouts; worth retrying at a higher level.
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Unavailable { .. })
    }
}

/// Inference parameters, held fixed across conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub model_name: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: usize,
    pub context_window: usize,
    pub endpoint_url: Option<String>,
    pub timeout_ms: u64,
    pub seed: Option<u64>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            model_name: "qwen2.5-14b".into(),
            temperature: 0.7,
            top_p: 0.9,
            max_tokens: 512,
            context_window: 8192,
            endpoint_url: None,
            timeout_ms: 60_000,
            seed: None,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), BackendError> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(BackendError::InvalidRequest(format!("temperature {} < 0", self.temperature)));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(BackendError::InvalidRequest(format!("top_p {} outside (0, 1]", self.top_p)));
        }
        if self.max_tokens > self.context_window {
            return Err(BackendError::InvalidRequest(format!(
                "max_tokens {} exceeds context window {}",
                self.max_tokens, self.context_window
            )));
        }
        Ok(())
    }

    /// Tokens available to the prompt once the completion is reserved.
    pub fn prompt_budget(&self) -> usize {
        self.context_window.saturating_sub(self.max_tokens)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Persona,
    Memory,
    Ccd,
    Scenario,
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BlockKind::Persona => "persona",
            BlockKind::Memory => "memory",
            BlockKind::Ccd => "ccd",
            BlockKind::Scenario => "scenario",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBlock {
    pub kind: BlockKind,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryTurn {
    pub speaker: String,
    pub role: Role,
    pub text: String,
}

/// Who is speaking and in which administration; lets the scripted backend
/// key its output and lets logs attribute requests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subject {
    pub agent_id: String,
    pub scenario_id: String,
    pub repetition: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub system_context: Vec<PromptBlock>,
    pub history: Vec<HistoryTurn>,
    pub config: GenerationConfig,
    pub subject: Option<Subject>,
}

impl GenerationRequest {
    pub fn block(&self, kind: BlockKind) -> Option<&PromptBlock> {
        self.system_context.iter().find(|b| b.kind == kind)
    }

    pub fn has_block(&self, kind: BlockKind) -> bool {
        self.block(kind).is_some()
    }

    pub fn with_subject(mut self, subject: Subject) -> Self {
        self.subject = Some(subject);
        self
    }

    pub fn prompt_tokens(&self) -> usize {
        self.system_context.iter().map(|b| count_tokens(&b.text)).sum::<usize>()
            + self.history.iter().map(|h| count_tokens(&h.text)).sum::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResponse {
    pub text: String,
    pub token_count: usize,
    pub latency_ms: u64,
    pub backend_id: String,
}

pub trait Backend: Send + Sync {
    fn id(&self) -> String;
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError>;
}

impl<B: Backend + ?Sized> Backend for std::sync::Arc<B> {
    fn id(&self) -> String {
        (**self).id()
    }
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        (**self).generate(request)
    }
}

impl<B: Backend + ?Sized> Backend for &B {
    fn id(&self) -> String {
        (**self).id()
    }
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        (**self).generate(request)
    }
}

/// Validates the request configuration and dispatches to the backend.
pub fn generate(backend: &dyn Backend, request: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
    request.config.validate()?;
    backend.generate(request)
}

/// Whitespace-delimited word count.
pub fn count_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Builds a request with blocks in the fixed order persona, memory, ccd,
/// scenario. History is appended after the blocks; when the prompt would not
/// fit the budget, the oldest history turns are dropped first.
pub fn assemble_context(
    persona_block: &str,
    memory_block: Option<&str>,
    ccd_block: Option<&str>,
    scenario_prompt: &str,
    history: &[HistoryTurn],
    config: &GenerationConfig,
) -> Result<GenerationRequest, BackendError> {
    if persona_block.trim().is_empty() {
        return Err(BackendError::InvalidRequest("persona block is empty".into()));
    }
    let mut system_context = vec![PromptBlock {
        kind: BlockKind::Persona,
        text: persona_block.to_owned(),
    }];
    if let Some(m) = memory_block {
        system_context.push(PromptBlock {
            kind: BlockKind::Memory,
            text: m.to_owned(),
        });
    }
    if let Some(c) = ccd_block {
        system_context.push(PromptBlock {
            kind: BlockKind::Ccd,
            text: c.to_owned(),
        });
    }
    system_context.push(PromptBlock {
        kind: BlockKind::Scenario,
        text: scenario_prompt.to_owned(),
    });

    let budget = config.prompt_budget();
    let fixed: usize = system_context.iter().map(|b| count_tokens(&b.text)).sum();
    if fixed > budget {
        return Err(BackendError::ContextOverflow { needed: fixed, budget });
    }
    let mut used: usize = history.iter().map(|h| count_tokens(&h.text)).sum();
    let mut start = 0;
    while fixed + used > budget {
        used -= count_tokens(&history[start].text);
        start += 1;
    }
    Ok(GenerationRequest {
        system_context,
        history: history[start..].to_vec(),
        config: config.clone(),
        subject: None,
    })
}
