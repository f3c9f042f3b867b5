//! Three-tier agent memory.
//!
//! - [`ShortTermMemory`]: sliding window of dialogue turns with importance
//!   based eviction, the current emotional state and active thoughts.
//! - [`MemoryStore`]: relational long-term store with the tables
//!   `episodic_memory`, `semantic_memory`, `belief_updates` and
//!   `dialogue_summaries` (SQLite, file-backed or in-memory).
//! - [`MemoryStore::retrieve_context`]: ranked retrieval into a
//!   [`MemoryBundle`] that is rendered into the generation context.

mod short_term;
mod store;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ccd::EmotionVector;

pub use short_term::{
    summarize_session, DialogueTurn, ExtractiveSummarizer, SessionInfo, ShortTermMemory, Summarizer,
    DEFAULT_CAPACITY,
};
pub use store::{MemoryDump, MemoryStore, DEFAULT_DECAY_PER_DAY, DEFAULT_RETRIEVAL_K};

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("unknown agent `{0}`")]
    UnknownAgent(String),
    #[error("storage error ({context}): {source}")]
    Storage {
        context: String,
        #[source]
        source: rusqlite::Error,
    },
    #[error("duplicate id `{id}` in {table}")]
    DuplicateId { table: &'static str, id: String },
    #[error("invalid `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("session has no turns")]
    EmptySession,
    #[error("summarizer failed: {0}")]
    Summarizer(String),
}

impl MemoryError {
    pub(crate) fn storage(context: impl Into<String>) -> impl FnOnce(rusqlite::Error) -> MemoryError {
        let context = context.into();
        move |source| MemoryError::Storage { context, source }
    }
}

pub(crate) fn check_range(field: &str, v: f64, lo: f64, hi: f64) -> Result<(), MemoryError> {
    if v.is_finite() && (lo..=hi).contains(&v) {
        Ok(())
    } else {
        Err(MemoryError::Invalid {
            field: field.to_owned(),
            message: format!("{v} is outside [{lo}, {hi}]"),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeliefLevel {
    Core,
    Intermediate,
}

impl BeliefLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            BeliefLevel::Core => "core",
            BeliefLevel::Intermediate => "intermediate",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "core" => Some(BeliefLevel::Core),
            "intermediate" => Some(BeliefLevel::Intermediate),
            _ => None,
        }
    }
}

impl fmt::Display for BeliefLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A time-stamped personal episode. An empty `memory_id` asks the store to
/// assign one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodicRecord {
    pub memory_id: String,
    pub agent_id: String,
    pub event_type: String,
    pub event_time: DateTime<Utc>,
    pub content: String,
    pub emotional_valence: f64,
    pub importance: f64,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl EpisodicRecord {
    pub fn validate(&self) -> Result<(), MemoryError> {
        check_range("importance", self.importance, 0.0, 1.0)?;
        check_range("emotional_valence", self.emotional_valence, -1.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticRecord {
    pub fact_id: String,
    pub agent_id: String,
    pub category: String,
    pub content: String,
    pub confidence: f64,
    pub source: String,
    pub updated_at: DateTime<Utc>,
}

impl SemanticRecord {
    pub fn validate(&self) -> Result<(), MemoryError> {
        check_range("confidence", self.confidence, 0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefUpdateRecord {
    pub update_id: String,
    pub agent_id: String,
    pub belief_level: BeliefLevel,
    pub belief_type: String,
    pub old_value: String,
    pub new_value: String,
    pub trigger_event: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueSummary {
    pub summary_id: String,
    pub session_id: String,
    pub agent_id: String,
    pub summary: String,
    pub key_topics: Vec<String>,
    pub emotional_trajectory: Vec<EmotionVector>,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scored<T> {
    pub score: f64,
    pub record: T,
}

/// Result of context retrieval; lists are sorted by descending score.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MemoryBundle {
    pub episodic: Vec<Scored<EpisodicRecord>>,
    pub semantic: Vec<Scored<SemanticRecord>>,
    pub latest_summary: Option<DialogueSummary>,
}

impl MemoryBundle {
    pub fn is_empty(&self) -> bool {
        self.episodic.is_empty() && self.semantic.is_empty() && self.latest_summary.is_none()
    }
}

/// Memory section of the generation context.
pub fn render_memory_block(bundle: &MemoryBundle) -> String {
    use std::fmt::Write;
    let mut out = String::from("## Memory\n");
    if !bundle.episodic.is_empty() {
        out.push_str("Relevant life events:\n");
        for s in &bundle.episodic {
            let r = &s.record;
            let _ = writeln!(
                out,
                "- ({}, {}) {} [importance {:.2}, valence {:+.2}]",
                r.event_time.format("%Y-%m-%d"),
                r.event_type,
                r.content,
                r.importance,
                r.emotional_valence
            );
        }
    }
    if !bundle.semantic.is_empty() {
        out.push_str("Known facts and beliefs:\n");
        for s in &bundle.semantic {
            let r = &s.record;
            let _ = writeln!(
                out,
                "- [{}] {} (confidence {:.2}, source {})",
                r.category, r.content, r.confidence, r.source
            );
        }
    }
    if let Some(summary) = &bundle.latest_summary {
        let _ = writeln!(out, "Previous session ({}): {}", summary.session_id, summary.summary);
        if !summary.key_topics.is_empty() {
            let _ = writeln!(out, "Topics: {}", summary.key_topics.join(", "));
        }
    }
    out
}

pub(crate) fn topics_of<'a>(turns: impl Iterator<Item = &'a DialogueTurn>) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for t in turns {
        for tag in &t.tags {
            if seen.insert(tag.clone()) {
                out.push(tag.clone());
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(s: &str) -> DateTime<Utc> {
        DateTime::parse_from_rfc3339(s).unwrap().with_timezone(&Utc)
    }

    #[test]
    fn empty_bundle_renders_header_only() {
        let b = MemoryBundle::default();
        assert_eq!(render_memory_block(&b), "## Memory\n");
        assert_eq!(render_memory_block(&b), render_memory_block(&b.clone()));
    }

    #[test]
    fn episode_content_appears_once() {
        let content = "Hospitalized for pneumonia (2021-11); felt fearful; importance=0.9";
        let b = MemoryBundle {
            episodic: vec![Scored {
                score: 0.5,
                record: EpisodicRecord {
                    memory_id: "m1".into(),
                    agent_id: "a".into(),
                    event_type: "hospitalization".into(),
                    event_time: ts("2021-11-10T00:00:00Z"),
                    content: content.into(),
                    emotional_valence: -0.7,
                    importance: 0.9,
                    metadata: BTreeMap::new(),
                },
            }],
            ..Default::default()
        };
        assert_eq!(render_memory_block(&b).matches(content).count(), 1);
    }
}
