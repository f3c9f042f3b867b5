use std::collections::BTreeSet;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{check_range, topics_of, DialogueSummary, MemoryError};
use crate::ccd::{AppraisalOutcome, EmotionVector};

pub const DEFAULT_CAPACITY: usize = 100;

const SUMMARY_TURNS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueTurn {
    pub speaker: String,
    pub text: String,
    pub timestamp: DateTime<Utc>,
    pub importance: f64,
    #[serde(default)]
    pub tags: BTreeSet<String>,
}

impl DialogueTurn {
    pub fn new(speaker: impl Into<String>, text: impl Into<String>, timestamp: DateTime<Utc>, importance: f64) -> Self {
        Self {
            speaker: speaker.into(),
            text: text.into(),
            timestamp,
            importance,
            tags: BTreeSet::new(),
        }
    }

    pub fn with_tags<I: IntoIterator<Item = String>>(mut self, tags: I) -> Self {
        self.tags.extend(tags);
        self
    }
}

/// Sliding conversational window. Serialized as JSON records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortTermMemory {
    turns: Vec<DialogueTurn>,
    capacity: usize,
    pub emotional_state: EmotionVector,
    /// Snapshots of `emotional_state`, one per recorded update.
    pub emotion_history: Vec<EmotionVector>,
    pub active_thoughts: Vec<String>,
    pub running_summary: String,
}

impl Default for ShortTermMemory {
    fn default() -> Self {
        Self::with_capacity(DEFAULT_CAPACITY)
    }
}

impl ShortTermMemory {
    pub fn with_capacity(capacity: usize) -> Self {
        assert!(capacity >= 1, "capacity must be at least one turn");
        Self {
            turns: Vec::new(),
            capacity,
            emotional_state: EmotionVector::default(),
            emotion_history: Vec::new(),
            active_thoughts: Vec::new(),
            running_summary: String::new(),
        }
    }

    pub fn turns(&self) -> &[DialogueTurn] {
        &self.turns
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    /// Appends a turn. When the window is full, evicts the oldest of the
    /// minimum-importance prior turns and returns it. The turn just added is
    /// never the one evicted.
    pub fn append_turn(&mut self, turn: DialogueTurn) -> Result<Option<DialogueTurn>, MemoryError> {
        check_range("importance", turn.importance, 0.0, 1.0)?;
        if let Some(last) = self.turns.last() {
            if turn.timestamp < last.timestamp {
                return Err(MemoryError::Invalid {
                    field: "timestamp".into(),
                    message: format!("{} precedes the last turn at {}", turn.timestamp, last.timestamp),
                });
            }
        }
        self.turns.push(turn);
        let evicted = if self.turns.len() > self.capacity {
            let prior = &self.turns[..self.turns.len() - 1];
            let victim = prior
                .iter()
                .enumerate()
                .min_by(|(ia, a), (ib, b)| a.importance.total_cmp(&b.importance).then(ia.cmp(ib)))
                .map(|(i, _)| i)
                .expect("window is non-empty");
            Some(self.turns.remove(victim))
        } else {
            None
        };
        self.running_summary = extractive_text(&self.turns);
        Ok(evicted)
    }

    /// Mirrors the latest appraisal into the window state.
    pub fn record_appraisal(&mut self, outcome: &AppraisalOutcome) {
        self.active_thoughts = outcome.active_thought_statements();
        self.set_emotional_state(outcome.emotions);
    }

    pub fn set_emotional_state(&mut self, emotions: EmotionVector) {
        self.emotional_state = emotions.clamped();
        self.emotion_history.push(self.emotional_state);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("short-term memory serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

fn top_turns(turns: &[DialogueTurn], n: usize) -> Vec<&DialogueTurn> {
    let mut idx: Vec<usize> = (0..turns.len()).collect();
    idx.sort_by(|&a, &b| turns[b].importance.total_cmp(&turns[a].importance).then(a.cmp(&b)));
    idx.truncate(n);
    idx.sort_unstable();
    idx.into_iter().map(|i| &turns[i]).collect()
}

fn extractive_text(turns: &[DialogueTurn]) -> String {
    top_turns(turns, SUMMARY_TURNS)
        .iter()
        .map(|t| t.text.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Identity of the session being summarized.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionInfo {
    pub session_id: String,
    pub agent_id: String,
    pub created_at: DateTime<Utc>,
}

impl SessionInfo {
    pub fn summary_id(&self) -> String {
        format!("{}:{}:summary", self.session_id, self.agent_id)
    }
}

pub trait Summarizer: Send + Sync {
    fn summarize(&self, stm: &ShortTermMemory, session: &SessionInfo) -> Result<DialogueSummary, MemoryError>;
}

/// Keeps the three most important turns, in their original order.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExtractiveSummarizer;

impl Summarizer for ExtractiveSummarizer {
    fn summarize(&self, stm: &ShortTermMemory, session: &SessionInfo) -> Result<DialogueSummary, MemoryError> {
        if stm.is_empty() {
            return Err(MemoryError::EmptySession);
        }
        Ok(DialogueSummary {
            summary_id: session.summary_id(),
            session_id: session.session_id.clone(),
            agent_id: session.agent_id.clone(),
            summary: extractive_text(stm.turns()),
            key_topics: topics_of(stm.turns().iter()),
            emotional_trajectory: stm.emotion_history.clone(),
            created_at: session.created_at,
        })
    }
}

pub fn summarize_session(
    stm: &ShortTermMemory,
    summarizer: &dyn Summarizer,
    session: &SessionInfo,
) -> Result<DialogueSummary, MemoryError> {
    if stm.is_empty() {
        return Err(MemoryError::EmptySession);
    }
    summarizer.summarize(stm, session)
}
