//! Cognitive conceptualization diagrams and situation appraisal.
//!
//! A [`CcdModel`] holds three layers: relevant history, the belief system
//! (core beliefs, conditional intermediate beliefs, coping strategies) and,
//! produced on demand by [`appraise`], the triggered responses. Appraisal is
//! a pure function:
//!
//! * an intermediate belief activates iff its trigger tags intersect the
//!   situation's tags;
//! * each activated belief emits one automatic thought with credibility
//!   `strength × intensity`;
//! * emotions are `clamp(baseline + bias + Σ credibility · deltas, 0, 1)`;
//! * a coping strategy fires when any of its activating emotions reaches its
//!   threshold in the resulting emotion vector.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::memory::{BeliefLevel, BeliefUpdateRecord};

#[derive(Debug, Error)]
pub enum CcdError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("schema error at `{field}`: {message}")]
    Schema { field: String, message: String },
    #[error("`{field}` out of range: {message}")]
    Range { field: String, message: String },
    #[error("unknown {level} belief `{id}`")]
    UnknownBelief { level: BeliefLevel, id: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Emotion {
    Anxiety,
    Fear,
    Sadness,
    Anger,
    Shame,
    Guilt,
    Happiness,
}

impl Emotion {
    pub const ALL: [Emotion; 7] = [
        Emotion::Anxiety,
        Emotion::Fear,
        Emotion::Sadness,
        Emotion::Anger,
        Emotion::Shame,
        Emotion::Guilt,
        Emotion::Happiness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Emotion::Anxiety => "anxiety",
            Emotion::Fear => "fear",
            Emotion::Sadness => "sadness",
            Emotion::Anger => "anger",
            Emotion::Shame => "shame",
            Emotion::Guilt => "guilt",
            Emotion::Happiness => "happiness",
        }
    }
}

/// Seven independent emotion intensities, each in [0, 1].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmotionVector {
    pub anxiety: f64,
    pub fear: f64,
    pub sadness: f64,
    pub anger: f64,
    pub shame: f64,
    pub guilt: f64,
    pub happiness: f64,
}

impl EmotionVector {
    pub fn get(&self, e: Emotion) -> f64 {
        match e {
            Emotion::Anxiety => self.anxiety,
            Emotion::Fear => self.fear,
            Emotion::Sadness => self.sadness,
            Emotion::Anger => self.anger,
            Emotion::Shame => self.shame,
            Emotion::Guilt => self.guilt,
            Emotion::Happiness => self.happiness,
        }
    }

    pub fn slot(&mut self, e: Emotion) -> &mut f64 {
        match e {
            Emotion::Anxiety => &mut self.anxiety,
            Emotion::Fear => &mut self.fear,
            Emotion::Sadness => &mut self.sadness,
            Emotion::Anger => &mut self.anger,
            Emotion::Shame => &mut self.shame,
            Emotion::Guilt => &mut self.guilt,
            Emotion::Happiness => &mut self.happiness,
        }
    }

    /// Clamps every component into [0, 1]; NaN becomes 0.
    pub fn clamped(mut self) -> Self {
        for e in Emotion::ALL {
            let v = self.slot(e);
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        self
    }

    pub fn add_partial(mut self, delta: &BTreeMap<Emotion, f64>, scale: f64) -> Self {
        for (&e, &d) in delta {
            *self.slot(e) += scale * d;
        }
        self
    }

    pub fn is_valid(&self) -> bool {
        Emotion::ALL
            .iter()
            .all(|&e| (0.0..=1.0).contains(&self.get(e)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LifeEvent {
    pub label: String,
    pub description: String,
    pub valence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoreBelief {
    pub id: String,
    pub schema_label: String,
    pub statement: String,
    pub strength: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntermediateBelief {
    pub id: String,
    pub statement: String,
    /// Id of the core belief this rule derives from.
    pub parent: String,
    pub trigger_tags: BTreeSet<String>,
    pub strength: f64,
    /// Text of the automatic thought emitted when the belief activates.
    pub automatic_thought: String,
    #[serde(default)]
    pub emotion_deltas: BTreeMap<Emotion, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CopingStrategy {
    pub label: String,
    pub behavior: String,
    pub activating_emotions: BTreeSet<Emotion>,
    pub activation_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CcdModel {
    pub agent_id: String,
    pub background: Vec<LifeEvent>,
    pub core_beliefs: Vec<CoreBelief>,
    pub intermediate_beliefs: Vec<IntermediateBelief>,
    pub coping_strategies: Vec<CopingStrategy>,
}

fn check_unit(field: String, v: f64, lo: f64) -> Result<(), CcdError> {
    if v.is_finite() && (lo..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(CcdError::Range {
            field,
            message: format!("{v} is outside [{lo}, 1]"),
        })
    }
}

impl CcdModel {
    pub fn empty(agent_id: impl Into<String>) -> Self {
        Self {
            agent_id: agent_id.into(),
            background: Vec::new(),
            core_beliefs: Vec::new(),
            intermediate_beliefs: Vec::new(),
            coping_strategies: Vec::new(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CcdError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let model: CcdModel = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            match inner.classify() {
                serde_json::error::Category::Data => CcdError::Schema {
                    field: path,
                    message: inner.to_string(),
                },
                _ => CcdError::Syntax(inner.to_string()),
            }
        })?;
        model.validate()?;
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("ccd serializes");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<(), CcdError> {
        for (i, ev) in self.background.iter().enumerate() {
            check_unit(format!("background[{i}].valence"), ev.valence, -1.0)?;
        }
        let mut core_ids = BTreeSet::new();
        for (i, b) in self.core_beliefs.iter().enumerate() {
            check_unit(format!("core_beliefs[{i}].strength"), b.strength, 0.0)?;
            if !core_ids.insert(b.id.as_str()) {
                return Err(CcdError::Schema {
                    field: format!("core_beliefs[{i}].id"),
                    message: format!("duplicate id `{}`", b.id),
                });
            }
        }
        let mut ib_ids = BTreeSet::new();
        for (i, b) in self.intermediate_beliefs.iter().enumerate() {
            check_unit(format!("intermediate_beliefs[{i}].strength"), b.strength, 0.0)?;
            if !core_ids.contains(b.parent.as_str()) {
                return Err(CcdError::Schema {
                    field: format!("intermediate_beliefs[{i}].parent"),
                    message: format!("no core belief `{}`", b.parent),
                });
            }
            if b.trigger_tags.is_empty() {
                return Err(CcdError::Schema {
                    field: format!("intermediate_beliefs[{i}].trigger_tags"),
                    message: "must be non-empty".into(),
                });
            }
            if !ib_ids.insert(b.id.as_str()) || core_ids.contains(b.id.as_str()) {
                return Err(CcdError::Schema {
                    field: format!("intermediate_beliefs[{i}].id"),
                    message: format!("duplicate id `{}`", b.id),
                });
            }
            for (e, d) in &b.emotion_deltas {
                check_unit(
                    format!("intermediate_beliefs[{i}].emotion_deltas.{}", e.name()),
                    *d,
                    -1.0,
                )?;
            }
        }
        for (i, c) in self.coping_strategies.iter().enumerate() {
            check_unit(
                format!("coping_strategies[{i}].activation_threshold"),
                c.activation_threshold,
                0.0,
            )?;
        }
        Ok(())
    }

    pub fn core_belief(&self, id: &str) -> Option<&CoreBelief> {
        self.core_beliefs.iter().find(|b| b.id == id)
    }

    pub fn intermediate_belief(&self, id: &str) -> Option<&IntermediateBelief> {
        self.intermediate_beliefs.iter().find(|b| b.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SituationTrigger {
    pub description: String,
    pub tags: BTreeSet<String>,
    pub intensity: f64,
    #[serde(default)]
    pub emotion_bias: BTreeMap<Emotion, f64>,
}

impl SituationTrigger {
    pub fn new<I, S>(description: impl Into<String>, tags: I, intensity: f64) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            description: description.into(),
            tags: tags.into_iter().map(Into::into).collect(),
            intensity,
            emotion_bias: BTreeMap::new(),
        }
    }

    pub fn is_valid(&self) -> bool {
        !self.tags.is_empty() && (0.0..=1.0).contains(&self.intensity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutomaticThought {
    pub statement: String,
    pub credibility: f64,
    pub source_belief: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggeredBehavior {
    pub strategy: String,
    pub behavior: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppraisalOutcome {
    pub automatic_thoughts: Vec<AutomaticThought>,
    pub emotions: EmotionVector,
    pub behaviors: Vec<TriggeredBehavior>,
    pub trigger: SituationTrigger,
}

impl AppraisalOutcome {
    pub fn active_thought_statements(&self) -> Vec<String> {
        self.automatic_thoughts
            .iter()
            .map(|t| t.statement.clone())
            .collect()
    }
}

/// Whether a coping strategy's activation condition holds for `emotions`.
pub fn strategy_fires(strategy: &CopingStrategy, emotions: &EmotionVector) -> bool {
    strategy
        .activating_emotions
        .iter()
        .any(|&e| emotions.get(e) >= strategy.activation_threshold)
}

pub fn appraise(ccd: &CcdModel, trigger: &SituationTrigger, baseline: &EmotionVector) -> AppraisalOutcome {
    let mut activated: Vec<(usize, &IntermediateBelief, f64)> = ccd
        .intermediate_beliefs
        .iter()
        .enumerate()
        .filter(|(_, b)| !b.trigger_tags.is_disjoint(&trigger.tags))
        .map(|(i, b)| (i, b, b.strength * trigger.intensity))
        .collect();
    // Stable sort keeps declaration order among equal credibilities.
    activated.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));

    let mut emotions = baseline.add_partial(&trigger.emotion_bias, 1.0);
    for (_, belief, credibility) in &activated {
        emotions = emotions.add_partial(&belief.emotion_deltas, *credibility);
    }
    let emotions = emotions.clamped();

    let automatic_thoughts = activated
        .iter()
        .map(|(_, b, credibility)| AutomaticThought {
            statement: b.automatic_thought.clone(),
            credibility: *credibility,
            source_belief: b.id.clone(),
        })
        .collect();
    let behaviors = ccd
        .coping_strategies
        .iter()
        .filter(|s| strategy_fires(s, &emotions))
        .map(|s| TriggeredBehavior {
            strategy: s.label.clone(),
            behavior: s.behavior.clone(),
        })
        .collect();

    AppraisalOutcome {
        automatic_thoughts,
        emotions,
        behaviors,
        trigger: trigger.clone(),
    }
}

/// Cognitive section of the generation context, in layer order: background,
/// belief system, triggered responses.
pub fn render_ccd_block(ccd: &CcdModel, outcome: &AppraisalOutcome) -> String {
    let mut out = String::from("## Cognitive conceptualization\n");
    out.push_str("### Background\n");
    if ccd.background.is_empty() {
        out.push_str("- none\n");
    }
    for ev in &ccd.background {
        let _ = writeln!(out, "- {}: {} (valence {:+.2})", ev.label, ev.description, ev.valence);
    }

    out.push_str("### Belief system\n");
    out.push_str("Core beliefs:\n");
    if ccd.core_beliefs.is_empty() {
        out.push_str("- none\n");
    }
    for b in &ccd.core_beliefs {
        let _ = writeln!(out, "- [{}] {} \"{}\" (strength {:.2})", b.id, b.schema_label, b.statement, b.strength);
    }
    out.push_str("Intermediate beliefs:\n");
    if ccd.intermediate_beliefs.is_empty() {
        out.push_str("- none\n");
    }
    for b in &ccd.intermediate_beliefs {
        let _ = writeln!(out, "- [{}] \"{}\" (from {}, strength {:.2})", b.id, b.statement, b.parent, b.strength);
    }
    out.push_str("Coping strategies:\n");
    if ccd.coping_strategies.is_empty() {
        out.push_str("- none\n");
    }
    for c in &ccd.coping_strategies {
        let _ = writeln!(out, "- {}: {}", c.label, c.behavior);
    }

    out.push_str("### Triggered responses\n");
    let _ = writeln!(out, "Situation: {} (intensity {:.2})", outcome.trigger.description, outcome.trigger.intensity);
    out.push_str("Automatic thoughts:\n");
    if outcome.automatic_thoughts.is_empty() {
        out.push_str("- none\n");
    }
    for t in &outcome.automatic_thoughts {
        let _ = writeln!(out, "- \"{}\" (credibility {:.2}, via {})", t.statement, t.credibility, t.source_belief);
    }
    out.push_str("Emotions:");
    for e in Emotion::ALL {
        let _ = write!(out, " {}={:.2}", e.name(), outcome.emotions.get(e));
    }
    out.push('\n');
    out.push_str("Behaviors:\n");
    if outcome.behaviors.is_empty() {
        out.push_str("- none\n");
    }
    for b in &outcome.behaviors {
        let _ = writeln!(out, "- {} ({})", b.behavior, b.strategy);
    }
    out
}

/// Replaces a belief statement, returning the new model and its audit record.
/// The input model is left untouched.
pub fn apply_belief_update(
    ccd: &CcdModel,
    level: BeliefLevel,
    target: &str,
    new_value: &str,
    trigger_event: &str,
    at: DateTime<Utc>,
) -> Result<(CcdModel, BeliefUpdateRecord), CcdError> {
    let mut next = ccd.clone();
    let (old_value, belief_type) = match level {
        BeliefLevel::Core => {
            let b = next
                .core_beliefs
                .iter_mut()
                .find(|b| b.id == target)
                .ok_or_else(|| CcdError::UnknownBelief { level, id: target.into() })?;
            let old = std::mem::replace(&mut b.statement, new_value.to_owned());
            (old, b.schema_label.clone())
        }
        BeliefLevel::Intermediate => {
            let b = next
                .intermediate_beliefs
                .iter_mut()
                .find(|b| b.id == target)
                .ok_or_else(|| CcdError::UnknownBelief { level, id: target.into() })?;
            let old = std::mem::replace(&mut b.statement, new_value.to_owned());
            (old, "conditional_rule".to_owned())
        }
    };
    let record = BeliefUpdateRecord {
        update_id: format!("{}:{}:{}:{}", ccd.agent_id, level, target, at.timestamp_micros()),
        agent_id: ccd.agent_id.clone(),
        belief_level: level,
        belief_type,
        old_value,
        new_value: new_value.to_owned(),
        trigger_event: trigger_event.to_owned(),
        timestamp: at,
    };
    Ok((next, record))
}
