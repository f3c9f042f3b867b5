//! Turn and event schedulers for the four interaction patterns: dyadic
//! dialogue, multi-party social simulation, multi-round intervention
//! sessions and single-shot assessment.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{
    assemble_context, Backend, BackendError, GenerationConfig, GenerationRequest, HistoryTurn, Role, Subject,
};
use crate::battery::{ResponseRecord, Scenario};
use crate::ccd::{appraise, render_ccd_block, AppraisalOutcome, CcdModel, EmotionVector, SituationTrigger};
use crate::condition::{ConditionFlags, ConditionId};
use crate::memory::{
    render_memory_block, summarize_session, DialogueTurn, ExtractiveSummarizer, MemoryError, MemoryStore,
    SessionInfo, ShortTermMemory, Summarizer, DEFAULT_RETRIEVAL_K,
};
use crate::persona::{render_persona_block, AgentProfile};
use crate::seeding::derive_seed;

pub const MIN_SOCIAL_AGENTS: usize = 3;
pub const MAX_SOCIAL_AGENTS: usize = 6;
pub const DEFAULT_ROUNDS: usize = 6;
/// Appraisal intensity for situations that do not state one.
pub const DEFAULT_INTENSITY: f64 = 0.6;

#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error("backend failed at turn {turn}: {source}")]
    Backend {
        turn: usize,
        #[source]
        source: BackendError,
        partial: Box<Transcript>,
    },
    #[error("social simulation needs {MIN_SOCIAL_AGENTS} to {MAX_SOCIAL_AGENTS} agents, got {0}")]
    RosterSize(usize),
    #[error("event schedule is empty")]
    EmptySchedule,
    #[error("invalid workflow input: {0}")]
    Invalid(String),
    #[error("agent `{0}` is not a participant")]
    UnknownAgent(String),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error("parse error in {what}: {source}")]
    Parse {
        what: &'static str,
        #[source]
        source: serde_json::Error,
    },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkflowType {
    DualDialogue,
    SocialSimulation,
    InterventionProtocol,
    AssessmentProtocol,
}

impl fmt::Display for WorkflowType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WorkflowType::DualDialogue => "dual_dialogue",
            WorkflowType::SocialSimulation => "social_simulation",
            WorkflowType::InterventionProtocol => "intervention_protocol",
            WorkflowType::AssessmentProtocol => "assessment_protocol",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptTurn {
    pub index: usize,
    pub speaker: String,
    pub text: String,
    pub timestamp: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub workflow_type: WorkflowType,
    pub session_id: String,
    pub participants: Vec<String>,
    pub turns: Vec<TranscriptTurn>,
    /// False when a backend error cut the session short.
    pub complete: bool,
}

impl Transcript {
    pub(crate) fn new(workflow_type: WorkflowType, session_id: String, participants: Vec<String>) -> Self {
        Self {
            workflow_type,
            session_id,
            participants,
            turns: Vec::new(),
            complete: false,
        }
    }

    pub fn speakers(&self) -> Vec<&str> {
        self.turns.iter().map(|t| t.speaker.as_str()).collect()
    }

    /// One JSON object per turn, each carrying the session id and type.
    pub fn to_jsonl(&self) -> String {
        #[derive(Serialize)]
        struct Line<'a> {
            session_id: &'a str,
            workflow_type: WorkflowType,
            #[serde(flatten)]
            turn: &'a TranscriptTurn,
        }
        let mut out = String::new();
        for turn in &self.turns {
            let line = Line {
                session_id: &self.session_id,
                workflow_type: self.workflow_type,
                turn,
            };
            out.push_str(&serde_json::to_string(&line).expect("turn serializes"));
            out.push('\n');
        }
        out
    }
}

/// A prompt plus the tags used for appraisal and retrieval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Situation {
    pub text: String,
    #[serde(default)]
    pub tags: BTreeSet<String>,
    #[serde(default = "default_intensity")]
    pub intensity: f64,
}

fn default_intensity() -> f64 {
    DEFAULT_INTENSITY
}

impl Situation {
    pub fn new<I, S>(text: impl Into<String>, tags: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            text: text.into(),
            tags: tags.into_iter().map(Into::into).collect(),
            intensity: DEFAULT_INTENSITY,
        }
    }

    fn trigger(&self) -> SituationTrigger {
        SituationTrigger::new(self.text.clone(), self.tags.iter().cloned(), self.intensity)
    }
}

/// An agent taking part in a workflow.
#[derive(Debug, Clone)]
pub struct Participant {
    pub profile: AgentProfile,
    pub ccd: Option<CcdModel>,
    pub stm: ShortTermMemory,
}

impl Participant {
    pub fn new(profile: AgentProfile) -> Self {
        Self {
            profile,
            ccd: None,
            stm: ShortTermMemory::default(),
        }
    }

    pub fn with_ccd(mut self, ccd: CcdModel) -> Self {
        self.ccd = Some(ccd);
        self
    }

    pub fn id(&self) -> &str {
        &self.profile.agent_id
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundSpec {
    pub goal: String,
    pub opening_prompt: String,
    pub max_exchanges: usize,
    #[serde(default)]
    pub tags: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterventionProtocol {
    pub rounds: Vec<RoundSpec>,
}

impl InterventionProtocol {
    pub fn from_json(text: &str) -> Result<Self, WorkflowError> {
        let p: Self = serde_json::from_str(text).map_err(|source| WorkflowError::Parse {
            what: "intervention protocol",
            source,
        })?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self, WorkflowError> {
        Self::from_json(&read(path)?)
    }

    pub fn validate(&self) -> Result<(), WorkflowError> {
        if self.rounds.is_empty() {
            return Err(WorkflowError::Invalid("protocol has no rounds".into()));
        }
        for (i, r) in self.rounds.iter().enumerate() {
            if r.max_exchanges == 0 {
                return Err(WorkflowError::Invalid(format!("round {} allows no exchanges", i + 1)));
            }
            if r.opening_prompt.trim().is_empty() {
                return Err(WorkflowError::Invalid(format!("round {} has an empty opening prompt", i + 1)));
            }
        }
        Ok(())
    }

    /// A six-round structured therapy course.
    pub fn default_cbt() -> Self {
        const ROUNDS: [(&str, &str, &[&str]); DEFAULT_ROUNDS] = [
            (
                "Build rapport and agree on the session focus",
                "Thank you for coming in today. What has been on your mind most this past week?",
                &["health", "loneliness"],
            ),
            (
                "Identify automatic thoughts in a recent difficult moment",
                "Can you walk me through a recent moment that left you upset? What went through your mind right then?",
                &["loneliness", "burden"],
            ),
            (
                "Link thoughts to feelings and behaviors",
                "When that thought came up, how did you feel, and what did you do next?",
                &["family", "burden"],
            ),
            (
                "Examine the evidence for and against the thought",
                "Let us look at that thought together. What supports it, and what might not fit?",
                &["family", "health"],
            ),
            (
                "Plan a small behavioral experiment",
                "What is one small step you could try this week to test that belief?",
                &["social", "autonomy"],
            ),
            (
                "Review progress and plan for relapse prevention",
                "Looking back over our sessions, what has changed for you, and what would you like to keep doing?",
                &["health", "family"],
            ),
        ];
        Self {
            rounds: ROUNDS
                .iter()
                .map(|(goal, prompt, tags)| RoundSpec {
                    goal: (*goal).into(),
                    opening_prompt: (*prompt).into(),
                    max_exchanges: 3,
                    tags: tags.iter().map(|t| (*t).to_owned()).collect(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduledEvent {
    pub event: Situation,
    pub addressed: Vec<String>,
}

pub fn load_event_schedule(text: &str) -> Result<Vec<ScheduledEvent>, WorkflowError> {
    serde_json::from_str(text).map_err(|source| WorkflowError::Parse {
        what: "event schedule",
        source,
    })
}

fn read(path: &Path) -> Result<String, WorkflowError> {
    std::fs::read_to_string(path).map_err(|source| WorkflowError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Shared settings for the conversational workflows.
pub struct Simulation<'a> {
    pub backend: &'a dyn Backend,
    pub config: GenerationConfig,
    pub flags: ConditionFlags,
    pub store: Option<&'a MemoryStore>,
    /// Timestamp of the first turn; later turns are spaced by `turn_interval`.
    pub start: DateTime<Utc>,
    pub turn_interval: Duration,
    pub retrieval_k: usize,
}

impl<'a> Simulation<'a> {
    pub fn new(backend: &'a dyn Backend, flags: ConditionFlags, start: DateTime<Utc>) -> Self {
        Self {
            backend,
            config: GenerationConfig::default(),
            flags,
            store: None,
            start,
            turn_interval: Duration::minutes(1),
            retrieval_k: DEFAULT_RETRIEVAL_K,
        }
    }

    pub fn with_store(mut self, store: &'a MemoryStore) -> Self {
        self.store = Some(store);
        self
    }

    pub fn with_config(mut self, config: GenerationConfig) -> Self {
        self.config = config;
        self
    }

    fn memory_block(&self, agent_id: &str, tags: &BTreeSet<String>, now: DateTime<Utc>) -> Result<Option<String>, MemoryError> {
        memory_block(self.flags, self.store, agent_id, tags, now, self.retrieval_k)
    }
}

fn memory_block(
    flags: ConditionFlags,
    store: Option<&MemoryStore>,
    agent_id: &str,
    tags: &BTreeSet<String>,
    now: DateTime<Utc>,
    k: usize,
) -> Result<Option<String>, MemoryError> {
    match store {
        Some(store) if flags.memory && store.is_registered(agent_id)? => {
            let bundle = store.retrieve_context(agent_id, tags, now, k)?;
            Ok(Some(render_memory_block(&bundle)))
        }
        _ => Ok(None),
    }
}

fn appraisal(flags: ConditionFlags, ccd: Option<&CcdModel>, situation: &Situation, baseline: &EmotionVector) -> Option<(AppraisalOutcome, String)> {
    let ccd = ccd.filter(|_| flags.ccd)?;
    let outcome = appraise(ccd, &situation.trigger(), baseline);
    let block = render_ccd_block(ccd, &outcome);
    Some((outcome, block))
}

fn history_for(stm: &ShortTermMemory, me: &str) -> Vec<HistoryTurn> {
    stm.turns()
        .iter()
        .map(|t| HistoryTurn {
            speaker: t.speaker.clone(),
            role: if t.speaker == me { Role::Assistant } else { Role::User },
            text: t.text.clone(),
        })
        .collect()
}

/// One generated turn for `speaker`, appended to the transcript and to every
/// listener's short-term memory.
pub(crate) fn take_turn(
    sim: &Simulation,
    participants: &mut [Participant],
    speaker: usize,
    situation: &Situation,
    transcript: &mut Transcript,
    seed: u64,
) -> Result<bool, WorkflowError> {
    let index = transcript.turns.len();
    let now = sim.start + sim.turn_interval * index as i32;
    let fail = |source: BackendError, transcript: &Transcript| WorkflowError::Backend {
        turn: index,
        source,
        partial: Box::new(transcript.clone()),
    };

    let p = &mut participants[speaker];
    let agent_id = p.id().to_owned();
    let memory = sim.memory_block(&agent_id, &situation.tags, now)?;
    let ccd = appraisal(sim.flags, p.ccd.as_ref(), situation, &p.stm.emotional_state);
    let mut importance = 0.5;
    if let Some((outcome, _)) = &ccd {
        p.stm.record_appraisal(outcome);
        importance = outcome.emotions.anxiety.max(outcome.emotions.sadness).max(importance);
    }
    let history = history_for(&p.stm, &agent_id);
    let mut config = sim.config.clone();
    config.seed = Some(derive_seed(&[&seed.to_string(), &transcript.session_id, &index.to_string()]));
    let request = assemble_context(
        &render_persona_block(&p.profile),
        memory.as_deref(),
        ccd.as_ref().map(|(_, b)| b.as_str()),
        &situation.text,
        &history,
        &config,
    )
    .map_err(|e| fail(e, transcript))?
    .with_subject(Subject {
        agent_id: agent_id.clone(),
        scenario_id: transcript.session_id.clone(),
        repetition: index as u32,
    });
    let response = crate::backend::generate(sim.backend, &request).map_err(|e| fail(e, transcript))?;
    if response.text.trim().is_empty() {
        return Ok(false);
    }

    let mut metadata = BTreeMap::new();
    metadata.insert("backend_id".into(), response.backend_id.clone());
    metadata.insert("latency_ms".into(), response.latency_ms.to_string());
    metadata.insert("tokens".into(), response.token_count.to_string());
    transcript.turns.push(TranscriptTurn {
        index,
        speaker: agent_id.clone(),
        text: response.text.clone(),
        timestamp: now,
        metadata,
    });
    let turn = DialogueTurn::new(agent_id, response.text, now, importance).with_tags(situation.tags.iter().cloned());
    for p in participants.iter_mut() {
        p.stm.append_turn(turn.clone())?;
    }
    Ok(true)
}

pub(crate) fn session_id(kind: WorkflowType, ids: &[&str], seed: u64) -> String {
    let mut parts = vec![kind.to_string(), seed.to_string()];
    parts.extend(ids.iter().map(|s| s.to_string()));
    let refs: Vec<&str> = parts.iter().map(String::as_str).collect();
    format!("{}-{:016x}", kind, derive_seed(&refs))
}

/// Alternates `a`, `b`, `a`, ... until `max_turns` or an empty response.
pub fn run_dual_dialogue(
    sim: &Simulation,
    a: &mut Participant,
    b: &mut Participant,
    opening: &Situation,
    max_turns: usize,
    seed: u64,
) -> Result<Transcript, WorkflowError> {
    if a.id() == b.id() {
        return Err(WorkflowError::Invalid("dual dialogue needs two distinct agents".into()));
    }
    if max_turns == 0 {
        return Err(WorkflowError::Invalid("max_turns must be at least 1".into()));
    }
    let ids = [a.id().to_owned(), b.id().to_owned()];
    let mut transcript = Transcript::new(
        WorkflowType::DualDialogue,
        session_id(WorkflowType::DualDialogue, &[&ids[0], &ids[1]], seed),
        ids.to_vec(),
    );
    let mut pair = [a.clone(), b.clone()];
    let result = (|| -> Result<(), WorkflowError> {
        for turn in 0..max_turns {
            if !take_turn(sim, &mut pair, turn % 2, opening, &mut transcript, seed)? {
                break;
            }
        }
        Ok(())
    })();
    let [na, nb] = pair;
    *a = na;
    *b = nb;
    result?;
    transcript.complete = true;
    Ok(transcript)
}

/// Dispatches events in order; each addressed agent answers once, in roster
/// order, and sees the answers given before it.
pub fn run_social_simulation(
    sim: &Simulation,
    agents: &mut [Participant],
    schedule: &[ScheduledEvent],
    seed: u64,
) -> Result<Transcript, WorkflowError> {
    if !(MIN_SOCIAL_AGENTS..=MAX_SOCIAL_AGENTS).contains(&agents.len()) {
        return Err(WorkflowError::RosterSize(agents.len()));
    }
    if schedule.is_empty() {
        return Err(WorkflowError::EmptySchedule);
    }
    let ids: Vec<String> = agents.iter().map(|p| p.id().to_owned()).collect();
    if ids.iter().collect::<BTreeSet<_>>().len() != ids.len() {
        return Err(WorkflowError::Invalid("duplicate agent in roster".into()));
    }
    for ev in schedule {
        if ev.addressed.is_empty() {
            return Err(WorkflowError::Invalid(format!("event `{}` addresses nobody", ev.event.text)));
        }
        if let Some(unknown) = ev.addressed.iter().find(|a| !ids.contains(a)) {
            return Err(WorkflowError::UnknownAgent(unknown.clone()));
        }
    }
    let id_refs: Vec<&str> = ids.iter().map(String::as_str).collect();
    let mut transcript = Transcript::new(
        WorkflowType::SocialSimulation,
        session_id(WorkflowType::SocialSimulation, &id_refs, seed),
        ids.clone(),
    );
    for (event_index, ev) in schedule.iter().enumerate() {
        for (i, id) in ids.iter().enumerate() {
            if !ev.addressed.contains(id) {
                continue;
            }
            let before = transcript.turns.len();
            take_turn(sim, agents, i, &ev.event, &mut transcript, seed)?;
            if let Some(t) = transcript.turns.get_mut(before) {
                t.metadata.insert("event".into(), event_index.to_string());
            }
        }
    }
    transcript.complete = true;
    Ok(transcript)
}

/// Runs every round of `protocol`. Each round opens with the therapist and
/// consists of up to `max_exchanges` therapist/older-adult exchanges. After a
/// round, an extractive summary of the older adult's view of it is written to
/// the long-term store (when one is configured) so later rounds can retrieve it.
pub fn run_intervention(
    sim: &Simulation,
    older_adult: &mut Participant,
    therapist: &mut Participant,
    protocol: &InterventionProtocol,
    seed: u64,
) -> Result<Vec<Transcript>, WorkflowError> {
    protocol.validate()?;
    if older_adult.id() == therapist.id() {
        return Err(WorkflowError::Invalid("intervention needs two distinct agents".into()));
    }
    if let Some(store) = sim.store {
        store.register_agent(older_adult.id())?;
    }
    let ids = [therapist.id().to_owned(), older_adult.id().to_owned()];
    let base = session_id(WorkflowType::InterventionProtocol, &[&ids[0], &ids[1]], seed);
    let mut pair = [therapist.clone(), older_adult.clone()];
    let mut out = Vec::with_capacity(protocol.rounds.len());
    let mut clock = sim.start;

    let result = (|| -> Result<(), WorkflowError> {
        for (i, round) in protocol.rounds.iter().enumerate() {
            for p in pair.iter_mut() {
                p.stm = ShortTermMemory::with_capacity(p.stm.capacity());
            }
            let round_sim = Simulation {
                backend: sim.backend,
                config: sim.config.clone(),
                flags: sim.flags,
                store: sim.store,
                start: clock,
                turn_interval: sim.turn_interval,
                retrieval_k: sim.retrieval_k,
            };
            let mut transcript = Transcript::new(
                WorkflowType::InterventionProtocol,
                format!("{base}-round-{}", i + 1),
                ids.to_vec(),
            );
            let situation = Situation {
                text: format!("Session goal: {}\n{}", round.goal, round.opening_prompt),
                tags: round.tags.clone(),
                intensity: DEFAULT_INTENSITY,
            };
            'round: for _ in 0..round.max_exchanges {
                for speaker in 0..2 {
                    if !take_turn(&round_sim, &mut pair, speaker, &situation, &mut transcript, seed)? {
                        break 'round;
                    }
                }
            }
            transcript.complete = true;
            clock = clock + sim.turn_interval * (transcript.turns.len() as i32 + 1);
            if let (Some(store), false) = (sim.store, pair[1].stm.is_empty()) {
                let info = SessionInfo {
                    session_id: transcript.session_id.clone(),
                    agent_id: ids[1].clone(),
                    created_at: clock,
                };
                let summary = summarize_session(&pair[1].stm, &ExtractiveSummarizer as &dyn Summarizer, &info)?;
                store.store_summary(&summary)?;
            }
            out.push(transcript);
        }
        Ok(())
    })();
    let [t, o] = pair;
    *therapist = t;
    *older_adult = o;
    result.map(|_| out)
}

/// Everything an assessment administration needs besides the cell itself.
pub struct AssessmentSetup<'a> {
    pub backend: &'a dyn Backend,
    pub config: GenerationConfig,
    pub condition: ConditionId,
    pub flags: ConditionFlags,
    pub store: Option<&'a MemoryStore>,
    pub ccds: &'a HashMap<String, CcdModel>,
    pub global_seed: u64,
    /// Reference time for retrieval decay and record timestamps.
    pub now: DateTime<Utc>,
    pub retrieval_k: usize,
}

/// Stable per-record seed; independent of scheduling order.
pub fn record_seed(global_seed: u64, agent_id: &str, scenario_id: &str, repetition: u32, condition: ConditionId) -> u64 {
    derive_seed(&[
        &global_seed.to_string(),
        agent_id,
        scenario_id,
        &repetition.to_string(),
        condition.as_str(),
    ])
}

/// Builds the request for one administration without sending it.
pub fn assessment_request(
    setup: &AssessmentSetup,
    profile: &AgentProfile,
    scenario: &Scenario,
    repetition: u32,
) -> Result<GenerationRequest, WorkflowError> {
    let agent_id = &profile.agent_id;
    let memory = memory_block(setup.flags, setup.store, agent_id, &scenario.tags, setup.now, setup.retrieval_k)?;
    let situation = Situation {
        text: scenario.prompt_text.clone(),
        tags: scenario.tags.clone(),
        intensity: DEFAULT_INTENSITY,
    };
    let ccd = appraisal(setup.flags, setup.ccds.get(agent_id), &situation, &EmotionVector::default());
    let mut config = setup.config.clone();
    config.seed = Some(record_seed(setup.global_seed, agent_id, &scenario.scenario_id, repetition, setup.condition));
    let request = assemble_context(
        &render_persona_block(profile),
        memory.as_deref(),
        ccd.as_ref().map(|(_, b)| b.as_str()),
        &scenario.prompt_text,
        &[],
        &config,
    )
    .map_err(|source| WorkflowError::Backend {
        turn: 0,
        source,
        partial: Box::new(Transcript::new(WorkflowType::AssessmentProtocol, String::new(), vec![agent_id.clone()])),
    })?;
    Ok(request.with_subject(Subject {
        agent_id: agent_id.clone(),
        scenario_id: scenario.scenario_id.clone(),
        repetition,
    }))
}

/// One single-shot administration wrapped into an unscored record.
pub fn run_assessment(
    setup: &AssessmentSetup,
    profile: &AgentProfile,
    scenario: &Scenario,
    repetition: u32,
) -> Result<ResponseRecord, WorkflowError> {
    let request = assessment_request(setup, profile, scenario, repetition)?;
    let response = crate::backend::generate(setup.backend, &request).map_err(|source| WorkflowError::Backend {
        turn: 0,
        source,
        partial: Box::new(Transcript::new(
            WorkflowType::AssessmentProtocol,
            format!("{}:{}:{}", profile.agent_id, scenario.scenario_id, repetition),
            vec![profile.agent_id.clone()],
        )),
    })?;
    Ok(ResponseRecord {
        agent_id: profile.agent_id.clone(),
        scenario_id: scenario.scenario_id.clone(),
        repetition,
        condition: setup.condition,
        response_text: response.text,
        ocean_score: None,
        scorer_id: None,
        latency_ms: response.latency_ms,
        token_count: response.token_count,
        seed: request.config.seed.expect("seed set above"),
        backend_id: response.backend_id,
        model_name: request.config.model_name.clone(),
        created_at: setup.now,
    })
}
