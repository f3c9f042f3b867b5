//! Scenario battery, response records, scorers and score matrices.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{assemble_context, Backend, GenerationConfig};
use crate::condition::ConditionId;
use crate::lexicon::Lexicon;
use crate::persona::{AgentProfile, Dimension, OceanVector, TRAIT_MAX, TRAIT_MIDPOINT, TRAIT_MIN};
use crate::workflow::{run_assessment, AssessmentSetup, WorkflowError};

pub(crate) const BUILTIN_SCENARIOS: &str = include_str!("../fixtures/scenarios.json");
pub const DEFAULT_REPETITIONS: u32 = 5;
pub const DEFAULT_RETRY_BUDGET: u32 = 2;
pub const LEXICAL_SCORER_ID: &str = "lexical-v1";

#[derive(Debug, Error)]
pub enum BatteryError {
    #[error("scenario parse error: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("duplicate scenario id `{0}`")]
    DuplicateScenario(String),
    #[error("scenario `{0}` has an empty prompt")]
    EmptyPrompt(String),
    #[error("empty response for {0}")]
    EmptyResponse(CellKey),
    #[error("scorer failure: {0}")]
    ScorerFailure(String),
    #[error("incomplete run for {condition}: {} missing cell(s), first {}", missing.len(), missing.first().map(|c| c.to_string()).unwrap_or_default())]
    IncompleteRun {
        condition: ConditionId,
        missing: Vec<CellKey>,
    },
    #[error("records mix conditions {0} and {1}")]
    MixedConditions(ConditionId, ConditionId),
    #[error("record {0} has not been scored")]
    Unscored(CellKey),
    #[error("unexpected record {0} outside the battery layout")]
    UnexpectedCell(CellKey),
    #[error("duplicate record {0}")]
    DuplicateCell(CellKey),
    #[error("precondition failed: {0}")]
    Precondition(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub scenario_id: String,
    pub name: String,
    pub description: String,
    pub prompt_text: String,
    #[serde(default)]
    pub tags: BTreeSet<String>,
}

pub fn load_scenarios(text: &str) -> Result<Vec<Scenario>, BatteryError> {
    let list: Vec<Scenario> = serde_json::from_str(text)?;
    let mut seen = HashSet::new();
    for s in &list {
        if !seen.insert(s.scenario_id.as_str()) {
            return Err(BatteryError::DuplicateScenario(s.scenario_id.clone()));
        }
        if s.prompt_text.trim().is_empty() {
            return Err(BatteryError::EmptyPrompt(s.scenario_id.clone()));
        }
    }
    Ok(list)
}

/// The ten standard scenarios, S1 to S10.
pub fn builtin_scenarios() -> Vec<Scenario> {
    load_scenarios(BUILTIN_SCENARIOS).expect("builtin battery is valid")
}

/// Identifies one administration within a condition.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub agent_id: String,
    pub scenario_id: String,
    pub repetition: u32,
}

impl std::fmt::Display for CellKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, rep {})", self.agent_id, self.scenario_id, self.repetition)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseRecord {
    pub agent_id: String,
    pub scenario_id: String,
    pub repetition: u32,
    pub condition: ConditionId,
    pub response_text: String,
    pub ocean_score: Option<OceanVector>,
    pub scorer_id: Option<String>,
    pub latency_ms: u64,
    pub token_count: usize,
    pub seed: u64,
    pub backend_id: String,
    pub model_name: String,
    pub created_at: DateTime<Utc>,
}

impl ResponseRecord {
    pub fn key(&self) -> CellKey {
        CellKey {
            agent_id: self.agent_id.clone(),
            scenario_id: self.scenario_id.clone(),
            repetition: self.repetition,
        }
    }
}

pub trait Scorer: Send + Sync {
    fn id(&self) -> String;
    fn score_text(&self, text: &str) -> Result<OceanVector, BatteryError>;
}

/// Counts indicator phrases: `clamp(3 + 0.5·(high − low), 1, 5)` per dimension.
#[derive(Debug, Clone)]
pub struct LexicalScorer {
    lexicon: Arc<Lexicon>,
}

impl Default for LexicalScorer {
    fn default() -> Self {
        Self::new(Arc::new(Lexicon::builtin()))
    }
}

impl LexicalScorer {
    pub fn new(lexicon: Arc<Lexicon>) -> Self {
        Self { lexicon }
    }
}

impl Scorer for LexicalScorer {
    fn id(&self) -> String {
        LEXICAL_SCORER_ID.into()
    }

    fn score_text(&self, text: &str) -> Result<OceanVector, BatteryError> {
        let c = self.lexicon.count(text);
        let values = std::array::from_fn(|d| {
            (TRAIT_MIDPOINT + 0.5 * (c.high[d] as f64 - c.low[d] as f64)).clamp(TRAIT_MIN, TRAIT_MAX)
        });
        Ok(OceanVector::from_array(values).expect("clamped into range"))
    }
}

/// Asks a model to rate the response; expects a line like
/// `O=3.5 C=4 E=2 A=3 N=4` somewhere in the reply.
pub struct JudgeScorer<B> {
    backend: B,
    config: GenerationConfig,
}

const JUDGE_RUBRIC: &str = "## Rater instructions\n\
You rate a single response on the five personality dimensions, each on a 1 to 5 scale, \
based only on behavioral indicators in the text. Reply with one line in the form \
O=<score> C=<score> E=<score> A=<score> N=<score>.";

impl<B: Backend> JudgeScorer<B> {
    pub fn new(backend: B, config: GenerationConfig) -> Self {
        Self { backend, config }
    }
}

pub fn parse_judge_scores(reply: &str) -> Option<OceanVector> {
    reply.lines().find_map(|line| {
        let mut values = [f64::NAN; 5];
        for part in line.split(|c: char| c.is_whitespace() || c == ',') {
            let Some((k, v)) = part.split_once('=') else { continue };
            let dim = Dimension::ALL.into_iter().find(|d| d.letter().eq_ignore_ascii_case(k.trim()))?;
            values[dim.index()] = v.trim().parse().ok()?;
        }
        OceanVector::from_array(values).ok()
    })
}

impl<B: Backend> Scorer for JudgeScorer<B> {
    fn id(&self) -> String {
        format!("judge({}/{})", self.backend.id(), self.config.model_name)
    }

    fn score_text(&self, text: &str) -> Result<OceanVector, BatteryError> {
        let req = assemble_context(JUDGE_RUBRIC, None, None, text, &[], &self.config)
            .map_err(|e| BatteryError::ScorerFailure(e.to_string()))?;
        let resp = crate::backend::generate(&self.backend, &req).map_err(|e| BatteryError::ScorerFailure(e.to_string()))?;
        parse_judge_scores(&resp.text)
            .ok_or_else(|| BatteryError::ScorerFailure(format!("no valid score line in judge reply: {:.80}", resp.text)))
    }
}

pub fn score_response(record: &ResponseRecord, scorer: &dyn Scorer) -> Result<ResponseRecord, BatteryError> {
    if record.response_text.trim().is_empty() {
        return Err(BatteryError::EmptyResponse(record.key()));
    }
    let mut out = record.clone();
    out.ocean_score = Some(scorer.score_text(&record.response_text)?);
    out.scorer_id = Some(scorer.id());
    Ok(out)
}

/// Expected cells of a battery run, in roster, scenario, repetition order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub agents: Vec<String>,
    pub scenarios: Vec<String>,
    pub repetitions: u32,
}

impl Layout {
    pub fn new(roster: &[AgentProfile], scenarios: &[Scenario], repetitions: u32) -> Self {
        Self {
            agents: roster.iter().map(|p| p.agent_id.clone()).collect(),
            scenarios: scenarios.iter().map(|s| s.scenario_id.clone()).collect(),
            repetitions,
        }
    }

    pub fn cell_count(&self) -> usize {
        self.agents.len() * self.scenarios.len() * self.repetitions as usize
    }

    pub fn cells(&self) -> Vec<CellKey> {
        let mut out = Vec::with_capacity(self.cell_count());
        for a in &self.agents {
            for s in &self.scenarios {
                for r in 1..=self.repetitions {
                    out.push(CellKey {
                        agent_id: a.clone(),
                        scenario_id: s.clone(),
                        repetition: r,
                    });
                }
            }
        }
        out
    }

    fn index_of(&self, key: &CellKey) -> Option<usize> {
        let a = self.agents.iter().position(|x| *x == key.agent_id)?;
        let s = self.scenarios.iter().position(|x| *x == key.scenario_id)?;
        if key.repetition == 0 || key.repetition > self.repetitions {
            return None;
        }
        Some((a * self.scenarios.len() + s) * self.repetitions as usize + key.repetition as usize - 1)
    }
}

/// One administration plus scoring. Backend failures are retried up to
/// `retry_budget` extra times; anything else fails the cell at once.
pub fn administer_cell(
    setup: &AssessmentSetup,
    profile: &AgentProfile,
    scenario: &Scenario,
    repetition: u32,
    scorer: &dyn Scorer,
    retry_budget: u32,
) -> Result<ResponseRecord, CellKey> {
    let key = CellKey {
        agent_id: profile.agent_id.clone(),
        scenario_id: scenario.scenario_id.clone(),
        repetition,
    };
    for _ in 0..=retry_budget {
        match run_assessment(setup, profile, scenario, repetition) {
            Ok(rec) => return score_response(&rec, scorer).map_err(|_| key.clone()),
            Err(WorkflowError::Backend { .. }) => continue,
            Err(_) => break,
        }
    }
    Err(key)
}

/// Runs every cell of the battery, retrying failed administrations up to
/// `retry_budget` extra times, then scores the responses.
pub fn administer_battery(
    setup: &AssessmentSetup,
    roster: &[AgentProfile],
    scenarios: &[Scenario],
    repetitions: u32,
    scorer: &dyn Scorer,
    retry_budget: u32,
) -> Result<Vec<ResponseRecord>, BatteryError> {
    if roster.is_empty() {
        return Err(BatteryError::Precondition("roster is empty".into()));
    }
    if scenarios.is_empty() {
        return Err(BatteryError::Precondition("scenario list is empty".into()));
    }
    if repetitions == 0 {
        return Err(BatteryError::Precondition("repetitions must be at least 1".into()));
    }
    let jobs: Vec<(&AgentProfile, &Scenario, u32)> = roster
        .iter()
        .flat_map(|p| scenarios.iter().flat_map(move |s| (1..=repetitions).map(move |r| (p, s, r))))
        .collect();
    let results: Vec<Result<ResponseRecord, CellKey>> = jobs
        .par_iter()
        .map(|&(p, s, r)| administer_cell(setup, p, s, r, scorer, retry_budget))
        .collect();
    let missing: Vec<CellKey> = results.iter().filter_map(|r| r.as_ref().err().cloned()).collect();
    if !missing.is_empty() {
        return Err(BatteryError::IncompleteRun {
            condition: setup.condition,
            missing,
        });
    }
    Ok(results.into_iter().map(|r| r.expect("checked above")).collect())
}

/// Complete per-condition table of scored vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    condition: ConditionId,
    layout: Layout,
    cells: Vec<OceanVector>,
}

impl ScoreMatrix {
    /// Cells in layout order (agent, then scenario, then repetition).
    pub fn from_cells(condition: ConditionId, layout: Layout, cells: Vec<OceanVector>) -> Result<Self, BatteryError> {
        if cells.len() != layout.cell_count() {
            return Err(BatteryError::Precondition(format!(
                "expected {} cells, got {}",
                layout.cell_count(),
                cells.len()
            )));
        }
        Ok(Self {
            condition,
            layout,
            cells,
        })
    }

    pub fn condition(&self) -> ConditionId {
        self.condition
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Zero-based agent, scenario and repetition indices.
    pub fn get(&self, agent: usize, scenario: usize, rep: usize) -> &OceanVector {
        let s = self.layout.scenarios.len();
        let r = self.layout.repetitions as usize;
        &self.cells[(agent * s + scenario) * r + rep]
    }

    pub fn value(&self, dim: Dimension, agent: usize, scenario: usize, rep: usize) -> f64 {
        self.get(agent, scenario, rep).get(dim)
    }

    /// `(agent index, vector)` for every cell.
    pub fn observations(&self) -> impl Iterator<Item = (usize, &OceanVector)> {
        let per_agent = self.layout.scenarios.len() * self.layout.repetitions as usize;
        self.cells.iter().enumerate().map(move |(i, v)| (i / per_agent, v))
    }
}

pub fn build_score_matrix(records: &[ResponseRecord], layout: &Layout) -> Result<ScoreMatrix, BatteryError> {
    let condition = match records.first() {
        Some(r) => r.condition,
        None => {
            return Err(BatteryError::IncompleteRun {
                condition: ConditionId::Baseline,
                missing: layout.cells(),
            })
        }
    };
    let mut slots: Vec<Option<OceanVector>> = vec![None; layout.cell_count()];
    for r in records {
        if r.condition != condition {
            return Err(BatteryError::MixedConditions(condition, r.condition));
        }
        let key = r.key();
        let i = layout.index_of(&key).ok_or_else(|| BatteryError::UnexpectedCell(key.clone()))?;
        let score = r.ocean_score.ok_or_else(|| BatteryError::Unscored(key.clone()))?;
        if slots[i].replace(score).is_some() {
            return Err(BatteryError::DuplicateCell(key));
        }
    }
    let cells = layout.cells();
    let missing: Vec<CellKey> = slots
        .iter()
        .zip(&cells)
        .filter(|(s, _)| s.is_none())
        .map(|(_, k)| k.clone())
        .collect();
    if !missing.is_empty() {
        return Err(BatteryError::IncompleteRun { condition, missing });
    }
    ScoreMatrix::from_cells(condition, layout.clone(), slots.into_iter().map(Option::unwrap).collect())
}

pub const RECORDS_CSV_HEADER: &str = "condition,agent_id,scenario_id,repetition,O,C,E,A,N,latency_ms,tokens,seed";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// Records table, one row per scored record in the given order.
pub fn records_csv(records: &[ResponseRecord]) -> String {
    let mut out = String::from(RECORDS_CSV_HEADER);
    out.push('\n');
    for r in records {
        let scores = match &r.ocean_score {
            Some(v) => v.to_array().map(|x| x.to_string()).join(","),
            None => ",,,,".into(),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.condition,
            csv_field(&r.agent_id),
            csv_field(&r.scenario_id),
            r.repetition,
            scores,
            r.latency_ms,
            r.token_count,
            r.seed
        );
    }
    out
}

/// Mean token count and latency over records.
pub fn response_means(records: &[ResponseRecord]) -> (f64, f64) {
    if records.is_empty() {
        return (0.0, 0.0);
    }
    let n = records.len() as f64;
    let tokens = records.iter().map(|r| r.token_count as f64).sum::<f64>() / n;
    let latency = records.iter().map(|r| r.latency_ms as f64).sum::<f64>() / n;
    (tokens, latency)
}

/// Count of records per agent, for quick sanity checks.
pub fn records_per_agent(records: &[ResponseRecord]) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for r in records {
        *out.entry(r.agent_id.clone()).or_insert(0) += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_battery_has_ten() {
        let b = builtin_scenarios();
        assert_eq!(b.len(), 10);
        assert_eq!(b[6].scenario_id, "S7");
        assert_eq!(b[6].name, "Ageism Experience");
        assert_eq!(b[0].name, "Medication Adherence");
        assert_eq!(b[9].name, "End-of-Life Planning");
    }

    #[test]
    fn lexical_rule() {
        let s = LexicalScorer::default();
        let v = s.score_text("nothing to see").unwrap();
        assert_eq!(v, OceanVector::neutral());
        let v = s.score_text("I am curious and creative.").unwrap();
        assert_eq!(v.openness, 4.0);
        let v = s.score_text("anxious anxious anxious anxious anxious").unwrap();
        assert_eq!(v.neuroticism, 5.0);
    }

    #[test]
    fn judge_line_parsing() {
        let v = parse_judge_scores("Sure.\nO=3.5 C=4 E=2, A=3 N=4.5\n").unwrap();
        assert_eq!(v.to_array(), [3.5, 4.0, 2.0, 3.0, 4.5]);
        assert!(parse_judge_scores("O=9 C=4 E=2 A=3 N=4").is_none());
        assert!(parse_judge_scores("no scores").is_none());
    }

    #[test]
    fn duplicate_scenario_rejected() {
        let text = r#"[{"scenario_id":"X","name":"a","description":"","prompt_text":"p"},
                      {"scenario_id":"X","name":"b","description":"","prompt_text":"q"}]"#;
        assert!(matches!(load_scenarios(text), Err(BatteryError::DuplicateScenario(_))));
    }

    #[test]
    fn csv_quotes_commas() {
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("ab"), "ab");
    }
}
