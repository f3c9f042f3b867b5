//! Four-condition ablation: resumable batched administration, per-condition
//! reliability statistics and the cross-condition report suite.

mod config;
mod report;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{
    BackendMode, Inputs, RunConfig, ScorerKind, SigmaSchedule, DEFAULT_LORA_MODEL, DEFAULT_REFERENCE_TIME, DEFAULT_SEED,
};
pub use report::{
    export, summarize, AblationDataset, AblationReport, CoherenceJudge, ComparisonRow, ConditionSummary,
    DataCharacteristics, DiscriminationRow, ExportFormat, IccRow, ReportManifest, Table,
};

use crate::backend::{Backend, HttpBackend, ScriptedBackend, API_KEY_ENV};
use crate::battery::{administer_cell, BatteryError, CellKey, JudgeScorer, Layout, LexicalScorer, ResponseRecord, Scorer};
use crate::condition::{condition_flags, ConditionId};
use crate::memory::{MemoryError, MemoryStore, DEFAULT_RETRIEVAL_K};
use crate::persona::AgentProfile;
use crate::psychometrics::PsychError;
use crate::seeding::sha256_hex;
use crate::workflow::AssessmentSetup;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RECORDS_DIR: &str = "records";
pub const REPORTS_DIR: &str = "reports";
pub const ROSTER_SNAPSHOT: &str = "roster.json";
pub const RECORDS_CSV: &str = "records.csv";
pub const MEMORY_DB: &str = "memory.sqlite";

#[derive(Debug, Error)]
pub enum AblationError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Battery(#[from] BatteryError),
    #[error(transparent)]
    Psych(#[from] PsychError),
    #[error("run directory holds a run with config hash {found}, current config hashes to {expected}; use force to start over")]
    ConfigChanged { expected: String, found: String },
    #[error("run in {} is incomplete; resume it or force a fresh start", .0.display())]
    ResumeRequired(PathBuf),
    #[error("no run found in {}", .0.display())]
    MissingRun(PathBuf),
    #[error("checksum mismatch for {}: manifest has {expected}, file has {found}", path.display())]
    Checksum { path: PathBuf, expected: String, found: String },
    #[error("missing condition: {0}")]
    MissingCondition(String),
    #[error("unknown export format `{0}` (expected tabular-text, structured-text or human-readable)")]
    UnknownFormat(String),
}

impl AblationError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        AblationError::Io {
            path: path.to_owned(),
            source,
        }
    }

    /// Cells left unfinished, when this is an incomplete-run error.
    pub fn missing_cells(&self) -> Option<(ConditionId, &[CellKey])> {
        match self {
            AblationError::Battery(BatteryError::IncompleteRun { condition, missing }) => Some((*condition, missing)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionState {
    pub condition: ConditionId,
    pub expected: usize,
    pub completed: usize,
    pub complete: bool,
    #[serde(default)]
    pub failed: Vec<CellKey>,
    pub backend_id: Option<String>,
    pub model_name: String,
    /// Checksum of the sorted records file, set on completion.
    pub records_sha256: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config_hash: String,
    pub global_seed: u64,
    pub tool_version: String,
    pub mode: BackendMode,
    pub scorer_id: String,
    pub layout: Layout,
    pub conditions: Vec<ConditionState>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

impl RunManifest {
    pub fn load(run_dir: &Path) -> Result<Self, AblationError> {
        let path = run_dir.join(MANIFEST_FILE);
        if !path.is_file() {
            return Err(AblationError::MissingRun(run_dir.to_owned()));
        }
        let text = fs::read_to_string(&path).map_err(|e| AblationError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|source| AblationError::Json { path, source })
    }

    pub fn save(&self, run_dir: &Path) -> Result<(), AblationError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_atomic(&run_dir.join(MANIFEST_FILE), text.as_bytes())
    }

    pub fn state(&self, c: ConditionId) -> Option<&ConditionState> {
        self.conditions.iter().find(|s| s.condition == c)
    }

    fn state_mut(&mut self, c: ConditionId) -> &mut ConditionState {
        self.conditions.iter_mut().find(|s| s.condition == c).expect("condition in manifest")
    }

    pub fn is_complete(&self) -> bool {
        self.conditions.iter().all(|s| s.complete)
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), AblationError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| AblationError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| AblationError::io(path, e))
}

/// Hash over the effective configuration and the contents of every input
/// file. Output location and scheduling knobs are excluded since they do
/// not change results.
pub fn config_hash(config: &RunConfig, inputs: &Inputs) -> String {
    let mut v = serde_json::to_value(config).expect("config serializes");
    let map = v.as_object_mut().expect("config is an object");
    for key in ["output_dir", "parallelism", "batch_size", "roster_dir", "ccd_dir", "memory_dir", "scenarios", "lexicon"] {
        map.remove(key);
    }
    let mut buf = serde_json::to_string(&v).expect("value serializes");
    for (name, bytes) in &inputs.sources {
        buf.push('\n');
        buf.push_str(name);
        buf.push('=');
        buf.push_str(&sha256_hex(bytes));
    }
    sha256_hex(buf.as_bytes())
}

pub fn records_path(run_dir: &Path, c: ConditionId) -> PathBuf {
    run_dir.join(RECORDS_DIR).join(format!("{}.jsonl", c.as_str()))
}

/// Reads a records file. A torn final line, left by an interrupted append,
/// is dropped; any other malformed line is an error.
pub fn read_records(path: &Path) -> Result<Vec<ResponseRecord>, AblationError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(AblationError::io(path, e)),
    };
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        match serde_json::from_str(line) {
            Ok(r) => out.push(r),
            Err(_) if i + 1 == lines.len() && !text.ends_with('\n') => break,
            Err(source) => {
                return Err(AblationError::Json {
                    path: path.to_owned(),
                    source,
                })
            }
        }
    }
    Ok(out)
}

fn records_jsonl(records: &[ResponseRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// Builds the backend serving one condition.
pub type BackendFactory = Box<dyn Fn(ConditionId) -> Arc<dyn Backend> + Send + Sync>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub resume: bool,
    pub force: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Progress {
    ConditionStarted { condition: ConditionId, done: usize, pending: usize },
    BatchFinished { condition: ConditionId, completed: usize, expected: usize, failed: usize },
    ConditionFinished { condition: ConditionId, complete: bool },
    ConditionSkipped { condition: ConditionId },
}

#[derive(Debug)]
pub struct RunOutcome {
    pub run_dir: PathBuf,
    pub manifest: RunManifest,
    pub report: AblationReport,
    /// Administrations attempted in this invocation.
    pub generated: usize,
    pub files: Vec<PathBuf>,
}

pub struct Ablation {
    config: RunConfig,
    inputs: Inputs,
    factory: BackendFactory,
    scorer: Arc<dyn Scorer>,
    judge: Option<Arc<dyn CoherenceJudge>>,
    hash: String,
}

impl Ablation {
    pub fn new(config: RunConfig, inputs: Inputs) -> Self {
        let hash = config_hash(&config, &inputs);
        let factory = default_factory(&config, &inputs);
        let scorer = default_scorer(&config, &inputs);
        Self {
            config,
            inputs,
            factory,
            scorer,
            judge: None,
            hash,
        }
    }

    /// Loads the config file and everything it points to.
    pub fn from_config_file(path: &Path) -> Result<Self, AblationError> {
        let mut config = RunConfig::load(path)?;
        config.apply_env();
        let inputs = Inputs::load(&config)?;
        Ok(Self::new(config, inputs))
    }

    pub fn with_backend_factory(mut self, factory: BackendFactory) -> Self {
        self.factory = factory;
        self
    }

    pub fn with_scorer(mut self, scorer: Arc<dyn Scorer>) -> Self {
        self.scorer = scorer;
        self
    }

    pub fn with_coherence_judge(mut self, judge: Arc<dyn CoherenceJudge>) -> Self {
        self.judge = Some(judge);
        self
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn inputs(&self) -> &Inputs {
        &self.inputs
    }

    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.inputs.roster.profiles(), &self.inputs.scenarios, self.config.repetitions)
    }

    fn fresh_manifest(&self) -> RunManifest {
        let layout = self.layout();
        let now = Utc::now();
        RunManifest {
            run_id: format!("run-{}", &self.hash[..12]),
            config_hash: self.hash.clone(),
            global_seed: self.config.seed,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            mode: self.config.mode,
            scorer_id: self.scorer.id(),
            conditions: self
                .config
                .ordered_conditions()
                .into_iter()
                .map(|c| ConditionState {
                    condition: c,
                    expected: layout.cell_count(),
                    completed: 0,
                    complete: false,
                    failed: Vec::new(),
                    backend_id: None,
                    model_name: self.config.generation_for(c).model_name,
                    records_sha256: None,
                })
                .collect(),
            layout,
            created_at: now,
            updated_at: now,
        }
    }

    /// Runs every configured condition, then summarizes and exports.
    pub fn run(&self, opts: RunOptions, progress: &mut dyn FnMut(&Progress)) -> Result<RunOutcome, AblationError> {
        let dir = self.config.output_dir.clone();
        fs::create_dir_all(dir.join(RECORDS_DIR)).map_err(|e| AblationError::io(&dir, e))?;

        let mut manifest = match RunManifest::load(&dir) {
            Ok(m) if opts.force => {
                clear_run(&dir, &m)?;
                self.fresh_manifest()
            }
            Ok(m) if m.config_hash != self.hash => {
                return Err(AblationError::ConfigChanged {
                    expected: self.hash.clone(),
                    found: m.config_hash,
                })
            }
            Ok(m) if !m.is_complete() && !opts.resume => return Err(AblationError::ResumeRequired(dir)),
            Ok(m) => m,
            Err(AblationError::MissingRun(_)) => {
                clear_stale(&dir, &self.config.ordered_conditions())?;
                self.fresh_manifest()
            }
            Err(e) => return Err(e),
        };
        manifest.save(&dir)?;
        write_atomic(&dir.join("config.toml"), self.config.to_toml().as_bytes())?;
        let roster_json = serde_json::to_string_pretty(self.inputs.roster.profiles()).expect("roster serializes");
        write_atomic(&dir.join(ROSTER_SNAPSHOT), roster_json.as_bytes())?;

        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.parallelism)
            .build()
            .map_err(|e| AblationError::Config(format!("thread pool: {e}")))?;
        let mut store: Option<MemoryStore> = None;
        let mut generated = 0;
        let mut records = BTreeMap::new();

        for c in self.config.ordered_conditions() {
            let path = records_path(&dir, c);
            if manifest.state(c).is_some_and(|s| s.complete) {
                progress(&Progress::ConditionSkipped { condition: c });
                let state = manifest.state(c).expect("checked");
                records.insert(c, read_verified(&path, state)?);
                continue;
            }
            if store.is_none() && condition_flags(c).memory {
                store = Some(self.open_store(&dir)?);
            }
            let (recs, n) = self.run_condition(c, &dir, &mut manifest, store.as_ref(), &pool, progress)?;
            generated += n;
            records.insert(c, recs);
        }

        let dataset = AblationDataset {
            roster: self.inputs.roster.profiles().to_vec(),
            layout: manifest.layout.clone(),
            scorer_id: manifest.scorer_id.clone(),
            seed: manifest.global_seed,
            records,
            manifest: Some(ReportManifest::from_manifest(&manifest)),
        };
        let files = write_outputs(&dir, &dataset, self.judge.as_deref())?;
        let report = summarize(&dataset, self.judge.as_deref())?;
        Ok(RunOutcome {
            run_dir: dir,
            manifest,
            report,
            generated,
            files,
        })
    }

    /// Recreates the long-term store from the configured memory dumps.
    fn open_store(&self, dir: &Path) -> Result<MemoryStore, AblationError> {
        let path = dir.join(MEMORY_DB);
        if path.exists() {
            fs::remove_file(&path).map_err(|e| AblationError::io(&path, e))?;
        }
        let store = MemoryStore::open(&path)?;
        for dump in &self.inputs.memory {
            store.load_dump(dump)?;
        }
        Ok(store)
    }

    fn run_condition(
        &self,
        c: ConditionId,
        dir: &Path,
        manifest: &mut RunManifest,
        store: Option<&MemoryStore>,
        pool: &rayon::ThreadPool,
        progress: &mut dyn FnMut(&Progress),
    ) -> Result<(Vec<ResponseRecord>, usize), AblationError> {
        let layout = manifest.layout.clone();
        let path = records_path(dir, c);
        let cells = layout.cells();
        let wanted: HashSet<&CellKey> = cells.iter().collect();
        let mut seen = HashSet::new();
        let mut done: Vec<ResponseRecord> = read_records(&path)?
            .into_iter()
            .filter(|r| r.condition == c && r.ocean_score.is_some() && wanted.contains(&r.key()) && seen.insert(r.key()))
            .collect();
        // Normalize the file so appends never follow a torn line.
        write_atomic(&path, records_jsonl(&done).as_bytes())?;
        let pending: Vec<&CellKey> = cells.iter().filter(|k| !seen.contains(*k)).collect();
        progress(&Progress::ConditionStarted {
            condition: c,
            done: done.len(),
            pending: pending.len(),
        });

        let backend = (self.factory)(c);
        let flags = condition_flags(c);
        let setup = AssessmentSetup {
            backend: backend.as_ref(),
            config: self.config.generation_for(c),
            condition: c,
            flags,
            store: if flags.memory { store } else { None },
            ccds: &self.inputs.ccds,
            global_seed: self.config.seed,
            now: self.config.reference_time,
            retrieval_k: DEFAULT_RETRIEVAL_K,
        };
        let profiles: HashMap<&str, &AgentProfile> =
            self.inputs.roster.profiles().iter().map(|p| (p.agent_id.as_str(), p)).collect();
        let scenarios: HashMap<&str, _> = self.inputs.scenarios.iter().map(|s| (s.scenario_id.as_str(), s)).collect();

        {
            let state = manifest.state_mut(c);
            state.backend_id = Some(backend.id());
            state.completed = done.len();
            state.failed.clear();
        }
        let mut generated = 0;
        let mut failed: Vec<CellKey> = Vec::new();
        for batch in pending.chunks(self.config.batch_size) {
            let results: Vec<Result<ResponseRecord, CellKey>> = pool.install(|| {
                batch
                    .par_iter()
                    .map(|k| {
                        administer_cell(
                            &setup,
                            profiles[k.agent_id.as_str()],
                            scenarios[k.scenario_id.as_str()],
                            k.repetition,
                            self.scorer.as_ref(),
                            self.config.retry_budget,
                        )
                    })
                    .collect()
            });
            generated += batch.len();
            let mut fresh = Vec::new();
            let mut batch_failed = 0;
            for r in results {
                match r {
                    Ok(rec) => fresh.push(rec),
                    Err(k) => {
                        failed.push(k);
                        batch_failed += 1;
                    }
                }
            }
            append_records(&path, &fresh)?;
            done.extend(fresh);
            let state = manifest.state_mut(c);
            state.completed = done.len();
            state.failed = failed.clone();
            manifest.updated_at = Utc::now();
            manifest.save(dir)?;
            progress(&Progress::BatchFinished {
                condition: c,
                completed: done.len(),
                expected: layout.cell_count(),
                failed: failed.len(),
            });
            // A batch with no successes means the backend is down; stop early.
            if batch_failed == batch.len() {
                break;
            }
        }

        if done.len() < layout.cell_count() {
            progress(&Progress::ConditionFinished {
                condition: c,
                complete: false,
            });
            let have: HashSet<CellKey> = done.iter().map(ResponseRecord::key).collect();
            let missing = cells.into_iter().filter(|k| !have.contains(k)).collect();
            return Err(BatteryError::IncompleteRun { condition: c, missing }.into());
        }

        let index: HashMap<&CellKey, usize> = cells.iter().enumerate().map(|(i, k)| (k, i)).collect();
        done.sort_by_key(|r| index[&r.key()]);
        let text = records_jsonl(&done);
        write_atomic(&path, text.as_bytes())?;
        let state = manifest.state_mut(c);
        state.complete = true;
        state.failed.clear();
        state.records_sha256 = Some(sha256_hex(text.as_bytes()));
        manifest.updated_at = Utc::now();
        manifest.save(dir)?;
        progress(&Progress::ConditionFinished {
            condition: c,
            complete: true,
        });
        Ok((done, generated))
    }
}

fn append_records(path: &Path, records: &[ResponseRecord]) -> Result<(), AblationError> {
    if records.is_empty() {
        return Ok(());
    }
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| AblationError::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(records_jsonl(records).as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| AblationError::io(path, e))
}

fn read_verified(path: &Path, state: &ConditionState) -> Result<Vec<ResponseRecord>, AblationError> {
    let bytes = fs::read(path).map_err(|e| AblationError::io(path, e))?;
    let found = sha256_hex(&bytes);
    if let Some(expected) = &state.records_sha256 {
        if *expected != found {
            return Err(AblationError::Checksum {
                path: path.to_owned(),
                expected: expected.clone(),
                found,
            });
        }
    }
    read_records(path)
}

fn remove_if_exists(path: &Path) -> Result<(), AblationError> {
    let r = if path.is_dir() {
        fs::remove_dir_all(path)
    } else {
        fs::remove_file(path)
    };
    match r {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(AblationError::io(path, e)),
        _ => Ok(()),
    }
}

fn clear_stale(dir: &Path, conditions: &[ConditionId]) -> Result<(), AblationError> {
    for c in conditions {
        remove_if_exists(&records_path(dir, *c))?;
    }
    Ok(())
}

fn clear_run(dir: &Path, manifest: &RunManifest) -> Result<(), AblationError> {
    let conds: Vec<ConditionId> = manifest.conditions.iter().map(|s| s.condition).chain(ConditionId::ALL).collect();
    clear_stale(dir, &conds)?;
    for name in [MANIFEST_FILE, RECORDS_CSV, MEMORY_DB, REPORTS_DIR] {
        remove_if_exists(&dir.join(name))?;
    }
    Ok(())
}

/// Writes the records table and every report format under the run directory.
fn write_outputs(
    dir: &Path,
    dataset: &AblationDataset,
    judge: Option<&dyn CoherenceJudge>,
) -> Result<Vec<PathBuf>, AblationError> {
    let all: Vec<ResponseRecord> = dataset.records.values().flatten().cloned().collect();
    let csv_path = dir.join(RECORDS_CSV);
    write_atomic(&csv_path, crate::battery::records_csv(&all).as_bytes())?;
    let report = summarize(dataset, judge)?;
    let mut files = vec![csv_path];
    let reports = dir.join(REPORTS_DIR);
    for f in ExportFormat::ALL {
        files.extend(export(&report, &reports, f)?);
    }
    Ok(files)
}

/// Loads a finished run back from disk, verifying record checksums.
pub fn load_dataset(run_dir: &Path) -> Result<AblationDataset, AblationError> {
    let manifest = RunManifest::load(run_dir)?;
    let roster_path = run_dir.join(ROSTER_SNAPSHOT);
    let text = fs::read_to_string(&roster_path).map_err(|e| AblationError::io(&roster_path, e))?;
    let roster: Vec<AgentProfile> =
        serde_json::from_str(&text).map_err(|source| AblationError::Json { path: roster_path, source })?;
    let mut records = BTreeMap::new();
    for state in &manifest.conditions {
        if !state.complete {
            return Err(AblationError::MissingCondition(format!(
                "{} is incomplete ({}/{})",
                state.condition, state.completed, state.expected
            )));
        }
        records.insert(state.condition, read_verified(&records_path(run_dir, state.condition), state)?);
    }
    Ok(AblationDataset {
        roster,
        layout: manifest.layout.clone(),
        scorer_id: manifest.scorer_id.clone(),
        seed: manifest.global_seed,
        records,
        manifest: Some(ReportManifest::from_manifest(&manifest)),
    })
}

/// Re-renders the reports of a finished run without any generation.
pub fn rerender(run_dir: &Path, formats: &[ExportFormat]) -> Result<(AblationReport, Vec<PathBuf>), AblationError> {
    let dataset = load_dataset(run_dir)?;
    let report = summarize(&dataset, None)?;
    let mut files = Vec::new();
    for f in formats {
        files.extend(export(&report, &run_dir.join(REPORTS_DIR), *f)?);
    }
    Ok((report, files))
}

fn default_factory(config: &RunConfig, inputs: &Inputs) -> BackendFactory {
    match config.mode {
        BackendMode::Scripted => {
            let profiles = inputs.roster.profiles().to_vec();
            let lexicon = Arc::new(inputs.lexicon.clone());
            let sigma = config.sigma;
            let seed = config.seed;
            Box::new(move |c| {
                Arc::new(ScriptedBackend::with_lexicon(&profiles, sigma.get(c), seed, lexicon.clone())) as Arc<dyn Backend>
            })
        }
        BackendMode::Http => {
            let key = std::env::var(API_KEY_ENV).ok();
            Box::new(move |_| Arc::new(HttpBackend::new(None, key.clone())) as Arc<dyn Backend>)
        }
    }
}

fn default_scorer(config: &RunConfig, inputs: &Inputs) -> Arc<dyn Scorer> {
    match config.scorer {
        ScorerKind::Lexical => Arc::new(LexicalScorer::new(Arc::new(inputs.lexicon.clone()))),
        ScorerKind::Judge => Arc::new(JudgeScorer::new(
            HttpBackend::new(None, std::env::var(API_KEY_ENV).ok()),
            config.generation.clone(),
        )),
    }
}
