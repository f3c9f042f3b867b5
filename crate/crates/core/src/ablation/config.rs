use std::collections::HashMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::AblationError;
use crate::backend::{GenerationConfig, ENDPOINT_ENV};
use crate::battery::{builtin_scenarios, load_scenarios, Scenario, DEFAULT_REPETITIONS, DEFAULT_RETRY_BUDGET};
use crate::ccd::CcdModel;
use crate::condition::{condition_flags, ConditionId};
use crate::lexicon::Lexicon;
use crate::memory::MemoryDump;
use crate::persona::{json_files, Roster};

pub const DEFAULT_SEED: u64 = 20_250_601;
pub const DEFAULT_LORA_MODEL: &str = "qwen2.5-14b-elder-lora";
pub const DEFAULT_REFERENCE_TIME: &str = "2025-06-01T00:00:00Z";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendMode {
    Scripted,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    Lexical,
    /// Rates responses with the base model endpoint.
    Judge,
}

/// Expression noise per condition for the scripted backend.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SigmaSchedule {
    pub baseline: f64,
    pub plus_memory: f64,
    pub plus_ccd: f64,
    pub plus_lora: f64,
}

impl Default for SigmaSchedule {
    fn default() -> Self {
        Self {
            baseline: 0.8,
            plus_memory: 0.75,
            plus_ccd: 0.35,
            plus_lora: 0.2,
        }
    }
}

impl SigmaSchedule {
    pub fn get(&self, c: ConditionId) -> f64 {
        match c {
            ConditionId::Baseline => self.baseline,
            ConditionId::PlusMemory => self.plus_memory,
            ConditionId::PlusCcd => self.plus_ccd,
            ConditionId::PlusLora => self.plus_lora,
        }
    }

    pub fn uniform(sigma: f64) -> Self {
        Self {
            baseline: sigma,
            plus_memory: sigma,
            plus_ccd: sigma,
            plus_lora: sigma,
        }
    }
}

/// Run configuration, read from TOML. Relative paths resolve against the
/// directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub roster_dir: PathBuf,
    #[serde(default)]
    pub ccd_dir: Option<PathBuf>,
    #[serde(default)]
    pub memory_dir: Option<PathBuf>,
    /// Scenario battery file; the builtin battery when absent.
    #[serde(default)]
    pub scenarios: Option<PathBuf>,
    #[serde(default)]
    pub lexicon: Option<PathBuf>,
    pub output_dir: PathBuf,
    #[serde(default = "default_repetitions")]
    pub repetitions: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_conditions")]
    pub conditions: Vec<ConditionId>,
    #[serde(default = "default_mode")]
    pub mode: BackendMode,
    #[serde(default = "default_scorer")]
    pub scorer: ScorerKind,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default = "default_retry_budget")]
    pub retry_budget: u32,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    /// Time used for retrieval decay and record timestamps.
    #[serde(default = "default_reference_time")]
    pub reference_time: DateTime<Utc>,
    #[serde(default)]
    pub generation: GenerationConfig,
    #[serde(default = "default_lora_model")]
    pub lora_model: String,
    #[serde(default)]
    pub lora_endpoint: Option<String>,
    #[serde(default)]
    pub sigma: SigmaSchedule,
}

fn default_repetitions() -> u32 {
    DEFAULT_REPETITIONS
}
fn default_seed() -> u64 {
    DEFAULT_SEED
}
fn default_conditions() -> Vec<ConditionId> {
    ConditionId::ALL.to_vec()
}
fn default_mode() -> BackendMode {
    BackendMode::Scripted
}
fn default_scorer() -> ScorerKind {
    ScorerKind::Lexical
}
fn default_parallelism() -> usize {
    4
}
fn default_retry_budget() -> u32 {
    DEFAULT_RETRY_BUDGET
}
fn default_batch_size() -> usize {
    50
}
fn default_reference_time() -> DateTime<Utc> {
    DEFAULT_REFERENCE_TIME.parse().expect("valid constant")
}
fn default_lora_model() -> String {
    DEFAULT_LORA_MODEL.into()
}

impl RunConfig {
    /// Minimal scripted configuration over a roster directory.
    pub fn scripted(roster_dir: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            roster_dir: roster_dir.into(),
            ccd_dir: None,
            memory_dir: None,
            scenarios: None,
            lexicon: None,
            output_dir: output_dir.into(),
            repetitions: DEFAULT_REPETITIONS,
            seed: DEFAULT_SEED,
            conditions: default_conditions(),
            mode: BackendMode::Scripted,
            scorer: ScorerKind::Lexical,
            parallelism: default_parallelism(),
            retry_budget: DEFAULT_RETRY_BUDGET,
            batch_size: default_batch_size(),
            reference_time: default_reference_time(),
            generation: GenerationConfig::default(),
            lora_model: DEFAULT_LORA_MODEL.into(),
            lora_endpoint: None,
            sigma: SigmaSchedule::default(),
        }
    }

    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, AblationError> {
        let mut c: Self = toml::from_str(text).map_err(|e| AblationError::Config(e.to_string()))?;
        c.resolve_paths(base_dir);
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, AblationError> {
        let text = std::fs::read_to_string(path).map_err(|e| AblationError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.roster_dir);
        fix(&mut self.output_dir);
        for p in [&mut self.ccd_dir, &mut self.memory_dir, &mut self.scenarios, &mut self.lexicon]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
    }

    /// Applies the endpoint environment override to the base model.
    pub fn apply_env(&mut self) {
        if let Ok(url) = std::env::var(ENDPOINT_ENV) {
            self.generation.endpoint_url = Some(url);
        }
    }

    pub fn validate(&self) -> Result<(), AblationError> {
        let bad = |m: String| Err(AblationError::Config(m));
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1".into());
        }
        if self.conditions.is_empty() {
            return bad("at least one condition is required".into());
        }
        let mut seen = self.conditions.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.conditions.len() {
            return bad("conditions are listed more than once".into());
        }
        if self.parallelism == 0 || self.batch_size == 0 {
            return bad("parallelism and batch_size must be positive".into());
        }
        for c in ConditionId::ALL {
            let s = self.sigma.get(c);
            if !(s.is_finite() && s >= 0.0) {
                return bad(format!("sigma for {c} must be a non-negative number"));
            }
        }
        self.generation
            .validate()
            .map_err(|e| AblationError::Config(format!("generation: {e}")))
    }

    /// Inference settings for one condition; the alternate-model condition
    /// swaps the model name and, when given, the endpoint.
    pub fn generation_for(&self, c: ConditionId) -> GenerationConfig {
        let mut g = self.generation.clone();
        if condition_flags(c).alternate_model {
            g.model_name = self.lora_model.clone();
            if let Some(e) = &self.lora_endpoint {
                g.endpoint_url = Some(e.clone());
            }
        }
        g
    }

    /// Conditions in canonical order.
    pub fn ordered_conditions(&self) -> Vec<ConditionId> {
        let mut c = self.conditions.clone();
        c.sort();
        c
    }
}

/// Everything loaded from the files a config points to.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub roster: Roster,
    pub ccds: HashMap<String, CcdModel>,
    pub memory: Vec<MemoryDump>,
    pub scenarios: Vec<Scenario>,
    pub lexicon: Lexicon,
    /// `(name, bytes)` of every input file, sorted by name; feeds the config hash.
    pub sources: Vec<(String, Vec<u8>)>,
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, AblationError> {
    std::fs::read(path).map_err(|e| AblationError::io(path, e))
}

fn dir_files(dir: &Path) -> Result<Vec<PathBuf>, AblationError> {
    let mut files = json_files(dir).map_err(|e| AblationError::io(dir, e))?;
    files.sort();
    Ok(files)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

impl Inputs {
    pub fn load(config: &RunConfig) -> Result<Self, AblationError> {
        let mut sources = Vec::new();
        let roster_files = dir_files(&config.roster_dir)?;
        for f in &roster_files {
            sources.push((format!("profiles/{}", file_name(f)), read_bytes(f)?));
        }
        let roster = Roster::load_files(&roster_files).map_err(|e| AblationError::Input(e.to_string()))?;

        let mut ccds = HashMap::new();
        if let Some(dir) = &config.ccd_dir {
            for f in dir_files(dir)? {
                let bytes = read_bytes(&f)?;
                let text = String::from_utf8_lossy(&bytes);
                let ccd = CcdModel::from_json(&text).map_err(|e| AblationError::Input(format!("{}: {e}", f.display())))?;
                sources.push((format!("ccd/{}", file_name(&f)), bytes));
                ccds.insert(ccd.agent_id.clone(), ccd);
            }
        }

        let mut memory = Vec::new();
        if let Some(dir) = &config.memory_dir {
            for f in dir_files(dir)? {
                let bytes = read_bytes(&f)?;
                let dump = MemoryDump::from_json(&String::from_utf8_lossy(&bytes))
                    .map_err(|e| AblationError::Input(format!("{}: {e}", f.display())))?;
                sources.push((format!("memory/{}", file_name(&f)), bytes));
                memory.push(dump);
            }
        }

        let scenarios = match &config.scenarios {
            Some(p) => {
                let bytes = read_bytes(p)?;
                let s = load_scenarios(&String::from_utf8_lossy(&bytes))
                    .map_err(|e| AblationError::Input(format!("{}: {e}", p.display())))?;
                sources.push(("scenarios".into(), bytes));
                s
            }
            None => {
                sources.push(("scenarios".into(), crate::battery::BUILTIN_SCENARIOS.as_bytes().to_vec()));
                builtin_scenarios()
            }
        };
        if scenarios.is_empty() {
            return Err(AblationError::Input("scenario battery is empty".into()));
        }

        let lexicon = match &config.lexicon {
            Some(p) => {
                let bytes = read_bytes(p)?;
                let l = Lexicon::from_json(&String::from_utf8_lossy(&bytes))
                    .map_err(|e| AblationError::Input(format!("{}: {e}", p.display())))?;
                sources.push(("lexicon".into(), bytes));
                l
            }
            None => {
                sources.push(("lexicon".into(), crate::lexicon::BUILTIN.as_bytes().to_vec()));
                Lexicon::builtin()
            }
        };
        sources.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(Self {
            roster,
            ccds,
            memory,
            scenarios,
            lexicon,
            sources,
        })
    }
}
