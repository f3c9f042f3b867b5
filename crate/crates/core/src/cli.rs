//! Command-line front end. `main` in the binary only forwards to [`run_cli`].

use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand};

use crate::ablation::{
    rerender, Ablation, AblationError, BackendMode, ExportFormat, Inputs, Progress, RunConfig, RunOptions, SigmaSchedule,
    DEFAULT_REFERENCE_TIME, DEFAULT_SEED,
};
use crate::backend::{Backend, GenerationConfig, HttpBackend, ScriptedBackend};
use crate::battery::{load_scenarios, BatteryError};
use crate::ccd::CcdModel;
use crate::chat::{run_repl, ChatSession};
use crate::condition::ConditionId;
use crate::memory::{MemoryDump, MemoryStore};
use crate::persona::{json_files, load_profile};
use crate::workflow::{load_event_schedule, InterventionProtocol, Participant, Simulation};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_MISSING_INPUT: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;
pub const EXIT_INCOMPLETE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "personasim", version, about = "Persona simulation and personality-consistency assessment")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check profiles, CCDs, memory dumps, scenario files and run configs.
    Validate(ValidateArgs),
    /// Run (or resume) an ablation and write its reports.
    Run(RunArgs),
    /// Re-render reports of a finished run from its records.
    Report(ReportArgs),
    /// Talk to one agent from the terminal.
    Chat(ChatArgs),
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Files or directories to check; the kind of each JSON file is inferred.
    pub paths: Vec<PathBuf>,
    /// Run configuration to check along with every input it references.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub resume: bool,
    /// Discard any existing run in the output directory.
    #[arg(long)]
    pub force: bool,
    /// Format printed to stdout when the run finishes.
    #[arg(long, default_value = "human-readable")]
    pub format: String,
    /// Use the scripted backend regardless of the config.
    #[arg(long)]
    pub scripted: bool,
    #[arg(long)]
    pub parallelism: Option<usize>,
    /// Overrides the config's output directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    pub run_dir: PathBuf,
    /// Only write this format; all formats by default.
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Debug, Args)]
pub struct ChatArgs {
    /// Agent profile JSON.
    #[arg(long)]
    pub profile: PathBuf,
    #[arg(long, default_value = "baseline")]
    pub condition: String,
    #[arg(long)]
    pub ccd: Option<PathBuf>,
    /// Memory dump loaded into a scratch store.
    #[arg(long)]
    pub memory: Option<PathBuf>,
    #[arg(long)]
    pub scripted: bool,
    /// Expression noise of the scripted backend; the condition default if unset.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Read user lines from this file instead of stdin.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Show the appraisal block before each agent turn.
    #[arg(long)]
    pub debug: bool,
    /// Comma-separated situation tags.
    #[arg(long, value_delimiter = ',')]
    pub tags: Vec<String>,
    #[arg(long, default_value = "transcripts")]
    pub transcript_dir: PathBuf,
    /// Timestamp of the first turn.
    #[arg(long, default_value = DEFAULT_REFERENCE_TIME)]
    pub start: DateTime<Utc>,
}

/// Parses `args` (program name first) and runs the command.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = if code == EXIT_OK {
                write!(out, "{e}")
            } else {
                write!(err, "{e}")
            };
            return code;
        }
    };
    match cli.command {
        Command::Validate(a) => cmd_validate(&a, out, err),
        Command::Run(a) => cmd_run(&a, out, err),
        Command::Report(a) => cmd_report(&a, out, err),
        Command::Chat(a) => cmd_chat(&a, out, err),
    }
}

fn not_found(e: &io::Error) -> bool {
    e.kind() == io::ErrorKind::NotFound
}

/// Exit code for an ablation error.
pub fn exit_code(e: &AblationError) -> i32 {
    match e {
        AblationError::Io { source, .. } if not_found(source) => EXIT_MISSING_INPUT,
        AblationError::MissingRun(_) => EXIT_MISSING_INPUT,
        AblationError::Battery(BatteryError::IncompleteRun { .. }) | AblationError::ResumeRequired(_) => EXIT_INCOMPLETE,
        AblationError::MissingCondition(_) => EXIT_INCOMPLETE,
        _ => EXIT_VALIDATION,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FileKind {
    Profile,
    Ccd,
    Memory,
    Scenarios,
    Protocol,
    EventSchedule,
    RunConfig,
}

fn classify(path: &Path, text: &str) -> Result<FileKind, String> {
    if path.extension().is_some_and(|e| e == "toml") {
        return Ok(FileKind::RunConfig);
    }
    let v: serde_json::Value = serde_json::from_str(text).map_err(|e| format!("not valid JSON: {e}"))?;
    if let Some(items) = v.as_array() {
        let events = items.first().is_some_and(|i| i.get("event").is_some());
        return Ok(if events { FileKind::EventSchedule } else { FileKind::Scenarios });
    }
    let has = |k: &str| v.get(k).is_some();
    Ok(if has("personality") {
        FileKind::Profile
    } else if has("core_beliefs") {
        FileKind::Ccd
    } else if has("episodic") || has("semantic") {
        FileKind::Memory
    } else if has("rounds") {
        FileKind::Protocol
    } else {
        return Err("unrecognized document (expected a profile, CCD, memory dump, scenario list or protocol)".into());
    })
}

fn check_file(path: &Path) -> Result<FileKind, String> {
    let text = fs::read_to_string(path).map_err(|e| e.to_string())?;
    let kind = classify(path, &text)?;
    match kind {
        FileKind::Profile => load_profile(&text).map(drop).map_err(|e| e.to_string()),
        FileKind::Ccd => CcdModel::from_json(&text).map(drop).map_err(|e| e.to_string()),
        FileKind::Memory => MemoryDump::from_json(&text)
            .map_err(|e| e.to_string())
            .and_then(|d| {
                let store = MemoryStore::open_in_memory().map_err(|e| e.to_string())?;
                store.load_dump(&d).map_err(|e| e.to_string())
            }),
        FileKind::Scenarios => load_scenarios(&text).map(drop).map_err(|e| e.to_string()),
        FileKind::Protocol => InterventionProtocol::from_json(&text).map(drop).map_err(|e| e.to_string()),
        FileKind::EventSchedule => load_event_schedule(&text).map(drop).map_err(|e| e.to_string()),
        FileKind::RunConfig => RunConfig::load(path)
            .and_then(|c| Inputs::load(&c))
            .map(drop)
            .map_err(|e| e.to_string()),
    }?;
    Ok(kind)
}

fn expand(paths: &[PathBuf]) -> (Vec<PathBuf>, Vec<PathBuf>) {
    let mut files = Vec::new();
    let mut missing = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found = json_files(p).unwrap_or_default();
            found.sort();
            files.extend(found);
        } else if p.is_file() {
            files.push(p.clone());
        } else {
            missing.push(p.clone());
        }
    }
    (files, missing)
}

pub fn cmd_validate(args: &ValidateArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let mut paths = args.paths.clone();
    paths.extend(args.config.iter().cloned());
    if paths.is_empty() {
        let _ = writeln!(err, "error: nothing to validate; pass files, directories or --config");
        return EXIT_MISSING_INPUT;
    }
    let (files, missing) = expand(&paths);
    for m in &missing {
        let _ = writeln!(err, "error: {}: file not found", m.display());
    }
    let mut invalid = 0;
    for f in &files {
        match check_file(f) {
            Ok(kind) => {
                let _ = writeln!(out, "ok: {} ({kind:?})", f.display());
            }
            Err(msg) => {
                invalid += 1;
                let _ = writeln!(err, "error: {}: {msg}", f.display());
            }
        }
    }
    if !missing.is_empty() {
        EXIT_MISSING_INPUT
    } else if invalid > 0 {
        EXIT_VALIDATION
    } else {
        EXIT_OK
    }
}

fn report_error(e: &AblationError, err: &mut dyn Write) -> i32 {
    let _ = writeln!(err, "error: {e}");
    if let Some((c, missing)) = e.missing_cells() {
        let _ = writeln!(err, "condition {c}: {} cell(s) missing", missing.len());
        for k in missing.iter().take(20) {
            let _ = writeln!(err, "  {k}");
        }
        if missing.len() > 20 {
            let _ = writeln!(err, "  ... {} more", missing.len() - 20);
        }
    }
    exit_code(e)
}

pub fn cmd_run(args: &RunArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let format: ExportFormat = match args.format.parse() {
        Ok(f) => f,
        Err(e) => return report_error(&e, err),
    };
    let mut config = match RunConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => return report_error(&e, err),
    };
    config.apply_env();
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if args.scripted {
        config.mode = BackendMode::Scripted;
    }
    if let Some(p) = args.parallelism {
        config.parallelism = p;
    }
    if let Some(o) = &args.output {
        config.output_dir = o.clone();
    }
    if let Err(e) = config.validate() {
        return report_error(&e, err);
    }
    let inputs = match Inputs::load(&config) {
        Ok(i) => i,
        Err(e) => return report_error(&e, err),
    };
    let ablation = Ablation::new(config, inputs);
    let _ = writeln!(err, "config hash {}", ablation.config_hash());
    let mut log = |p: &Progress| {
        let _ = match p {
            Progress::ConditionStarted { condition, done, pending } => {
                writeln!(err, "[{condition}] {done} done, {pending} pending")
            }
            Progress::BatchFinished {
                condition,
                completed,
                expected,
                failed,
            } => writeln!(err, "[{condition}] {completed}/{expected} cells, {failed} failed"),
            Progress::ConditionFinished { condition, complete } => {
                writeln!(err, "[{condition}] {}", if *complete { "complete" } else { "incomplete" })
            }
            Progress::ConditionSkipped { condition } => writeln!(err, "[{condition}] already complete"),
        };
    };
    let opts = RunOptions {
        resume: args.resume,
        force: args.force,
    };
    match ablation.run(opts, &mut log) {
        Ok(o) => {
            let _ = writeln!(err, "{} administrations, run directory {}", o.generated, o.run_dir.display());
            print_report(&o.report, format, out);
            EXIT_OK
        }
        Err(e) => {
            let code = report_error(&e, err);
            // Nothing at all came back for the failing condition: the backend is unreachable.
            if let Some((c, missing)) = e.missing_cells() {
                let expected = ablation.layout().cell_count();
                if missing.len() == expected {
                    let _ = writeln!(err, "no responses for {c}; backend failure");
                    return EXIT_BACKEND;
                }
            }
            code
        }
    }
}

fn print_report(report: &crate::ablation::AblationReport, format: ExportFormat, out: &mut dyn Write) {
    let _ = match format {
        ExportFormat::HumanReadable => write!(out, "{}", report.to_markdown()),
        ExportFormat::StructuredText => writeln!(out, "{}", serde_json::to_string_pretty(report).expect("report serializes")),
        ExportFormat::TabularText => report.tables().iter().try_for_each(|t| write!(out, "# {}\n{}", t.name, t.to_csv())),
    };
}

pub fn cmd_report(args: &ReportArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let formats = match &args.format {
        Some(f) => match f.parse::<ExportFormat>() {
            Ok(f) => vec![f],
            Err(e) => return report_error(&e, err),
        },
        None => ExportFormat::ALL.to_vec(),
    };
    match rerender(&args.run_dir, &formats) {
        Ok((_, files)) => {
            for f in files {
                let _ = writeln!(out, "{}", f.display());
            }
            EXIT_OK
        }
        Err(e) => report_error(&e, err),
    }
}

pub fn cmd_chat(args: &ChatArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let read = |p: &Path| fs::read_to_string(p).map_err(|e| (if not_found(&e) { EXIT_MISSING_INPUT } else { EXIT_VALIDATION }, format!("{}: {e}", p.display())));
    let result = (|| -> Result<i32, (i32, String)> {
        let condition: ConditionId = args.condition.parse().map_err(|e: crate::condition::UnknownCondition| (EXIT_VALIDATION, e.to_string()))?;
        let profile = load_profile(&read(&args.profile)?).map_err(|e| (EXIT_VALIDATION, format!("{}: {e}", args.profile.display())))?;
        let mut agent = Participant::new(profile.clone());
        if let Some(p) = &args.ccd {
            let ccd = CcdModel::from_json(&read(p)?).map_err(|e| (EXIT_VALIDATION, format!("{}: {e}", p.display())))?;
            agent = agent.with_ccd(ccd);
        }
        let store = MemoryStore::open_in_memory().map_err(|e| (EXIT_VALIDATION, e.to_string()))?;
        if let Some(p) = &args.memory {
            let dump = MemoryDump::from_json(&read(p)?).map_err(|e| (EXIT_VALIDATION, format!("{}: {e}", p.display())))?;
            store.load_dump(&dump).map_err(|e| (EXIT_VALIDATION, e.to_string()))?;
        }
        let backend: Box<dyn Backend> = if args.scripted {
            let sigma = args.sigma.unwrap_or_else(|| SigmaSchedule::default().get(condition));
            if !(sigma.is_finite() && sigma >= 0.0) {
                return Err((EXIT_VALIDATION, "sigma must be a non-negative number".into()));
            }
            Box::new(ScriptedBackend::new([&profile], sigma, args.seed))
        } else {
            Box::new(HttpBackend::from_env())
        };
        let mut gen = GenerationConfig::default();
        if condition.flags().alternate_model {
            gen.model_name = crate::ablation::DEFAULT_LORA_MODEL.into();
        }
        let sim = Simulation::new(backend.as_ref(), condition.flags(), args.start)
            .with_store(&store)
            .with_config(gen);
        let mut session = ChatSession::new(sim, agent, args.tags.iter().cloned(), args.seed);
        let input: Box<dyn BufRead> = match &args.input {
            Some(p) => Box::new(BufReader::new(fs::File::open(p).map_err(|e| {
                (if not_found(&e) { EXIT_MISSING_INPUT } else { EXIT_VALIDATION }, format!("{}: {e}", p.display()))
            })?)),
            None => Box::new(io::stdin().lock()),
        };
        run_repl(&mut session, input, out, args.debug).map_err(|e| (EXIT_VALIDATION, e.to_string()))?;
        let transcript = session.finish();
        fs::create_dir_all(&args.transcript_dir).map_err(|e| (EXIT_VALIDATION, e.to_string()))?;
        let path = args.transcript_dir.join(format!("{}.jsonl", transcript.session_id));
        fs::write(&path, transcript.to_jsonl()).map_err(|e| (EXIT_VALIDATION, format!("{}: {e}", path.display())))?;
        let _ = writeln!(err, "transcript saved to {}", path.display());
        Ok(EXIT_OK)
    })();
    match result {
        Ok(code) => code,
        Err((code, msg)) => {
            let _ = writeln!(err, "error: {msg}");
            code
        }
    }
}

