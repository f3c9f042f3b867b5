use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use super::{AblationError, RunManifest};
use crate::battery::{build_score_matrix, response_means, Layout, ResponseRecord};
use crate::condition::ConditionId;
use crate::persona::{AgentProfile, Dimension};
use crate::psychometrics::{interpret_icc, mean_sd, reliability_report, AlphaSummary, ReliabilityReport};
use crate::stats::{bonferroni, paired_t, significance_stars};

/// Optional 1 to 5 rating of a response's coherence.
pub trait CoherenceJudge: Send + Sync {
    fn rate(&self, record: &ResponseRecord) -> Result<f64, String>;
}

/// Records of every condition plus what is needed to interpret them.
#[derive(Debug, Clone)]
pub struct AblationDataset {
    /// Profiles in layout order.
    pub roster: Vec<AgentProfile>,
    pub layout: Layout,
    pub scorer_id: String,
    pub seed: u64,
    pub records: BTreeMap<ConditionId, Vec<ResponseRecord>>,
    pub manifest: Option<ReportManifest>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportManifest {
    pub run_id: String,
    pub config_hash: String,
    pub global_seed: u64,
    pub scorer_id: String,
    pub backend_ids: BTreeMap<ConditionId, String>,
    pub model_names: BTreeMap<ConditionId, String>,
}

impl ReportManifest {
    pub fn from_manifest(m: &RunManifest) -> Self {
        Self {
            run_id: m.run_id.clone(),
            config_hash: m.config_hash.clone(),
            global_seed: m.global_seed,
            scorer_id: m.scorer_id.clone(),
            backend_ids: m
                .conditions
                .iter()
                .filter_map(|s| Some((s.condition, s.backend_id.clone()?)))
                .collect(),
            model_names: m.conditions.iter().map(|s| (s.condition, s.model_name.clone())).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DataCharacteristics {
    pub agents: usize,
    pub scenarios_per_agent: usize,
    pub repetitions: u32,
    pub total_responses: usize,
    pub mean_tokens: f64,
    pub mean_latency_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IccRow {
    pub icc: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub f: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiscriminationRow {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub macro_auc: f64,
}

/// Per-condition numbers feeding the tables. Everything but α is optional so
/// partial published values can be rendered too.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionSummary {
    pub condition: ConditionId,
    pub characteristics: Option<DataCharacteristics>,
    pub alpha: AlphaSummary,
    pub icc: Option<IccRow>,
    pub discrimination: Option<DiscriminationRow>,
    pub coherence: Option<f64>,
    pub reliability: Option<ReliabilityReport>,
}

impl ConditionSummary {
    pub fn from_alpha(condition: ConditionId, by_dimension: [f64; 5]) -> Self {
        Self {
            condition,
            characteristics: None,
            alpha: AlphaSummary::from_values(by_dimension),
            icc: None,
            discrimination: None,
            coherence: None,
            reliability: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub condition_a: ConditionId,
    pub condition_b: ConditionId,
    /// `mean α(b) − mean α(a)`.
    pub delta_mean: f64,
    pub t: Option<f64>,
    pub df: usize,
    pub p_raw: Option<f64>,
    pub p_adjusted: Option<f64>,
    pub stars: &'static str,
    /// Why the test could not be computed, if it could not.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationReport {
    pub conditions: Vec<ConditionSummary>,
    pub comparisons: Vec<ComparisonRow>,
    pub manifest: Option<ReportManifest>,
}

impl AblationReport {
    /// Builds the cross-condition part from per-condition summaries.
    pub fn from_summaries(mut conditions: Vec<ConditionSummary>) -> Result<Self, AblationError> {
        if conditions.is_empty() {
            return Err(AblationError::MissingCondition("no conditions to report".into()));
        }
        conditions.sort_by_key(|c| c.condition);
        let comparisons = compare(&conditions);
        Ok(Self {
            conditions,
            comparisons,
            manifest: None,
        })
    }

    pub fn condition(&self, c: ConditionId) -> Option<&ConditionSummary> {
        self.conditions.iter().find(|s| s.condition == c)
    }

    /// Condition that Δ columns are measured from: baseline when present.
    pub fn reference(&self) -> &ConditionSummary {
        &self.conditions[0]
    }

    pub fn delta_alpha(&self, c: ConditionId) -> Option<f64> {
        Some(self.condition(c)?.alpha.mean - self.reference().alpha.mean)
    }

    pub fn tables(&self) -> Vec<Table> {
        vec![
            self.characteristics_table(),
            self.alpha_table(),
            self.icc_table(),
            self.discrimination_table(),
            self.summary_table(),
            self.comparison_table(),
            self.dimension_table(),
        ]
    }

    pub fn table(&self, name: &str) -> Option<Table> {
        self.tables().into_iter().find(|t| t.name == name)
    }

    fn header_with_conditions(&self, first: &str) -> Vec<String> {
        std::iter::once(first.to_owned())
            .chain(self.conditions.iter().map(|c| c.condition.label().to_owned()))
            .collect()
    }

    fn characteristics_table(&self) -> Table {
        type Cell = fn(&DataCharacteristics) -> String;
        let specs: [(&str, Cell); 6] = [
            ("Agent configurations", |d| d.agents.to_string()),
            ("Scenarios per agent", |d| d.scenarios_per_agent.to_string()),
            ("Repetitions per scenario", |d| d.repetitions.to_string()),
            ("Total responses", |d| d.total_responses.to_string()),
            ("Mean response length (tokens)", |d| format!("{:.1}", d.mean_tokens)),
            ("Response time (ms)", |d| format!("{:.0}", d.mean_latency_ms)),
        ];
        let rows = specs
            .iter()
            .map(|(label, f)| {
                std::iter::once(label.to_string())
                    .chain(self.conditions.iter().map(|c| c.characteristics.as_ref().map_or(na(), f)))
                    .collect()
            })
            .collect();
        Table::new("data_characteristics", "Data characteristics by condition", self.header_with_conditions("Characteristic"), rows)
    }

    fn alpha_table(&self) -> Table {
        let mut header = vec!["Condition".to_owned()];
        header.extend(Dimension::ALL.iter().map(|d| d.letter().to_owned()));
        header.push("Mean (SD)".into());
        let rows = self
            .conditions
            .iter()
            .map(|c| {
                let mut row = vec![c.condition.label().to_owned()];
                row.extend(c.alpha.by_dimension.iter().map(|a| format!("{a:.3}")));
                row.push(format!("{:.3} ({:.3})", c.alpha.mean, c.alpha.sd));
                row
            })
            .collect();
        Table::new("internal_consistency", "Internal consistency (Cronbach's alpha) by dimension", header, rows)
    }

    fn icc_table(&self) -> Table {
        let header = ["Condition", "ICC", "95% CI", "F-statistic", "Interpretation"].map(String::from).to_vec();
        let rows = self
            .conditions
            .iter()
            .map(|c| match &c.icc {
                Some(r) => vec![
                    c.condition.label().to_owned(),
                    format!("{:.3}", r.icc),
                    format!("[{:.2}, {:.2}]", r.ci_low, r.ci_high),
                    if r.f.is_finite() { format!("{:.1}", r.f) } else { "inf".into() },
                    interpret_icc(r.icc).label().to_owned(),
                ],
                None => vec![c.condition.label().to_owned(), na(), na(), na(), na()],
            })
            .collect();
        Table::new("test_retest", "Test-retest reliability (ICC(A,1))", header, rows)
    }

    fn discrimination_table(&self) -> Table {
        let header = ["Condition", "Accuracy", "Precision", "Recall", "F1", "AUC"].map(String::from).to_vec();
        let rows = self
            .conditions
            .iter()
            .map(|c| match &c.discrimination {
                Some(d) => vec![
                    c.condition.label().to_owned(),
                    percent(d.accuracy),
                    format!("{:.2}", d.macro_precision),
                    format!("{:.2}", d.macro_recall),
                    format!("{:.2}", d.macro_f1),
                    if d.macro_auc.is_finite() { format!("{:.2}", d.macro_auc) } else { na() },
                ],
                None => vec![c.condition.label().to_owned(), na(), na(), na(), na(), na()],
            })
            .collect();
        Table::new("role_discrimination", "Role discrimination by condition", header, rows)
    }

    fn summary_table(&self) -> Table {
        let reference = self.reference().condition;
        let row = |label: String, f: &dyn Fn(&ConditionSummary) -> String| -> Vec<String> {
            std::iter::once(label).chain(self.conditions.iter().map(f)).collect()
        };
        let mut rows = vec![
            row("Cronbach's alpha".into(), &|c| format!("{:.3}", c.alpha.mean)),
            row(format!("Delta alpha from {}", reference.label()), &|c| {
                if c.condition == reference {
                    "-".into()
                } else {
                    format!("{:+.3}", c.alpha.mean - self.reference().alpha.mean)
                }
            }),
            row("ICC".into(), &|c| c.icc.map_or(na(), |r| format!("{:.3}", r.icc))),
            row("Role Discrimination".into(), &|c| c.discrimination.map_or(na(), |d| percent(d.accuracy))),
        ];
        if self.conditions.iter().any(|c| c.coherence.is_some()) {
            rows.push(row("Response Coherence".into(), &|c| c.coherence.map_or(na(), |v| format!("{v:.1}/5"))));
        }
        Table::new("ablation_summary", "Component contributions to personality consistency", self.header_with_conditions("Metric"), rows)
    }

    fn comparison_table(&self) -> Table {
        let header = ["Comparison", "Delta alpha", "t", "df", "p"].map(String::from).to_vec();
        let rows = self
            .comparisons
            .iter()
            .map(|r| {
                vec![
                    format!("{} vs {}", r.condition_a.label(), r.condition_b.label()),
                    format!("{:+.3}", r.delta_mean),
                    r.t.map_or(na(), |t| format!("{t:.2}")),
                    r.df.to_string(),
                    r.p_adjusted.map_or(na(), |p| format!("{}{}", format_p(p), r.stars)),
                ]
            })
            .collect();
        Table::new("pairwise_comparisons", "Pairwise comparisons of alpha (paired t, Bonferroni)", header, rows)
    }

    /// Baseline, +CCD and +LoRA when all present; otherwise every condition
    /// against the reference.
    fn dimension_table(&self) -> Table {
        let wanted = [ConditionId::Baseline, ConditionId::PlusCcd, ConditionId::PlusLora];
        let cols: Vec<&ConditionSummary> = if wanted.iter().all(|c| self.condition(*c).is_some()) {
            wanted.iter().filter_map(|c| self.condition(*c)).collect()
        } else {
            self.conditions.iter().collect()
        };
        let mut header = vec!["Dimension".to_owned()];
        header.extend(cols.iter().map(|c| c.condition.label().to_owned()));
        header.extend(cols[1..].iter().map(|c| format!("Delta ({})", c.condition.label())));
        let rows = Dimension::ALL
            .iter()
            .map(|d| {
                let i = d.index();
                let base = cols[0].alpha.by_dimension[i];
                let mut row = vec![capitalize(d.name())];
                row.extend(cols.iter().map(|c| format!("{:.3}", c.alpha.by_dimension[i])));
                row.extend(cols[1..].iter().map(|c| format!("{:+.3}", c.alpha.by_dimension[i] - base)));
                row
            })
            .collect();
        Table::new("dimension_improvements", "Dimension-specific changes in alpha", header, rows)
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("# Ablation report\n");
        if let Some(m) = &self.manifest {
            let _ = write!(
                out,
                "\nRun `{}`, config hash `{}`, seed {}, scorer `{}`.\n",
                m.run_id, m.config_hash, m.global_seed, m.scorer_id
            );
            for (c, b) in &m.backend_ids {
                let model = m.model_names.get(c).map(String::as_str).unwrap_or("");
                let _ = writeln!(out, "- {}: backend `{b}`, model `{model}`", c.label());
            }
        }
        for t in self.tables() {
            out.push('\n');
            out.push_str(&t.to_markdown());
        }
        out
    }
}

fn na() -> String {
    "n/a".into()
}

fn percent(x: f64) -> String {
    format!("{:.1}%", 100.0 * x)
}

fn format_p(p: f64) -> String {
    if p < 0.001 {
        "<0.001".into()
    } else {
        format!("{p:.3}")
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}

fn compare(conditions: &[ConditionSummary]) -> Vec<ComparisonRow> {
    let mut rows = Vec::new();
    for (i, a) in conditions.iter().enumerate() {
        for b in &conditions[i + 1..] {
            let delta_mean = b.alpha.mean - a.alpha.mean;
            let row = match paired_t(&b.alpha.by_dimension, &a.alpha.by_dimension) {
                Ok(r) => ComparisonRow {
                    condition_a: a.condition,
                    condition_b: b.condition,
                    delta_mean,
                    t: Some(r.t),
                    df: r.df,
                    p_raw: Some(r.p),
                    p_adjusted: None,
                    stars: "",
                    note: r.null_by_convention.then(|| "identical alpha vectors".into()),
                },
                Err(e) => ComparisonRow {
                    condition_a: a.condition,
                    condition_b: b.condition,
                    delta_mean,
                    t: None,
                    df: 4,
                    p_raw: None,
                    p_adjusted: None,
                    stars: "",
                    note: Some(e.to_string()),
                },
            };
            rows.push(row);
        }
    }
    let m = rows.len();
    for r in &mut rows {
        if let Some(p) = r.p_raw {
            let adj = bonferroni(&[p], m)[0];
            r.p_adjusted = Some(adj);
            r.stars = significance_stars(adj);
        }
    }
    rows
}

/// Computes every per-condition statistic from the records and assembles
/// the cross-condition tables.
pub fn summarize(dataset: &AblationDataset, judge: Option<&dyn CoherenceJudge>) -> Result<AblationReport, AblationError> {
    if dataset.records.is_empty() {
        return Err(AblationError::MissingCondition("dataset has no conditions".into()));
    }
    let mut rows = Vec::new();
    for (c, records) in &dataset.records {
        if records.is_empty() {
            return Err(AblationError::MissingCondition(format!("{c} has no records")));
        }
        let sm = build_score_matrix(records, &dataset.layout)?;
        let rel = reliability_report(&sm, &dataset.roster, &dataset.scorer_id, dataset.seed)?;
        let (mean_tokens, mean_latency_ms) = response_means(records);
        let coherence = match judge {
            Some(j) => {
                let mut ratings = Vec::with_capacity(records.len());
                for r in records {
                    ratings.push(j.rate(r).map_err(|e| AblationError::Input(format!("coherence judge: {e}")))?);
                }
                Some(mean_sd(&ratings).0)
            }
            None => None,
        };
        let d = &rel.discrimination;
        rows.push(ConditionSummary {
            condition: *c,
            characteristics: Some(DataCharacteristics {
                agents: dataset.layout.agents.len(),
                scenarios_per_agent: dataset.layout.scenarios.len(),
                repetitions: dataset.layout.repetitions,
                total_responses: records.len(),
                mean_tokens,
                mean_latency_ms,
            }),
            alpha: rel.alpha,
            icc: Some(IccRow {
                icc: rel.icc.icc,
                ci_low: rel.icc.ci_low,
                ci_high: rel.icc.ci_high,
                f: rel.icc.f,
            }),
            discrimination: Some(DiscriminationRow {
                accuracy: d.accuracy,
                macro_precision: d.macro_precision,
                macro_recall: d.macro_recall,
                macro_f1: d.macro_f1,
                macro_auc: d.macro_auc,
            }),
            coherence,
            reliability: Some(rel),
        });
    }
    let mut report = AblationReport::from_summaries(rows)?;
    report.manifest = dataset.manifest.clone();
    Ok(report)
}

/// A rendered table; every cell is already formatted text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Table {
    pub name: &'static str,
    pub title: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &'static str, title: &str, header: Vec<String>, rows: Vec<Vec<String>>) -> Self {
        Self {
            name,
            title: title.into(),
            header,
            rows,
        }
    }

    /// Looks up a cell by row label (first column) and column header.
    pub fn cell(&self, row: &str, col: &str) -> Option<&str> {
        let j = self.header.iter().position(|h| h == col)?;
        let r = self.rows.iter().find(|r| r[0] == row)?;
        r.get(j).map(String::as_str)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for line in std::iter::once(&self.header).chain(&self.rows) {
            let fields: Vec<String> = line.iter().map(|f| csv_field(f)).collect();
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!("## {}\n\n", self.title);
        let _ = writeln!(out, "| {} |", self.header.join(" | "));
        let _ = writeln!(out, "|{}", "---|".repeat(self.header.len()));
        for r in &self.rows {
            let _ = writeln!(out, "| {} |", r.join(" | "));
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    /// One CSV file per table.
    TabularText,
    /// A single JSON document.
    StructuredText,
    /// Markdown tables.
    HumanReadable,
}

impl ExportFormat {
    pub const ALL: [ExportFormat; 3] = [ExportFormat::TabularText, ExportFormat::StructuredText, ExportFormat::HumanReadable];
}

impl FromStr for ExportFormat {
    type Err = AblationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tabular-text" | "csv" => Ok(ExportFormat::TabularText),
            "structured-text" | "json" => Ok(ExportFormat::StructuredText),
            "human-readable" | "markdown" | "md" => Ok(ExportFormat::HumanReadable),
            other => Err(AblationError::UnknownFormat(other.to_owned())),
        }
    }
}

fn write_file(path: PathBuf, text: &str) -> Result<PathBuf, AblationError> {
    fs::write(&path, text).map_err(|e| AblationError::io(&path, e))?;
    Ok(path)
}

/// Writes one format under `dir`, returning the files written.
pub fn export(report: &AblationReport, dir: &Path, format: ExportFormat) -> Result<Vec<PathBuf>, AblationError> {
    fs::create_dir_all(dir).map_err(|e| AblationError::io(dir, e))?;
    match format {
        ExportFormat::TabularText => {
            let tables_dir = dir.join("tables");
            fs::create_dir_all(&tables_dir).map_err(|e| AblationError::io(&tables_dir, e))?;
            report
                .tables()
                .iter()
                .map(|t| write_file(tables_dir.join(format!("{}.csv", t.name)), &t.to_csv()))
                .collect()
        }
        ExportFormat::StructuredText => {
            let text = serde_json::to_string_pretty(report).expect("report serializes");
            Ok(vec![write_file(dir.join("report.json"), &text)?])
        }
        ExportFormat::HumanReadable => Ok(vec![write_file(dir.join("report.md"), &report.to_markdown())?]),
    }
}
