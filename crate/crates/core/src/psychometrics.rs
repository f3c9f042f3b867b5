//! Reliability and validity statistics: Cronbach's α, ICC(A,1) with its
//! F-based confidence interval, interpretation bands and role discrimination.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::battery::ScoreMatrix;
use crate::condition::ConditionId;
use crate::persona::{ocean_distance, AgentProfile, Dimension, OceanVector};
use crate::special::f_quantile;

#[derive(Debug, Error)]
pub enum PsychError {
    #[error("invalid matrix: {0}")]
    Shape(String),
    #[error("degenerate matrix: {0}")]
    Degenerate(String),
    #[error("{dimension}: {source}")]
    Dimension {
        dimension: &'static str,
        #[source]
        source: Box<PsychError>,
    },
    #[error("roster does not match the score matrix: {0}")]
    RosterMismatch(String),
}

impl PsychError {
    fn in_dimension(self, dim: Dimension) -> Self {
        PsychError::Dimension {
            dimension: dim.name(),
            source: Box::new(self),
        }
    }
}

/// Rows are observation units (or targets), columns are items (or raters).
#[derive(Debug, Clone, PartialEq)]
pub struct ItemMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
}

impl ItemMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, PsychError> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        if n_rows < 2 || n_cols < 2 {
            return Err(PsychError::Shape(format!(
                "need at least 2 rows and 2 columns, got {n_rows}x{n_cols}"
            )));
        }
        if let Some(i) = rows.iter().position(|r| r.len() != n_cols) {
            return Err(PsychError::Shape(format!("row {i} has {} entries, expected {n_cols}", rows[i].len())));
        }
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(PsychError::Shape("entries must be finite".into()));
        }
        Ok(Self {
            n_rows,
            n_cols,
            data,
            row_labels: (0..n_rows).map(|i| format!("r{i}")).collect(),
            col_labels: (0..n_cols).map(|j| format!("c{j}")).collect(),
        })
    }

    pub fn with_labels(mut self, rows: Vec<String>, cols: Vec<String>) -> Result<Self, PsychError> {
        if rows.len() != self.n_rows || cols.len() != self.n_cols {
            return Err(PsychError::Shape("label count does not match matrix shape".into()));
        }
        self.row_labels = rows;
        self.col_labels = cols;
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n_cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.n_cols..(row + 1) * self.n_cols]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.get(r, col)).collect()
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance (n − 1 denominator).
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Mean and sample SD.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    (mean(xs), sample_variance(xs).sqrt())
}

/// `α = k/(k−1) · (1 − Σ s_i² / s_T²)`.
pub fn cronbach_alpha(m: &ItemMatrix) -> Result<f64, PsychError> {
    let k = m.n_cols() as f64;
    let totals: Vec<f64> = (0..m.n_rows()).map(|r| m.row(r).iter().sum()).collect();
    let total_var = sample_variance(&totals);
    if total_var <= 0.0 {
        return Err(PsychError::Degenerate("total-score variance is zero".into()));
    }
    let item_var: f64 = (0..m.n_cols()).map(|c| sample_variance(&m.column(c))).sum();
    Ok(k / (k - 1.0) * (1.0 - item_var / total_var))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlphaSummary {
    pub by_dimension: [f64; 5],
    pub mean: f64,
    pub sd: f64,
}

impl AlphaSummary {
    pub fn from_values(by_dimension: [f64; 5]) -> Self {
        let (mean, sd) = mean_sd(&by_dimension);
        Self { by_dimension, mean, sd }
    }
}

/// Items are scenarios, observations are `(agent, repetition)` pairs.
pub fn alpha_matrix(sm: &ScoreMatrix, dim: Dimension) -> Result<ItemMatrix, PsychError> {
    let l = sm.layout();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (a, agent) in l.agents.iter().enumerate() {
        for r in 0..l.repetitions as usize {
            rows.push((0..l.scenarios.len()).map(|s| sm.value(dim, a, s, r)).collect());
            labels.push(format!("{agent}#{}", r + 1));
        }
    }
    ItemMatrix::new(rows)?.with_labels(labels, l.scenarios.clone())
}

pub fn alpha_per_dimension(sm: &ScoreMatrix) -> Result<AlphaSummary, PsychError> {
    let mut values = [0.0; 5];
    for dim in Dimension::ALL {
        let m = alpha_matrix(sm, dim).map_err(|e| e.in_dimension(dim))?;
        values[dim.index()] = cronbach_alpha(&m).map_err(|e| e.in_dimension(dim))?;
    }
    Ok(AlphaSummary::from_values(values))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IccResult {
    pub icc: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// `MS_R / MS_E`; infinite when raters agree exactly.
    pub f: f64,
    pub ms_rows: f64,
    pub ms_cols: f64,
    pub ms_error: f64,
    pub n: usize,
    pub k: usize,
}

/// Two-way ANOVA mean squares `(MS_R, MS_C, MS_E)`.
pub fn anova_mean_squares(m: &ItemMatrix) -> (f64, f64, f64) {
    let (n, k) = (m.n_rows(), m.n_cols());
    let grand = m.data.iter().sum::<f64>() / (n * k) as f64;
    let row_means: Vec<f64> = (0..n).map(|r| mean(m.row(r))).collect();
    let col_means: Vec<f64> = (0..k).map(|c| mean(&m.column(c))).collect();
    let ss_rows = k as f64 * row_means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let ss_cols = n as f64 * col_means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let ss_total: f64 = m.data.iter().map(|x| (x - grand).powi(2)).sum();
    let ss_error = (ss_total - ss_rows - ss_cols).max(0.0);
    let (nf, kf) = (n as f64, k as f64);
    (
        ss_rows / (nf - 1.0),
        ss_cols / (kf - 1.0),
        ss_error / ((nf - 1.0) * (kf - 1.0)),
    )
}

/// Two-way random effects, absolute agreement, single measure. Rows are
/// targets, columns raters. The 95% interval follows the F approximation
/// with Satterthwaite degrees of freedom.
pub fn icc_absolute_agreement(m: &ItemMatrix) -> Result<IccResult, PsychError> {
    let (n, k) = (m.n_rows(), m.n_cols());
    let (msr, msc, mse) = anova_mean_squares(m);
    // Residuals below this are rounding noise from the subtraction above.
    let scale = msr.abs().max(msc.abs()).max(1.0);
    let mse = if mse <= 1e-12 * scale { 0.0 } else { mse };
    if mse == 0.0 && msr <= 1e-12 * scale {
        return Err(PsychError::Degenerate("no between-target or residual variance".into()));
    }
    let (nf, kf) = (n as f64, k as f64);
    let icc = (msr - mse) / (msr + (kf - 1.0) * mse + kf / nf * (msc - mse));
    if mse == 0.0 {
        return Ok(IccResult {
            icc,
            ci_low: icc,
            ci_high: icc,
            f: f64::INFINITY,
            ms_rows: msr,
            ms_cols: msc,
            ms_error: mse,
            n,
            k,
        });
    }
    let f = msr / mse;
    let (ci_low, ci_high) = icc_ci(icc, msr, msc, mse, nf, kf);
    Ok(IccResult {
        icc,
        ci_low,
        ci_high,
        f,
        ms_rows: msr,
        ms_cols: msc,
        ms_error: mse,
        n,
        k,
    })
}

fn icc_ci(icc: f64, msr: f64, msc: f64, mse: f64, n: f64, k: f64) -> (f64, f64) {
    let a = k * icc / (n * (1.0 - icc));
    let b = 1.0 + k * icc * (n - 1.0) / (n * (1.0 - icc));
    let v = (a * msc + b * mse).powi(2) / ((a * msc).powi(2) / (k - 1.0) + (b * mse).powi(2) / ((n - 1.0) * (k - 1.0)));
    let v = if v.is_finite() && v > 0.0 { v } else { (n - 1.0) * (k - 1.0) };
    let fl = f_quantile(0.975, n - 1.0, v);
    let fu = f_quantile(0.975, v, n - 1.0);
    let spread = k * msc + (k * n - k - n) * mse;
    // Near-zero df push the quantiles past f64 range; use the limits then.
    let low = if fl.is_finite() {
        n * (msr - fl * mse) / (fl * spread + n * msr)
    } else {
        -n * mse / spread
    };
    let high = if fu.is_finite() {
        n * (fu * msr - mse) / (spread + n * fu * msr)
    } else {
        1.0
    };
    (low, high)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IccSummary {
    pub by_dimension: [IccResult; 5],
    /// Means over the five dimensions.
    pub icc: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub f: f64,
}

/// Targets are `(agent, scenario)` pairs, raters are repetitions.
pub fn icc_matrix(sm: &ScoreMatrix, dim: Dimension) -> Result<ItemMatrix, PsychError> {
    let l = sm.layout();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (a, agent) in l.agents.iter().enumerate() {
        for (s, scenario) in l.scenarios.iter().enumerate() {
            rows.push((0..l.repetitions as usize).map(|r| sm.value(dim, a, s, r)).collect());
            labels.push(format!("{agent}/{scenario}"));
        }
    }
    let cols = (1..=l.repetitions).map(|r| format!("rep{r}")).collect();
    ItemMatrix::new(rows)?.with_labels(labels, cols)
}

pub fn icc_per_dimension(sm: &ScoreMatrix) -> Result<IccSummary, PsychError> {
    let mut out = Vec::with_capacity(5);
    for dim in Dimension::ALL {
        let m = icc_matrix(sm, dim).map_err(|e| e.in_dimension(dim))?;
        out.push(icc_absolute_agreement(&m).map_err(|e| e.in_dimension(dim))?);
    }
    let by_dimension: [IccResult; 5] = out.try_into().expect("five dimensions");
    let avg = |f: fn(&IccResult) -> f64| by_dimension.iter().map(f).sum::<f64>() / 5.0;
    Ok(IccSummary {
        icc: avg(|r| r.icc),
        ci_low: avg(|r| r.ci_low),
        ci_high: avg(|r| r.ci_high),
        f: avg(|r| r.f),
        by_dimension,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaBand {
    Excellent,
    Good,
    Acceptable,
    Questionable,
    Poor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IccBand {
    Excellent,
    Good,
    Moderate,
    Poor,
}

impl AlphaBand {
    pub fn as_str(self) -> &'static str {
        match self {
            AlphaBand::Excellent => "excellent",
            AlphaBand::Good => "good",
            AlphaBand::Acceptable => "acceptable",
            AlphaBand::Questionable => "questionable",
            AlphaBand::Poor => "poor",
        }
    }
}

impl IccBand {
    pub fn as_str(self) -> &'static str {
        match self {
            IccBand::Excellent => "excellent",
            IccBand::Good => "good",
            IccBand::Moderate => "moderate",
            IccBand::Poor => "poor",
        }
    }

    /// Capitalized form used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            IccBand::Excellent => "Excellent",
            IccBand::Good => "Good",
            IccBand::Moderate => "Moderate",
            IccBand::Poor => "Poor",
        }
    }
}

impl fmt::Display for AlphaBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for IccBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Each band includes its lower edge.
pub fn interpret_alpha(alpha: f64) -> AlphaBand {
    match alpha {
        a if a >= 0.90 => AlphaBand::Excellent,
        a if a >= 0.80 => AlphaBand::Good,
        a if a >= 0.70 => AlphaBand::Acceptable,
        a if a >= 0.60 => AlphaBand::Questionable,
        _ => AlphaBand::Poor,
    }
}

pub fn interpret_icc(icc: f64) -> IccBand {
    match icc {
        v if v >= 0.90 => IccBand::Excellent,
        v if v >= 0.75 => IccBand::Good,
        v if v >= 0.50 => IccBand::Moderate,
        _ => IccBand::Poor,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscriminationReport {
    pub labels: Vec<String>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub macro_auc: f64,
    /// Set when every profile vector is identical.
    pub degenerate_roster: bool,
}

/// One-vs-rest counts and macro averages from a square confusion matrix.
/// Precision (recall) is 0 for a class never predicted (never present).
pub fn confusion_metrics(confusion: &[Vec<usize>]) -> (f64, Vec<ClassMetrics>, [f64; 3]) {
    let c = confusion.len();
    let total: usize = confusion.iter().flatten().sum();
    let correct: usize = (0..c).map(|i| confusion[i][i]).sum();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let per_class: Vec<ClassMetrics> = (0..c)
        .map(|i| {
            let tp = confusion[i][i];
            let fn_ = confusion[i].iter().sum::<usize>() - tp;
            let fp = (0..c).map(|t| confusion[t][i]).sum::<usize>() - tp;
            let tn = total - tp - fn_ - fp;
            let precision = ratio(tp, tp + fp);
            let recall = ratio(tp, tp + fn_);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                tp,
                fp,
                fn_,
                tn,
                precision,
                recall,
                f1,
            }
        })
        .collect();
    let avg = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / c as f64;
    let macros = [avg(|m| m.precision), avg(|m| m.recall), avg(|m| m.f1)];
    (ratio(correct, total), per_class, macros)
}

/// Area under the ROC curve by the trapezoid rule; tied scores move along
/// the diagonal together. `None` without both positives and negatives.
pub fn roc_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let p = positive.iter().filter(|&&b| b).count() as f64;
    let n = positive.len() as f64 - p;
    if p == 0.0 || n == 0.0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp, mut area) = (0.0, 0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let (tp0, fp0) = (tp, fp);
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if positive[order[i]] {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        area += (fp - fp0) / n * (tp + tp0) / (2.0 * p);
    }
    Some(area)
}

/// Nearest-prototype classification; ties go to the earlier prototype.
pub fn nearest_prototype(x: &OceanVector, prototypes: &[OceanVector]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, p) in prototypes.iter().enumerate() {
        let d = ocean_distance(x, p);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// Classifies `(true class, vector)` observations against `prototypes`.
pub fn discriminate(labels: Vec<String>, prototypes: &[OceanVector], observations: &[(usize, OceanVector)]) -> DiscriminationReport {
    let c = prototypes.len();
    let mut confusion = vec![vec![0usize; c]; c];
    for (truth, x) in observations {
        confusion[*truth][nearest_prototype(x, prototypes)] += 1;
    }
    let (accuracy, per_class, [macro_precision, macro_recall, macro_f1]) = confusion_metrics(&confusion);
    let aucs: Vec<f64> = (0..c)
        .filter_map(|k| {
            let scores: Vec<f64> = observations.iter().map(|(_, x)| -ocean_distance(x, &prototypes[k])).collect();
            let pos: Vec<bool> = observations.iter().map(|(t, _)| *t == k).collect();
            roc_auc(&scores, &pos)
        })
        .collect();
    let macro_auc = if aucs.is_empty() {
        f64::NAN
    } else {
        aucs.iter().sum::<f64>() / aucs.len() as f64
    };
    DiscriminationReport {
        labels,
        confusion,
        per_class,
        accuracy,
        macro_precision,
        macro_recall,
        macro_f1,
        macro_auc,
        degenerate_roster: prototypes.windows(2).all(|w| w[0] == w[1]),
    }
}

/// `roster` must list the matrix's agents in the same order.
pub fn role_discrimination(sm: &ScoreMatrix, roster: &[AgentProfile]) -> Result<DiscriminationReport, PsychError> {
    let ids: Vec<&str> = roster.iter().map(|p| p.agent_id.as_str()).collect();
    if ids != sm.layout().agents.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(PsychError::RosterMismatch(format!(
            "profiles {:?} vs matrix agents {:?}",
            ids,
            sm.layout().agents
        )));
    }
    if roster.len() < 2 {
        return Err(PsychError::Shape("role discrimination needs at least 2 profiles".into()));
    }
    let prototypes: Vec<OceanVector> = roster.iter().map(|p| p.personality).collect();
    let obs: Vec<(usize, OceanVector)> = sm.observations().map(|(a, v)| (a, *v)).collect();
    Ok(discriminate(sm.layout().agents.clone(), &prototypes, &obs))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub agents: usize,
    pub scenarios: usize,
    pub repetitions: u32,
    pub alpha_items: &'static str,
    pub alpha_observations: &'static str,
    pub icc_targets: &'static str,
    pub icc_raters: &'static str,
    pub scorer_id: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReliabilityReport {
    pub condition: ConditionId,
    pub alpha: AlphaSummary,
    pub alpha_band: AlphaBand,
    pub icc: IccSummary,
    pub icc_band: IccBand,
    pub discrimination: DiscriminationReport,
    pub provenance: Provenance,
}

pub fn reliability_report(
    sm: &ScoreMatrix,
    roster: &[AgentProfile],
    scorer_id: &str,
    seed: u64,
) -> Result<ReliabilityReport, PsychError> {
    let alpha = alpha_per_dimension(sm)?;
    let icc = icc_per_dimension(sm)?;
    let discrimination = role_discrimination(sm, roster)?;
    let l = sm.layout();
    Ok(ReliabilityReport {
        condition: sm.condition(),
        alpha_band: interpret_alpha(alpha.mean),
        alpha,
        icc_band: interpret_icc(icc.icc),
        icc,
        discrimination,
        provenance: Provenance {
            agents: l.agents.len(),
            scenarios: l.scenarios.len(),
            repetitions: l.repetitions,
            alpha_items: "scenario",
            alpha_observations: "agent x repetition",
            icc_targets: "agent x scenario",
            icc_raters: "repetition",
            scorer_id: scorer_id.to_owned(),
            seed,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_columns_give_alpha_one() {
        let m = ItemMatrix::new(vec![vec![1.0, 1.0, 1.0], vec![2.0, 2.0, 2.0], vec![4.0, 4.0, 4.0]]).unwrap();
        assert!((cronbach_alpha(&m).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_rows_degenerate() {
        let m = ItemMatrix::new(vec![vec![3.0, 3.0], vec![3.0, 3.0]]).unwrap();
        assert!(matches!(cronbach_alpha(&m), Err(PsychError::Degenerate(_))));
    }

    #[test]
    fn perfect_agreement_icc() {
        let m = ItemMatrix::new(vec![vec![1.0; 4], vec![2.0; 4], vec![5.0; 4]]).unwrap();
        let r = icc_absolute_agreement(&m).unwrap();
        assert_eq!(r.icc, 1.0);
        assert!(r.f.is_infinite());
        assert_eq!((r.ci_low, r.ci_high), (1.0, 1.0));
    }

    #[test]
    fn bands() {
        assert_eq!(interpret_alpha(0.940).as_str(), "excellent");
        assert_eq!(interpret_icc(0.856).label(), "Good");
        assert_eq!(interpret_icc(0.90), IccBand::Excellent);
        assert_eq!(interpret_alpha(0.70), AlphaBand::Acceptable);
        assert_eq!(interpret_alpha(0.5999), AlphaBand::Poor);
    }

    #[test]
    fn hand_confusion() {
        let (acc, per, [p, r, f1]) = confusion_metrics(&[vec![1, 1], vec![0, 2]]);
        assert_eq!(acc, 0.75);
        assert_eq!((per[0].tp, per[0].fn_, per[0].fp, per[0].tn), (1, 1, 0, 2));
        assert!((p - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        assert!((r - 0.75).abs() < 1e-15);
        assert!((f1 - (2.0 / 3.0 + 0.8) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn auc_extremes() {
        assert_eq!(roc_auc(&[3.0, 2.0, 1.0, 0.0], &[true, true, false, false]), Some(1.0));
        assert_eq!(roc_auc(&[1.0, 1.0, 1.0, 1.0], &[true, false, true, false]), Some(0.5));
        assert_eq!(roc_auc(&[1.0], &[true]), None);
    }
}
