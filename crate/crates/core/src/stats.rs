//! Paired t-tests over per-dimension α vectors with Bonferroni correction.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::condition::ConditionId;
use crate::special::t_two_sided_p;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("paired samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 pairs, got {0}")]
    TooFewPairs(usize),
    #[error("all differences equal {0}; t is undefined")]
    ZeroVariance(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairedT {
    pub delta_mean: f64,
    pub t: f64,
    pub df: usize,
    pub p: f64,
    /// All differences were exactly zero; t = 0 and p = 1 by convention.
    pub null_by_convention: bool,
}

/// Paired t-test on `d = x − y`, two-sided.
pub fn paired_t(x: &[f64], y: &[f64]) -> Result<PairedT, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 2 {
        return Err(StatsError::TooFewPairs(n));
    }
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let df = n - 1;
    if d.iter().all(|&v| v == 0.0) {
        return Ok(PairedT {
            delta_mean: 0.0,
            t: 0.0,
            df,
            p: 1.0,
            null_by_convention: true,
        });
    }
    let nf = n as f64;
    let mean = d.iter().sum::<f64>() / nf;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    // Differences that are equal up to rounding count as constant.
    if var <= (mean * 1e-12).powi(2) {
        return Err(StatsError::ZeroVariance(mean));
    }
    let t = mean / (var.sqrt() / nf.sqrt());
    Ok(PairedT {
        delta_mean: mean,
        t,
        df,
        p: t_two_sided_p(t, df as f64),
        null_by_convention: false,
    })
}

/// `min(1, m·p)` for each p, order preserved.
pub fn bonferroni(p_values: &[f64], m: usize) -> Vec<f64> {
    p_values.iter().map(|p| (p * m as f64).min(1.0)).collect()
}

pub fn significance_stars(p: f64) -> &'static str {
    match p {
        p if p < 0.001 => "***",
        p if p < 0.01 => "**",
        p if p < 0.05 => "*",
        _ => "",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedComparison {
    pub condition_a: ConditionId,
    pub condition_b: ConditionId,
    /// Mean of `b − a`.
    pub delta_mean: f64,
    pub t: f64,
    pub df: usize,
    pub p_raw: f64,
    pub p_adjusted: f64,
    pub stars: &'static str,
    pub null_by_convention: bool,
}

/// All pairs of the supplied conditions in condition order, each a paired t
/// over the five α values (later minus earlier), Bonferroni-adjusted over the
/// number of pairs.
pub fn pairwise_alpha_comparisons(alphas: &BTreeMap<ConditionId, [f64; 5]>) -> Result<Vec<PairedComparison>, StatsError> {
    let conds: Vec<ConditionId> = alphas.keys().copied().collect();
    let mut raw = Vec::new();
    for (i, &a) in conds.iter().enumerate() {
        for &b in &conds[i + 1..] {
            raw.push((a, b, paired_t(&alphas[&b], &alphas[&a])?));
        }
    }
    let m = raw.len();
    let adjusted = bonferroni(&raw.iter().map(|(_, _, r)| r.p).collect::<Vec<_>>(), m);
    Ok(raw
        .into_iter()
        .zip(adjusted)
        .map(|((a, b, r), p_adjusted)| PairedComparison {
            condition_a: a,
            condition_b: b,
            delta_mean: r.delta_mean,
            t: r.t,
            df: r.df,
            p_raw: r.p,
            p_adjusted,
            stars: significance_stars(p_adjusted),
            null_by_convention: r.null_by_convention,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_samples_use_convention() {
        let r = paired_t(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((r.t, r.p, r.delta_mean), (0.0, 1.0, 0.0));
        assert!(r.null_by_convention);
    }

    #[test]
    fn constant_shift_is_zero_variance() {
        let y = [0.0; 5];
        assert_eq!(paired_t(&[1.0; 5], &y), Err(StatsError::ZeroVariance(1.0)));
    }

    #[test]
    fn fixture_t_value() {
        let d = [0.2, 0.19, 0.18, 0.2, 0.18];
        let r = paired_t(&d, &[0.0; 5]).unwrap();
        assert!((r.t - 0.19 / (0.01 / 5f64.sqrt())).abs() < 1e-9);
        assert_eq!(r.df, 4);
        assert!(r.p < 1e-5);
    }

    #[test]
    fn bonferroni_examples() {
        assert_eq!(bonferroni(&[0.3], 6), vec![1.0]);
        assert!((bonferroni(&[0.004], 6)[0] - 0.024).abs() < 1e-15);
        assert_eq!(bonferroni(&[0.2, 0.01], 1), vec![0.2, 0.01]);
    }

    #[test]
    fn stars() {
        assert_eq!(significance_stars(0.0005), "***");
        assert_eq!(significance_stars(0.028), "*");
        assert_eq!(significance_stars(1.0), "");
    }
}
