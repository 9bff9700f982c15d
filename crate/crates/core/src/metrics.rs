//! Retrieval and classification metrics, plus the paired significance test
//! and effect size used to compare two systems.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::corpus::ReportClass;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("query {0} has no ground truth")]
    EmptyGroundTruth(String),
    #[error("no records to evaluate")]
    NoRecords,
    #[error("paired samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("Wilcoxon test needs at least 5 non-zero differences, got {0}")]
    TooFewDifferences(usize),
    #[error("empty sample")]
    EmptySample,
}

/// One query's ranked paths and its ground-truth set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub query_id: String,
    pub ranked: Vec<String>,
    pub relevant: BTreeSet<String>,
}

impl EvalRecord {
    pub fn new(query_id: impl Into<String>, ranked: Vec<String>, relevant: impl IntoIterator<Item = String>) -> Self {
        EvalRecord { query_id: query_id.into(), ranked, relevant: relevant.into_iter().collect() }
    }

    fn is_relevant(&self, pos: usize) -> bool {
        self.ranked.get(pos).is_some_and(|p| self.relevant.contains(p))
    }

    fn check(&self) -> Result<(), MetricError> {
        if self.relevant.is_empty() {
            Err(MetricError::EmptyGroundTruth(self.query_id.clone()))
        } else {
            Ok(())
        }
    }
}

/// `(1/|D|) * sum_{k<=K} P_k * B_k`, with `|D|` the full ground-truth size.
pub fn average_precision(record: &EvalRecord, k: usize) -> Result<f64, MetricError> {
    record.check()?;
    let mut hits = 0usize;
    let mut sum = 0.0;
    for pos in 0..k.min(record.ranked.len()) {
        if record.is_relevant(pos) {
            hits += 1;
            sum += hits as f64 / (pos + 1) as f64;
        }
    }
    Ok(sum / record.relevant.len() as f64)
}

/// 1 / rank of the first relevant item, 0 when none is ranked.
pub fn reciprocal_rank(record: &EvalRecord) -> Result<f64, MetricError> {
    record.check()?;
    Ok((0..record.ranked.len()).find(|&p| record.is_relevant(p)).map_or(0.0, |p| 1.0 / (p + 1) as f64))
}

pub fn precision_at(record: &EvalRecord, k: usize) -> Result<f64, MetricError> {
    record.check()?;
    let hits = (0..k.min(record.ranked.len())).filter(|&p| record.is_relevant(p)).count();
    Ok(hits as f64 / k as f64)
}

pub fn hit_at(record: &EvalRecord, k: usize) -> Result<bool, MetricError> {
    record.check()?;
    Ok((0..k.min(record.ranked.len())).any(|p| record.is_relevant(p)))
}

fn mean_of<F: Fn(&EvalRecord) -> Result<f64, MetricError>>(records: &[EvalRecord], f: F) -> Result<f64, MetricError> {
    if records.is_empty() {
        return Err(MetricError::NoRecords);
    }
    let mut sum = 0.0;
    for r in records {
        sum += f(r)?;
    }
    Ok(sum / records.len() as f64)
}

pub fn mean_average_precision(records: &[EvalRecord], k: usize) -> Result<f64, MetricError> {
    mean_of(records, |r| average_precision(r, k))
}

pub fn mean_reciprocal_rank(records: &[EvalRecord]) -> Result<f64, MetricError> {
    mean_of(records, reciprocal_rank)
}

pub fn hit_at_k(records: &[EvalRecord], k: usize) -> Result<f64, MetricError> {
    mean_of(records, |r| hit_at(r, k).map(|h| if h { 1.0 } else { 0.0 }))
}

pub fn precision_at_k(records: &[EvalRecord], k: usize) -> Result<f64, MetricError> {
    mean_of(records, |r| precision_at(r, k))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub queries: usize,
    /// AP cutoff; the full ranked list when `None`.
    pub ap_cutoff: Option<usize>,
    pub map: f64,
    pub mrr: f64,
    /// HIT@K for each requested K.
    pub hit_at: BTreeMap<usize, f64>,
    pub precision_at_10: f64,
    pub per_query_ap: Vec<f64>,
    pub per_query_rr: Vec<f64>,
}

/// Full report over `records`. AP uses the whole ranked list unless
/// `ap_cutoff` is given.
pub fn evaluate(records: &[EvalRecord], ks: &[usize], ap_cutoff: Option<usize>) -> Result<MetricReport, MetricError> {
    if records.is_empty() {
        return Err(MetricError::NoRecords);
    }
    let per_query_ap = records
        .iter()
        .map(|r| average_precision(r, ap_cutoff.unwrap_or(r.ranked.len())))
        .collect::<Result<Vec<_>, _>>()?;
    let per_query_rr = records.iter().map(reciprocal_rank).collect::<Result<Vec<_>, _>>()?;
    let n = records.len() as f64;
    let mut hit = BTreeMap::new();
    for &k in ks {
        hit.insert(k, hit_at_k(records, k)?);
    }
    Ok(MetricReport {
        queries: records.len(),
        ap_cutoff,
        map: per_query_ap.iter().sum::<f64>() / n,
        mrr: per_query_rr.iter().sum::<f64>() / n,
        hit_at: hit,
        precision_at_10: precision_at_k(records, 10)?,
        per_query_ap,
        per_query_rr,
    })
}

/// Overall report plus one per report class present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassBreakdown {
    pub overall: MetricReport,
    pub by_class: BTreeMap<ReportClass, MetricReport>,
}

pub fn evaluate_by_class(
    records: &[(EvalRecord, ReportClass)],
    ks: &[usize],
    ap_cutoff: Option<usize>,
) -> Result<ClassBreakdown, MetricError> {
    let all: Vec<EvalRecord> = records.iter().map(|(r, _)| r.clone()).collect();
    let mut by_class = BTreeMap::new();
    for class in ReportClass::ALL {
        let subset: Vec<EvalRecord> = records.iter().filter(|(_, c)| *c == class).map(|(r, _)| r.clone()).collect();
        if !subset.is_empty() {
            by_class.insert(class, evaluate(&subset, ks, ap_cutoff)?);
        }
    }
    Ok(ClassBreakdown { overall: evaluate(&all, ks, ap_cutoff)?, by_class })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    /// 0 when nothing is predicted positive.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    /// 0 when there are no positives.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMetrics {
    pub threshold: f64,
    pub counts: ConfusionCounts,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Predicts positive when `score >= threshold`; labels are 1 (positive) or 0.
pub fn confusion_metrics(scored: &[(f64, u8)], threshold: f64) -> ConfusionMetrics {
    let mut c = ConfusionCounts::default();
    for &(score, label) in scored {
        match (score >= threshold, label != 0) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    ConfusionMetrics {
        threshold,
        counts: c,
        accuracy: c.accuracy(),
        precision: c.precision(),
        recall: c.recall(),
        f1: c.f1(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WilcoxonMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of the ranks of positive `baseline - treatment` differences.
    pub statistic: f64,
    pub p_value: f64,
    /// Differences left after dropping zeros.
    pub n: usize,
    pub method: WilcoxonMethod,
}

pub const WILCOXON_EXACT_MAX_N: usize = 25;

/// Average ranks (1-based) of `values`, ties sharing the mean rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j + 2) as f64 / 2.0;
        for &o in &order[i..=j] {
            ranks[o] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// One-sided Wilcoxon signed-rank test of `baseline < treatment`.
///
/// Zero differences are dropped and tied magnitudes get average ranks. For
/// `n <= 25` the p-value is exact over all `2^n` sign assignments (ties
/// included); beyond that a tie-corrected normal approximation with
/// continuity correction is used.
pub fn wilcoxon_signed_rank(baseline: &[f64], treatment: &[f64]) -> Result<WilcoxonResult, MetricError> {
    if baseline.len() != treatment.len() {
        return Err(MetricError::LengthMismatch(baseline.len(), treatment.len()));
    }
    let diffs: Vec<f64> = baseline.iter().zip(treatment).map(|(b, t)| b - t).filter(|d| *d != 0.0).collect();
    let n = diffs.len();
    if n < 5 {
        return Err(MetricError::TooFewDifferences(n));
    }
    let magnitudes: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&magnitudes);
    let r_plus: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();

    if n <= WILCOXON_EXACT_MAX_N {
        // Ranks are multiples of 0.5; count subset sums of doubled ranks.
        let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
        let total: usize = doubled.iter().sum();
        let mut counts = vec![0u64; total + 1];
        counts[0] = 1;
        for &r in &doubled {
            for s in (r..=total).rev() {
                counts[s] += counts[s - r];
            }
        }
        let observed = (r_plus * 2.0).round() as usize;
        let at_or_below: u64 = counts[..=observed].iter().sum();
        let p = at_or_below as f64 / 2f64.powi(n as i32);
        return Ok(WilcoxonResult { statistic: r_plus, p_value: p.min(1.0), n, method: WilcoxonMethod::Exact });
    }

    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let mut tie_term = 0.0;
    let mut sorted = magnitudes.clone();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let z = (r_plus - mean + 0.5) / var.sqrt();
    let p = Normal::new(0.0, 1.0).expect("standard normal").cdf(z);
    Ok(WilcoxonResult { statistic: r_plus, p_value: p, n, method: WilcoxonMethod::Normal })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectMagnitude {
    Negligible,
    Small,
    Medium,
    Large,
    VeryLarge,
}

impl EffectMagnitude {
    /// |δ| < 0.147 negligible, < 0.33 small, < 0.474 medium, <= 0.71 large,
    /// above that very large.
    pub fn from_delta(delta: f64) -> Self {
        let d = delta.abs();
        if d < 0.147 {
            EffectMagnitude::Negligible
        } else if d < 0.33 {
            EffectMagnitude::Small
        } else if d < 0.474 {
            EffectMagnitude::Medium
        } else if d <= 0.71 {
            EffectMagnitude::Large
        } else {
            EffectMagnitude::VeryLarge
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CliffsDelta {
    pub delta: f64,
    pub magnitude: EffectMagnitude,
}

/// `(#{x > y} - #{x < y}) / (|x| |y|)` over all pairs, computed by sorting
/// `y` and binary-searching each `x`.
pub fn cliffs_delta(x: &[f64], y: &[f64]) -> Result<CliffsDelta, MetricError> {
    if x.is_empty() || y.is_empty() {
        return Err(MetricError::EmptySample);
    }
    let mut ys = y.to_vec();
    ys.sort_by(f64::total_cmp);
    let mut dominance: i64 = 0;
    for &xi in x {
        let below = ys.partition_point(|&v| v < xi) as i64;
        let not_above = ys.partition_point(|&v| v <= xi) as i64;
        let above = ys.len() as i64 - not_above;
        dominance += below - above;
    }
    let delta = dominance as f64 / (x.len() * y.len()) as f64;
    Ok(CliffsDelta { delta, magnitude: EffectMagnitude::from_delta(delta) })
}
