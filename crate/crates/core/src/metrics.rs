//! Rank-based IR metrics: Precision@k, AP, nDCG@k and ERR@k.
//!
//! Graded gain is `2^label - 1` with discount `1 / log2(rank + 1)`. Ideal
//! rankings sort labels descending, so normalizers do not depend on how ties
//! among equal labels are broken.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Permutation;
use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TieBreak {
    ByIndex,
    Seeded(u64),
}

/// Orders documents by descending score.
pub fn rank_by_scores(scores: &[f64], tie_break: TieBreak) -> Result<Permutation> {
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::NonFinite(format!("score {i} is NaN")));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    if let TieBreak::Seeded(s) = tie_break {
        order.shuffle(&mut seed::rng(s, "ties", &[]));
    }
    // stable: ties keep their pre-sort order
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    Permutation::from_order(order)
}

pub(crate) fn argsort_desc(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

#[inline]
pub fn gain(label: f64) -> f64 {
    label.exp2() - 1.0
}

#[inline]
pub fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// Labels sorted descending.
pub fn ideal_labels(labels: &[f64]) -> Vec<f64> {
    let mut ideal = labels.to_vec();
    ideal.sort_by(|a, b| b.total_cmp(a));
    ideal
}

pub fn precision_at_k(ranked_labels: &[f64], k: usize, threshold: f64) -> f64 {
    assert!(k >= 1, "precision cutoff must be >= 1");
    let hits = ranked_labels.iter().take(k).filter(|&&y| y >= threshold).count();
    hits as f64 / k as f64
}

pub fn average_precision(ranked_labels: &[f64], threshold: f64) -> f64 {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (r, &y) in ranked_labels.iter().enumerate() {
        if y >= threshold {
            hits += 1;
            sum += hits as f64 / (r + 1) as f64;
        }
    }
    if hits == 0 {
        0.0
    } else {
        sum / hits as f64
    }
}

pub fn dcg_at_k(ranked_labels: &[f64], k: usize) -> f64 {
    ranked_labels
        .iter()
        .take(k)
        .enumerate()
        .map(|(r, &y)| gain(y) * discount(r + 1))
        .sum()
}

/// nDCG@k against `ideal` (the same label multiset, sorted descending).
/// Returns 0 when the ideal DCG is 0.
pub fn ndcg_at_k(ranked_labels: &[f64], ideal: &[f64], k: usize) -> Result<f64> {
    let mut a = ranked_labels.to_vec();
    a.sort_by(|x, y| y.total_cmp(x));
    if a != ideal {
        return Err(Error::invalid(
            "ideal labels are not the ranked labels sorted descending",
        ));
    }
    Ok(ndcg_unchecked(ranked_labels, ideal, k))
}

fn ndcg_unchecked(ranked_labels: &[f64], ideal: &[f64], k: usize) -> f64 {
    let idcg = dcg_at_k(ideal, k);
    if idcg > 0.0 {
        dcg_at_k(ranked_labels, k) / idcg
    } else {
        0.0
    }
}

fn check_err_labels(ranked_labels: &[f64], label_max: f64) -> Result<()> {
    if label_max < 1.0 {
        return Err(Error::invalid(format!("label_max {label_max} < 1")));
    }
    match ranked_labels.iter().find(|&&y| !(0.0..=label_max).contains(&y)) {
        Some(y) => Err(Error::invalid(format!("label {y} outside [0, {label_max}]"))),
        None => Ok(()),
    }
}

fn err_unchecked(ranked_labels: &[f64], label_max: f64, k: usize) -> f64 {
    let denom = label_max.exp2();
    let mut not_stopped = 1.0;
    let mut err = 0.0;
    for (r, &y) in ranked_labels.iter().take(k).enumerate() {
        let p = gain(y) / denom;
        err += not_stopped * p / (r + 1) as f64;
        not_stopped *= 1.0 - p;
    }
    err
}

/// Expected reciprocal rank at cutoff `k` under the cascade model with
/// stopping probability `(2^y - 1) / 2^label_max`.
pub fn err_at_k(ranked_labels: &[f64], label_max: f64, k: usize) -> Result<f64> {
    check_err_labels(ranked_labels, label_max)?;
    Ok(err_unchecked(ranked_labels, label_max, k))
}

/// ERR@k divided by the ERR@k of the ideal ordering (0 if that is 0).
pub fn nerr_at_k(ranked_labels: &[f64], label_max: f64, k: usize) -> Result<f64> {
    check_err_labels(ranked_labels, label_max)?;
    let ideal = err_unchecked(&ideal_labels(ranked_labels), label_max, k);
    Ok(if ideal > 0.0 {
        err_unchecked(ranked_labels, label_max, k) / ideal
    } else {
        0.0
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Metric {
    Precision,
    AveragePrecision,
    Ndcg,
    Err,
    Nerr,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Precision => "p",
            Metric::AveragePrecision => "ap",
            Metric::Ndcg => "ndcg",
            Metric::Err => "err",
            Metric::Nerr => "nerr",
        }
    }
}

/// A metric at a cutoff; cutoff 0 means full depth (used for AP).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MetricKey {
    pub metric: Metric,
    pub cutoff: usize,
}

impl MetricKey {
    pub fn new(metric: Metric, cutoff: usize) -> Self {
        MetricKey { metric, cutoff }
    }

    pub fn ndcg(cutoff: usize) -> Self {
        MetricKey::new(Metric::Ndcg, cutoff)
    }
}

impl fmt::Display for MetricKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.cutoff == 0 {
            write!(f, "{}", self.metric.name())
        } else {
            write!(f, "{}@{}", self.metric.name(), self.cutoff)
        }
    }
}

/// How queries with no relevant document enter nDCG/nERR means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZeroIdealPolicy {
    /// Count them as 0.
    #[default]
    Zero,
    /// Leave them out of the mean.
    Exclude,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub cutoffs: Vec<usize>,
    pub relevance_threshold: f64,
    pub label_max: f64,
    pub zero_ideal: ZeroIdealPolicy,
}

impl EvalOptions {
    pub fn new(cutoffs: Vec<usize>, label_max: f64) -> Self {
        EvalOptions {
            cutoffs,
            relevance_threshold: 1.0,
            label_max,
            zero_ideal: ZeroIdealPolicy::Zero,
        }
    }
}

/// Per-query metric values; means are computed on demand.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricReport {
    pub values: BTreeMap<MetricKey, Vec<f64>>,
    pub query_count: usize,
}

impl MetricReport {
    /// Adds one query given its labels and the scores it was ranked by.
    /// Ties are broken by document index.
    pub fn add_query(&mut self, labels: &[f64], scores: &[f64], opts: &EvalOptions) {
        let order = argsort_desc(scores);
        let ranked: Vec<f64> = order.iter().map(|&i| labels[i]).collect();
        self.add_ranked(&ranked, opts);
    }

    /// Adds one query given its labels already in ranked order.
    pub fn add_ranked(&mut self, ranked: &[f64], opts: &EvalOptions) {
        self.query_count += 1;
        let ideal = ideal_labels(ranked);
        let has_gain = ideal.first().is_some_and(|&y| y > 0.0);
        let keep_normalized = has_gain || opts.zero_ideal == ZeroIdealPolicy::Zero;
        let thr = opts.relevance_threshold;
        let mut push = |key: MetricKey, v: f64| self.values.entry(key).or_default().push(v);

        push(
            MetricKey::new(Metric::AveragePrecision, 0),
            average_precision(ranked, thr),
        );
        for &k in &opts.cutoffs {
            push(MetricKey::new(Metric::Precision, k), precision_at_k(ranked, k, thr));
            let err = err_unchecked(ranked, opts.label_max, k);
            push(MetricKey::new(Metric::Err, k), err);
            if keep_normalized {
                push(MetricKey::ndcg(k), ndcg_unchecked(ranked, &ideal, k));
                let ideal_err = err_unchecked(&ideal, opts.label_max, k);
                let nerr = if ideal_err > 0.0 { err / ideal_err } else { 0.0 };
                push(MetricKey::new(Metric::Nerr, k), nerr);
            }
        }
    }

    pub fn mean(&self, key: MetricKey) -> Option<f64> {
        let v = self.values.get(&key)?;
        if v.is_empty() {
            return Some(0.0);
        }
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn count(&self, key: MetricKey) -> usize {
        self.values.get(&key).map_or(0, Vec::len)
    }

    pub fn means(&self) -> BTreeMap<MetricKey, f64> {
        self.values.keys().map(|&k| (k, self.mean(k).unwrap_or(0.0))).collect()
    }

    /// Merges per-query values from another report.
    pub fn merge(&mut self, other: &MetricReport) {
        for (k, v) in &other.values {
            self.values.entry(*k).or_default().extend_from_slice(v);
        }
        self.query_count += other.query_count;
    }
}

pub const REPORT_CSV_HEADER: &str = "fold,split,metric,cutoff,value,query_count";

/// One CSV row in the report schema.
pub fn report_row(fold: &str, split: &str, key: MetricKey, value: f64, count: usize) -> String {
    format!("{fold},{split},{},{},{value:.6},{count}", key.metric.name(), key.cutoff)
}

/// All mean rows of a report.
pub fn report_rows(fold: &str, split: &str, report: &MetricReport) -> Vec<String> {
    report
        .values
        .keys()
        .map(|&k| report_row(fold, split, k, report.mean(k).unwrap_or(0.0), report.count(k)))
        .collect()
}
