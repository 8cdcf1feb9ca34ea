use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::QueryGroup;
use crate::nn::ScoringNet;
use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleSource {
    True,
    Generated,
}

/// A top-`k` ranking of one query's documents.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingSample {
    pub qid: String,
    /// Document indices, best first; distinct.
    pub docs: Vec<usize>,
    pub source: SampleSource,
    /// Log-probability under the generator that produced it (0 for true
    /// rankings).
    pub log_prob: f64,
}

#[inline]
fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

fn check_ranking(m: usize, ranking: &[usize]) -> Result<()> {
    let mut seen = vec![false; m];
    for &d in ranking {
        if d >= m {
            return Err(Error::invalid(format!("document {d} out of range 0..{m}")));
        }
        if std::mem::replace(&mut seen[d], true) {
            return Err(Error::invalid(format!("duplicate document {d} in ranking")));
        }
    }
    Ok(())
}

/// Log-probability of a top-`k` ranking under Plackett-Luce with logits
/// `scores / temperature`. At step `i` the softmax runs over every document
/// not placed before it, including the ones outside the ranking.
pub fn pl_log_prob(scores: &[f64], ranking: &[usize], temperature: f64) -> Result<f64> {
    check_ranking(scores.len(), ranking)?;
    if temperature.is_nan() || temperature <= 0.0 {
        return Err(Error::invalid(format!("temperature must be > 0, got {temperature}")));
    }
    Ok(pl_log_prob_and_grad(scores, ranking, temperature).0)
}

/// [`pl_log_prob`] and its gradient with respect to `scores`. The ranking
/// must be valid; this is the unchecked hot path.
pub fn pl_log_prob_and_grad(scores: &[f64], ranking: &[usize], temperature: f64) -> (f64, Vec<f64>) {
    let m = scores.len();
    let k = ranking.len();
    let u: Vec<f64> = scores.iter().map(|s| s / temperature).collect();
    let mut placed = vec![false; m];
    for &d in ranking {
        placed[d] = true;
    }
    let rest = (0..m)
        .filter(|&j| !placed[j])
        .fold(f64::NEG_INFINITY, |acc, j| log_add_exp(acc, u[j]));

    // suffix[i] = log Σ exp(u) over the candidates still open at step i
    let mut suffix = vec![0.0; k];
    let mut acc = rest;
    for i in (0..k).rev() {
        acc = log_add_exp(u[ranking[i]], acc);
        suffix[i] = acc;
    }

    let mut log_prob = 0.0;
    let mut grad = vec![0.0; m];
    // prefix = log Σ_{i' <= i} exp(-suffix[i'])
    let mut prefix = f64::NEG_INFINITY;
    for i in 0..k {
        let d = ranking[i];
        log_prob += u[d] - suffix[i];
        prefix = log_add_exp(prefix, -suffix[i]);
        grad[d] = (1.0 - (u[d] + prefix).exp()) / temperature;
    }
    if k > 0 {
        for j in (0..m).filter(|&j| !placed[j]) {
            grad[j] = -(u[j] + prefix).exp() / temperature;
        }
    }
    (log_prob, grad)
}

/// `m` i.i.d. Gumbel(0, 1) draws, `-ln(-ln u)` with `u` in `(0, 1)`.
pub fn gumbel_noise<R: Rng>(rng: &mut R, m: usize) -> Vec<f64> {
    (0..m)
        .map(|_| {
            let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            -(-u.ln()).ln()
        })
        .collect()
}

/// Gumbel-max draw of a top-`k` ranking from PL(`scores / temperature`):
/// perturb each logit with Gumbel noise and sort descending.
pub fn sample_ranking_from_scores<R: Rng>(
    scores: &[f64],
    k: usize,
    temperature: f64,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let m = scores.len();
    if k > m {
        return Err(Error::invalid(format!("ranking size {k} exceeds {m} documents")));
    }
    let noise = gumbel_noise(rng, m);
    let keys: Vec<f64> = scores.iter().zip(&noise).map(|(s, g)| s / temperature + g).collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]));
    order.truncate(k);
    Ok(order)
}

/// Scores the query's documents with `generator` (eval mode) and draws one
/// top-`k` ranking, recording its log-probability.
pub fn gumbel_sample_ranking<R: Rng>(
    generator: &ScoringNet,
    qid: &str,
    features: ArrayView2<f64>,
    k: usize,
    temperature: f64,
    rng: &mut R,
) -> Result<RankingSample> {
    let scores = generator.predict(features)?;
    let docs = sample_ranking_from_scores(&scores, k, temperature, rng)?;
    let log_prob = pl_log_prob_and_grad(&scores, &docs, temperature).0;
    Ok(RankingSample {
        qid: qid.to_string(),
        docs,
        source: SampleSource::Generated,
        log_prob,
    })
}

/// A ground-truth top-`k` ranking: unmasked documents by label descending,
/// ties shuffled by `seed`. `None` when fewer than `k` documents are
/// unmasked; callers skip such queries.
pub fn sample_true_ranking(group: &QueryGroup, k: usize, seed_value: u64) -> Option<RankingSample> {
    let mut docs: Vec<usize> = (0..group.len()).filter(|&i| !group.masked[i]).collect();
    if docs.len() < k || k == 0 {
        return None;
    }
    docs.shuffle(&mut seed::rng(seed_value, "true-ranking", &[]));
    docs.sort_by(|&a, &b| group.labels[b].total_cmp(&group.labels[a]));
    docs.truncate(k);
    Some(RankingSample {
        qid: group.qid.clone(),
        docs,
        source: SampleSource::True,
        log_prob: 0.0,
    })
}
