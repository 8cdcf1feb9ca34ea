//! Ranking losses on one query's scores.
//!
//! Every function takes the model scores `s` and ground-truth grades `y` of
//! a single query and returns the loss together with `dL/ds`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adversarial::{gumbel_noise, pl_log_prob_and_grad};
use crate::metrics::{argsort_desc, dcg_at_k, discount, gain, ideal_labels};
use crate::nn::Activation;
use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RankerKind {
    RankMSE,
    RankNet,
    LambdaRank,
    ListNet,
    ListMLE,
    RankCosine,
    ApproxNDCG,
    STListNet,
}

impl RankerKind {
    pub const ALL: [RankerKind; 8] = [
        RankerKind::RankMSE,
        RankerKind::RankNet,
        RankerKind::LambdaRank,
        RankerKind::ListNet,
        RankerKind::ListMLE,
        RankerKind::RankCosine,
        RankerKind::ApproxNDCG,
        RankerKind::STListNet,
    ];

    /// Activation that performed best for each loss on the reference
    /// benchmark; a reasonable starting point for new data.
    pub fn reference_activation(self) -> Activation {
        match self {
            RankerKind::RankMSE | RankerKind::ListNet | RankerKind::STListNet => Activation::ReLU,
            RankerKind::RankNet | RankerKind::ListMLE => Activation::ELU,
            RankerKind::LambdaRank => Activation::RReLU,
            RankerKind::RankCosine => Activation::LeakyReLU,
            RankerKind::ApproxNDCG => Activation::Sigmoid,
        }
    }
}

impl fmt::Display for RankerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for RankerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        RankerKind::ALL
            .into_iter()
            .find(|k| k.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                format!(
                    "unknown ranker kind `{s}`; expected one of {}",
                    RankerKind::ALL.map(|k| k.to_string()).join(", ")
                )
            })
    }
}

/// Target distribution for ListNet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ListNetTarget {
    /// `softmax(y)`
    #[default]
    Labels,
    /// `softmax(2^y - 1)`
    Gains,
}

/// How ties among equal labels are ordered when a loss needs a single
/// ground-truth permutation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TiePolicy {
    Index,
    #[default]
    Shuffle,
}

/// What a masked (unlabelled) document contributes to an ERM loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskedLabelPolicy {
    /// Stays in the list with grade 0.
    #[default]
    Zero,
    /// Dropped from the list.
    Exclude,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankerSpec {
    pub kind: RankerKind,
    /// Pairwise logistic scale for RankNet / LambdaRank.
    pub sigma: f64,
    /// Sharpness of the ApproxNDCG rank approximation.
    pub alpha: f64,
    pub seed: u64,
    pub masked_label_policy: MaskedLabelPolicy,
    pub listnet_target: ListNetTarget,
    pub listmle_ties: TiePolicy,
}

impl RankerSpec {
    pub fn new(kind: RankerKind) -> Self {
        RankerSpec {
            kind,
            sigma: 1.0,
            alpha: 10.0,
            seed: 0,
            masked_label_policy: MaskedLabelPolicy::Zero,
            listnet_target: ListNetTarget::Labels,
            listmle_ties: TiePolicy::Shuffle,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid(format!("alpha must be > 0, got {}", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    pub grad: Vec<f64>,
}

fn check_lengths(scores: &[f64], labels: &[f64]) {
    assert_eq!(scores.len(), labels.len(), "scores and labels must have equal length");
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn log_softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    v.iter().map(|x| x - lse).collect()
}

/// Mean squared error against the grades.
pub fn loss_rank_mse(scores: &[f64], labels: &[f64]) -> LossOutput {
    check_lengths(scores, labels);
    let m = scores.len() as f64;
    let loss = scores.iter().zip(labels).map(|(s, y)| (s - y).powi(2)).sum::<f64>() / m;
    let grad = scores.iter().zip(labels).map(|(s, y)| 2.0 * (s - y) / m).collect();
    LossOutput { loss, grad }
}

/// Pairwise logistic loss summed over all pairs with `y_i > y_j`.
pub fn loss_ranknet(scores: &[f64], labels: &[f64], sigma: f64) -> LossOutput {
    check_lengths(scores, labels);
    let m = scores.len();
    let mut loss = 0.0;
    let mut grad = vec![0.0; m];
    for i in 0..m {
        for j in 0..m {
            if labels[i] > labels[j] {
                let margin = sigma * (scores[i] - scores[j]);
                loss += softplus(-margin);
                let g = -sigma * sigmoid(-margin);
                grad[i] += g;
                grad[j] -= g;
            }
        }
    }
    LossOutput { loss, grad }
}

/// `|ΔnDCG|` from swapping the documents at 1-based ranks `ri` and `rj`.
pub fn ndcg_swap_delta(label_i: f64, label_j: f64, ri: usize, rj: usize, idcg: f64) -> f64 {
    if idcg <= 0.0 {
        return 0.0;
    }
    (gain(label_i) - gain(label_j)).abs() * (discount(ri) - discount(rj)).abs() / idcg
}

/// LambdaRank pair forces: RankNet gradients on each ordered pair scaled by
/// the full-depth `|ΔnDCG|` of swapping the pair in the current ranking.
pub fn lambda_gradients(scores: &[f64], labels: &[f64], sigma: f64) -> Vec<f64> {
    lambdarank_loss(scores, labels, sigma).grad
}

/// [`lambda_gradients`] together with `Σ |ΔnDCG_ij| log(1 + e^{-σ(s_i - s_j)})`.
/// Since `|ΔnDCG|` is constant while the ranking does not change, the
/// returned gradient is the exact gradient of that value away from ties;
/// it is reported as the training loss.
pub fn lambdarank_loss(scores: &[f64], labels: &[f64], sigma: f64) -> LossOutput {
    check_lengths(scores, labels);
    let m = scores.len();
    let mut grad = vec![0.0; m];
    let idcg = dcg_at_k(&ideal_labels(labels), m);
    if idcg <= 0.0 {
        return LossOutput { loss: 0.0, grad };
    }
    let order = argsort_desc(scores);
    let mut rank = vec![0usize; m];
    for (pos, &doc) in order.iter().enumerate() {
        rank[doc] = pos + 1;
    }
    let mut loss = 0.0;
    for i in 0..m {
        for j in 0..m {
            if labels[i] > labels[j] {
                let delta = ndcg_swap_delta(labels[i], labels[j], rank[i], rank[j], idcg);
                let margin = sigma * (scores[i] - scores[j]);
                loss += delta * softplus(-margin);
                let lambda = -sigma * sigmoid(-margin) * delta;
                grad[i] += lambda;
                grad[j] -= lambda;
            }
        }
    }
    LossOutput { loss, grad }
}

/// Top-one ListNet: cross entropy between `softmax(target)` and
/// `softmax(scores)`.
pub fn loss_listnet_top1(scores: &[f64], labels: &[f64], target: ListNetTarget) -> LossOutput {
    check_lengths(scores, labels);
    let t: Vec<f64> = match target {
        ListNetTarget::Labels => labels.to_vec(),
        ListNetTarget::Gains => labels.iter().map(|&y| gain(y)).collect(),
    };
    let log_p = log_softmax(&t);
    let log_q = log_softmax(scores);
    let loss = -log_p.iter().zip(&log_q).map(|(lp, lq)| lp.exp() * lq).sum::<f64>();
    let grad = log_q.iter().zip(&log_p).map(|(lq, lp)| lq.exp() - lp.exp()).collect();
    LossOutput { loss, grad }
}

/// Ground-truth permutation: labels descending, ties per `ties`.
pub(crate) fn target_order(labels: &[f64], ties: TiePolicy, seed_value: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..labels.len()).collect();
    if ties == TiePolicy::Shuffle {
        use rand::seq::SliceRandom;
        order.shuffle(&mut seed::rng(seed_value, "listmle-ties", &[]));
    }
    order.sort_by(|&a, &b| labels[b].total_cmp(&labels[a]));
    order
}

/// Negative Plackett-Luce log-likelihood of the label-sorted permutation.
pub fn loss_listmle(scores: &[f64], labels: &[f64], ties: TiePolicy, seed_value: u64) -> LossOutput {
    check_lengths(scores, labels);
    let order = target_order(labels, ties, seed_value);
    let (log_prob, grad) = pl_log_prob_and_grad(scores, &order, 1.0);
    LossOutput {
        loss: -log_prob,
        grad: grad.into_iter().map(|g| -g).collect(),
    }
}

/// `½ (1 - cos(s, y))`; `½` with zero gradient when either vector is zero.
pub fn loss_rankcosine(scores: &[f64], labels: &[f64]) -> LossOutput {
    check_lengths(scores, labels);
    let ns = scores.iter().map(|s| s * s).sum::<f64>().sqrt();
    let ny = labels.iter().map(|y| y * y).sum::<f64>().sqrt();
    if ns == 0.0 || ny == 0.0 {
        return LossOutput {
            loss: 0.5,
            grad: vec![0.0; scores.len()],
        };
    }
    let dot: f64 = scores.iter().zip(labels).map(|(s, y)| s * y).sum();
    let cos = dot / (ns * ny);
    let grad = scores
        .iter()
        .zip(labels)
        .map(|(s, y)| -0.5 * (y / (ns * ny) - cos * s / (ns * ns)))
        .collect();
    LossOutput {
        loss: 0.5 * (1.0 - cos),
        grad,
    }
}

/// Negative ApproxNDCG with sigmoid-smoothed ranks
/// `r_i = 1 + Σ_{j≠i} sigmoid(α (s_j - s_i))`.
pub fn loss_approxndcg(scores: &[f64], labels: &[f64], alpha: f64) -> LossOutput {
    check_lengths(scores, labels);
    let m = scores.len();
    let idcg = dcg_at_k(&ideal_labels(labels), m);
    if idcg <= 0.0 {
        return LossOutput {
            loss: 0.0,
            grad: vec![0.0; m],
        };
    }
    // a[i][j] = d sigmoid(α(s_j - s_i)) / d s_j, symmetric in i, j
    let mut approx_rank = vec![1.0; m];
    let mut a = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            if i != j {
                let sg = sigmoid(alpha * (scores[j] - scores[i]));
                approx_rank[i] += sg;
                a[i * m + j] = alpha * sg * (1.0 - sg);
            }
        }
    }
    let ln2 = std::f64::consts::LN_2;
    let mut value = 0.0;
    let mut d = vec![0.0; m];
    for i in 0..m {
        let g = gain(labels[i]);
        let l = (1.0 + approx_rank[i]).ln();
        value += g * ln2 / l;
        d[i] = -g * ln2 / ((1.0 + approx_rank[i]) * l * l) / idcg;
    }
    let grad = (0..m)
        .map(|k| (0..m).filter(|&j| j != k).map(|j| a[k * m + j] * (d[k] - d[j])).sum())
        .collect();
    LossOutput {
        loss: -value / idcg,
        grad,
    }
}

/// ListNet on Gumbel-perturbed scores `s + g` with fixed noise `g`.
pub fn loss_stlistnet_with_noise(scores: &[f64], labels: &[f64], noise: &[f64], target: ListNetTarget) -> LossOutput {
    check_lengths(scores, noise);
    let perturbed: Vec<f64> = scores.iter().zip(noise).map(|(s, g)| s + g).collect();
    loss_listnet_top1(&perturbed, labels, target)
}

/// Stochastic ListNet: one Gumbel(0, 1) draw per document from `seed`.
pub fn loss_stlistnet(scores: &[f64], labels: &[f64], seed_value: u64) -> LossOutput {
    let mut rng = seed::rng(seed_value, "stlistnet", &[]);
    let noise = gumbel_noise(&mut rng, scores.len());
    loss_stlistnet_with_noise(scores, labels, &noise, ListNetTarget::Labels)
}

/// Dispatches on `spec.kind`. `step_seed` keys the randomness of the
/// stochastic losses (ST-ListNet noise, ListMLE tie shuffling).
pub fn compute_loss(spec: &RankerSpec, scores: &[f64], labels: &[f64], step_seed: u64) -> LossOutput {
    match spec.kind {
        RankerKind::RankMSE => loss_rank_mse(scores, labels),
        RankerKind::RankNet => loss_ranknet(scores, labels, spec.sigma),
        RankerKind::LambdaRank => lambdarank_loss(scores, labels, spec.sigma),
        RankerKind::ListNet => loss_listnet_top1(scores, labels, spec.listnet_target),
        RankerKind::ListMLE => loss_listmle(scores, labels, spec.listmle_ties, step_seed),
        RankerKind::RankCosine => loss_rankcosine(scores, labels),
        RankerKind::ApproxNDCG => loss_approxndcg(scores, labels, spec.alpha),
        RankerKind::STListNet => {
            let mut rng = seed::rng(step_seed, "stlistnet", &[]);
            let noise = gumbel_noise(&mut rng, scores.len());
            loss_stlistnet_with_noise(scores, labels, &noise, spec.listnet_target)
        }
    }
}
