use std::borrow::Cow;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;

use super::losses::{compute_loss, MaskedLabelPolicy, RankerSpec};
use crate::data::{Dataset, QueryGroup};
use crate::metrics::{EvalOptions, MetricKey, MetricReport};
use crate::nn::{AdamState, Mode, ScoringNet};
use crate::{seed, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub eval: EvalOptions,
    /// nDCG cutoff used for model selection on the validation split.
    pub selection_cutoff: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErmEpochLog {
    pub epoch: usize,
    pub loss_mean: f64,
    pub vali_ndcg: Option<f64>,
    /// Queries skipped this epoch (empty after exclusion, or a single
    /// document with batchnorm enabled).
    pub skipped: usize,
}

#[derive(Debug, Clone)]
pub struct ErmOutcome {
    pub logs: Vec<ErmEpochLog>,
    /// Epoch whose net is kept (0 is the untrained net).
    pub best_epoch: usize,
    pub best_vali: Option<f64>,
    pub best_net: ScoringNet,
}

/// The labels and rows an ERM loss sees for one training query.
fn training_view(group: &QueryGroup, policy: MaskedLabelPolicy) -> (Cow<'_, Array2<f64>>, Vec<f64>) {
    if !group.masked.iter().any(|&m| m) {
        return (Cow::Borrowed(&group.features), group.labels.clone());
    }
    match policy {
        MaskedLabelPolicy::Zero => {
            let labels = group
                .labels
                .iter()
                .zip(&group.masked)
                .map(|(&y, &m)| if m { 0.0 } else { y })
                .collect();
            (Cow::Borrowed(&group.features), labels)
        }
        MaskedLabelPolicy::Exclude => {
            let keep: Vec<usize> = (0..group.len()).filter(|&i| !group.masked[i]).collect();
            let labels = keep.iter().map(|&i| group.labels[i]).collect();
            (Cow::Owned(group.features.select(Axis(0), &keep)), labels)
        }
    }
}

/// Eval-mode metrics of `net` over every query of `data`.
pub fn evaluate(net: &ScoringNet, data: &Dataset, opts: &EvalOptions) -> Result<MetricReport> {
    let mut report = MetricReport::default();
    for g in &data.groups {
        let scores = net.predict(g.features.view())?;
        report.add_query(&g.labels, &scores, opts);
    }
    Ok(report)
}

/// Trains `net` with one optimizer step per training query per epoch, in a
/// per-epoch shuffled query order. When `vali` is given, the net with the
/// best validation nDCG@`selection_cutoff` (earliest on ties) is kept.
pub fn train_erm(
    spec: &RankerSpec,
    net: &mut ScoringNet,
    adam: &mut AdamState,
    train: &Dataset,
    vali: Option<&Dataset>,
    opts: &TrainOptions,
) -> Result<ErmOutcome> {
    spec.validate()?;
    if net.input_dim() != train.feature_dim {
        return Err(Error::Dimension(format!(
            "net input {} vs data dimension {}",
            net.input_dim(),
            train.feature_dim
        )));
    }
    let key = MetricKey::ndcg(opts.selection_cutoff);
    let vali_opts = EvalOptions {
        cutoffs: vec![opts.selection_cutoff],
        ..opts.eval.clone()
    };
    let vali_score = |net: &ScoringNet| -> Result<Option<f64>> {
        match vali {
            Some(v) => Ok(evaluate(net, v, &vali_opts)?.mean(key)),
            None => Ok(None),
        }
    };

    let mut best_epoch = 0;
    let mut best_vali = if opts.epochs == 0 { vali_score(net)? } else { None };
    let mut best_net = net.clone();
    let mut logs = Vec::with_capacity(opts.epochs);

    for epoch in 1..=opts.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut seed::rng(spec.seed, "erm-epoch", &[epoch as u64]));
        net.set_mode(Mode::Train);

        let mut loss_sum = 0.0;
        let mut steps = 0usize;
        let mut skipped = 0usize;
        for qi in order {
            let group = &train.groups[qi];
            let (x, labels) = training_view(group, spec.masked_label_policy);
            if labels.is_empty() || (net.has_batchnorm() && labels.len() < 2) {
                skipped += 1;
                continue;
            }
            let (scores, cache) = net.forward(x.view())?;
            let step_seed = seed::derive(spec.seed, "erm-step", &[epoch as u64, qi as u64]);
            let out = compute_loss(spec, &scores, &labels, step_seed);
            if !out.loss.is_finite() || out.grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence(format!(
                    "{} loss non-finite at epoch {epoch}, query {}",
                    spec.kind, group.qid
                )));
            }
            let grads = net.backward(&cache, &out.grad)?;
            net.apply_gradients(adam, &grads)
                .map_err(|e| Error::Divergence(format!("epoch {epoch}, query {}: {e}", group.qid)))?;
            loss_sum += out.loss;
            steps += 1;
        }

        net.set_mode(Mode::Eval);
        let v = vali_score(net)?;
        if let Some(score) = v {
            if best_vali.is_none_or(|b| score > b) {
                best_vali = Some(score);
                best_epoch = epoch;
                best_net = net.clone();
            }
        }
        logs.push(ErmEpochLog {
            epoch,
            loss_mean: if steps > 0 { loss_sum / steps as f64 } else { 0.0 },
            vali_ndcg: v,
            skipped,
        });
    }

    if vali.is_none() {
        best_epoch = opts.epochs;
        best_net = net.clone();
    }
    best_net.set_mode(Mode::Eval);
    Ok(ErmOutcome {
        logs,
        best_epoch,
        best_vali,
        best_net,
    })
}
