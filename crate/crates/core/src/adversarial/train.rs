use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::plackett_luce::{
    gumbel_sample_ranking, pl_log_prob_and_grad, sample_ranking_from_scores, sample_true_ranking, RankingSample,
};
use crate::data::{Dataset, QueryGroup};
use crate::erm::evaluate;
use crate::metrics::{EvalOptions, MetricKey, MetricReport};
use crate::nn::{AdamState, Mode, ScoringNet};
use crate::{seed, Error, Result};

/// Discriminator probabilities are capped at `1 - D_CLAMP` so that
/// `log(1 - D)` stays finite. `log D` itself is computed in log space and
/// is finite for any finite scores, so it is not floored: the probability
/// of one particular top-10 ranking of 30 documents is around 1e-14 at
/// initialization, and a floor at `D_CLAMP` would zero every gradient.
pub const D_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialSpec {
    /// Ranking size: 1 pointwise, 2 pairwise, larger listwise.
    pub k: usize,
    pub temperature: f64,
    /// Generator steps per query per round.
    pub g_steps: usize,
    /// Discriminator steps per query per round.
    pub d_steps: usize,
    pub samples_per_query: usize,
    pub seed: u64,
}

impl Default for AdversarialSpec {
    fn default() -> Self {
        AdversarialSpec {
            k: 10,
            temperature: 0.5,
            g_steps: 1,
            d_steps: 1,
            samples_per_query: 5,
            seed: 0,
        }
    }
}

impl AdversarialSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("ranking size k must be >= 1"));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::invalid(format!(
                "temperature must be > 0, got {}",
                self.temperature
            )));
        }
        if self.samples_per_query == 0 {
            return Err(Error::invalid("samples_per_query must be >= 1"));
        }
        Ok(())
    }
}

/// `(log D, clamped)` with `D` capped at `1 - D_CLAMP`.
fn clamp_log_prob(log_p: f64) -> (f64, bool) {
    let cap = (-D_CLAMP).ln_1p();
    if log_p > cap {
        (cap, true)
    } else {
        (log_p, false)
    }
}

/// `-[log D(true) + log(1 - D(gen))]` on discriminator scores, with its
/// gradient. A capped probability contributes no gradient.
pub fn discriminator_loss(
    scores: &[f64],
    true_docs: &[usize],
    gen_docs: &[usize],
    temperature: f64,
) -> (f64, Vec<f64>) {
    let (lt, gt) = pl_log_prob_and_grad(scores, true_docs, temperature);
    let (lg, gg) = pl_log_prob_and_grad(scores, gen_docs, temperature);
    let (lt, t_clamped) = clamp_log_prob(lt);
    let (lg, g_clamped) = clamp_log_prob(lg);
    let dg = lg.exp();
    let loss = -(lt + (-dg).ln_1p());
    let mut grad = vec![0.0; scores.len()];
    if !t_clamped {
        for (g, x) in grad.iter_mut().zip(&gt) {
            *g -= x;
        }
    }
    if !g_clamped {
        let w = dg / (1.0 - dg);
        for (g, x) in grad.iter_mut().zip(&gg) {
            *g += w * x;
        }
    }
    (loss, grad)
}

/// One optimizer step of the discriminator on a (true, generated) pair
/// from the same query. Returns the loss before the step.
pub fn discriminator_step(
    disc: &mut ScoringNet,
    adam: &mut AdamState,
    features: ArrayView2<f64>,
    true_sample: &RankingSample,
    gen_sample: &RankingSample,
    temperature: f64,
) -> Result<f64> {
    if true_sample.qid != gen_sample.qid || true_sample.docs.len() != gen_sample.docs.len() {
        return Err(Error::invalid(
            "discriminator samples must share query and ranking size",
        ));
    }
    disc.set_mode(Mode::Train);
    let (scores, cache) = disc.forward(features)?;
    let (loss, grad) = discriminator_loss(&scores, &true_sample.docs, &gen_sample.docs, temperature);
    if !loss.is_finite() {
        return Err(Error::Divergence(format!(
            "discriminator loss non-finite on query {}",
            true_sample.qid
        )));
    }
    let grads = disc.backward(&cache, &grad)?;
    disc.apply_gradients(adam, &grads)?;
    Ok(loss)
}

/// Score-function estimate of `∇_s E_{π ~ PL(s/T)}[R(π)]` from sampled
/// rankings with the mean reward as baseline:
/// `1/(S-1) Σ (R_i - mean R) ∇_s log P(π_i)`. The `1/(S-1)` factor makes
/// the estimate unbiased (it equals the leave-one-out baseline form).
/// Fewer than two samples give a zero estimate.
pub fn reinforce_score_gradient(
    scores: &[f64],
    rankings: &[Vec<usize>],
    rewards: &[f64],
    temperature: f64,
) -> Vec<f64> {
    let s = rankings.len();
    let mut grad = vec![0.0; scores.len()];
    if s < 2 {
        return grad;
    }
    let baseline = rewards.iter().sum::<f64>() / s as f64;
    for (ranking, &r) in rankings.iter().zip(rewards) {
        let adv = r - baseline;
        if adv == 0.0 {
            continue;
        }
        let (_, g) = pl_log_prob_and_grad(scores, ranking, temperature);
        for (acc, x) in grad.iter_mut().zip(&g) {
            *acc += adv * x / (s - 1) as f64;
        }
    }
    grad
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorStep {
    pub reward_mean: f64,
    /// `-1/(S-1) Σ (R_i - b) log P(π_i)`, whose gradient is the update.
    pub surrogate: f64,
    /// Whether an optimizer step was taken (skipped when the estimate is 0).
    pub updated: bool,
}

/// One REINFORCE step of the generator on one query: draw
/// `samples_per_query` top-`k` rankings, reward each with
/// `log D(π)` (capped as in [`discriminator_loss`]) under the current
/// discriminator, and ascend the estimate.
/// The candidate pool is every document of the query, masked or not.
#[allow(clippy::too_many_arguments)]
pub fn generator_step<R: Rng>(
    gen: &mut ScoringNet,
    adam: &mut AdamState,
    disc: &ScoringNet,
    group: &QueryGroup,
    k: usize,
    samples_per_query: usize,
    temperature: f64,
    rng: &mut R,
) -> Result<GeneratorStep> {
    if samples_per_query < 1 {
        return Err(Error::invalid("samples_per_query must be >= 1"));
    }
    gen.set_mode(Mode::Train);
    let (scores, cache) = gen.forward(group.features.view())?;
    let rankings = (0..samples_per_query)
        .map(|_| sample_ranking_from_scores(&scores, k, temperature, rng))
        .collect::<Result<Vec<_>>>()?;
    let d_scores = disc.predict(group.features.view())?;
    let rewards: Vec<f64> = rankings
        .iter()
        .map(|r| clamp_log_prob(pl_log_prob_and_grad(&d_scores, r, temperature).0).0)
        .collect();
    let baseline = rewards.iter().sum::<f64>() / rewards.len() as f64;
    let surrogate = if rankings.len() > 1 {
        -rankings
            .iter()
            .zip(&rewards)
            .map(|(r, &rw)| (rw - baseline) * pl_log_prob_and_grad(&scores, r, temperature).0)
            .sum::<f64>()
            / (rankings.len() - 1) as f64
    } else {
        0.0
    };
    let ascent = reinforce_score_gradient(&scores, &rankings, &rewards, temperature);
    let upstream: Vec<f64> = ascent.iter().map(|g| -g).collect();
    let updated = upstream.iter().any(|&g| g != 0.0);
    if updated {
        let grads = gen.backward(&cache, &upstream)?;
        gen.apply_gradients(adam, &grads)?;
    }
    Ok(GeneratorStep {
        reward_mean: baseline,
        surrogate,
        updated,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdvEpochLog {
    pub epoch: usize,
    pub g_reward_mean: f64,
    pub d_loss_mean: f64,
    pub g_test_ndcg1: Option<f64>,
    pub d_test_ndcg1: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct AdversarialOutcome {
    pub logs: Vec<AdvEpochLog>,
    /// Test metrics of the final generator and discriminator.
    pub g_report: Option<MetricReport>,
    pub d_report: Option<MetricReport>,
    /// Query visits skipped for having fewer than `k` unmasked documents.
    pub skipped: usize,
}

/// Alternating training. Each epoch visits the training queries in a
/// shuffled order; per query it runs `g_steps` generator steps followed by
/// `d_steps` discriminator steps, each discriminator step pairing a fresh
/// ground-truth ranking with a fresh generator sample. Validation data is
/// never consulted; `test` (if given) is scored with raw net scores after
/// every epoch for the log and once more for the final reports.
#[allow(clippy::too_many_arguments)]
pub fn train_adversarial(
    spec: &AdversarialSpec,
    gen: &mut ScoringNet,
    disc: &mut ScoringNet,
    gen_adam: &mut AdamState,
    disc_adam: &mut AdamState,
    train: &Dataset,
    test: Option<&Dataset>,
    epochs: usize,
    eval: &EvalOptions,
) -> Result<AdversarialOutcome> {
    spec.validate()?;
    for (name, net) in [("generator", &*gen), ("discriminator", &*disc)] {
        if net.input_dim() != train.feature_dim {
            return Err(Error::Dimension(format!(
                "{name} input {} vs data dimension {}",
                net.input_dim(),
                train.feature_dim
            )));
        }
    }
    let top1 = MetricKey::ndcg(1);
    let mut logs = Vec::with_capacity(epochs);
    let mut skipped = 0;

    for epoch in 1..=epochs {
        let e = epoch as u64;
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut seed::rng(spec.seed, "adv-epoch", &[e]));
        let (mut reward_sum, mut g_count) = (0.0, 0usize);
        let (mut d_sum, mut d_count) = (0.0, 0usize);

        for qi in order {
            let group = &train.groups[qi];
            if group.unmasked_count() < spec.k {
                skipped += 1;
                continue;
            }
            let q = qi as u64;
            for s in 0..spec.g_steps {
                let mut rng = seed::rng(spec.seed, "gen-step", &[e, q, s as u64]);
                let step = generator_step(
                    gen,
                    gen_adam,
                    disc,
                    group,
                    spec.k,
                    spec.samples_per_query,
                    spec.temperature,
                    &mut rng,
                )
                .map_err(|err| Error::Divergence(format!("epoch {epoch}, query {}: {err}", group.qid)))?;
                reward_sum += step.reward_mean;
                g_count += 1;
            }
            for s in 0..spec.d_steps {
                let idx = [e, q, s as u64];
                let truth = sample_true_ranking(group, spec.k, seed::derive(spec.seed, "true", &idx))
                    .expect("unmasked count checked above");
                let mut rng = seed::rng(spec.seed, "disc-sample", &idx);
                gen.set_mode(Mode::Eval);
                let fake = gumbel_sample_ranking(
                    gen,
                    &group.qid,
                    group.features.view(),
                    spec.k,
                    spec.temperature,
                    &mut rng,
                )?;
                let loss = discriminator_step(disc, disc_adam, group.features.view(), &truth, &fake, spec.temperature)
                    .map_err(|err| Error::Divergence(format!("epoch {epoch}, query {}: {err}", group.qid)))?;
                d_sum += loss;
                d_count += 1;
            }
        }

        gen.set_mode(Mode::Eval);
        disc.set_mode(Mode::Eval);
        let (g_test, d_test) = match test {
            Some(t) => {
                let top1_opts = EvalOptions {
                    cutoffs: vec![1],
                    ..eval.clone()
                };
                (
                    evaluate(gen, t, &top1_opts)?.mean(top1),
                    evaluate(disc, t, &top1_opts)?.mean(top1),
                )
            }
            None => (None, None),
        };
        logs.push(AdvEpochLog {
            epoch,
            g_reward_mean: if g_count > 0 { reward_sum / g_count as f64 } else { 0.0 },
            d_loss_mean: if d_count > 0 { d_sum / d_count as f64 } else { 0.0 },
            g_test_ndcg1: g_test,
            d_test_ndcg1: d_test,
        });
    }

    gen.set_mode(Mode::Eval);
    disc.set_mode(Mode::Eval);
    let (g_report, d_report) = match test {
        Some(t) => (Some(evaluate(gen, t, eval)?), Some(evaluate(disc, t, eval)?)),
        None => (None, None),
    };
    Ok(AdversarialOutcome {
        logs,
        g_report,
        d_report,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, AdamConfig, NetConfig};
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn discriminator_loss_limits() {
        // D(true) -> 1 and D(gen) -> 0
        let (loss, _) = discriminator_loss(&[40.0, -40.0], &[0], &[1], 1.0);
        assert!(loss < 1e-6);
        // m = 2, k = 1, equal scores: both probabilities are 1/2
        let (loss, _) = discriminator_loss(&[0.0, 0.0], &[0], &[1], 1.0);
        assert_abs_diff_eq!(loss, 2.0 * std::f64::consts::LN_2, epsilon = 1e-12);
        assert_abs_diff_eq!(loss, 1.3863, epsilon = 1e-4);
        for scores in [[1e6, -1e6, 0.0], [-1e6, 1e6, 0.0]] {
            let (loss, grad) = discriminator_loss(&scores, &[1], &[0], 0.5);
            assert!(loss.is_finite() && grad.iter().all(|g| g.is_finite()));
        }
        // a vanishing D(true) still yields a gradient toward the true ranking
        let (_, grad) = discriminator_loss(
            &[0.0; 30],
            &(0..10).collect::<Vec<_>>(),
            &(10..20).collect::<Vec<_>>(),
            0.5,
        );
        assert!(grad[0] < 0.0 && grad[25] > 0.0);
    }

    #[test]
    fn reinforce_degenerate_cases() {
        let s = [0.1, 0.5, -0.2];
        assert!(reinforce_score_gradient(&s, &[vec![0, 1]], &[-0.3], 1.0)
            .iter()
            .all(|&g| g == 0.0));
        assert!(
            reinforce_score_gradient(&s, &[vec![0, 1], vec![2, 1], vec![1, 0]], &[-0.3; 3], 1.0)
                .iter()
                .all(|&g| g == 0.0)
        );
    }

    fn two_doc_query() -> QueryGroup {
        let x = Array2::from_shape_vec((2, 2), vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        QueryGroup::new("q", x, vec![1.0, 0.0]).unwrap()
    }

    fn small_net(seed: u64) -> ScoringNet {
        ScoringNet::new(&NetConfig {
            input_dim: 2,
            layers: 2,
            hidden: 4,
            activation: Activation::ReLU,
            batchnorm: false,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn single_sample_step_leaves_generator_unchanged() {
        let g = two_doc_query();
        let mut gen = small_net(1);
        let disc = small_net(2);
        let before = gen.flat_params();
        let mut adam = AdamState::new(AdamConfig::default(), &gen.param_shapes());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let step = generator_step(&mut gen, &mut adam, &disc, &g, 1, 1, 0.5, &mut rng).unwrap();
        assert!(!step.updated);
        assert_eq!(gen.flat_params(), before);
    }

    #[test]
    fn generator_learns_discriminator_preference() {
        // Fixed discriminator that strongly prefers document 0 first; the
        // generator's probability of putting document 0 first should rise.
        let g = two_doc_query();
        let mut disc = ScoringNet::new(&NetConfig {
            input_dim: 2,
            layers: 1,
            hidden: 0,
            activation: Activation::ReLU,
            batchnorm: false,
            seed: 0,
        })
        .unwrap();
        disc.weights_mut()[0] = ndarray::array![[3.0], [-3.0]];
        let p_first = |net: &ScoringNet| {
            let s = net.predict(g.features.view()).unwrap();
            pl_log_prob_and_grad(&s, &[0], 0.5).0.exp()
        };
        let mut increases = 0;
        for seed in 0..20 {
            let mut gen = small_net(100 + seed);
            let mut adam = AdamState::new(
                AdamConfig {
                    lr: 0.01,
                    ..AdamConfig::default()
                },
                &gen.param_shapes(),
            );
            let start = p_first(&gen);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..30 {
                generator_step(&mut gen, &mut adam, &disc, &g, 1, 5, 0.5, &mut rng).unwrap();
            }
            if p_first(&gen) > start {
                increases += 1;
            }
        }
        assert!(increases >= 18, "P(doc 0 first) rose in only {increases}/20 runs");
    }

    #[test]
    fn zero_epochs_change_nothing() {
        let data = Dataset::new(vec![two_doc_query()], "mem").unwrap();
        let mut gen = small_net(1);
        let mut disc = small_net(2);
        let (g0, d0) = (gen.clone(), disc.clone());
        let mut ga = AdamState::new(AdamConfig::default(), &gen.param_shapes());
        let mut da = AdamState::new(AdamConfig::default(), &disc.param_shapes());
        let spec = AdversarialSpec {
            k: 1,
            ..AdversarialSpec::default()
        };
        let out = train_adversarial(
            &spec,
            &mut gen,
            &mut disc,
            &mut ga,
            &mut da,
            &data,
            None,
            0,
            &EvalOptions::new(vec![1], 4.0),
        )
        .unwrap();
        assert!(out.logs.is_empty());
        assert_eq!(gen.flat_params(), g0.flat_params());
        assert_eq!(disc.flat_params(), d0.flat_params());
    }
}
