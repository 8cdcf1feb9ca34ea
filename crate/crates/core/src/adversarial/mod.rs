//! Adversarial learning-to-rank with Plackett-Luce players.
//!
//! Both the generator and the discriminator are scoring networks that
//! induce a Plackett-Luce distribution over top-`k` rankings of a query's
//! documents. The generator proposes rankings by Gumbel-max sampling and is
//! updated by REINFORCE with reward `log D(π)`; the discriminator is trained
//! to assign high probability to ground-truth rankings and low probability
//! to generated ones. `k = 1` and `k = 2` give the pointwise and pairwise
//! variants with the same machinery.

mod plackett_luce;
mod train;

pub use plackett_luce::{
    gumbel_noise, gumbel_sample_ranking, pl_log_prob, pl_log_prob_and_grad, sample_ranking_from_scores,
    sample_true_ranking, RankingSample, SampleSource,
};
pub use train::{
    discriminator_loss, discriminator_step, generator_step, reinforce_score_gradient, train_adversarial, AdvEpochLog,
    AdversarialOutcome, AdversarialSpec, GeneratorStep, D_CLAMP,
};
