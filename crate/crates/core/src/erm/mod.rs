//! Empirical risk minimization: surrogate ranking losses with exact score
//! gradients, and the per-query training loop.

mod losses;
mod train;

pub use losses::{
    compute_loss, lambda_gradients, lambdarank_loss, loss_approxndcg, loss_listmle, loss_listnet_top1, loss_rank_mse,
    loss_rankcosine, loss_ranknet, loss_stlistnet, loss_stlistnet_with_noise, ndcg_swap_delta, ListNetTarget,
    LossOutput, MaskedLabelPolicy, RankerKind, RankerSpec, TiePolicy,
};
pub use train::{evaluate, train_erm, ErmEpochLog, ErmOutcome, TrainOptions};
