//! The feed-forward scoring network and its training machinery.
//!
//! An `N`-layer network has `N` weight matrices: `d -> h -> ... -> h -> 1`.
//! Hidden layers compute `affine -> [batchnorm] -> activation`; the output
//! layer is affine only, so scores range over all reals.

mod activation;
mod adam;
mod batchnorm;
mod checkpoint;
mod net;

pub use activation::{apply_activation, Activation, RRELU_EVAL_SLOPE, RRELU_LOWER, RRELU_UPPER};
pub use adam::{AdamConfig, AdamState};
pub use batchnorm::{BatchNorm, BatchNormCache};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use net::{ForwardCache, Gradients, Mode, NetConfig, ScoringNet};
