//! Neural learning-to-rank toolkit.
//!
//! The crate is organized around the per-query unit of ranking work, the
//! [`QueryGroup`](data::QueryGroup):
//!
//! - [`data`]: LETOR/LibSVM ingestion, query-level normalization, label
//!   binarization, random label masking and fold plans.
//! - [`nn`]: the feed-forward scoring network with hand-written backward
//!   pass, batch normalization and Adam.
//! - [`metrics`]: P@k, AP, nDCG@k and ERR@k.
//! - [`erm`]: empirical-risk ranking losses (pointwise, pairwise, listwise)
//!   and the per-query training loop.
//! - [`adversarial`]: Plackett-Luce generator/discriminator training with
//!   Gumbel-max ranking sampling and REINFORCE updates.
//! - [`harness`]: cross-validation, grid search and masking sweeps.
//! - [`config`]: the declarative JSON experiment configuration.

pub mod adversarial;
pub mod config;
pub mod data;
pub mod erm;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod seed;

pub use error::{Error, Result};
