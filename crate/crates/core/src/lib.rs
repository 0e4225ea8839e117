//! Softmax trajectory balance post-training for a desk-scale rectified flow.
//!
//! The crate is organised bottom-up:
//!
//! - [`dist`]: exact probability primitives over finite groups (softmax,
//!   Boltzmann targets, KL / TV / entropy).
//! - [`reward`]: the 2-D Gaussian mixture environment and its reward field.
//! - [`flow`]: the MLP velocity field with manual backprop, Adam, rectified
//!   flow pretraining and checkpoints.
//! - [`tree`]: noise and branch schedules, SDE branch steps and the
//!   prefix-sharing rollout tree.
//! - [`objectives`]: Softmax-TB advantages, centred importance ratios, the
//!   clipped TMPO loss and the GRPO baseline.
//! - [`metrics`]: LGMD, cosine diversity and mode occupancy.
//! - [`runner`]: run configuration, training loops, CSV/SVG/JSON outputs.
//! - [`checks`]: the fast invariant suite behind `tmpo check`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod dist;
pub mod flow;
pub mod metrics;
pub mod objectives;
pub mod reward;
pub mod runner;
pub mod tree;

mod error;

pub use error::{Error, Result};

/// A point in the 2-D sample space.
pub type Vec2 = [f64; 2];
