//! The policy backbone: MLP velocity field, optimizer, rectified flow
//! pretraining and portable checkpoints.

mod adam;
mod checkpoint;
mod mlp;
mod pretrain;

pub use adam::Adam;
pub use checkpoint::{decode_params, encode_params, load_params, save_params, CHECKPOINT_MAGIC};
pub(crate) use mlp::velocity_unchecked;
pub use mlp::{
    param_count, velocity, velocity_backward, GradBuffer, PolicyParams, DEFAULT_HIDDEN, INPUT_DIM, OUTPUT_DIM,
};
pub use pretrain::{flow_matching_loss, pretrain_rectified_flow, PretrainConfig, PretrainOutput};
