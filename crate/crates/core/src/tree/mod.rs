//! Dynamic stochastic tree sampling.

mod codec;
mod sampler;
mod schedule;

pub use codec::{decode_trajectory, encode_trajectory, write_tree_jsonl, TRAJECTORY_MAGIC};
pub use sampler::{
    analytic_eval_count, drift_coefficients, gaussian_logp_mean, noise_magnitude, ode_step, ode_terminal,
    replay_branches, replay_logp, replay_terminal, rollout_independent, rollout_tree, rollout_tree_from, sample_ode,
    sde_branch_step, transition_mean, BranchReplay, RolloutConfig, RolloutTree, SdeStep, Trajectory, DIM,
};
pub use schedule::{resolve_collisions, sample_xi, BranchSchedule, NoiseSchedule, MEAN_CLAMP};
