//! Configuration, training loops and file outputs behind the `tmpo` CLI.

mod ablation;
mod config;
mod output;
mod train;

pub use ablation::{
    run_ablation_from, run_ablation_suite, AblationRow, AblationTable, Variant, ABLATION_HEADER, ABLATION_RUNS_HEADER,
};
pub use config::{Algorithm, RunConfig, DEFAULT_GRPO_KL_REF};
pub use output::{scatter_svg, write_samples_csv};
pub use train::{
    eval_log_header, eval_samples, evaluate, initial_params, rollout_group, run_posttrain, run_pretrain, EvalRecord,
    Group, IterationLog, PosttrainRun, PretrainRun, Summary, CHECKPOINT_FILE, EVAL_LOG_FIXED, TRAIN_LOG_HEADER,
};
