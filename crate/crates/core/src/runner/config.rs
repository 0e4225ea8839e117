//! Flat `key = value` run configuration (TOML syntax, top-level keys only).
//!
//! Every key is optional; absent keys take the defaults below. Mixture
//! components are given as `components = [[mean_x, mean_y, variance,
//! weight, reward], ...]` with isotropic covariances.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::flow::{PretrainConfig, DEFAULT_HIDDEN};
use crate::objectives::ClipConfig;
use crate::reward::{Component, MixtureSpec};
use crate::tree::{BranchSchedule, NoiseSchedule};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Tmpo,
    Grpo,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Tmpo => "tmpo",
            Algorithm::Grpo => "grpo",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tmpo" => Ok(Algorithm::Tmpo),
            "grpo" => Ok(Algorithm::Grpo),
            other => Err(Error::Config(format!("unknown algorithm {other:?} (tmpo | grpo)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,

    pub components: Vec<[f64; 5]>,
    pub background_reward: f64,

    pub hidden: usize,
    pub pretrain_steps: usize,
    pub pretrain_batch: usize,
    pub pretrain_lr: f64,
    /// Existing checkpoint to post-train from; pretrains when absent.
    pub checkpoint: Option<PathBuf>,

    pub algorithm: Algorithm,
    pub iterations: usize,
    pub lr: f64,
    /// Inner clipped updates per rollout batch.
    pub inner_updates: usize,
    /// Trees (independent roots) per iteration.
    pub trees: usize,
    pub train_steps: usize,
    pub eval_steps: usize,
    pub branching: usize,
    pub eta: f64,
    pub epsilon: f64,
    pub beta_start: f64,
    pub beta_end: f64,
    pub warmup_steps: usize,
    pub kappa: f64,
    pub early: Vec<usize>,
    pub late: Vec<usize>,
    /// Branch at the late positions throughout, without Beta jitter.
    pub fixed_branch: bool,
    /// Replace each tree by `B^T` independent single-path rollouts.
    pub no_tree: bool,
    /// KL-to-reference coefficient; `None` picks 0 for TMPO and 0.03 for GRPO.
    pub kl_ref: Option<f64>,

    pub eval_interval: usize,
    pub eval_samples: usize,
    pub eval_seed: u64,
    /// Evaluate an exponential moving average of the parameters.
    pub ema: bool,
    pub ema_decay: f64,
    pub ema_interval: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let spec = MixtureSpec::toy_default();
        Self {
            seed: 0,
            components: spec
                .components()
                .iter()
                .map(|c| [c.mean[0], c.mean[1], c.cov[0][0], c.weight, c.reward_value])
                .collect(),
            background_reward: spec.background_reward(),
            hidden: DEFAULT_HIDDEN,
            pretrain_steps: 4000,
            pretrain_batch: 256,
            pretrain_lr: 2e-3,
            checkpoint: None,
            algorithm: Algorithm::Tmpo,
            iterations: 300,
            lr: 5e-4,
            inner_updates: 2,
            trees: 8,
            train_steps: 6,
            eval_steps: 28,
            branching: 3,
            eta: 0.7,
            epsilon: 0.2,
            beta_start: 0.8,
            beta_end: 2.0,
            warmup_steps: 150,
            kappa: 6.0,
            early: vec![1, 2, 3],
            late: vec![1, 3, 5],
            fixed_branch: false,
            no_tree: false,
            kl_ref: None,
            eval_interval: 50,
            eval_samples: 1000,
            eval_seed: 7,
            ema: false,
            ema_decay: 0.9,
            ema_interval: 8,
        }
    }
}

pub const DEFAULT_GRPO_KL_REF: f64 = 0.03;

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("config always serialises")
    }

    pub fn mixture(&self) -> Result<MixtureSpec> {
        let components = self
            .components
            .iter()
            .map(|&[x, y, var, weight, reward]| {
                if !(var > 0.0) {
                    return Err(Error::Config(format!("component variance {var} must be > 0")));
                }
                Ok(Component::isotropic([x, y], var, weight, reward))
            })
            .collect::<Result<Vec<_>>>()?;
        MixtureSpec::new(components, self.background_reward).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn pretrain_config(&self) -> PretrainConfig {
        PretrainConfig {
            hidden: self.hidden,
            steps: self.pretrain_steps,
            batch: self.pretrain_batch,
            lr: self.pretrain_lr,
            seed: self.seed,
        }
    }

    pub fn clip_config(&self) -> ClipConfig {
        ClipConfig {
            epsilon: self.epsilon,
            beta_start: self.beta_start,
            beta_end: self.beta_end,
            warmup_steps: self.warmup_steps,
        }
    }

    pub fn branch_schedule(&self) -> BranchSchedule {
        BranchSchedule {
            early: self.early.clone(),
            late: self.late.clone(),
            kappa: self.kappa,
            s_min: 1,
            s_max: self.train_steps - 1,
            progress: 0.0,
            branching_factor: self.branching,
        }
    }

    pub fn train_schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::linear(self.train_steps)
    }

    pub fn eval_schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::linear(self.eval_steps)
    }

    /// Leaves per group, `B^T`.
    pub fn group_size(&self) -> usize {
        self.branching.pow(self.early.len() as u32)
    }

    pub fn kl_ref_coef(&self) -> f64 {
        self.kl_ref.unwrap_or(match self.algorithm {
            Algorithm::Tmpo => 0.0,
            Algorithm::Grpo => DEFAULT_GRPO_KL_REF,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.mixture()?;
        if self.hidden == 0 {
            return bad("hidden must be >= 1".into());
        }
        if self.pretrain_steps == 0 || self.pretrain_batch == 0 || !(self.pretrain_lr > 0.0) {
            return bad("pretrain steps, batch and lr must be positive".into());
        }
        if self.iterations == 0 || self.inner_updates == 0 || self.trees == 0 || !(self.lr > 0.0) {
            return bad("iterations, inner_updates, trees and lr must be positive".into());
        }
        if self.train_steps < 2 || self.eval_steps == 0 {
            return bad("train_steps must be >= 2 and eval_steps >= 1".into());
        }
        if !(self.eta >= 0.0) || !self.eta.is_finite() {
            return bad(format!("eta {} must be >= 0", self.eta));
        }
        self.clip_config()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.branch_schedule()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.group_size() < 2 {
            return bad("a group needs at least 2 leaves".into());
        }
        if let Some(k) = self.kl_ref {
            if !(k >= 0.0) {
                return bad(format!("kl_ref {k} must be >= 0"));
            }
        }
        if self.eval_interval == 0 || self.eval_samples < 2 {
            return bad("eval_interval must be >= 1 and eval_samples >= 2".into());
        }
        if self.ema && !(self.ema_decay > 0.0 && self.ema_decay < 1.0 && self.ema_interval > 0) {
            return bad("ema needs decay in (0, 1) and interval >= 1".into());
        }
        Ok(())
    }
}
