//! WebAssembly bindings for the static page in `www/`.
//!
//! Every export returns a JSON string. The `*_json` functions hold the
//! logic and are plain Rust, so they also run (and are tested) natively.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use tmpo_core::dist::{forward_kl, total_variation, RewardVec};
use tmpo_core::flow::{pretrain_rectified_flow, PolicyParams, PretrainConfig};
use tmpo_core::objectives::softmax_tb_advantage;
use tmpo_core::reward::{group_zscore, MixtureSpec};
use tmpo_core::tree::{rollout_tree, BranchSchedule, NoiseSchedule, RolloutConfig};
use tmpo_core::Error;

#[derive(Serialize)]
pub struct AdvantageView {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub softmax_tb: Vec<f64>,
    pub zscore: Vec<f64>,
    pub forward_kl: f64,
    pub reverse_kl: f64,
    pub tv: f64,
}

pub fn advantages_json(rewards: &[f64], logps: &[f64], beta: f64) -> Result<String, Error> {
    if rewards.len() != logps.len() {
        return Err(Error::LengthMismatch {
            expected: rewards.len(),
            got: logps.len(),
        });
    }
    let tb = softmax_tb_advantage(logps, &RewardVec::new(rewards.to_vec(), beta)?)?;
    let view = AdvantageView {
        zscore: group_zscore(rewards)?.zscored,
        forward_kl: forward_kl(&tb.q, &tb.p)?.value(),
        reverse_kl: forward_kl(&tb.p, &tb.q)?.value(),
        tv: total_variation(&tb.q, &tb.p)?,
        q: tb.q.probs().to_vec(),
        p: tb.p.probs().to_vec(),
        softmax_tb: tb.advantages,
    };
    Ok(serde_json::to_string(&view).expect("plain numbers serialize"))
}

#[derive(Serialize)]
pub struct ScheduleView {
    pub steps: Vec<usize>,
    /// `counts[i][s - s_min]`: how often branch `i` landed on step `s`.
    pub counts: Vec<Vec<usize>>,
    pub curriculum: Vec<f64>,
}

/// Histogram of Beta-perturbed branch positions for the default six-step
/// curriculum at training progress `progress`.
pub fn schedule_json(progress: f64, kappa: f64, draws: usize, seed: u64) -> Result<String, Error> {
    let mut sched = BranchSchedule::default_for(6);
    sched.progress = progress;
    sched.kappa = kappa;
    sched.validate()?;
    let width = sched.s_max - sched.s_min + 1;
    let mut counts = vec![vec![0usize; width]; sched.branch_count()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..draws {
        for (i, s) in sched.sample_branch_steps(&mut rng)?.into_iter().enumerate() {
            counts[i][s - sched.s_min] += 1;
        }
    }
    let view = ScheduleView {
        steps: (sched.s_min..=sched.s_max).collect(),
        counts,
        curriculum: sched.curriculum_means(),
    };
    Ok(serde_json::to_string(&view).expect("plain numbers serialize"))
}

#[derive(Serialize)]
pub struct TreeView {
    /// One polyline per leaf: the states at every noise level.
    pub paths: Vec<Vec<[f64; 2]>>,
    pub rewards: Vec<f64>,
    pub velocity_evals: usize,
    pub independent_evals: usize,
    pub modes: Vec<[f64; 2]>,
}

/// A small velocity field pretrained once on the default mixture.
#[wasm_bindgen]
pub struct Model {
    params: PolicyParams,
    spec: MixtureSpec,
}

#[wasm_bindgen]
impl Model {
    /// Pretrains a narrow network; a second or so in the browser.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u64) -> Result<Model, JsError> {
        Model::train(seed, 800).map_err(to_js)
    }

    /// Grows one tree with the given branch steps (in `1..6`) and noise
    /// scale and returns the JSON of a [`TreeView`].
    pub fn tree(&self, steps: &[usize], branching: usize, eta: f64, seed: u64) -> Result<String, JsError> {
        self.tree_json(steps, branching, eta, seed).map_err(to_js)
    }
}

impl Model {
    pub fn train(seed: u64, steps: usize) -> Result<Model, Error> {
        let spec = MixtureSpec::toy_default();
        let cfg = PretrainConfig {
            hidden: 24,
            steps,
            batch: 64,
            lr: 4e-3,
            seed,
        };
        let params = pretrain_rectified_flow(&spec, &cfg)?.params;
        Ok(Model { params, spec })
    }

    pub fn tree_json(&self, steps: &[usize], branching: usize, eta: f64, seed: u64) -> Result<String, Error> {
        let sched = NoiseSchedule::linear(6)?;
        let cfg = RolloutConfig::new(steps.to_vec(), branching, eta);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = rollout_tree(&self.params, &sched, &cfg, &mut rng)?;
        let rewards = tree
            .leaves
            .iter()
            .map(|l| self.spec.reward(l.terminal))
            .collect::<Result<Vec<_>, _>>()?;
        let view = TreeView {
            paths: tree.leaves.iter().map(|l| l.states.clone()).collect(),
            rewards,
            velocity_evals: tree.velocity_evals,
            independent_evals: tree.leaves.len() * sched.steps(),
            modes: self.spec.components().iter().map(|c| c.mean).collect(),
        };
        Ok(serde_json::to_string(&view).expect("plain numbers serialize"))
    }
}

fn to_js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Softmax-TB and z-score advantages plus the divergences between the
/// group's target and policy distributions.
#[wasm_bindgen]
pub fn advantages(rewards: &[f64], logps: &[f64], beta: f64) -> Result<String, JsError> {
    advantages_json(rewards, logps, beta).map_err(to_js)
}

#[wasm_bindgen]
pub fn schedule(progress: f64, kappa: f64, draws: usize, seed: u64) -> Result<String, JsError> {
    schedule_json(progress, kappa, draws, seed).map_err(to_js)
}
