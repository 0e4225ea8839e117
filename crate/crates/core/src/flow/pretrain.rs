//! Conditional flow matching on the linear interpolant
//! `x_t = (1 - t) x0 + t x1`, regressing `v(x_t, t)` onto `x1 - x0`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{velocity_backward, velocity_unchecked, Adam, GradBuffer, PolicyParams};
use crate::reward::MixtureSpec;
use crate::{Error, Result, Vec2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub hidden: usize,
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            hidden: super::DEFAULT_HIDDEN,
            steps: 4000,
            batch: 256,
            lr: 2e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PretrainOutput {
    pub params: PolicyParams,
    /// Mini-batch loss at every step.
    pub losses: Vec<f64>,
    /// Loss on a fixed evaluation batch before and after training.
    pub initial_loss: f64,
    pub final_loss: f64,
}

struct Pair {
    xt: Vec2,
    t: f64,
    target: Vec2,
}

fn draw_pairs<R: Rng>(spec: &MixtureSpec, rng: &mut R, n: usize) -> Vec<Pair> {
    let data = spec.sample_with(rng, n);
    data.into_iter()
        .map(|x0| {
            let x1: Vec2 = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
            let t: f64 = rng.random();
            Pair {
                xt: [(1.0 - t) * x0[0] + t * x1[0], (1.0 - t) * x0[1] + t * x1[1]],
                t,
                target: [x1[0] - x0[0], x1[1] - x0[1]],
            }
        })
        .collect()
}

fn batch_loss(params: &PolicyParams, pairs: &[Pair]) -> f64 {
    pairs
        .iter()
        .map(|p| {
            let v = velocity_unchecked(params, p.xt, p.t);
            (v[0] - p.target[0]).powi(2) + (v[1] - p.target[1]).powi(2)
        })
        .sum::<f64>()
        / pairs.len() as f64
}

/// Monte-Carlo flow matching loss on `n` fresh pairs drawn from `seed`.
pub fn flow_matching_loss(params: &PolicyParams, spec: &MixtureSpec, n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    batch_loss(params, &draw_pairs(spec, &mut rng, n))
}

pub fn pretrain_rectified_flow(spec: &MixtureSpec, cfg: &PretrainConfig) -> Result<PretrainOutput> {
    if cfg.steps == 0 || cfg.batch == 0 || !(cfg.lr > 0.0) {
        return Err(Error::InvalidInput(format!("bad pretrain config {cfg:?}")));
    }
    let mut params = PolicyParams::init(cfg.hidden, cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_da7a);
    let eval_seed = cfg.seed.wrapping_add(0xe7a1);
    let initial_loss = flow_matching_loss(&params, spec, 2048, eval_seed);

    let mut opt = Adam::new(params.len(), cfg.lr);
    let mut grads = GradBuffer::zeros_like(&params);
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        // Cosine decay down to 10% of the base rate.
        let progress = step as f64 / cfg.steps as f64;
        opt.lr = cfg.lr * (0.1 + 0.45 * (1.0 + (std::f64::consts::PI * progress).cos()));

        grads.zero();
        let pairs = draw_pairs(spec, &mut rng, cfg.batch);
        let scale = 2.0 / cfg.batch as f64;
        let mut loss = 0.0;
        for p in &pairs {
            let v = velocity_unchecked(&params, p.xt, p.t);
            let r = [v[0] - p.target[0], v[1] - p.target[1]];
            loss += r[0] * r[0] + r[1] * r[1];
            velocity_backward(&params, p.xt, p.t, [scale * r[0], scale * r[1]], &mut grads);
        }
        loss /= cfg.batch as f64;
        if !loss.is_finite() || !grads.is_finite() {
            return Err(Error::Diverged { step, loss });
        }
        losses.push(loss);
        opt.step(&mut params, &grads);
        if !params.is_finite() {
            return Err(Error::Diverged { step, loss });
        }
    }
    let final_loss = flow_matching_loss(&params, spec, 2048, eval_seed);
    Ok(PretrainOutput {
        params,
        losses,
        initial_loss,
        final_loss,
    })
}
