//! Pretraining and post-training loops with periodic evaluation.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Algorithm, RunConfig};
use super::output::{ensure_dir, scatter_svg, write_json, write_samples_csv, Table};
use crate::dist::RewardVec;
use crate::flow::{load_params, pretrain_rectified_flow, save_params, Adam, GradBuffer, PolicyParams};
use crate::metrics::{
    cosine_diversity, identity_embedding, lgmd, mode_occupancy, rewarded_coverage, Occupancy, SampleSet,
};
use crate::objectives::{
    beta_at_step, grpo_loss_and_grad, tmpo_loss_and_grad, ClipCounts, GroupBatch, LossReport, Reference,
};
use crate::reward::MixtureSpec;
use crate::tree::{
    resolve_collisions, rollout_independent, rollout_tree, sample_ode, NoiseSchedule, RolloutConfig, Trajectory,
};
use crate::{Error, Result, Vec2};

pub const CHECKPOINT_FILE: &str = "checkpoint.tmpf";

pub const TRAIN_LOG_HEADER: [&str; 16] = [
    "iteration",
    "beta",
    "loss",
    "kl_penalty",
    "fkl",
    "rkl",
    "tv",
    "pinsker_ok",
    "mode_dropped",
    "in_region",
    "silenced",
    "corrective",
    "neutral",
    "mean_reward",
    "velocity_evals",
    "degenerate_groups",
];

pub const EVAL_LOG_FIXED: [&str; 7] = [
    "iteration",
    "mean_reward",
    "lgmd",
    "cosine_diversity",
    "max_fraction",
    "rewarded_max_fraction",
    "rewarded_min_fraction",
];

#[derive(Debug, Clone)]
pub struct PretrainRun {
    pub params: PolicyParams,
    pub losses: Vec<f64>,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub occupancy: Occupancy,
}

/// Pretrains the velocity field on the configured mixture. With `out`,
/// writes `checkpoint.tmpf`, `pretrain_loss.csv` and
/// `pretrain_occupancy.json` there (creating the directory).
pub fn run_pretrain(cfg: &RunConfig, out: Option<&Path>) -> Result<PretrainRun> {
    cfg.validate()?;
    let spec = cfg.mixture()?;
    let trained = pretrain_rectified_flow(&spec, &cfg.pretrain_config())?;
    let samples = eval_samples(cfg, &trained.params)?;
    let occupancy = mode_occupancy(&spec, &samples);
    if let Some(dir) = out {
        ensure_dir(dir)?;
        save_params(&trained.params, &dir.join(CHECKPOINT_FILE))?;
        let mut t = Table::new(&["step", "loss"])?;
        for (i, l) in trained.losses.iter().enumerate() {
            t.row(&[i.to_string(), l.to_string()])?;
        }
        t.finish(&dir.join("pretrain_loss.csv"))?;
        write_json(&dir.join("pretrain_occupancy.json"), &occupancy)?;
    }
    Ok(PretrainRun {
        params: trained.params,
        losses: trained.losses,
        initial_loss: trained.initial_loss,
        final_loss: trained.final_loss,
        occupancy,
    })
}

/// The checkpoint named in the config, or a fresh pretraining run.
pub fn initial_params(cfg: &RunConfig, out: Option<&Path>) -> Result<PolicyParams> {
    match &cfg.checkpoint {
        Some(path) => {
            let params = load_params(path)?;
            if params.hidden() != cfg.hidden {
                return Err(Error::Config(format!(
                    "checkpoint has hidden width {}, config says {}",
                    params.hidden(),
                    cfg.hidden
                )));
            }
            Ok(params)
        }
        None => Ok(run_pretrain(cfg, out)?.params),
    }
}

/// ODE samples for evaluation. The same starting noise is used at every
/// evaluation of a run.
pub fn eval_samples(cfg: &RunConfig, params: &PolicyParams) -> Result<Vec<Vec2>> {
    let sched = cfg.eval_schedule()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.eval_seed);
    let samples = sample_ode(params, &sched, cfg.eval_samples, &mut rng);
    if samples.iter().any(|x| !x[0].is_finite() || !x[1].is_finite()) {
        return Err(Error::Diverged {
            step: 0,
            loss: f64::NAN,
        });
    }
    Ok(samples)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub beta: f64,
    /// On-policy loss (first inner update), averaged over groups.
    pub loss: f64,
    pub kl_penalty: f64,
    /// Mean over groups with a finite forward KL.
    pub fkl: f64,
    pub rkl: f64,
    pub tv: f64,
    pub pinsker_ok: bool,
    pub mode_dropped: usize,
    /// Summed over all inner updates and groups.
    pub clip: ClipCounts,
    pub mean_reward: f64,
    pub velocity_evals: usize,
    pub degenerate_groups: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub iteration: usize,
    pub mean_reward: f64,
    pub lgmd: f64,
    pub cosine_diversity: f64,
    pub max_fraction: f64,
    pub rewarded_max_fraction: f64,
    pub rewarded_min_fraction: f64,
    pub fractions: Vec<f64>,
}

pub fn evaluate(spec: &MixtureSpec, iteration: usize, samples: &[Vec2]) -> Result<EvalRecord> {
    let set = SampleSet::from_points(samples)?;
    let occ = mode_occupancy(spec, samples);
    let cov = rewarded_coverage(spec, &occ);
    let mean_reward = samples.iter().map(|x| spec.reward(*x)).sum::<Result<f64>>()? / samples.len() as f64;
    // The identity embedding is undefined only at the exact origin.
    let cosine = cosine_diversity(&set, identity_embedding).unwrap_or(f64::NAN);
    Ok(EvalRecord {
        iteration,
        mean_reward,
        lgmd: lgmd(&set),
        cosine_diversity: cosine,
        max_fraction: occ.max_fraction,
        rewarded_max_fraction: cov.max_fraction,
        rewarded_min_fraction: cov.min_fraction,
        fractions: occ.fractions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub algorithm: String,
    pub seed: u64,
    pub iterations: usize,
    pub final_mean_reward: f64,
    pub final_lgmd: f64,
    pub final_cosine_diversity: f64,
    pub final_max_fraction: f64,
    pub final_rewarded_max_fraction: f64,
    pub final_rewarded_min_fraction: f64,
    pub final_fractions: Vec<f64>,
    /// Mean forward KL over the last tenth of the iterations.
    pub final_fkl: f64,
    pub fkl_trace: Vec<f64>,
    pub velocity_evals_per_iteration: f64,
    pub velocity_evals_total: usize,
    pub cost_proxy: String,
}

#[derive(Debug, Clone)]
pub struct PosttrainRun {
    pub params: PolicyParams,
    pub log: Vec<IterationLog>,
    pub evals: Vec<EvalRecord>,
    pub final_samples: Vec<Vec2>,
    pub summary: Summary,
}

/// Leaves of one group plus the rollout cost.
pub struct Group {
    pub trajectories: Vec<Trajectory>,
    pub velocity_evals: usize,
}

/// Branch steps for one tree at the current progress.
fn branch_steps(cfg: &RunConfig, iteration: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    let mut sched = cfg.branch_schedule();
    if cfg.fixed_branch {
        return Ok(sched.late.clone());
    }
    sched.set_progress(iteration, cfg.iterations);
    let raw = sched.sample_branch_steps(rng)?;
    resolve_collisions(&raw, sched.s_min, sched.s_max)
}

/// Rolls out group `g` of `iteration` on its own RNG stream.
pub fn rollout_group(
    cfg: &RunConfig,
    params: &PolicyParams,
    sched: &NoiseSchedule,
    iteration: usize,
    g: usize,
) -> Result<Group> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7472_6565);
    rng.set_stream((iteration * cfg.trees + g) as u64);
    let steps = branch_steps(cfg, iteration, &mut rng)?;
    let rc = RolloutConfig::new(steps, cfg.branching, cfg.eta);
    if cfg.no_tree {
        let (trajectories, velocity_evals) = rollout_independent(params, sched, &rc, cfg.group_size(), &mut rng)?;
        Ok(Group {
            trajectories,
            velocity_evals,
        })
    } else {
        let tree = rollout_tree(params, sched, &rc, &mut rng)?;
        Ok(Group {
            trajectories: tree.leaves,
            velocity_evals: tree.velocity_evals,
        })
    }
}

struct Ema {
    params: PolicyParams,
    decay: f64,
}

impl Ema {
    fn update(&mut self, params: &PolicyParams) {
        for (e, p) in self.params.as_mut_slice().iter_mut().zip(params.as_slice()) {
            *e = self.decay * *e + (1.0 - self.decay) * p;
        }
    }
}

fn diverged(iteration: usize) -> Error {
    Error::Diverged {
        step: iteration,
        loss: f64::NAN,
    }
}

fn numerical(iteration: usize, e: Error) -> Error {
    match e {
        Error::NonFiniteLoss { .. } => diverged(iteration),
        other => other,
    }
}

/// Post-trains `init` with the configured algorithm. With `out`, writes
/// `train_log.csv`, `eval_log.csv`, sample CSVs, SVG scatter plots and
/// `summary.json` there.
pub fn run_posttrain(cfg: &RunConfig, init: &PolicyParams, out: Option<&Path>) -> Result<PosttrainRun> {
    cfg.validate()?;
    let spec = cfg.mixture()?;
    let sched = cfg.train_schedule()?;
    let clip = cfg.clip_config();
    let kl_coef = cfg.kl_ref_coef();
    let reference = init.clone();

    let mut params = init.clone();
    let mut opt = Adam::new(params.len(), cfg.lr);
    let mut ema = cfg.ema.then(|| Ema {
        params: init.clone(),
        decay: cfg.ema_decay,
    });
    let mut log = Vec::with_capacity(cfg.iterations);
    let mut evals = Vec::new();
    let mut dumps: Vec<(String, Vec<Vec2>)> = Vec::new();

    let initial = eval_samples(cfg, &params)?;
    evals.push(evaluate(&spec, 0, &initial)?);
    dumps.push(("pretrained".into(), initial));

    for it in 0..cfg.iterations {
        let beta = beta_at_step(&clip, it);
        let groups = (0..cfg.trees)
            .into_par_iter()
            .map(|g| rollout_group(cfg, &params, &sched, it, g))
            .collect::<Result<Vec<_>>>()?;

        let mut batches = Vec::with_capacity(groups.len());
        let mut rewards_sum = 0.0;
        let mut reward_count = 0;
        let mut velocity_evals = 0;
        for group in groups {
            velocity_evals += group.velocity_evals;
            let rewards = group
                .trajectories
                .iter()
                .map(|t| spec.reward(t.terminal))
                .collect::<Result<Vec<f64>>>()
                .map_err(|_| diverged(it))?;
            rewards_sum += rewards.iter().sum::<f64>();
            reward_count += rewards.len();
            let rv = RewardVec::new(rewards, beta)?;
            let batch = match cfg.algorithm {
                Algorithm::Tmpo => GroupBatch::softmax_tb(group.trajectories, rv, &params, &sched),
                Algorithm::Grpo => GroupBatch::zscore(group.trajectories, rv, &params, &sched),
            }
            .map_err(|e| numerical(it, e))?;
            batches.push(batch);
        }

        let mut first: Vec<LossReport> = Vec::new();
        let mut counts = ClipCounts::default();
        for update in 0..cfg.inner_updates {
            let results = batches
                .par_iter()
                .map(|b| {
                    let mut g = GradBuffer::zeros_like(&params);
                    let r = kl_coef.gt(&0.0).then_some(Reference {
                        params: &reference,
                        coef: kl_coef,
                    });
                    let rep = match cfg.algorithm {
                        Algorithm::Tmpo => tmpo_loss_and_grad(b, &params, &sched, &clip, r, &mut g),
                        Algorithm::Grpo => grpo_loss_and_grad(b, &params, &sched, &clip, r, &mut g),
                    };
                    rep.map(|rep| (rep, g))
                })
                .collect::<Result<Vec<_>>>()
                .map_err(|e| numerical(it, e))?;
            let mut grads = GradBuffer::zeros_like(&params);
            let mut reports = Vec::with_capacity(results.len());
            for (rep, g) in results {
                grads.merge(&g);
                counts.in_region += rep.counts.in_region;
                counts.silenced += rep.counts.silenced;
                counts.corrective += rep.counts.corrective;
                counts.neutral += rep.counts.neutral;
                reports.push(rep);
            }
            grads.scale(1.0 / batches.len() as f64);
            if !grads.is_finite() {
                return Err(diverged(it));
            }
            opt.step(&mut params, &grads);
            if !params.is_finite() {
                return Err(diverged(it));
            }
            if update == 0 {
                first = reports;
            }
        }

        let n = batches.len() as f64;
        let mut fkl = 0.0;
        let mut rkl = 0.0;
        let mut tv = 0.0;
        let mut finite = 0usize;
        let mut pinsker_ok = true;
        let mut mode_dropped = 0;
        for b in &batches {
            let d = b.kl_diagnostics()?;
            tv += d.tv;
            pinsker_ok &= d.pinsker_ok;
            match (d.fkl.finite(), d.rkl.finite()) {
                (Some(f), Some(r)) => {
                    fkl += f;
                    rkl += r;
                    finite += 1;
                }
                _ => mode_dropped += 1,
            }
        }
        let per = |v: f64| if finite == 0 { f64::NAN } else { v / finite as f64 };
        log.push(IterationLog {
            iteration: it + 1,
            beta,
            loss: first.iter().map(|r| r.loss).sum::<f64>() / n,
            kl_penalty: first.iter().map(|r| r.kl_penalty).sum::<f64>() / n,
            fkl: per(fkl),
            rkl: per(rkl),
            tv: tv / n,
            pinsker_ok,
            mode_dropped,
            clip: counts,
            mean_reward: rewards_sum / reward_count as f64,
            velocity_evals,
            degenerate_groups: batches.iter().filter(|b| b.degenerate).count(),
        });

        if let Some(e) = ema.as_mut() {
            if (it + 1) % cfg.ema_interval == 0 {
                e.update(&params);
            }
        }
        let done = it + 1 == cfg.iterations;
        if (it + 1) % cfg.eval_interval == 0 || done {
            let eval_params = ema.as_ref().map_or(&params, |e| &e.params);
            let samples = eval_samples(cfg, eval_params).map_err(|_| diverged(it))?;
            evals.push(evaluate(&spec, it + 1, &samples)?);
            let label = if done {
                "final".to_string()
            } else {
                format!("iter_{:05}", it + 1)
            };
            dumps.push((label, samples));
        }
    }

    let last = evals.last().expect("final evaluation").clone();
    let tail = (log.len() / 10).max(1);
    let fkl_trace: Vec<f64> = log.iter().map(|l| l.fkl).collect();
    let velocity_evals_total: usize = log.iter().map(|l| l.velocity_evals).sum();
    let summary = Summary {
        algorithm: cfg.algorithm.as_str().into(),
        seed: cfg.seed,
        iterations: cfg.iterations,
        final_mean_reward: last.mean_reward,
        final_lgmd: last.lgmd,
        final_cosine_diversity: last.cosine_diversity,
        final_max_fraction: last.max_fraction,
        final_rewarded_max_fraction: last.rewarded_max_fraction,
        final_rewarded_min_fraction: last.rewarded_min_fraction,
        final_fractions: last.fractions.clone(),
        final_fkl: mean_finite(&fkl_trace[fkl_trace.len() - tail..]),
        fkl_trace,
        velocity_evals_per_iteration: velocity_evals_total as f64 / cfg.iterations as f64,
        velocity_evals_total,
        cost_proxy: "velocity-field evaluations during rollouts (wall-clock is not reported)".into(),
    };
    let final_samples = dumps.last().expect("final samples").1.clone();

    if let Some(dir) = out {
        ensure_dir(dir)?;
        write_train_log(&dir.join("train_log.csv"), &log)?;
        write_eval_log(&dir.join("eval_log.csv"), spec.components().len(), &evals)?;
        for (label, samples) in &dumps {
            write_samples_csv(&dir.join(format!("samples_{label}.csv")), &spec, samples)?;
        }
        let algo = cfg.algorithm.as_str();
        let first = &dumps[0];
        std::fs::write(
            dir.join("samples_pretrained.svg"),
            scatter_svg("pretrained", &spec, &first.1),
        )?;
        std::fs::write(
            dir.join(format!("samples_final_{algo}.svg")),
            scatter_svg(
                &format!("{algo} after {} iterations", cfg.iterations),
                &spec,
                &final_samples,
            ),
        )?;
        write_json(&dir.join("summary.json"), &summary)?;
    }

    Ok(PosttrainRun {
        params,
        log,
        evals,
        final_samples,
        summary,
    })
}

fn mean_finite(xs: &[f64]) -> f64 {
    let f: Vec<f64> = xs.iter().copied().filter(|x| x.is_finite()).collect();
    if f.is_empty() {
        f64::NAN
    } else {
        f.iter().sum::<f64>() / f.len() as f64
    }
}

pub fn write_train_log(path: &Path, log: &[IterationLog]) -> Result<()> {
    let mut t = Table::new(&TRAIN_LOG_HEADER)?;
    for l in log {
        t.row(&[
            l.iteration.to_string(),
            l.beta.to_string(),
            l.loss.to_string(),
            l.kl_penalty.to_string(),
            l.fkl.to_string(),
            l.rkl.to_string(),
            l.tv.to_string(),
            l.pinsker_ok.to_string(),
            l.mode_dropped.to_string(),
            l.clip.in_region.to_string(),
            l.clip.silenced.to_string(),
            l.clip.corrective.to_string(),
            l.clip.neutral.to_string(),
            l.mean_reward.to_string(),
            l.velocity_evals.to_string(),
            l.degenerate_groups.to_string(),
        ])?;
    }
    t.finish(path)
}

pub fn eval_log_header(components: usize) -> Vec<String> {
    EVAL_LOG_FIXED
        .iter()
        .map(|s| s.to_string())
        .chain((0..components).map(|c| format!("fraction_{c}")))
        .collect()
}

pub fn write_eval_log(path: &Path, components: usize, evals: &[EvalRecord]) -> Result<()> {
    let mut t = Table::new(&eval_log_header(components))?;
    for e in evals {
        let mut row = vec![
            e.iteration.to_string(),
            e.mean_reward.to_string(),
            e.lgmd.to_string(),
            e.cosine_diversity.to_string(),
            e.max_fraction.to_string(),
            e.rewarded_max_fraction.to_string(),
            e.rewarded_min_fraction.to_string(),
        ];
        row.extend(e.fractions.iter().map(|f| f.to_string()));
        t.row(&row)?;
    }
    t.finish(path)
}
