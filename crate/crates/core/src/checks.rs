//! Fast invariant suite run by `tmpo check`.
//!
//! Each check is deterministic (fixed seeds) and reports a one-line detail
//! with the worst observed deviation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dist::{entropy, forward_kl, reverse_kl_identity_check, total_variation, FiniteDist, RewardVec};
use crate::flow::{GradBuffer, PolicyParams};
use crate::objectives::{
    kl_diagnostics, ratio_norm_step, softmax_tb_advantage, tmpo_loss_and_grad, ClipCase, ClipConfig, GroupBatch,
};
use crate::tree::{
    analytic_eval_count, gaussian_logp_mean, ode_terminal, replay_branches, rollout_tree, sample_xi, BranchSchedule,
    NoiseSchedule, RolloutConfig, DIM,
};
use crate::Result;

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome { name, passed, detail }
}

/// Runs every check; an `Err` means a check could not be evaluated.
pub fn run_all() -> Result<Vec<CheckOutcome>> {
    Ok(vec![
        equilibrium_identity()?,
        pinsker_bound()?,
        sign_consistency()?,
        max_entropy()?,
        reverse_kl_identity()?,
        gradient_fidelity()?,
        ratio_norm_centering(),
        clip_cases()?,
        tree_sampler()?,
        beta_schedule()?,
    ])
}

fn random_group(rng: &mut ChaCha8Rng, k: usize) -> Result<(Vec<f64>, RewardVec)> {
    let logps: Vec<f64> = (0..k).map(|_| rng.random_range(-4.0..4.0)).collect();
    let rewards: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
    let beta = rng.random_range(0.1..3.0);
    Ok((logps, RewardVec::new(rewards, beta)?))
}

const GROUP_SIZES: [usize; 3] = [2, 3, 27];

pub fn equilibrium_identity() -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for i in 0..1000 {
        let (mut logps, r) = random_group(&mut rng, GROUP_SIZES[i % 3])?;
        if i % 50 == 0 {
            // Matched groups exercise the equality case.
            logps = r.scaled();
        }
        let tb = softmax_tb_advantage(&logps, &r)?;
        let d = kl_diagnostics(&tb.q, &tb.p)?;
        let weighted: f64 = tb.q.probs().iter().zip(&tb.advantages).map(|(q, a)| q * a).sum();
        let kl = d.fkl.value();
        worst = worst.max((weighted - kl).abs());
        let max_gap =
            tb.q.probs()
                .iter()
                .zip(tb.p.probs())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
        ok &= kl >= 0.0 && ((kl < 1e-12) == (max_gap < 1e-12));
    }
    Ok(outcome(
        "equilibrium identity",
        ok && worst < 1e-10,
        format!("max |sum q A - KL| = {worst:.3e}"),
    ))
}

pub fn pinsker_bound() -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut min_slack = f64::INFINITY;
    for i in 0..1000 {
        let (logps, r) = random_group(&mut rng, GROUP_SIZES[i % 3])?;
        let tb = softmax_tb_advantage(&logps, &r)?;
        let kl = forward_kl(&tb.q, &tb.p)?.value();
        let tv = total_variation(&tb.q, &tb.p)?;
        min_slack = min_slack.min((kl / 2.0).sqrt() - tv);
    }
    Ok(outcome(
        "pinsker bound",
        min_slack >= 0.0,
        format!("min sqrt(KL/2) - TV = {min_slack:.3e}"),
    ))
}

pub fn sign_consistency() -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mismatches = 0;
    for i in 0..1000 {
        let (logps, r) = random_group(&mut rng, GROUP_SIZES[i % 3])?;
        let tb = softmax_tb_advantage(&logps, &r)?;
        for ((a, q), p) in tb.advantages.iter().zip(tb.q.probs()).zip(tb.p.probs()) {
            let d = q - p;
            // Ties at rounding level carry no sign.
            if d.abs() > 1e-15 && a.signum() != d.signum() {
                mismatches += 1;
            }
        }
    }
    let r = RewardVec::new(vec![0.0, 0.0, 0.0], 1.0)?;
    let at = |m: i32| -> Result<f64> {
        let p0 = 10f64.powi(-m);
        let logps = [p0.ln(), ((1.0 - p0) / 2.0).ln(), ((1.0 - p0) / 2.0).ln()];
        Ok(softmax_tb_advantage(&logps, &r)?.advantages[0])
    };
    let (a4, a8) = (at(4)?, at(8)?);
    Ok(outcome(
        "sign consistency / mode drop",
        mismatches == 0 && a8 > a4,
        format!("{mismatches} sign mismatches; A(1e-4) = {a4:.4}, A(1e-8) = {a8:.4}"),
    ))
}

pub fn max_entropy() -> Result<CheckOutcome> {
    let rewards = [0.2, 1.0, -0.5];
    let r = RewardVec::new(rewards.to_vec(), 1.3)?;
    let q = crate::dist::boltzmann_target(&r);
    let target: f64 = q.probs().iter().zip(&rewards).map(|(p, x)| p * x).sum();
    let hq = entropy(&q);
    let mut worst = f64::NEG_INFINITY;
    // Walk p_0 over a grid; p_1, p_2 follow from normalisation and the
    // expected-reward constraint.
    let n = 20_000;
    for i in 0..=n {
        let p0 = i as f64 / n as f64;
        let p1 = (target - rewards[2] - p0 * (rewards[0] - rewards[2])) / (rewards[1] - rewards[2]);
        let p2 = 1.0 - p0 - p1;
        if p1 < 0.0 || p2 < 0.0 {
            continue;
        }
        let p = FiniteDist::new(vec![p0, p1, p2])?;
        worst = worst.max(entropy(&p) - hq);
    }
    Ok(outcome(
        "max entropy",
        worst <= 1e-3,
        format!("max H(p) - H(q) on the constraint set = {worst:.3e}"),
    ))
}

pub fn reverse_kl_identity() -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let (logps, r) = random_group(&mut rng, GROUP_SIZES[i % 3])?;
        let p = FiniteDist::softmax(&logps)?;
        worst = worst.max(reverse_kl_identity_check(&p, &r)?.gap);
    }
    Ok(outcome(
        "reverse-KL identity",
        worst < 1e-10,
        format!("max gap = {worst:.3e}"),
    ))
}

fn small_batch(seed: u64, hidden: usize) -> Result<(GroupBatch, PolicyParams, NoiseSchedule)> {
    let old = PolicyParams::init(hidden, seed);
    let sched = NoiseSchedule::linear(6)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    let cfg = RolloutConfig::new(vec![2, 3, 5], 2, 0.7);
    let tree = rollout_tree(&old, &sched, &cfg, &mut rng)?;
    let rewards: Vec<f64> = (0..tree.leaves.len()).map(|_| rng.random_range(0.0..1.0)).collect();
    let batch = GroupBatch::softmax_tb(tree.leaves, RewardVec::new(rewards, 1.5)?, &old, &sched)?;
    Ok((batch, old, sched))
}

/// Per-trajectory RatioNorm shifts at `p`; the oracle holds these fixed,
/// as the analytic gradient treats them as constants.
fn frozen_shifts(b: &GroupBatch, p: &PolicyParams, s: &NoiseSchedule) -> Result<Vec<f64>> {
    b.trajectories
        .iter()
        .enumerate()
        .map(|(i, traj)| {
            let mut shift = 0.0;
            for (t, r) in replay_branches(p, traj, s)?.iter().enumerate() {
                if r.policy_dependent {
                    let m = b.old_mus[i][t];
                    let d2 = (r.mu[0] - m[0]).powi(2) + (r.mu[1] - m[1]).powi(2);
                    shift += d2 / (2.0 * r.gamma * r.gamma * DIM as f64);
                }
            }
            Ok(shift)
        })
        .collect()
}

/// Clipped surrogate written out directly from replayed log-probabilities.
fn oracle_loss(b: &GroupBatch, p: &PolicyParams, s: &NoiseSchedule, eps: f64, shifts: &[f64]) -> Result<f64> {
    let k = b.len() as f64;
    let mut loss = 0.0;
    for (i, traj) in b.trajectories.iter().enumerate() {
        let mut log_w = shifts[i];
        for (t, r) in replay_branches(p, traj, s)?.iter().enumerate() {
            if r.policy_dependent {
                log_w += r.logp - b.old_logps[i][t];
            }
        }
        let w = log_w.exp();
        let a = b.advantages[i];
        loss -= (w * a).min(w.clamp(1.0 - eps, 1.0 + eps) * a) / k;
    }
    Ok(loss)
}

/// Central differences over every parameter of a small network, with the
/// policy nudged off the rollout point so ratios differ from 1.
pub fn gradient_fidelity() -> Result<CheckOutcome> {
    let cfg = ClipConfig::default();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let (batch, old, sched) = small_batch(seed, 5)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let mut params = old.clone();
        for v in params.as_mut_slice() {
            *v += rng.random_range(-0.01..0.01);
        }
        let mut grads = GradBuffer::zeros_like(&params);
        tmpo_loss_and_grad(&batch, &params, &sched, &cfg, None, &mut grads)?;
        let shifts = frozen_shifts(&batch, &params, &sched)?;
        for j in 0..params.len() {
            let mut plus = params.clone();
            plus.as_mut_slice()[j] += h;
            let mut minus = params.clone();
            minus.as_mut_slice()[j] -= h;
            let fd = (oracle_loss(&batch, &plus, &sched, cfg.epsilon, &shifts)?
                - oracle_loss(&batch, &minus, &sched, cfg.epsilon, &shifts)?)
                / (2.0 * h);
            let an = grads.as_slice()[j];
            worst = worst.max((fd - an).abs() / fd.abs().max(an.abs()).max(1e-6));
        }
    }
    Ok(outcome(
        "gradient fidelity",
        worst < 1e-4,
        format!("max relative error = {worst:.3e}"),
    ))
}

pub fn ratio_norm_centering() -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mu_old, mu_new, gamma) = ([0.3, -0.2], [0.45, -0.1], 0.35);
    let n = 100_000;
    let mut centered = Vec::with_capacity(n);
    let mut raw = Vec::with_capacity(n);
    for _ in 0..n {
        let eps: [f64; 2] = [
            rng.sample(rand_distr::StandardNormal),
            rng.sample(rand_distr::StandardNormal),
        ];
        let x = [mu_old[0] + gamma * eps[0], mu_old[1] + gamma * eps[1]];
        let lo = gaussian_logp_mean(x, mu_old, gamma);
        let ln = gaussian_logp_mean(x, mu_new, gamma);
        raw.push(ln - lo);
        centered.push(ratio_norm_step(ln, lo, mu_new, mu_old, gamma));
    }
    let stats = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / n as f64;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        (m, (var / n as f64).sqrt())
    };
    let shift =
        ((mu_new[0] - mu_old[0]).powi(2) + (mu_new[1] - mu_old[1]).powi(2)) / (2.0 * gamma * gamma * DIM as f64);
    let (mc, sc) = stats(&centered);
    let (mr, sr) = stats(&raw);
    outcome(
        "ratio-norm centering",
        mc.abs() < 3.0 * sc && (mr + shift).abs() < 3.0 * sr,
        format!(
            "centred mean {mc:.2e} (3SE {:.2e}); raw mean {mr:.4} vs {:.4}",
            3.0 * sc,
            -shift
        ),
    )
}

/// Builds a batch whose old log-probabilities are shifted so that each
/// trajectory lands in a chosen clip case.
pub fn clip_cases() -> Result<CheckOutcome> {
    let cfg = ClipConfig::default();
    let (mut batch, params, sched) = small_batch(42, 6)?;
    let plan = [
        (1.0, 0.5, ClipCase::InRegion),
        (1.6, 0.5, ClipCase::Silenced),
        (0.5, -0.5, ClipCase::Silenced),
        (0.5, 0.5, ClipCase::Corrective),
        (1.6, -0.5, ClipCase::Corrective),
    ];
    for (i, (ratio, adv, _)) in plan.iter().enumerate() {
        batch.advantages[i] = *adv;
        batch.old_logps[i][0] -= f64::ln(*ratio);
    }
    for a in batch.advantages.iter_mut().skip(plan.len()) {
        *a = 0.0;
    }
    let mut g = GradBuffer::zeros_like(&params);
    let rep = tmpo_loss_and_grad(&batch, &params, &sched, &cfg, None, &mut g)?;
    let mut ok = true;
    for (i, (_, _, expected)) in plan.iter().enumerate() {
        ok &= rep.cases[i] == *expected;
        let mut single = batch.clone();
        for (j, a) in single.advantages.iter_mut().enumerate() {
            if j != i {
                *a = 0.0;
            }
        }
        let mut gi = GradBuffer::zeros_like(&params);
        tmpo_loss_and_grad(&single, &params, &sched, &cfg, None, &mut gi)?;
        ok &= match expected {
            ClipCase::Silenced => gi.norm() == 0.0,
            _ => gi.norm() > 0.0,
        };
    }
    Ok(outcome(
        "clip cases",
        ok,
        format!("cases {:?}", &rep.cases[..plan.len()]),
    ))
}

pub fn tree_sampler() -> Result<CheckOutcome> {
    let params = PolicyParams::init(16, 9);
    let sched = NoiseSchedule::linear(6)?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let cfg = RolloutConfig::new(vec![1, 3, 5], 3, 0.7);
    let tree = rollout_tree(&params, &sched, &cfg, &mut rng)?;
    let k = tree.leaves.len();
    let mut shared = true;
    for a in &tree.leaves {
        for b in &tree.leaves {
            let common = a.choices.iter().zip(&b.choices).take_while(|(x, y)| x == y).count();
            if common == 0 {
                continue;
            }
            // Paths agree bitwise up to the step of the first differing branch.
            let until = if common == a.choices.len() {
                sched.steps() + 1
            } else {
                a.branch_steps[common]
            };
            shared &= a.states[..until] == b.states[..until];
        }
    }
    let ode_cfg = RolloutConfig::new(vec![1, 3, 5], 3, 0.0);
    let ode_tree = rollout_tree(&params, &sched, &ode_cfg, &mut rng)?;
    let reference = ode_terminal(&params, ode_tree.root, &sched);
    let spread = ode_tree
        .leaves
        .iter()
        .map(|l| {
            (l.terminal[0] - reference[0])
                .abs()
                .max((l.terminal[1] - reference[1]).abs())
        })
        .fold(0.0, f64::max);
    let analytic = analytic_eval_count(&[1, 3, 5], 3, 6);
    let ok = k == 27 && shared && spread < 1e-12 && tree.velocity_evals == analytic && analytic < k * 6;
    Ok(outcome(
        "tree sampler",
        ok,
        format!(
            "{k} leaves, prefix sharing {shared}, eta=0 spread {spread:.1e}, evals {} (analytic {analytic}, K*S {})",
            tree.velocity_evals,
            k * 6
        ),
    ))
}

pub fn beta_schedule() -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 100_000;
    let draws = (0..n)
        .map(|_| sample_xi(0.5, 6.0, &mut rng))
        .collect::<Result<Vec<f64>>>()?;
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    let se = (var / n as f64).sqrt();
    let mut sched = BranchSchedule::default_for(6);
    sched.kappa = 1e9;
    let mut exact = true;
    for p in [0.0, 0.3, 0.6, 1.0] {
        sched.progress = p;
        for _ in 0..100 {
            exact &= sched.sample_branch_steps(&mut rng)? == sched.deterministic_steps();
        }
    }
    let ok = (mean - 0.5).abs() < 3.0 * se && (var - 1.0 / 28.0).abs() < 0.1 / 28.0 && exact;
    Ok(outcome(
        "beta schedule",
        ok,
        format!(
            "mean {mean:.4}, variance {var:.5} (1/28 = {:.5}), kappa=1e9 exact {exact}",
            1.0 / 28.0
        ),
    ))
}
