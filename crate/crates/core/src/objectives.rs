//! Softmax-TB advantages, centred importance ratios and the clipped
//! surrogate shared by TMPO and the GRPO baseline.
//!
//! Advantages are computed once per rollout from the frozen policy and then
//! held fixed (detached) across all inner updates on the batch. Gradients
//! flow only through the importance ratio of the active `min` branch, and
//! through it only via the drift `mu_theta` at the recorded branch states.

use serde::{Deserialize, Serialize};

use crate::dist::{boltzmann_target, forward_kl, log_softmax, total_variation, FiniteDist, Kl, RewardVec};
use crate::flow::{velocity_backward, GradBuffer, PolicyParams};
use crate::reward::group_zscore;
use crate::tree::{drift_coefficients, replay_branches, NoiseSchedule, Trajectory, DIM};
use crate::{Error, Result, Vec2};

/// Softmax-TB advantage `A_i = log q_i - log p_i` with
/// `q = softmax(beta R)` and `p = softmax(logps)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxTb {
    pub q: FiniteDist,
    pub p: FiniteDist,
    pub advantages: Vec<f64>,
}

pub fn softmax_tb_advantage(logps: &[f64], rewards: &RewardVec) -> Result<SoftmaxTb> {
    if logps.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "Softmax-TB needs a group of at least 2, got {}",
            logps.len()
        )));
    }
    if logps.len() != rewards.len() {
        return Err(Error::LengthMismatch {
            expected: rewards.len(),
            got: logps.len(),
        });
    }
    let q = boltzmann_target(rewards);
    let p = FiniteDist::softmax(logps)?;
    let log_q = log_softmax(&rewards.scaled());
    let log_p = log_softmax(logps);
    let advantages = log_q.iter().zip(&log_p).map(|(a, b)| a - b).collect();
    Ok(SoftmaxTb { q, p, advantages })
}

/// Centred per-step log-ratio: the raw log-ratio plus the detached shift
/// `|mu_new - mu_old|^2 / (2 gamma^2 d)` (per-dimension mean scaling).
pub fn ratio_norm_step(logp_new: f64, logp_old: f64, mu_new: Vec2, mu_old: Vec2, gamma: f64) -> f64 {
    logp_new - logp_old + ratio_norm_shift(mu_new, mu_old, gamma)
}

pub fn ratio_norm_shift(mu_new: Vec2, mu_old: Vec2, gamma: f64) -> f64 {
    let sq = (mu_new[0] - mu_old[0]).powi(2) + (mu_new[1] - mu_old[1]).powi(2);
    sq / (2.0 * gamma * gamma * DIM as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdvantageKind {
    /// Distribution-aware `log q_i - log p_i`.
    SoftmaxTb,
    /// Within-group z-scored rewards (GRPO).
    ZScore,
}

/// One rollout group with everything frozen at rollout time.
#[derive(Debug, Clone)]
pub struct GroupBatch {
    pub trajectories: Vec<Trajectory>,
    pub rewards: RewardVec,
    pub q: FiniteDist,
    pub p: FiniteDist,
    pub advantages: Vec<f64>,
    pub kind: AdvantageKind,
    /// `K x T` per-branch log-probabilities under the rollout policy.
    pub old_logps: Vec<Vec<f64>>,
    /// `K x T` drifts under the rollout policy.
    pub old_mus: Vec<Vec<Vec2>>,
    /// Set when z-scoring saw a constant reward group.
    pub degenerate: bool,
}

impl GroupBatch {
    /// Softmax-TB batch. `old_params` must be the policy that produced the
    /// trajectories.
    pub fn softmax_tb(
        trajectories: Vec<Trajectory>,
        rewards: RewardVec,
        old_params: &PolicyParams,
        sched: &NoiseSchedule,
    ) -> Result<Self> {
        let logps: Vec<f64> = trajectories.iter().map(|t| t.logp_total).collect();
        let tb = softmax_tb_advantage(&logps, &rewards)?;
        let (old_logps, old_mus) = freeze(&trajectories, old_params, sched)?;
        Ok(Self {
            trajectories,
            rewards,
            q: tb.q,
            p: tb.p,
            advantages: tb.advantages,
            kind: AdvantageKind::SoftmaxTb,
            old_logps,
            old_mus,
            degenerate: false,
        })
    }

    /// GRPO batch with z-scored advantages. `q` and `p` are still filled in
    /// (with the given `beta`) so the divergence diagnostics stay available.
    pub fn zscore(
        trajectories: Vec<Trajectory>,
        rewards: RewardVec,
        old_params: &PolicyParams,
        sched: &NoiseSchedule,
    ) -> Result<Self> {
        let logps: Vec<f64> = trajectories.iter().map(|t| t.logp_total).collect();
        let tb = softmax_tb_advantage(&logps, &rewards)?;
        let report = group_zscore(rewards.rewards())?;
        let (old_logps, old_mus) = freeze(&trajectories, old_params, sched)?;
        Ok(Self {
            trajectories,
            rewards,
            q: tb.q,
            p: tb.p,
            advantages: report.zscored,
            kind: AdvantageKind::ZScore,
            old_logps,
            old_mus,
            degenerate: report.degenerate,
        })
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }
}

type Frozen = (Vec<Vec<f64>>, Vec<Vec<Vec2>>);

fn freeze(trajectories: &[Trajectory], old: &PolicyParams, sched: &NoiseSchedule) -> Result<Frozen> {
    let mut logps = Vec::with_capacity(trajectories.len());
    let mut mus = Vec::with_capacity(trajectories.len());
    for traj in trajectories {
        let replay = replay_branches(old, traj, sched)?;
        logps.push(traj.step_logps.clone());
        mus.push(replay.iter().map(|b| b.mu).collect());
    }
    Ok((logps, mus))
}

/// Trust-region regime of one trajectory in the clipped surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClipCase {
    /// Ratio inside `[1 - eps, 1 + eps]`; ordinary gradient.
    InRegion,
    /// Moved past the region in the advantage's direction; gradient silenced.
    Silenced,
    /// Moved past the region against the advantage; corrective gradient.
    Corrective,
    /// Outside the region with zero advantage; contributes nothing.
    Neutral,
}

impl ClipCase {
    pub fn classify(ratio: f64, advantage: f64, epsilon: f64) -> Self {
        let lo = 1.0 - epsilon;
        let hi = 1.0 + epsilon;
        if (lo..=hi).contains(&ratio) {
            ClipCase::InRegion
        } else if advantage == 0.0 {
            ClipCase::Neutral
        } else if (advantage > 0.0) == (ratio > hi) {
            ClipCase::Silenced
        } else {
            ClipCase::Corrective
        }
    }

    /// Whether the gradient flows through the unclipped ratio.
    pub fn passes_gradient(self) -> bool {
        matches!(self, ClipCase::InRegion | ClipCase::Corrective)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipCounts {
    pub in_region: usize,
    pub silenced: usize,
    pub corrective: usize,
    pub neutral: usize,
}

impl ClipCounts {
    pub fn from_cases(cases: &[ClipCase]) -> Self {
        let mut c = Self::default();
        for case in cases {
            match case {
                ClipCase::InRegion => c.in_region += 1,
                ClipCase::Silenced => c.silenced += 1,
                ClipCase::Corrective => c.corrective += 1,
                ClipCase::Neutral => c.neutral += 1,
            }
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub loss: f64,
    /// KL-to-reference part of `loss` (0 when disabled).
    pub kl_penalty: f64,
    pub ratios: Vec<f64>,
    pub cases: Vec<ClipCase>,
    pub counts: ClipCounts,
    /// Constant reward group under z-scoring.
    pub degenerate: bool,
}

/// Clip settings plus the linear warmup of the reward temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipConfig {
    pub epsilon: f64,
    pub beta_start: f64,
    pub beta_end: f64,
    pub warmup_steps: usize,
}

impl Default for ClipConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.2,
            beta_start: 0.8,
            beta_end: 2.0,
            warmup_steps: 150,
        }
    }
}

impl ClipConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidInput(format!("epsilon {} not in (0, 1)", self.epsilon)));
        }
        if !(self.beta_start > 0.0) || self.beta_start > self.beta_end {
            return Err(Error::InvalidInput(format!(
                "beta schedule {} -> {} must be positive and non-decreasing",
                self.beta_start, self.beta_end
            )));
        }
        if self.warmup_steps == 0 {
            return Err(Error::InvalidInput("warmup_steps must be >= 1".into()));
        }
        Ok(())
    }
}

/// Linear interpolation from `beta_start` to `beta_end`, constant afterwards.
pub fn beta_at_step(cfg: &ClipConfig, step: usize) -> f64 {
    let frac = (step as f64 / cfg.warmup_steps as f64).min(1.0);
    cfg.beta_start + (cfg.beta_end - cfg.beta_start) * frac
}

/// Optional KL penalty towards a frozen reference policy.
#[derive(Debug, Clone, Copy)]
pub struct Reference<'a> {
    pub params: &'a PolicyParams,
    pub coef: f64,
}

/// TMPO loss `-(1/K) sum_i min(w_i A_i, clip(w_i) A_i)`; gradient added
/// into `grads`.
pub fn tmpo_loss_and_grad(
    batch: &GroupBatch,
    params: &PolicyParams,
    sched: &NoiseSchedule,
    cfg: &ClipConfig,
    reference: Option<Reference<'_>>,
    grads: &mut GradBuffer,
) -> Result<LossReport> {
    if batch.kind != AdvantageKind::SoftmaxTb {
        return Err(Error::InvalidInput("TMPO loss needs a Softmax-TB batch".into()));
    }
    clipped_surrogate(batch, params, sched, cfg.epsilon, reference, grads)
}

/// GRPO loss: the same clipped surrogate on z-scored rewards, optionally
/// with a KL penalty towards the reference policy.
pub fn grpo_loss_and_grad(
    batch: &GroupBatch,
    params: &PolicyParams,
    sched: &NoiseSchedule,
    cfg: &ClipConfig,
    reference: Option<Reference<'_>>,
    grads: &mut GradBuffer,
) -> Result<LossReport> {
    if batch.kind != AdvantageKind::ZScore {
        return Err(Error::InvalidInput("GRPO loss needs a z-score batch".into()));
    }
    clipped_surrogate(batch, params, sched, cfg.epsilon, reference, grads)
}

fn clipped_surrogate(
    batch: &GroupBatch,
    params: &PolicyParams,
    sched: &NoiseSchedule,
    epsilon: f64,
    reference: Option<Reference<'_>>,
    grads: &mut GradBuffer,
) -> Result<LossReport> {
    let k = batch.len() as f64;
    let mut loss = 0.0;
    let mut kl_penalty = 0.0;
    let mut ratios = Vec::with_capacity(batch.len());
    let mut cases = Vec::with_capacity(batch.len());

    for (i, traj) in batch.trajectories.iter().enumerate() {
        let replay = replay_branches(params, traj, sched)?;
        let mut log_ratio = 0.0;
        for (t, b) in replay.iter().enumerate() {
            if b.policy_dependent {
                log_ratio += ratio_norm_step(b.logp, batch.old_logps[i][t], b.mu, batch.old_mus[i][t], b.gamma);
            }
        }
        let ratio = log_ratio.exp();
        let adv = batch.advantages[i];
        let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon);
        let objective = (ratio * adv).min(clipped * adv);
        let case = ClipCase::classify(ratio, adv, epsilon);

        // dL/dlogp_t = -(1/K) A w for every policy-dependent branch.
        let scale = if case.passes_gradient() { -adv * ratio / k } else { 0.0 };

        let mut traj_kl = 0.0;
        for (t, b) in replay.iter().enumerate() {
            if !b.policy_dependent {
                continue;
            }
            let (parent, child) = traj.branch_states(t);
            let step = traj.branch_steps[t] - 1;
            let sigma = sched.sigma(step);
            let (_, c) = drift_coefficients(sigma, sched.dt(step), b.gamma);
            let inv = 1.0 / (DIM as f64 * b.gamma * b.gamma);
            // d logp / d mu = (child - mu) / (d gamma^2).
            let mut upstream = [scale * (child[0] - b.mu[0]) * inv, scale * (child[1] - b.mu[1]) * inv];
            if let Some(r) = reference {
                let mu_ref = crate::tree::transition_mean(r.params, parent, step, sched, b.gamma);
                let diff = [b.mu[0] - mu_ref[0], b.mu[1] - mu_ref[1]];
                traj_kl += 0.5 * (diff[0] * diff[0] + diff[1] * diff[1]) * inv;
                upstream[0] += r.coef / k * diff[0] * inv;
                upstream[1] += r.coef / k * diff[1] * inv;
            }
            if upstream != [0.0, 0.0] {
                velocity_backward(params, parent, sigma, [c * upstream[0], c * upstream[1]], grads);
            }
        }
        let penalty = reference.map_or(0.0, |r| r.coef * traj_kl / k);
        let contribution = -objective / k + penalty;
        if !contribution.is_finite() {
            return Err(Error::NonFiniteLoss { index: i });
        }
        loss += contribution;
        kl_penalty += penalty;
        ratios.push(ratio);
        cases.push(case);
    }
    if !grads.is_finite() {
        return Err(Error::NonFiniteLoss { index: batch.len() });
    }
    Ok(LossReport {
        loss,
        kl_penalty,
        counts: ClipCounts::from_cases(&cases),
        ratios,
        cases,
        degenerate: batch.degenerate,
    })
}

/// Within-group divergences between the Boltzmann target and the policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlDiagnostics {
    pub fkl: Kl,
    pub rkl: Kl,
    pub tv: f64,
    pub pinsker_ok: bool,
    /// `sum_i q_i (log q_i - log p_i)`.
    pub weighted_adv: f64,
}

pub fn kl_diagnostics(q: &FiniteDist, p: &FiniteDist) -> Result<KlDiagnostics> {
    let fkl = forward_kl(q, p)?;
    let rkl = forward_kl(p, q)?;
    let tv = total_variation(q, p)?;
    let weighted_adv = q
        .probs()
        .iter()
        .zip(p.probs())
        .filter(|(qi, _)| **qi > 0.0)
        .map(|(qi, pi)| qi * (qi.ln() - pi.ln()))
        .sum::<f64>();
    if let Kl::Finite(v) = fkl {
        debug_assert!((weighted_adv - v).abs() < 1e-10, "{weighted_adv} vs {v}");
    }
    Ok(KlDiagnostics {
        fkl,
        rkl,
        tv,
        pinsker_ok: tv <= (fkl.value() / 2.0).sqrt(),
        weighted_adv,
    })
}

impl GroupBatch {
    pub fn kl_diagnostics(&self) -> Result<KlDiagnostics> {
        kl_diagnostics(&self.q, &self.p)
    }
}
