//! Exact probability primitives over a finite group of K atoms.
//!
//! All logarithms are natural. Softmax is evaluated with max-subtraction,
//! which is an exact algebraic rewrite (the shift cancels between numerator
//! and denominator), not an approximation.

use crate::{Error, Result};

const SUM_TOL: f64 = 1e-12;

/// A probability vector over `K >= 2` atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDist {
    probs: Vec<f64>,
}

impl FiniteDist {
    /// Wraps `probs`, which must already be a valid distribution.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidDistribution(format!(
                "need at least 2 atoms, got {}",
                probs.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidDistribution(format!("bad entry {p}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidDistribution(format!("entries sum to {sum}")));
        }
        Ok(Self { probs })
    }

    /// Normalises non-negative weights into a distribution.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidDistribution(format!("weights sum to {total}")));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    /// `softmax(logits)`; the logits may carry any additive constant.
    pub fn softmax(logits: &[f64]) -> Result<Self> {
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::InvalidInput("non-finite logit".into()));
        }
        Self::new(softmax(logits))
    }

    pub fn uniform(k: usize) -> Result<Self> {
        Self::new(vec![1.0 / k as f64; k])
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Rewards of one group together with the inverse temperature `beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardVec {
    rewards: Vec<f64>,
    beta: f64,
}

impl RewardVec {
    /// Training constructor: `beta > 0` and all rewards finite.
    pub fn new(rewards: Vec<f64>, beta: f64) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::InvalidReward(format!("beta must be > 0, got {beta}")));
        }
        Self::diagnostic(rewards, beta)
    }

    /// Diagnostic constructor that also admits `beta = 0` (uniform target).
    pub fn diagnostic(rewards: Vec<f64>, beta: f64) -> Result<Self> {
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(Error::InvalidReward(format!("beta must be >= 0, got {beta}")));
        }
        if let Some(r) = rewards.iter().find(|r| !r.is_finite()) {
            return Err(Error::InvalidReward(format!("non-finite reward {r}")));
        }
        if rewards.len() < 2 {
            return Err(Error::InvalidReward("need at least 2 rewards".into()));
        }
        Ok(Self { rewards, beta })
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// `beta * R_i` for every atom.
    pub fn scaled(&self) -> Vec<f64> {
        self.rewards.iter().map(|r| self.beta * r).collect()
    }
}

/// Result of a KL evaluation. A dropped mode (`q_i > 0` where `p_i = 0`) is
/// kept apart from large finite values so it cannot leak into gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kl {
    Finite(f64),
    ModeDropped,
}

impl Kl {
    /// The divergence as a real number, `+inf` for a dropped mode.
    pub fn value(self) -> f64 {
        match self {
            Kl::Finite(v) => v,
            Kl::ModeDropped => f64::INFINITY,
        }
    }

    pub fn is_mode_dropped(self) -> bool {
        matches!(self, Kl::ModeDropped)
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Kl::Finite(v) => Some(v),
            Kl::ModeDropped => None,
        }
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub fn log_softmax(xs: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(xs);
    xs.iter().map(|x| x - lse).collect()
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Within-group Boltzmann target `q_i = exp(beta R_i) / sum_j exp(beta R_j)`.
pub fn boltzmann_target(r: &RewardVec) -> FiniteDist {
    FiniteDist {
        probs: softmax(&r.scaled()),
    }
}

fn check_len(q: &FiniteDist, p: &FiniteDist) -> Result<()> {
    if q.len() != p.len() {
        return Err(Error::LengthMismatch {
            expected: q.len(),
            got: p.len(),
        });
    }
    Ok(())
}

/// `KL(q || p) = sum_i q_i log(q_i / p_i)` with `0 log 0 = 0`.
pub fn forward_kl(q: &FiniteDist, p: &FiniteDist) -> Result<Kl> {
    check_len(q, p)?;
    let mut total = 0.0;
    for (&qi, &pi) in q.probs.iter().zip(&p.probs) {
        if qi == 0.0 {
            continue;
        }
        if pi == 0.0 {
            return Ok(Kl::ModeDropped);
        }
        total += qi * (qi.ln() - pi.ln());
    }
    // Rounding can push an exact zero a hair below it.
    Ok(Kl::Finite(total.max(0.0)))
}

/// `TV(q, p) = 0.5 * sum_i |q_i - p_i|`.
pub fn total_variation(q: &FiniteDist, p: &FiniteDist) -> Result<f64> {
    check_len(q, p)?;
    Ok(0.5 * q.probs.iter().zip(&p.probs).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Shannon entropy in nats.
pub fn entropy(p: &FiniteDist) -> f64 {
    -p.probs.iter().filter(|&&x| x > 0.0).map(|x| x * x.ln()).sum::<f64>()
}

/// Both sides of `E_p[beta R] = -KL(p || q) - H(p) + log sum_j exp(beta R_j)`
/// where `q` is the Boltzmann target of `r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
}

pub fn reverse_kl_identity_check(p: &FiniteDist, r: &RewardVec) -> Result<IdentityCheck> {
    if p.len() != r.len() {
        return Err(Error::LengthMismatch {
            expected: r.len(),
            got: p.len(),
        });
    }
    let scaled = r.scaled();
    let q = boltzmann_target(r);
    let lhs: f64 = p.probs.iter().zip(&scaled).map(|(pi, s)| pi * s).sum();
    // q has full support, so KL(p || q) is always finite.
    let rkl = forward_kl(p, &q)?.value();
    let rhs = -rkl - entropy(p) + log_sum_exp(&scaled);
    Ok(IdentityCheck {
        lhs,
        rhs,
        gap: (lhs - rhs).abs(),
    })
}
