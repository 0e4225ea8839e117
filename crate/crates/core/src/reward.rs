//! The toy environment: a 2-D Gaussian mixture with rewarded, non-rewarded
//! and rare modes, plus the reward field over terminal samples.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Vec2};

/// A 2x2 matrix stored row-major.
pub type Mat2 = [[f64; 2]; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub mean: Vec2,
    pub cov: Mat2,
    pub weight: f64,
    pub reward_value: f64,
}

impl Component {
    pub fn isotropic(mean: Vec2, var: f64, weight: f64, reward_value: f64) -> Self {
        Self {
            mean,
            cov: [[var, 0.0], [0.0, var]],
            weight,
            reward_value,
        }
    }

    /// Lower Cholesky factor, or `None` if the covariance is not SPD.
    pub fn cholesky(&self) -> Option<Mat2> {
        let [[a, b], [c, d]] = self.cov;
        if a <= 0.0 || (b - c).abs() > 1e-12 * (1.0 + b.abs()) {
            return None;
        }
        let l00 = a.sqrt();
        let l10 = b / l00;
        let rem = d - l10 * l10;
        if rem <= 0.0 {
            return None;
        }
        Some([[l00, 0.0], [l10, rem.sqrt()]])
    }

    /// `(x - mean)^T cov^{-1} (x - mean)`.
    pub fn mahalanobis_sq(&self, x: Vec2) -> f64 {
        let [[a, b], [_, d]] = self.cov;
        let det = a * d - b * b;
        let dx = x[0] - self.mean[0];
        let dy = x[1] - self.mean[1];
        (d * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    components: Vec<Component>,
    background_reward: f64,
}

impl MixtureSpec {
    pub fn new(components: Vec<Component>, background_reward: f64) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidInput("mixture has no components".into()));
        }
        if !(background_reward >= 0.0) || !background_reward.is_finite() {
            return Err(Error::InvalidInput(format!(
                "background reward must be >= 0, got {background_reward}"
            )));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("weights sum to {total}, not 1")));
        }
        for (i, c) in components.iter().enumerate() {
            if !(c.weight > 0.0) {
                return Err(Error::InvalidInput(format!("component {i}: weight must be > 0")));
            }
            if !(c.reward_value >= 0.0) || !c.reward_value.is_finite() {
                return Err(Error::InvalidInput(format!("component {i}: bad reward value")));
            }
            if !c.mean.iter().all(|m| m.is_finite()) {
                return Err(Error::InvalidInput(format!("component {i}: non-finite mean")));
            }
            if c.cholesky().is_none() {
                return Err(Error::InvalidInput(format!(
                    "component {i}: covariance is not symmetric positive-definite"
                )));
            }
        }
        if !components.iter().any(|c| c.reward_value > background_reward) {
            return Err(Error::InvalidInput("no rewarded component".into()));
        }
        if !components.iter().any(|c| c.reward_value == background_reward) {
            return Err(Error::InvalidInput("no non-reward component".into()));
        }
        Ok(Self {
            components,
            background_reward,
        })
    }

    /// The default toy landscape: five modes on a circle of radius 4 with
    /// isotropic variance 0.15. Modes 0-2 are rewarded at 1.0, mode 3 is a
    /// rare (weight 0.04) mode rewarded at 0.5 and mode 4 carries only the
    /// background reward 0.05.
    pub fn toy_default() -> Self {
        let radius = 4.0;
        let var = 0.15;
        let rewards = [1.0, 1.0, 1.0, 0.5, 0.05];
        let weights = [0.24, 0.24, 0.24, 0.04, 0.24];
        let components = (0..5)
            .map(|i| {
                let angle = std::f64::consts::TAU * i as f64 / 5.0;
                Component::isotropic(
                    [radius * angle.cos(), radius * angle.sin()],
                    var,
                    weights[i],
                    rewards[i],
                )
            })
            .collect();
        Self::new(components, 0.05).expect("default mixture is valid")
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn background_reward(&self) -> f64 {
        self.background_reward
    }

    /// Indices of components whose reward exceeds the background.
    pub fn rewarded(&self) -> Vec<usize> {
        self.components
            .iter()
            .enumerate()
            .filter(|(_, c)| c.reward_value > self.background_reward)
            .map(|(i, _)| i)
            .collect()
    }

    /// `R(x) = b + sum_c (r_c - b) exp(-0.5 (x - m_c)^T S_c^{-1} (x - m_c))`.
    pub fn reward(&self, x: Vec2) -> Result<f64> {
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite sample {x:?}")));
        }
        Ok(self.reward_unchecked(x))
    }

    pub(crate) fn reward_unchecked(&self, x: Vec2) -> f64 {
        let b = self.background_reward;
        b + self
            .components
            .iter()
            .map(|c| (c.reward_value - b) * (-0.5 * c.mahalanobis_sq(x)).exp())
            .sum::<f64>()
    }

    /// Draws `n` i.i.d. samples; the output is a pure function of `seed`.
    pub fn sample_data(&self, n: usize, seed: u64) -> Vec<Vec2> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(&mut rng, n)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<Vec2> {
        let picker =
            WeightedIndex::new(self.components.iter().map(|c| c.weight)).expect("weights validated at construction");
        let chols: Vec<Mat2> = self
            .components
            .iter()
            .map(|c| c.cholesky().expect("validated"))
            .collect();
        (0..n)
            .map(|_| {
                let i = picker.sample(rng);
                let z0: f64 = rng.sample(StandardNormal);
                let z1: f64 = rng.sample(StandardNormal);
                let l = chols[i];
                let m = self.components[i].mean;
                [m[0] + l[0][0] * z0, m[1] + l[1][0] * z0 + l[1][1] * z1]
            })
            .collect()
    }

    /// Index of the component whose mean is closest in Euclidean distance.
    pub fn nearest_component(&self, x: Vec2) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, c) in self.components.iter().enumerate() {
            let d = (x[0] - c.mean[0]).powi(2) + (x[1] - c.mean[1]).powi(2);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }
}

/// Raw group rewards and their within-group z-scores.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardReport {
    pub raw: Vec<f64>,
    pub zscored: Vec<f64>,
    /// Set when the group standard deviation fell below the guard.
    pub degenerate: bool,
}

pub const ZSCORE_EPS: f64 = 1e-8;

/// `(R_i - mean) / (std + 1e-8)` with the population standard deviation.
pub fn group_zscore(raw: &[f64]) -> Result<RewardReport> {
    if raw.len() < 2 {
        return Err(Error::InvalidInput("z-scoring needs at least 2 rewards".into()));
    }
    let n = raw.len() as f64;
    let mean = raw.iter().sum::<f64>() / n;
    let std = (raw.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
    let degenerate = std <= ZSCORE_EPS;
    let zscored = if degenerate {
        vec![0.0; raw.len()]
    } else {
        raw.iter().map(|r| (r - mean) / (std + ZSCORE_EPS)).collect()
    };
    Ok(RewardReport {
        raw: raw.to_vec(),
        zscored,
        degenerate,
    })
}
