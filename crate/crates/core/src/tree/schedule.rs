use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Noise levels `sigma_0 = 1 > sigma_1 > ... > sigma_S = 0`.
///
/// Transition `k` (0-based) moves from `sigma_k` to `sigma_{k+1}`; the
/// 1-based *step* `s` used by branch schedules is transition `s - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    sigmas: Vec<f64>,
}

impl NoiseSchedule {
    pub fn new(sigmas: Vec<f64>) -> Result<Self> {
        if sigmas.len() < 2 {
            return Err(Error::InvalidInput("noise schedule needs at least one step".into()));
        }
        if sigmas[0] != 1.0 || *sigmas.last().expect("non-empty") != 0.0 {
            return Err(Error::InvalidInput("noise schedule must run from 1 to 0".into()));
        }
        if sigmas.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::InvalidInput("noise schedule must strictly decrease".into()));
        }
        Ok(Self { sigmas })
    }

    /// `sigma_k = 1 - k / steps`.
    pub fn linear(steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidInput("zero denoising steps".into()));
        }
        let mut sigmas: Vec<f64> = (0..=steps).map(|k| 1.0 - k as f64 / steps as f64).collect();
        sigmas[steps] = 0.0;
        Self::new(sigmas)
    }

    pub fn steps(&self) -> usize {
        self.sigmas.len() - 1
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn sigma(&self, k: usize) -> f64 {
        self.sigmas[k]
    }

    /// `sigma_{k+1} - sigma_k`, always negative.
    pub fn dt(&self, k: usize) -> f64 {
        self.sigmas[k + 1] - self.sigmas[k]
    }
}

/// Curriculum-guided, Beta-perturbed branch positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSchedule {
    pub early: Vec<usize>,
    pub late: Vec<usize>,
    pub kappa: f64,
    pub s_min: usize,
    pub s_max: usize,
    /// Normalised training progress in `[0, 1]`.
    pub progress: f64,
    pub branching_factor: usize,
}

/// Clamp for the normalised curriculum mean so both Beta shapes stay positive.
pub const MEAN_CLAMP: f64 = 1e-3;

impl BranchSchedule {
    /// Defaults for a 6-step horizon: early `(1, 2, 3)`, late `(1, 3, 5)`,
    /// `kappa = 6`, three children per branch.
    pub fn default_for(steps: usize) -> Self {
        Self {
            early: vec![1, 2, 3],
            late: vec![1, 3, 5],
            kappa: 6.0,
            s_min: 1,
            s_max: steps.saturating_sub(1).max(1),
            progress: 0.0,
            branching_factor: 3,
        }
    }

    pub fn branch_count(&self) -> usize {
        self.early.len()
    }

    /// `B^T`, the number of leaves in one tree.
    pub fn leaf_count(&self) -> usize {
        self.branching_factor.pow(self.branch_count() as u32)
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.early.len();
        if t == 0 || self.late.len() != t {
            return Err(Error::InvalidInput(
                "early and late positions must be non-empty and of equal length".into(),
            ));
        }
        if self.branching_factor < 2 {
            return Err(Error::InvalidInput("branching factor must be >= 2".into()));
        }
        if self.s_max <= self.s_min {
            return Err(Error::InvalidInput(format!(
                "s_max ({}) must exceed s_min ({})",
                self.s_max, self.s_min
            )));
        }
        if self.s_max - self.s_min + 1 < t {
            return Err(Error::InvalidInput(format!(
                "{t} distinct branch steps do not fit in [{}, {}]",
                self.s_min, self.s_max
            )));
        }
        if !(self.kappa > 0.0) {
            return Err(Error::InvalidInput("kappa must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.progress) {
            return Err(Error::InvalidInput("progress must lie in [0, 1]".into()));
        }
        let out = |s: &usize| *s < self.s_min || *s > self.s_max;
        if self.early.iter().chain(&self.late).any(out) {
            return Err(Error::InvalidInput("curriculum position outside [s_min, s_max]".into()));
        }
        Ok(())
    }

    pub fn set_progress(&mut self, step: usize, total: usize) {
        self.progress = if total == 0 {
            1.0
        } else {
            (step as f64 / total as f64).clamp(0.0, 1.0)
        };
    }

    /// `mu_i(p) = e_i + (l_i - e_i) p`.
    pub fn curriculum_means(&self) -> Vec<f64> {
        self.early
            .iter()
            .zip(&self.late)
            .map(|(&e, &l)| e as f64 + (l as f64 - e as f64) * self.progress)
            .collect()
    }

    /// Curriculum means mapped to `(0, 1)` and clamped away from the ends.
    pub fn normalized_means(&self) -> Vec<f64> {
        let span = (self.s_max - self.s_min) as f64;
        self.curriculum_means()
            .into_iter()
            .map(|m| ((m - self.s_min as f64) / span).clamp(MEAN_CLAMP, 1.0 - MEAN_CLAMP))
            .collect()
    }

    /// `floor(s_min + (s_max - s_min) xi + 0.5)`.
    pub fn to_step(&self, xi: f64) -> usize {
        let span = (self.s_max - self.s_min) as f64;
        let s = (self.s_min as f64 + span * xi + 0.5).floor() as usize;
        s.clamp(self.s_min, self.s_max)
    }

    /// Draws Beta-perturbed positions and returns them sorted. Duplicates
    /// are possible; see [`resolve_collisions`].
    pub fn sample_branch_steps<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<usize>> {
        self.validate()?;
        let mut steps = self
            .normalized_means()
            .into_iter()
            .map(|m| sample_xi(m, self.kappa, rng).map(|xi| self.to_step(xi)))
            .collect::<Result<Vec<_>>>()?;
        steps.sort_unstable();
        Ok(steps)
    }

    /// Rounded curriculum means without the Beta perturbation.
    pub fn deterministic_steps(&self) -> Vec<usize> {
        let mut steps: Vec<usize> = self
            .curriculum_means()
            .into_iter()
            .map(|m| ((m + 0.5).floor() as usize).clamp(self.s_min, self.s_max))
            .collect();
        steps.sort_unstable();
        steps
    }
}

/// `xi ~ Beta(mean * kappa, (1 - mean) * kappa)`.
pub fn sample_xi<R: Rng + ?Sized>(mean: f64, kappa: f64, rng: &mut R) -> Result<f64> {
    let beta = Beta::new(mean * kappa, (1.0 - mean) * kappa)
        .map_err(|e| Error::InvalidInput(format!("beta parameters: {e}")))?;
    Ok(beta.sample(rng))
}

/// Makes sorted branch steps strictly increasing: a collision pushes the
/// later step up by one; steps pushed past `s_max` are packed back down
/// from the top.
pub fn resolve_collisions(sorted: &[usize], s_min: usize, s_max: usize) -> Result<Vec<usize>> {
    let t = sorted.len();
    if t == 0 {
        return Ok(Vec::new());
    }
    if s_max < s_min || s_max - s_min + 1 < t {
        return Err(Error::InvalidInput(format!(
            "{t} distinct steps do not fit in [{s_min}, {s_max}]"
        )));
    }
    let mut out: Vec<usize> = sorted.iter().map(|s| (*s).clamp(s_min, s_max)).collect();
    out.sort_unstable();
    for i in 1..t {
        if out[i] <= out[i - 1] {
            out[i] = out[i - 1] + 1;
        }
    }
    for i in (0..t).rev() {
        let ceiling = s_max - (t - 1 - i);
        if out[i] > ceiling {
            out[i] = ceiling;
        }
    }
    Ok(out)
}
