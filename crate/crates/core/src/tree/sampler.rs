//! ODE/SDE transitions and the prefix-sharing rollout tree.
//!
//! A branch at 1-based step `s` replaces transition `s - 1` (from
//! `sigma_{s-1}` to `sigma_s`) by a Gaussian SDE transition with `B`
//! independent noise draws. A branch at step 1 would sit at `sigma = 1`,
//! where the noise magnitude is undefined; there the children are instead
//! started from `B` independent standard-normal seeds.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::NoiseSchedule;
use crate::flow::{velocity_unchecked, PolicyParams};
use crate::{Error, Result, Vec2};

/// Dimension of the sample space.
pub const DIM: usize = 2;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub fn ode_step(params: &PolicyParams, x: Vec2, k: usize, sched: &NoiseSchedule) -> Vec2 {
    let v = velocity_unchecked(params, x, sched.sigma(k));
    let dt = sched.dt(k);
    [x[0] + v[0] * dt, x[1] + v[1] * dt]
}

/// `gamma = eta * sqrt(sigma / (1 - sigma)) * sqrt(-dt)`.
pub fn noise_magnitude(sigma: f64, dt: f64, eta: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(Error::DegenerateNoiseLevel(sigma));
    }
    if !(dt < 0.0) {
        return Err(Error::InvalidInput(format!("time step must be negative, got {dt}")));
    }
    if !(eta >= 0.0) {
        return Err(Error::InvalidInput(format!("eta must be >= 0, got {eta}")));
    }
    Ok(eta * (sigma / (1.0 - sigma)).sqrt() * (-dt).sqrt())
}

/// Coefficients `(a, c)` of the corrected drift `mu = a x + c v`.
pub fn drift_coefficients(sigma: f64, dt: f64, gamma: f64) -> (f64, f64) {
    let g2 = gamma * gamma;
    (
        1.0 + g2 * dt / (2.0 * sigma),
        (1.0 + g2 * (1.0 - sigma) / (2.0 * sigma)) * dt,
    )
}

/// Drift of the SDE transition `k` for noise magnitude `gamma`.
pub fn transition_mean(params: &PolicyParams, x: Vec2, k: usize, sched: &NoiseSchedule, gamma: f64) -> Vec2 {
    let sigma = sched.sigma(k);
    let (a, c) = drift_coefficients(sigma, sched.dt(k), gamma);
    let v = velocity_unchecked(params, x, sigma);
    [a * x[0] + c * v[0], a * x[1] + c * v[1]]
}

/// Per-dimension mean Gaussian log-density of `x` under `N(mu, gamma^2 I)`.
pub fn gaussian_logp_mean(x: Vec2, mu: Vec2, gamma: f64) -> f64 {
    let g2 = gamma * gamma;
    let sq = (x[0] - mu[0]).powi(2) + (x[1] - mu[1]).powi(2);
    (-sq / (2.0 * g2) - 0.5 * DIM as f64 * (LN_2PI + g2.ln())) / DIM as f64
}

/// Output of one stochastic transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdeStep {
    pub child: Vec2,
    pub logp_mean: f64,
    pub mu: Vec2,
    pub gamma: f64,
}

pub fn sde_branch_step(
    params: &PolicyParams,
    x: Vec2,
    k: usize,
    sched: &NoiseSchedule,
    eta: f64,
    eps: Vec2,
) -> Result<SdeStep> {
    if k >= sched.steps() {
        return Err(Error::InvalidInput(format!("step index {k} out of range")));
    }
    let gamma = noise_magnitude(sched.sigma(k), sched.dt(k), eta)?;
    if !(gamma > 0.0) {
        return Err(Error::InvalidInput(format!("noise magnitude must be > 0, got {gamma}")));
    }
    let mu = transition_mean(params, x, k, sched, gamma);
    let child = [mu[0] + gamma * eps[0], mu[1] + gamma * eps[1]];
    Ok(SdeStep {
        child,
        logp_mean: gaussian_logp_mean(child, mu, gamma),
        mu,
        gamma,
    })
}

/// Pure-ODE terminal sample from starting noise `x1`.
pub fn ode_terminal(params: &PolicyParams, x1: Vec2, sched: &NoiseSchedule) -> Vec2 {
    (0..sched.steps()).fold(x1, |x, k| ode_step(params, x, k, sched))
}

/// `n` pure-ODE samples from fresh standard-normal starts.
pub fn sample_ode<R: Rng + ?Sized>(params: &PolicyParams, sched: &NoiseSchedule, n: usize, rng: &mut R) -> Vec<Vec2> {
    (0..n)
        .map(|_| ode_terminal(params, standard_normal(rng), sched))
        .collect()
}

pub(crate) fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Vec2 {
    [rng.sample(StandardNormal), rng.sample(StandardNormal)]
}

/// How the tree branches: strictly increasing 1-based steps inside
/// `[1, S - 1]`, branching factor and per-layer noise coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutConfig {
    pub branch_steps: Vec<usize>,
    pub branching: usize,
    pub eta: Vec<f64>,
}

impl RolloutConfig {
    pub fn new(branch_steps: Vec<usize>, branching: usize, eta: f64) -> Self {
        let t = branch_steps.len();
        Self {
            branch_steps,
            branching,
            eta: vec![eta; t],
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.branching.pow(self.branch_steps.len() as u32)
    }

    pub fn validate(&self, sched: &NoiseSchedule) -> Result<()> {
        let s_count = sched.steps();
        if self.branch_steps.is_empty() {
            return Err(Error::InvalidInput("no branch steps".into()));
        }
        if self.branching < 1 {
            return Err(Error::InvalidInput("branching factor must be >= 1".into()));
        }
        if self.eta.len() != self.branch_steps.len() {
            return Err(Error::LengthMismatch {
                expected: self.branch_steps.len(),
                got: self.eta.len(),
            });
        }
        if self.branch_steps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(format!(
                "branch steps must strictly increase: {:?}",
                self.branch_steps
            )));
        }
        if self.branch_steps.iter().any(|&s| s == 0 || s >= s_count) {
            return Err(Error::InvalidInput(format!(
                "branch steps {:?} must lie strictly inside (0, {s_count})",
                self.branch_steps
            )));
        }
        Ok(())
    }

    fn root_seeded(&self) -> bool {
        self.branch_steps[0] == 1
    }
}

/// Number of velocity evaluations needed by a tree: every node runs the
/// ODE segment up to its next branch, plus one drift evaluation per
/// SDE branch (shared by its children).
pub fn analytic_eval_count(branch_steps: &[usize], branching: usize, total_steps: usize) -> usize {
    let mut nodes = 1usize;
    let mut pos = 0usize;
    let mut evals = 0usize;
    for (t, &s) in branch_steps.iter().enumerate() {
        if t == 0 && s == 1 {
            nodes *= branching;
            continue;
        }
        evals += nodes * (s - 1 - pos) + nodes;
        nodes *= branching;
        pos = s;
    }
    evals + nodes * (total_steps - pos)
}

/// One root-to-leaf path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// 1-based steps of the stochastic transitions.
    pub branch_steps: Vec<usize>,
    /// Child index taken at each branch.
    pub choices: Vec<usize>,
    /// Standard-normal draw used at each branch (the seed itself for a
    /// step-1 branch).
    pub noises: Vec<Vec2>,
    /// Noise magnitude per branch (1 for a seeded start).
    pub gammas: Vec<f64>,
    /// States at `sigma_0, ..., sigma_S`.
    pub states: Vec<Vec2>,
    pub terminal: Vec2,
    /// Per-dimension mean log-probabilities of the stochastic transitions.
    pub step_logps: Vec<f64>,
    pub logp_total: f64,
    pub root_seeded: bool,
}

impl Trajectory {
    /// Whether branch `t` is a policy-dependent SDE transition.
    pub fn is_sde_branch(&self, t: usize) -> bool {
        !(t == 0 && self.root_seeded)
    }

    /// `(parent, child)` states around branch `t`.
    pub fn branch_states(&self, t: usize) -> (Vec2, Vec2) {
        let s = self.branch_steps[t];
        (self.states[s - 1], self.states[s])
    }
}

/// A tree of `B^T` leaves grown from one root noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutTree {
    pub root: Vec2,
    pub config: RolloutConfig,
    pub leaves: Vec<Trajectory>,
    pub velocity_evals: usize,
}

struct Node {
    states: Vec<Vec2>,
    pos: usize,
    choices: Vec<usize>,
    noises: Vec<Vec2>,
    gammas: Vec<f64>,
    logps: Vec<f64>,
}

struct Grower<'a, R: Rng + ?Sized> {
    params: &'a PolicyParams,
    sched: &'a NoiseSchedule,
    cfg: &'a RolloutConfig,
    rng: &'a mut R,
    evals: usize,
    leaves: Vec<Trajectory>,
}

impl<R: Rng + ?Sized> Grower<'_, R> {
    fn advance(&mut self, node: &mut Node, to: usize) {
        while node.pos < to {
            let x = *node.states.last().expect("non-empty path");
            let next = ode_step(self.params, x, node.pos, self.sched);
            self.evals += 1;
            node.states.push(next);
            node.pos += 1;
        }
    }

    fn grow(&mut self, mut node: Node, level: usize) -> Result<()> {
        let steps = &self.cfg.branch_steps;
        if level == steps.len() {
            self.advance(&mut node, self.sched.steps());
            let logp_total = node.logps.iter().sum();
            self.leaves.push(Trajectory {
                branch_steps: steps.clone(),
                choices: node.choices,
                noises: node.noises,
                gammas: node.gammas,
                terminal: *node.states.last().expect("non-empty path"),
                states: node.states,
                step_logps: node.logps,
                logp_total,
                root_seeded: self.cfg.root_seeded(),
            });
            return Ok(());
        }
        let s = steps[level];
        let eta = self.cfg.eta[level];
        let branching = self.cfg.branching;

        if level == 0 && s == 1 {
            // Independent seeds replace the branch at sigma = 1.
            let root = node.states[0];
            for b in 0..branching {
                let seed = if eta == 0.0 { root } else { standard_normal(self.rng) };
                let child = Node {
                    states: vec![seed],
                    pos: 0,
                    choices: vec![b],
                    noises: vec![seed],
                    gammas: vec![1.0],
                    logps: vec![gaussian_logp_mean(seed, [0.0, 0.0], 1.0)],
                };
                self.grow(child, level + 1)?;
            }
            return Ok(());
        }

        let k = s - 1;
        self.advance(&mut node, k);
        let x = *node.states.last().expect("non-empty path");
        let gamma = noise_magnitude(self.sched.sigma(k), self.sched.dt(k), eta)?;
        let mu = transition_mean(self.params, x, k, self.sched, gamma);
        self.evals += 1;
        for b in 0..branching {
            let eps = standard_normal(self.rng);
            // eta = 0 is a diagnostic mode: the transition collapses onto the drift.
            let (child, logp) = if gamma > 0.0 {
                let c = [mu[0] + gamma * eps[0], mu[1] + gamma * eps[1]];
                (c, gaussian_logp_mean(c, mu, gamma))
            } else {
                (mu, 0.0)
            };
            let mut states = node.states.clone();
            states.push(child);
            let extend = |v: &Vec<f64>, x: f64| {
                let mut v = v.clone();
                v.push(x);
                v
            };
            let mut choices = node.choices.clone();
            choices.push(b);
            let mut noises = node.noises.clone();
            noises.push(eps);
            self.grow(
                Node {
                    states,
                    pos: s,
                    choices,
                    noises,
                    gammas: extend(&node.gammas, gamma),
                    logps: extend(&node.logps, logp),
                },
                level + 1,
            )?;
        }
        Ok(())
    }
}

/// Grows a full tree from a fresh root noise. Leaves are ordered
/// lexicographically by their branch choices.
pub fn rollout_tree<R: Rng + ?Sized>(
    params: &PolicyParams,
    sched: &NoiseSchedule,
    cfg: &RolloutConfig,
    rng: &mut R,
) -> Result<RolloutTree> {
    let root = standard_normal(rng);
    rollout_tree_from(params, sched, cfg, root, rng)
}

pub fn rollout_tree_from<R: Rng + ?Sized>(
    params: &PolicyParams,
    sched: &NoiseSchedule,
    cfg: &RolloutConfig,
    root: Vec2,
    rng: &mut R,
) -> Result<RolloutTree> {
    cfg.validate(sched)?;
    let mut grower = Grower {
        params,
        sched,
        cfg,
        rng,
        evals: 0,
        leaves: Vec::with_capacity(cfg.leaf_count()),
    };
    let start = Node {
        states: vec![root],
        pos: 0,
        choices: Vec::new(),
        noises: Vec::new(),
        gammas: Vec::new(),
        logps: Vec::new(),
    };
    grower.grow(start, 0)?;
    Ok(RolloutTree {
        root,
        config: cfg.clone(),
        velocity_evals: grower.evals,
        leaves: grower.leaves,
    })
}

/// `count` independent single-path rollouts with the same branch steps
/// (the no-tree ablation). Returns the trajectories and the number of
/// velocity evaluations spent.
pub fn rollout_independent<R: Rng + ?Sized>(
    params: &PolicyParams,
    sched: &NoiseSchedule,
    cfg: &RolloutConfig,
    count: usize,
    rng: &mut R,
) -> Result<(Vec<Trajectory>, usize)> {
    let single = RolloutConfig {
        branching: 1,
        ..cfg.clone()
    };
    let mut trajectories = Vec::with_capacity(count);
    let mut evals = 0;
    for _ in 0..count {
        let tree = rollout_tree(params, sched, &single, rng)?;
        evals += tree.velocity_evals;
        trajectories.extend(tree.leaves);
    }
    Ok((trajectories, evals))
}

/// Drift and log-probability of one recorded branch under some params.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchReplay {
    pub logp: f64,
    pub mu: Vec2,
    pub gamma: f64,
    /// False for a seeded start, which does not depend on the policy.
    pub policy_dependent: bool,
}

pub fn replay_branches(params: &PolicyParams, traj: &Trajectory, sched: &NoiseSchedule) -> Result<Vec<BranchReplay>> {
    if traj.states.len() != sched.steps() + 1 {
        return Err(Error::LengthMismatch {
            expected: sched.steps() + 1,
            got: traj.states.len(),
        });
    }
    let t = traj.branch_steps.len();
    if traj.gammas.len() != t || traj.step_logps.len() != t {
        return Err(Error::LengthMismatch {
            expected: t,
            got: traj.gammas.len().min(traj.step_logps.len()),
        });
    }
    (0..t)
        .map(|i| {
            let (parent, child) = traj.branch_states(i);
            if !traj.is_sde_branch(i) {
                // A seeded start is the path's first state.
                return Ok(BranchReplay {
                    logp: gaussian_logp_mean(traj.states[0], [0.0, 0.0], 1.0),
                    mu: [0.0, 0.0],
                    gamma: 1.0,
                    policy_dependent: false,
                });
            }
            let gamma = traj.gammas[i];
            if !(gamma > 0.0) {
                return Err(Error::InvalidInput(format!("branch {i} has gamma {gamma}")));
            }
            let k = traj.branch_steps[i] - 1;
            let mu = transition_mean(params, parent, k, sched, gamma);
            Ok(BranchReplay {
                logp: gaussian_logp_mean(child, mu, gamma),
                mu,
                gamma,
                policy_dependent: true,
            })
        })
        .collect()
}

/// Per-branch log-probabilities of the recorded transitions under `params`.
pub fn replay_logp(params: &PolicyParams, traj: &Trajectory, sched: &NoiseSchedule) -> Result<Vec<f64>> {
    Ok(replay_branches(params, traj, sched)?
        .into_iter()
        .map(|b| b.logp)
        .collect())
}

/// Re-runs the recorded noises through `params` and returns the terminal.
pub fn replay_terminal(params: &PolicyParams, traj: &Trajectory, sched: &NoiseSchedule) -> Vec2 {
    let mut x = traj.states[0];
    let mut branch = 0;
    for k in 0..sched.steps() {
        let step = k + 1;
        if branch < traj.branch_steps.len() && traj.branch_steps[branch] == step {
            if traj.is_sde_branch(branch) {
                let gamma = traj.gammas[branch];
                let mu = transition_mean(params, x, k, sched, gamma);
                let eps = traj.noises[branch];
                x = [mu[0] + gamma * eps[0], mu[1] + gamma * eps[1]];
                branch += 1;
                continue;
            }
            branch += 1;
        }
        x = ode_step(params, x, k, sched);
    }
    x
}
