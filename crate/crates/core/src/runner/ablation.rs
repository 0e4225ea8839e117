//! The four-variant ablation table: full TMPO, fixed `beta = 1`, no tree
//! and fixed branch positions, each over the same seeds and budget.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{Algorithm, RunConfig};
use super::output::{ensure_dir, Table};
use super::train::{initial_params, run_posttrain, Summary};
use crate::flow::PolicyParams;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    Full,
    FixedBeta,
    NoTree,
    FixedBranch,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::FixedBeta, Variant::NoTree, Variant::FixedBranch];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::FixedBeta => "fixed_beta",
            Variant::NoTree => "no_tree",
            Variant::FixedBranch => "fixed_branch",
        }
    }

    pub fn apply(self, base: &RunConfig) -> RunConfig {
        let mut cfg = base.clone();
        cfg.algorithm = Algorithm::Tmpo;
        match self {
            Variant::Full => {}
            Variant::FixedBeta => {
                cfg.beta_start = 1.0;
                cfg.beta_end = 1.0;
            }
            Variant::NoTree => cfg.no_tree = true,
            Variant::FixedBranch => cfg.fixed_branch = true,
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub seeds: usize,
    pub mean_reward: f64,
    pub fkl: f64,
    pub lgmd: f64,
    pub max_fraction: f64,
    pub rewarded_min_fraction: f64,
    pub velocity_evals_per_iteration: f64,
    pub velocity_evals_total: f64,
}

pub const ABLATION_HEADER: [&str; 9] = [
    "variant",
    "seeds",
    "mean_reward",
    "fkl",
    "lgmd",
    "max_fraction",
    "rewarded_min_fraction",
    "velocity_evals_per_iteration",
    "velocity_evals_total",
];

pub const ABLATION_RUNS_HEADER: [&str; 8] = [
    "variant",
    "seed",
    "mean_reward",
    "fkl",
    "lgmd",
    "max_fraction",
    "rewarded_min_fraction",
    "velocity_evals_total",
];

#[derive(Debug, Clone)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
    /// `(variant, summary)` per seed, in seed-major order.
    pub runs: Vec<(Variant, Summary)>,
}

impl AblationTable {
    pub fn summaries(&self, v: Variant) -> Vec<&Summary> {
        self.runs.iter().filter(|(w, _)| *w == v).map(|(_, s)| s).collect()
    }
}

/// Runs every variant for each seed from a shared per-seed pretrained
/// model. With `out`, writes `ablation.csv` (one row per variant, means
/// over seeds) and `ablation_runs.csv` (one row per variant and seed).
pub fn run_ablation_suite(base: &RunConfig, seeds: &[u64], out: Option<&Path>) -> Result<AblationTable> {
    base.validate()?;
    let mut inits = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let seeded = RunConfig { seed, ..base.clone() };
        inits.push((seed, initial_params(&seeded, None)?));
    }
    run_ablation_from(base, &inits, out)
}

/// As [`run_ablation_suite`], starting each seed from a given model.
pub fn run_ablation_from(base: &RunConfig, inits: &[(u64, PolicyParams)], out: Option<&Path>) -> Result<AblationTable> {
    base.validate()?;
    let mut runs = Vec::with_capacity(inits.len() * Variant::ALL.len());
    for (seed, init) in inits {
        let seeded = RunConfig {
            seed: *seed,
            ..base.clone()
        };
        for v in Variant::ALL {
            let run = run_posttrain(&v.apply(&seeded), init, None)?;
            runs.push((v, run.summary));
        }
    }

    let rows: Vec<AblationRow> = Variant::ALL
        .iter()
        .map(|&v| {
            let s: Vec<&Summary> = runs.iter().filter(|(w, _)| *w == v).map(|(_, s)| s).collect();
            let mean = |f: &dyn Fn(&Summary) -> f64| s.iter().map(|x| f(x)).sum::<f64>() / s.len() as f64;
            AblationRow {
                variant: v.name().into(),
                seeds: s.len(),
                mean_reward: mean(&|x| x.final_mean_reward),
                fkl: mean(&|x| x.final_fkl),
                lgmd: mean(&|x| x.final_lgmd),
                max_fraction: mean(&|x| x.final_max_fraction),
                rewarded_min_fraction: mean(&|x| x.final_rewarded_min_fraction),
                velocity_evals_per_iteration: mean(&|x| x.velocity_evals_per_iteration),
                velocity_evals_total: mean(&|x| x.velocity_evals_total as f64),
            }
        })
        .collect();

    if let Some(dir) = out {
        ensure_dir(dir)?;
        let mut t = Table::new(&ABLATION_HEADER)?;
        for r in &rows {
            t.row(&[
                r.variant.clone(),
                r.seeds.to_string(),
                r.mean_reward.to_string(),
                r.fkl.to_string(),
                r.lgmd.to_string(),
                r.max_fraction.to_string(),
                r.rewarded_min_fraction.to_string(),
                r.velocity_evals_per_iteration.to_string(),
                r.velocity_evals_total.to_string(),
            ])?;
        }
        t.finish(&dir.join("ablation.csv"))?;
        let mut t = Table::new(&ABLATION_RUNS_HEADER)?;
        for (v, s) in &runs {
            t.row(&[
                v.name().to_string(),
                s.seed.to_string(),
                s.final_mean_reward.to_string(),
                s.final_fkl.to_string(),
                s.final_lgmd.to_string(),
                s.final_max_fraction.to_string(),
                s.final_rewarded_min_fraction.to_string(),
                s.velocity_evals_total.to_string(),
            ])?;
        }
        t.finish(&dir.join("ablation_runs.csv"))?;
    }
    Ok(AblationTable { rows, runs })
}
