//! `tmpo`: pretrain, post-train (TMPO or GRPO), ablate and self-check the
//! toy 2-D flow model.
//!
//! Exit codes: 0 success, 1 validation error, 2 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tmpo_core::checks;
use tmpo_core::runner::{initial_params, run_ablation_suite, run_posttrain, run_pretrain, Algorithm, RunConfig};
use tmpo_core::Error;

#[derive(Parser)]
#[command(name = "tmpo", version, about = "Softmax trajectory balance on a toy 2-D flow model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pretrain the velocity field on the mixture and write a checkpoint.
    Pretrain(Common),
    /// Post-train from a checkpoint (or a fresh pretraining run).
    Posttrain {
        #[command(flatten)]
        common: Common,
        /// Overrides the config's algorithm (tmpo | grpo).
        #[arg(long)]
        algorithm: Option<Algorithm>,
    },
    /// Run the four ablation variants over several seeds.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Number of consecutive seeds starting at the config seed.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
    },
    /// Run the invariant suite.
    Check,
}

#[derive(Args)]
struct Common {
    /// Flat key = value config file; defaults are used for absent keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn load(&self) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

fn save_config(cfg: &RunConfig, out: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("config.toml"), cfg.to_text())?;
    Ok(())
}

fn run(cli: Cli) -> Result<bool, Error> {
    match cli.command {
        Command::Pretrain(common) => {
            let cfg = common.load()?;
            save_config(&cfg, &common.out)?;
            let run = run_pretrain(&cfg, Some(&common.out))?;
            println!(
                "pretrain: loss {:.4} -> {:.4}; occupancy {:?}",
                run.initial_loss, run.final_loss, run.occupancy.fractions
            );
            println!("wrote {}", common.out.display());
        }
        Command::Posttrain { common, algorithm } => {
            let mut cfg = common.load()?;
            if let Some(a) = algorithm {
                cfg.algorithm = a;
            }
            cfg.validate()?;
            save_config(&cfg, &common.out)?;
            let init = initial_params(&cfg, Some(&common.out.join("pretrain")))?;
            let run = run_posttrain(&cfg, &init, Some(&common.out))?;
            let s = &run.summary;
            println!(
                "{}: reward {:.4}, lgmd {:.3}, cosine {:.3}, max mode fraction {:.3}, rewarded min {:.3}",
                s.algorithm,
                s.final_mean_reward,
                s.final_lgmd,
                s.final_cosine_diversity,
                s.final_max_fraction,
                s.final_rewarded_min_fraction
            );
            println!(
                "cost: {} velocity evaluations in rollouts ({:.0} per iteration)",
                s.velocity_evals_total, s.velocity_evals_per_iteration
            );
            println!("wrote {}", common.out.display());
        }
        Command::Ablate { common, seeds } => {
            let cfg = common.load()?;
            if seeds == 0 {
                return Err(Error::Config("--seeds must be >= 1".into()));
            }
            save_config(&cfg, &common.out)?;
            let seed_list: Vec<u64> = (cfg.seed..cfg.seed + seeds).collect();
            let table = run_ablation_suite(&cfg, &seed_list, Some(&common.out))?;
            println!("variant       reward   fkl      lgmd     max_frac evals/iter");
            for r in &table.rows {
                println!(
                    "{:<13} {:.4}   {:.4}   {:+.4}  {:.3}    {:.0}",
                    r.variant, r.mean_reward, r.fkl, r.lgmd, r.max_fraction, r.velocity_evals_per_iteration
                );
            }
            println!("wrote {}", common.out.join("ablation.csv").display());
        }
        Command::Check => {
            let mut all = true;
            for c in checks::run_all()? {
                println!("[{}] {}: {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail);
                all &= c.passed;
            }
            return Ok(all);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
