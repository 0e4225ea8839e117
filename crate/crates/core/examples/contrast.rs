//! TMPO vs GRPO on the default mixture over several seeds.
//!
//! `cargo run --release -p tmpo-core --example contrast -- [seeds] [key=value ...]`

use std::time::Instant;

use tmpo_core::flow::{load_params, save_params};
use tmpo_core::runner::{initial_params, run_posttrain, Algorithm, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let seeds: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(5);
    let overrides: Vec<String> = args.collect();
    let base = RunConfig::parse(&overrides.join("\n"))?;
    let start = Instant::now();
    for seed in 0..seeds {
        let cfg = RunConfig { seed, ..base.clone() };
        // CACHE=<dir> reuses pretrained checkpoints across invocations.
        let init = match std::env::var_os("CACHE") {
            Some(dir) => {
                let path =
                    std::path::Path::new(&dir).join(format!("seed{seed}_h{}_{}.tmpf", cfg.hidden, cfg.pretrain_steps));
                if path.exists() {
                    load_params(&path)?
                } else {
                    std::fs::create_dir_all(&dir)?;
                    let p = initial_params(&cfg, None)?;
                    save_params(&p, &path)?;
                    p
                }
            }
            None => initial_params(&cfg, None)?,
        };
        let algos: Vec<Algorithm> = match std::env::var("ALGOS").as_deref() {
            Ok("tmpo") => vec![Algorithm::Tmpo],
            Ok("grpo") => vec![Algorithm::Grpo],
            _ => vec![Algorithm::Tmpo, Algorithm::Grpo],
        };
        for algo in algos.iter().copied() {
            let run = run_posttrain(
                &RunConfig {
                    algorithm: algo,
                    ..cfg.clone()
                },
                &init,
                None,
            )?;
            if std::env::var_os("VERBOSE").is_some() {
                for e in &run.evals {
                    let fr: Vec<String> = e.fractions.iter().map(|f| format!("{f:.2}")).collect();
                    println!(
                        "    it {:4} reward {:.3} lgmd {:+.2} [{}]",
                        e.iteration,
                        e.mean_reward,
                        e.lgmd,
                        fr.join(" ")
                    );
                }
            }
            let s = &run.summary;
            let fr: Vec<String> = s.final_fractions.iter().map(|f| format!("{f:.3}")).collect();
            println!(
                "seed {seed} {:4} reward {:.4} lgmd {:+.3} rmax {:.3} rmin {:.3} fracs [{}] fkl {:.3}",
                s.algorithm,
                s.final_mean_reward,
                s.final_lgmd,
                s.final_rewarded_max_fraction,
                s.final_rewarded_min_fraction,
                fr.join(" "),
                s.final_fkl
            );
        }
    }
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
