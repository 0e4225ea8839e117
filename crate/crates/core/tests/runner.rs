use std::fs;
use std::path::Path;

use tmpo_core::flow::encode_params;
use tmpo_core::runner::{
    eval_log_header, run_ablation_suite, run_posttrain, run_pretrain, Algorithm, RunConfig, ABLATION_HEADER,
    CHECKPOINT_FILE, TRAIN_LOG_HEADER,
};

fn tiny() -> RunConfig {
    RunConfig {
        hidden: 12,
        pretrain_steps: 150,
        pretrain_batch: 64,
        iterations: 6,
        trees: 2,
        eval_interval: 3,
        eval_samples: 120,
        eval_steps: 8,
        ..RunConfig::default()
    }
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn default_pretraining_covers_every_component() {
    let run = run_pretrain(&RunConfig::default(), None).unwrap();
    assert!(run.final_loss < run.initial_loss);
    let min = run.occupancy.fractions.iter().cloned().fold(1.0, f64::min);
    assert!(min >= 0.01, "occupancy {:?}", run.occupancy.fractions);
}

#[test]
fn same_seed_gives_identical_checkpoint_bytes() {
    let cfg = tiny();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run_pretrain(&cfg, Some(a.path())).unwrap();
    run_pretrain(&cfg, Some(b.path())).unwrap();
    let bytes = fs::read(a.path().join(CHECKPOINT_FILE)).unwrap();
    assert_eq!(bytes, fs::read(b.path().join(CHECKPOINT_FILE)).unwrap());
    assert_eq!(bytes, encode_params(&ra.params));

    let other = run_pretrain(&RunConfig { seed: 1, ..cfg }, None).unwrap();
    assert_ne!(encode_params(&other.params), bytes);
}

#[test]
fn missing_output_directory_is_created() {
    let root = tempfile::tempdir().unwrap();
    let out = root.path().join("a/b/c");
    run_pretrain(&tiny(), Some(&out)).unwrap();
    assert!(out.join(CHECKPOINT_FILE).is_file());
    assert_eq!(header(&out.join("pretrain_loss.csv")), "step,loss");
    assert!(out.join("pretrain_occupancy.json").is_file());
}

#[test]
fn posttrain_outputs_are_byte_identical_across_runs() {
    let cfg = tiny();
    let init = run_pretrain(&cfg, None).unwrap().params;
    for algorithm in [Algorithm::Tmpo, Algorithm::Grpo] {
        let cfg = RunConfig {
            algorithm,
            ..cfg.clone()
        };
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run_posttrain(&cfg, &init, Some(a.path())).unwrap();
        run_posttrain(&cfg, &init, Some(b.path())).unwrap();
        let fa = files(a.path());
        assert_eq!(fa, files(b.path()));
        let names: Vec<&str> = fa.iter().map(|(n, _)| n.as_str()).collect();
        for want in [
            "train_log.csv",
            "eval_log.csv",
            "summary.json",
            "samples_pretrained.csv",
            "samples_final.csv",
            "samples_pretrained.svg",
        ] {
            assert!(names.contains(&want), "{want} missing from {names:?}");
        }
        let svg = format!("samples_final_{}.svg", algorithm.as_str());
        assert!(names.contains(&svg.as_str()));
        assert_eq!(header(&a.path().join("train_log.csv")), TRAIN_LOG_HEADER.join(","));
        assert_eq!(header(&a.path().join("eval_log.csv")), eval_log_header(5).join(","));
        assert_eq!(header(&a.path().join("samples_final.csv")), "x,y,assigned_mode");
    }
}

#[test]
fn posttrain_logs_every_iteration_and_counts_work() {
    let cfg = tiny();
    let init = run_pretrain(&cfg, None).unwrap().params;
    let run = run_posttrain(&cfg, &init, None).unwrap();
    assert_eq!(run.log.len(), cfg.iterations);
    assert_eq!(run.summary.fkl_trace.len(), cfg.iterations);
    let evals: Vec<usize> = run.evals.iter().map(|e| e.iteration).collect();
    assert_eq!(evals, vec![0, 3, 6]);
    for it in &run.log {
        let c = it.clip;
        let cases = c.in_region + c.silenced + c.corrective + c.neutral;
        assert_eq!(cases, cfg.inner_updates * cfg.trees * cfg.group_size());
        assert!(it.fkl >= 0.0 && it.pinsker_ok);
    }
    let total: usize = run.log.iter().map(|l| l.velocity_evals).sum();
    assert_eq!(total, run.summary.velocity_evals_total);
}

#[test]
fn no_tree_costs_more_velocity_evaluations() {
    let cfg = tiny();
    let init = run_pretrain(&cfg, None).unwrap().params;
    let tree = run_posttrain(&cfg, &init, None).unwrap();
    let flat = run_posttrain(
        &RunConfig {
            no_tree: true,
            ..cfg.clone()
        },
        &init,
        None,
    )
    .unwrap();
    let k = cfg.group_size() * cfg.trees;
    assert!(flat.summary.velocity_evals_total > tree.summary.velocity_evals_total);
    assert_eq!(flat.summary.velocity_evals_total, cfg.iterations * k * cfg.train_steps);
}

#[test]
fn ablation_table_has_four_complete_rows() {
    let out = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        iterations: 3,
        ..tiny()
    };
    let table = run_ablation_suite(&cfg, &[0, 1], Some(out.path())).unwrap();
    let names: Vec<&str> = table.rows.iter().map(|r| r.variant.as_str()).collect();
    assert_eq!(names, ["full", "fixed_beta", "no_tree", "fixed_branch"]);
    assert_eq!(table.runs.len(), 8);

    let text = fs::read_to_string(out.path().join("ablation.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], ABLATION_HEADER.join(","));
    assert_eq!(lines.len(), 5);
    for l in &lines[1..] {
        let cells: Vec<&str> = l.split(',').collect();
        assert_eq!(cells.len(), ABLATION_HEADER.len());
        assert!(cells.iter().all(|c| !c.is_empty()));
    }
    assert_eq!(
        fs::read_to_string(out.path().join("ablation_runs.csv"))
            .unwrap()
            .lines()
            .count(),
        9
    );
}

#[test]
fn invalid_config_is_rejected_before_work() {
    let cfg = RunConfig { branching: 1, ..tiny() };
    assert!(run_pretrain(&cfg, None).is_err());
    assert!(RunConfig::parse("no_such_key = 3").is_err());
    assert!(RunConfig::parse("algorithm = \"ppo\"").is_err());
}
