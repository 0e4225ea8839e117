use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "hidden = 8\npretrain_steps = 60\npretrain_batch = 32\niterations = 4\ntrees = 1\n\
                     eval_interval = 2\neval_samples = 60\neval_steps = 6\n";

fn tmpo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tmpo")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn check_passes_every_invariant() {
    let o = tmpo(&["check"]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(code(&o), 0, "{text}");
    assert_eq!(text.lines().filter(|l| l.starts_with("[pass]")).count(), 10);
    assert!(!text.contains("FAIL"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&tmpo(&[])), 1);
    assert_eq!(code(&tmpo(&["train"])), 1);
    assert_eq!(code(&tmpo(&["posttrain", "--algorithm", "ppo"])), 1);
    assert_eq!(code(&tmpo(&["pretrain", "--seed", "minus-one"])), 1);
    assert_eq!(code(&tmpo(&["--help"])), 0);
}

#[test]
fn bad_configs_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    let missing = dir.path().join("nope.toml");
    assert_eq!(
        code(&tmpo(&[
            "pretrain",
            "--config",
            missing.to_str().unwrap(),
            "--out",
            out
        ])),
        1
    );
    let unknown = write(dir.path(), "unknown.toml", "colour = 3\n");
    assert_eq!(code(&tmpo(&["pretrain", "--config", &unknown, "--out", out])), 1);
    let invalid = write(dir.path(), "invalid.toml", &format!("{SMALL}branching = 1\n"));
    let o = tmpo(&["posttrain", "--config", &invalid, "--out", out]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("branching"));
    let zero = write(dir.path(), "ok.toml", SMALL);
    assert_eq!(
        code(&tmpo(&["ablate", "--config", &zero, "--seeds", "0", "--out", out])),
        1
    );
}

#[test]
fn divergence_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "hot.toml", &format!("{SMALL}pretrain_lr = 1e300\n"));
    let o = tmpo(&[
        "pretrain",
        "--config",
        &cfg,
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("diverged"));
}

#[test]
fn pretrain_then_posttrain_from_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL);
    let pre = dir.path().join("pre");
    let o = tmpo(&[
        "pretrain",
        "--config",
        &cfg,
        "--seed",
        "3",
        "--out",
        pre.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(pre.join("checkpoint.tmpf").is_file());
    assert!(fs::read_to_string(pre.join("config.toml"))
        .unwrap()
        .contains("seed = 3"));

    let ckpt = pre.join("checkpoint.tmpf");
    let with_ckpt = write(
        dir.path(),
        "post.toml",
        &format!("{SMALL}checkpoint = {:?}\n", ckpt.to_str().unwrap()),
    );
    let post = dir.path().join("post");
    let o = tmpo(&[
        "posttrain",
        "--config",
        &with_ckpt,
        "--algorithm",
        "grpo",
        "--out",
        post.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("velocity evaluations"));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(post.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["algorithm"], "grpo");
    assert!(post.join("samples_final_grpo.svg").is_file());
    assert!(!post.join("pretrain").exists());
}

#[test]
fn posttrain_without_checkpoint_pretrains_first() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL);
    let out = dir.path().join("run");
    let o = tmpo(&["posttrain", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("pretrain/checkpoint.tmpf").is_file());
    assert!(out.join("samples_final_tmpo.svg").is_file());
    assert!(out.join("train_log.csv").is_file());
}

#[test]
fn ablate_writes_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL);
    let out = dir.path().join("abl");
    let o = tmpo(&[
        "ablate",
        "--config",
        &cfg,
        "--seeds",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(out.join("ablation.csv")).unwrap();
    assert_eq!(table.lines().count(), 5);
    assert!(table.starts_with("variant,seeds,mean_reward"));
}
