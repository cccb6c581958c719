//! Runs the `uavswarm` binary end to end.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_uavswarm"));
    c.env_remove("SWARM_SEED");
    c
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("spawn uavswarm")
}

fn error_kind(out: &Output) -> String {
    let line = String::from_utf8_lossy(&out.stderr);
    let v: Value = serde_json::from_str(line.lines().last().expect("error line")).expect("json error line");
    v["error"]["kind"].as_str().expect("kind").to_string()
}

const SMOKE: &str = "env.uavs = 2\ntrain.episodes = 1\ntrain.steps = 5\ntrain.instances = 2\n";

fn train(dir: &Path, mode: &str) -> Output {
    let cfg = dir.join("smoke.toml");
    std::fs::write(&cfg, SMOKE).unwrap();
    run(bin()
        .args(["train", "--mode", mode, "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join(mode)))
}

#[test]
fn smoke_train_eval_render() {
    let dir = tempfile::tempdir().unwrap();
    let out = train(dir.path(), "ctfde");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["episodes"], 1);
    let run_dir = dir.path().join("ctfde");
    let curve = std::fs::read_to_string(run_dir.join("curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 2);
    assert!(run_dir.join("checkpoint.bin").is_file());

    let eval_dir = dir.path().join("eval");
    let out = run(bin()
        .args(["eval", "--instances", "1", "--interval", "10", "--checkpoint"])
        .arg(&run_dir)
        .arg("--out")
        .arg(&eval_dir));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics = std::fs::read_to_string(eval_dir.join("metrics.csv")).unwrap();
    assert_eq!(
        metrics.lines().next(),
        Some("instance_id,method,uavs,interval,seed,time_s,return,collisions")
    );
    assert_eq!(metrics.lines().count(), 2);

    let svg = dir.path().join("t.svg");
    let out = run(bin()
        .args(["render", "--projection", "iso", "--log"])
        .arg(eval_dir.join("traj_0000.json"))
        .arg("--out")
        .arg(&svg));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(std::fs::read_to_string(&svg).unwrap().contains("<polyline"));

    let grid_dir = dir.path().join("grid");
    let out = run(bin()
        .args(["generalize", "--uavs", "8", "--interval", "5", "15", "--instances", "1", "--checkpoint"])
        .arg(&run_dir)
        .arg("--out")
        .arg(&grid_dir));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(grid_dir.join("grid.csv")).unwrap().lines().count(), 3);
}

#[test]
fn unknown_config_key_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "env.warp_drive = 1\n").unwrap();
    let out = run(bin()
        .args(["train", "--mode", "ctfde", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("o")));
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_kind(&out), "config");
}

#[test]
fn ctpde_checkpoint_cannot_generalize() {
    let dir = tempfile::tempdir().unwrap();
    assert!(train(dir.path(), "ctpde").status.success());
    let out = run(bin()
        .args(["generalize", "--uavs", "8", "--interval", "5", "--checkpoint"])
        .arg(dir.path().join("ctpde"))
        .arg("--out")
        .arg(dir.path().join("g")));
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_kind(&out), "mode");
}

#[test]
fn missing_checkpoint_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(bin()
        .args(["eval", "--checkpoint"])
        .arg(dir.path().join("nothing"))
        .arg("--out")
        .arg(dir.path().join("o")));
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_kind(&out), "io");
}

#[test]
fn usage_errors_are_json_too() {
    let out = run(bin().args(["train", "--mode", "warp"]));
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "usage");
    let out = run(bin().args(["generalize", "--uavs", "9", "--interval", "5", "--checkpoint", "x", "--out", "y"]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn seed_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, format!("{SMOKE}train.seed = 3\n")).unwrap();
    let seed_of = |out_dir: &Path| {
        let text = std::fs::read_to_string(out_dir.join("config.toml")).unwrap();
        text.lines()
            .find_map(|l| l.strip_prefix("train.seed = "))
            .map(str::to_string)
            .unwrap()
    };
    let a = dir.path().join("a");
    assert!(run(bin().args(["train", "--mode", "ctfde", "--config"]).arg(&cfg).arg("--out").arg(&a)).status.success());
    assert_eq!(seed_of(&a), "3");
    let b = dir.path().join("b");
    let out = run(bin()
        .env("SWARM_SEED", "5")
        .args(["train", "--mode", "ctfde", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&b));
    assert!(out.status.success());
    assert_eq!(seed_of(&b), "5");
    let c = dir.path().join("c");
    let out = run(bin()
        .env("SWARM_SEED", "5")
        .args(["train", "--mode", "ctfde", "--seed", "7", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&c));
    assert!(out.status.success());
    assert_eq!(seed_of(&c), "7");
}

#[test]
fn defaults_lists_every_section() {
    let out = run(bin().arg("defaults"));
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for prefix in ["env.", "train.", "horizon.", "agent."] {
        assert!(text.lines().any(|l| l.starts_with(prefix)), "{prefix}");
    }
}
