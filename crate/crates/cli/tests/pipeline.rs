//! Train, evaluate and render through the library API behind the CLI.

use std::path::Path;

use uavswarm::agents::Mode;
use uavswarm::harness::train::{Trainer, CHECKPOINT_FILE, CURVE_FILE};
use uavswarm::harness::{
    evaluate_run, read_metrics_csv, render_trajectory_svg, train_run, write_eval, EvalOptions, HarnessError,
    Projection, RunConfig, ScenarioSpec, TrainedRun, TrajectoryLog,
};

fn smoke_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.train.episodes = 1;
    cfg.train.steps = 5;
    cfg
}

fn scenario(cfg: &RunConfig, uavs: usize, mode: Mode) -> ScenarioSpec {
    ScenarioSpec {
        uavs,
        destinations: cfg.env.destinations,
        interval: cfg.env.change_interval,
        instances: 2,
        seed: 4,
        mode,
    }
}

#[test]
fn smoke_run_writes_checkpoint_and_one_curve_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config();
    let out = train_run(&scenario(&cfg, 2, Mode::CtfdeMpc), &cfg, Some(dir.path())).unwrap();
    assert_eq!(out.records.len(), 1);
    assert!(dir.path().join(CHECKPOINT_FILE).is_file());
    let curve = std::fs::read_to_string(dir.path().join(CURVE_FILE)).unwrap();
    assert_eq!(curve.lines().count(), 2);
}

#[test]
fn unwritable_output_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, b"x").unwrap();
    let cfg = smoke_config();
    let err = train_run(&scenario(&cfg, 2, Mode::Ctfde), &cfg, Some(&blocker.join("out"))).unwrap_err();
    assert!(matches!(err, HarnessError::Io { .. }), "{err}");
}

#[test]
fn one_instance_eval_and_render() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config();
    let train_dir = dir.path().join("train");
    train_run(&scenario(&cfg, 2, Mode::Ctfde), &cfg, Some(&train_dir)).unwrap();
    let run = TrainedRun::load(&train_dir).unwrap();
    let (metrics, logs) = evaluate_run(&run, &run.scenario(1), &EvalOptions::default()).unwrap();
    let eval_dir = dir.path().join("eval");
    write_eval(&eval_dir, &metrics, &logs).unwrap();
    let rows = read_metrics_csv(&eval_dir.join("metrics.csv")).unwrap();
    assert_eq!(rows.len(), 1);
    let log = TrajectoryLog::load(&eval_dir.join("traj_0000.json")).unwrap();
    assert!(!log.is_empty() && log.steps > 0);
    assert!((log.total_return() - rows[0].ret).abs() < 1e-9);
    assert_eq!(log.total_collisions(), rows[0].collisions);
    let a = render_trajectory_svg(&log, Projection::Top).unwrap();
    let b = render_trajectory_svg(&log, Projection::Top).unwrap();
    assert_eq!(a, b);
}

fn count<'a>(nodes: impl Iterator<Item = roxmltree::Node<'a, 'a>>, tag: &str, class: &str) -> usize {
    nodes
        .filter(|n| n.has_tag_name(tag) && n.attribute("class") == Some(class))
        .count()
}

fn six_uav_log() -> TrajectoryLog {
    let mut cfg = RunConfig::default();
    cfg.env.change_interval = 5;
    cfg.env.max_steps = 40;
    let trainer = Trainer::new(&scenario(&cfg, 6, Mode::Ctfde), &cfg).unwrap();
    let run = TrainedRun::from_parts(trainer.config.clone(), trainer.checkpoint()).unwrap();
    let (_, mut logs) = evaluate_run(&run, &run.scenario(1), &EvalOptions::default()).unwrap();
    logs.remove(0)
}

#[test]
fn six_uav_svg_has_expected_elements() {
    let log = six_uav_log();
    assert!(log.hazards.len() > 1, "want several hazard epochs");
    for proj in [Projection::Top, Projection::Iso] {
        let svg = render_trajectory_svg(&log, proj).unwrap();
        let doc = roxmltree::Document::parse(&svg).expect("well-formed svg");
        let root = doc.root_element();
        assert!(root.has_tag_name("svg"));
        assert_eq!(count(root.descendants(), "polyline", "uav"), 6);
        assert_eq!(count(root.descendants(), "rect", "start"), 6);
        assert_eq!(count(root.descendants(), "circle", "target"), 6);
        let groups: Vec<_> = root
            .descendants()
            .filter(|n| n.has_tag_name("g") && n.attribute("class") == Some("hazards"))
            .collect();
        assert_eq!(groups.len(), log.hazards.len());
        for (e, (g, epoch)) in groups.iter().zip(&log.hazards).enumerate() {
            assert_eq!(g.attribute("data-epoch"), Some(e.to_string().as_str()));
            assert_eq!(g.attribute("data-t"), Some(epoch.t.to_string().as_str()));
            assert_eq!(count(g.descendants(), "circle", "hazard"), epoch.radii.len());
        }
        for line in root.descendants().filter(|n| n.has_tag_name("polyline")) {
            let points = line.attribute("points").unwrap().split_whitespace().count();
            assert_eq!(points, log.steps + 1);
        }
    }
}

#[test]
fn checkpoint_from_other_size_is_rejected_for_joint_planner() {
    let cfg = smoke_config();
    let trainer = Trainer::new(&scenario(&cfg, 3, Mode::Ctpde), &cfg).unwrap();
    let run = TrainedRun::from_parts(trainer.config.clone(), trainer.checkpoint()).unwrap();
    let bigger = ScenarioSpec {
        uavs: 4,
        ..run.scenario(1)
    };
    let err = evaluate_run(&run, &bigger, &EvalOptions::default()).unwrap_err();
    assert_eq!(err.kind(), "layout");
}

#[test]
fn shipped_default_config_matches_documented_defaults() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
    let text = std::fs::read_to_string(path).unwrap();
    assert_eq!(text, RunConfig::documented_defaults());
    assert_eq!(RunConfig::parse(&text).unwrap(), RunConfig::default());
}
