//! `uavswarm`: train, evaluate, generalise and render UAV swarm runs.
//!
//! Failures print one JSON line `{"error":{"kind":...,"message":...}}` to
//! stderr and exit with status 1 (2 for usage errors).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;
use uavswarm::agents::Mode;
use uavswarm::harness::config::SEED_ENV;
use uavswarm::harness::eval::grid_csv;
use uavswarm::harness::export::write_json;
use uavswarm::harness::{
    evaluate_run, generalize_run, render_trajectory_svg, train_run, write_eval, write_metrics_csv, EvalOptions,
    HarnessError, Projection, RunConfig, ScenarioSpec, TrainedRun, TrajectoryLog,
};

#[derive(Debug, Parser)]
#[command(name = "uavswarm", version, about = "Multi-UAV path planning with learned flow-field gains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a policy and write checkpoint, config and learning curves to DIR.
    Train {
        /// Config file with dotted keys; omitted keys keep their defaults.
        #[arg(long, value_name = "FILE")]
        config: Option<PathBuf>,
        #[arg(long, value_parser = parse_mode)]
        mode: Mode,
        /// Overrides train.seed and SWARM_SEED.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Evaluate the noiseless policy of a training directory.
    Eval {
        #[arg(long, value_name = "DIR")]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 100)]
        instances: usize,
        /// Hazard change interval; defaults to the trained value.
        #[arg(long)]
        interval: Option<usize>,
        /// Swarm size; defaults to the trained value.
        #[arg(long)]
        uavs: Option<usize>,
        /// Seed of the evaluation instance family; defaults to the training seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Deploy a decentralised policy unchanged to larger swarms.
    Generalize {
        #[arg(long, value_name = "DIR")]
        checkpoint: PathBuf,
        #[arg(long, num_args = 1.., required = true, value_parser = clap::builder::PossibleValuesParser::new(["8", "10", "12"]))]
        uavs: Vec<String>,
        #[arg(long, num_args = 1.., required = true, value_parser = clap::builder::PossibleValuesParser::new(["5", "10", "15"]))]
        interval: Vec<String>,
        #[arg(long, default_value_t = 10)]
        instances: usize,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Render a trajectory log as SVG.
    Render {
        #[arg(long, value_name = "FILE")]
        log: PathBuf,
        #[arg(long, value_parser = parse_projection)]
        projection: Projection,
        #[arg(long, value_name = "FILE.svg")]
        out: PathBuf,
    },
    /// Print the default configuration with a comment per key.
    Defaults,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: uavswarm::agents::AgentError| e.to_string())
}

fn parse_projection(s: &str) -> Result<Projection, String> {
    s.parse().map_err(|e: HarnessError| e.to_string())
}

fn numbers(xs: &[String]) -> Vec<usize> {
    xs.iter().map(|x| x.parse().expect("validated by clap")).collect()
}

fn train(config: Option<&Path>, mode: Mode, seed: Option<u64>, out: &Path) -> Result<(), HarnessError> {
    let mut cfg = match config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let env_seed = std::env::var(SEED_ENV).ok();
    cfg.apply_seed(env_seed.as_deref(), seed)?;
    let scenario = ScenarioSpec {
        uavs: cfg.env.uavs,
        destinations: cfg.env.destinations,
        interval: cfg.env.change_interval,
        instances: cfg.train.instances,
        seed: cfg.train.seed,
        mode,
    };
    let outcome = train_run(&scenario, &cfg, Some(out))?;
    let last = outcome.records.last().map(|r| r.ret).unwrap_or(0.0);
    println!(
        "{}",
        json!({"episodes": outcome.records.len(), "final_return": last, "out": out})
    );
    Ok(())
}

fn eval(
    dir: &Path,
    instances: usize,
    interval: Option<usize>,
    uavs: Option<usize>,
    seed: Option<u64>,
    out: &Path,
) -> Result<(), HarnessError> {
    let run = TrainedRun::load(dir)?;
    let base = run.scenario(instances);
    let scenario = ScenarioSpec {
        uavs: uavs.unwrap_or(base.uavs),
        interval: interval.unwrap_or(base.interval),
        seed: seed.unwrap_or(base.seed),
        ..base
    };
    let (metrics, logs) = evaluate_run(&run, &scenario, &EvalOptions::default())?;
    write_eval(out, &metrics, &logs)?;
    println!(
        "{}",
        json!({
            "instances": metrics.rows.len(),
            "time_s": metrics.time_s.mean,
            "return": metrics.ret.mean,
            "collisions": metrics.collisions.mean,
        })
    );
    Ok(())
}

fn generalize(dir: &Path, uavs: &[usize], intervals: &[usize], instances: usize, out: &Path) -> Result<(), HarnessError> {
    let run = TrainedRun::load(dir)?;
    let (grid, rows) = generalize_run(&run, uavs, intervals, instances, &EvalOptions::default())?;
    std::fs::create_dir_all(out).map_err(|source| HarnessError::Io {
        path: out.to_path_buf(),
        source,
    })?;
    let grid_path = out.join("grid.csv");
    std::fs::write(&grid_path, grid_csv(&grid)?).map_err(|source| HarnessError::Io { path: grid_path, source })?;
    write_json(&out.join("grid.json"), &grid)?;
    write_metrics_csv(&out.join("metrics.csv"), &rows)?;
    println!("{}", serde_json::to_string(&grid)?);
    Ok(())
}

fn render(log: &Path, projection: Projection, out: &Path) -> Result<(), HarnessError> {
    let svg = render_trajectory_svg(&TrajectoryLog::load(log)?, projection)?;
    std::fs::write(out, svg).map_err(|source| HarnessError::Io {
        path: out.to_path_buf(),
        source,
    })
}

fn fail(kind: &str, message: &str, code: u8) -> ExitCode {
    eprintln!("{}", json!({"error": {"kind": kind, "message": message}}));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string().trim(), 2),
    };
    let result = match &cli.command {
        Command::Train { config, mode, seed, out } => train(config.as_deref(), *mode, *seed, out),
        Command::Eval {
            checkpoint,
            instances,
            interval,
            uavs,
            seed,
            out,
        } => eval(checkpoint, *instances, *interval, *uavs, *seed, out),
        Command::Generalize {
            checkpoint,
            uavs,
            interval,
            instances,
            out,
        } => generalize(checkpoint, &numbers(uavs), &numbers(interval), *instances, out),
        Command::Render { log, projection, out } => render(log, *projection, out),
        Command::Defaults => {
            print!("{}", RunConfig::documented_defaults());
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), &e.to_string(), 1),
    }
}
