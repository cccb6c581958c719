//! Noiseless evaluation of a trained policy, and deployment to larger swarms.

use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::export::{write_json, write_metrics_csv, write_metrics_json, MetricRow};
use super::train::{CHECKPOINT_FILE, CONFIG_FILE};
use super::{create_dir, instance_seed, write_file, HarnessError, RunMetrics, ScenarioSpec, TrajectoryLog};
use crate::agents::{Mode, Policy};
use crate::env::{EnvConfig, WorldState};
use crate::ifds::Planner;
use crate::nets::{config_hash, Checkpoint};
use crate::obs::{extended_observation, local_observation};
use crate::par::{self, Execution};

const EVAL_SALT: u64 = 0x6576_616c_0000_0000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    /// Instances run through this executor; use `Sequential` for timing runs.
    pub exec: Execution,
    pub keep_trajectories: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            exec: Execution::default(),
            keep_trajectories: true,
        }
    }
}

/// A training output directory: effective config plus latest checkpoint.
#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub config: RunConfig,
    pub mode: Mode,
    pub uavs: usize,
    pub seed: u64,
    pub checkpoint: Checkpoint,
}

impl TrainedRun {
    pub fn load(dir: &Path) -> Result<Self, HarnessError> {
        let config = RunConfig::load(&dir.join(CONFIG_FILE))?;
        let checkpoint = Checkpoint::load(&dir.join(CHECKPOINT_FILE))?;
        Self::from_parts(config, checkpoint)
    }

    pub fn from_parts(config: RunConfig, checkpoint: Checkpoint) -> Result<Self, HarnessError> {
        let meta = |k: &str| {
            checkpoint
                .meta_value(k)
                .map(str::to_string)
                .ok_or_else(|| HarnessError::Layout(format!("checkpoint meta lacks '{k}'")))
        };
        let mode: Mode = meta("mode")?.parse()?;
        let uavs: usize = meta("uavs")?
            .parse()
            .map_err(|_| HarnessError::Layout("checkpoint meta 'uavs' is not an integer".into()))?;
        let seed: u64 = meta("seed")?
            .parse()
            .map_err(|_| HarnessError::Layout("checkpoint meta 'seed' is not an integer".into()))?;
        checkpoint.expect_layout(&config.obs.layout_version(mode.extended_obs()))?;
        if checkpoint.config_hash != config_hash(&config.env) || config.env.uavs != uavs {
            return Err(HarnessError::Layout("checkpoint was not produced with this config".into()));
        }
        Ok(Self {
            config,
            mode,
            uavs,
            seed,
            checkpoint,
        })
    }

    pub fn policy(&self) -> Result<Policy, HarnessError> {
        Ok(Policy::from_checkpoint(&self.checkpoint, self.mode, &self.config.obs, self.uavs)?)
    }

    /// Evaluation scenario at the trained size and hazard cadence.
    pub fn scenario(&self, instances: usize) -> ScenarioSpec {
        ScenarioSpec {
            uavs: self.uavs,
            destinations: self.config.env.destinations,
            interval: self.config.env.change_interval,
            instances,
            seed: self.seed,
            mode: self.mode,
        }
    }

    /// Environment for `scenario`, rejecting sizes the policy cannot drive.
    pub fn env_for(&self, scenario: &ScenarioSpec) -> Result<EnvConfig, HarnessError> {
        scenario.validate()?;
        if scenario.mode != self.mode {
            return Err(HarnessError::Mode(format!(
                "scenario asks for {} but the checkpoint holds {}",
                scenario.mode, self.mode
            )));
        }
        if !self.mode.decentralized_execution() && scenario.uavs != self.uavs {
            return Err(HarnessError::Layout(format!(
                "{} policies are bound to {} UAVs, scenario has {}",
                self.mode, self.uavs, scenario.uavs
            )));
        }
        let mut env = self.config.env.clone();
        env.uavs = scenario.uavs;
        env.destinations = scenario.destinations;
        env.change_interval = scenario.interval;
        env.validate()?;
        Ok(env)
    }
}

struct InstanceResult {
    row: MetricRow,
    log: TrajectoryLog,
    decisions: u64,
}

fn run_instance(
    policy: &Policy,
    planner: &Planner,
    env: &EnvConfig,
    scenario: &ScenarioSpec,
    k: usize,
) -> Result<InstanceResult, HarnessError> {
    let mut world = WorldState::init_instance(env, instance_seed(scenario.seed ^ EVAL_SALT, k as u64))?;
    let method = scenario.mode.name();
    let mut log = TrajectoryLog::start(&world, k, method);
    let extended = policy.mode.extended_obs();
    let mut decision = Duration::ZERO;
    let mut decisions = 0u64;
    let mut ret = 0.0;
    while !world.finished() {
        let started = Instant::now();
        let mut plans = Vec::with_capacity(world.uavs.len());
        for (i, u) in world.uavs.iter().enumerate() {
            if u.done {
                plans.push(u.p);
                continue;
            }
            let obs = if extended {
                extended_observation(&world, i, &policy.obs).encode()
            } else {
                local_observation(&world, i, policy.obs.hazard_slots).encode()
            };
            let action = policy.action(i, &obs)?;
            plans.push(planner.plan(&world, i, &action));
            decisions += 1;
        }
        decision += started.elapsed();
        let out = world.step(&plans)?;
        ret += out.rewards.iter().map(|r| r.r_path).sum::<f64>();
        log.record(&world, &out);
    }
    Ok(InstanceResult {
        row: MetricRow {
            instance_id: k,
            method: method.to_string(),
            uavs: scenario.uavs,
            interval: scenario.interval,
            seed: scenario.seed,
            time_s: decision.as_secs_f64(),
            ret,
            collisions: world.total_collisions(),
        },
        log,
        decisions,
    })
}

/// Runs the noiseless policy over the scenario's instances.
pub fn evaluate_run(
    run: &TrainedRun,
    scenario: &ScenarioSpec,
    opts: &EvalOptions,
) -> Result<(RunMetrics, Vec<TrajectoryLog>), HarnessError> {
    let env = run.env_for(scenario)?;
    let policy = run.policy()?;
    let planner = Planner::from_config(&env);
    let results = par::map_range(opts.exec, scenario.instances, |k| {
        run_instance(&policy, &planner, &env, scenario, k)
    });
    let mut rows = Vec::with_capacity(results.len());
    let mut logs = Vec::new();
    let mut decisions = 0;
    for r in results {
        let r = r?;
        rows.push(r.row);
        decisions += r.decisions;
        if opts.keep_trajectories {
            logs.push(r.log);
        }
    }
    Ok((RunMetrics::from_rows(rows, decisions), logs))
}

/// Writes `metrics.csv`, `metrics.json`, `summary.json` and one
/// `traj_NNNN.json` per instance.
pub fn write_eval(out: &Path, metrics: &RunMetrics, logs: &[TrajectoryLog]) -> Result<(), HarnessError> {
    create_dir(out)?;
    write_metrics_csv(&out.join("metrics.csv"), &metrics.rows)?;
    write_metrics_json(&out.join("metrics.json"), &metrics.rows)?;
    write_json(&out.join("summary.json"), metrics)?;
    for log in logs {
        write_file(&out.join(format!("traj_{:04}.json", log.instance_id)), log.to_json()?.as_bytes())?;
    }
    Ok(())
}

/// One cell of the generalisation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub method: String,
    pub uavs: usize,
    pub interval: usize,
    pub instances: usize,
    pub time_s: f64,
    #[serde(rename = "return")]
    pub ret: f64,
    pub collisions: f64,
    pub per_uav_step_s: f64,
}

impl GridRow {
    fn new(scenario: &ScenarioSpec, m: &RunMetrics) -> Self {
        Self {
            method: scenario.mode.name().to_string(),
            uavs: scenario.uavs,
            interval: scenario.interval,
            instances: scenario.instances,
            time_s: m.time_s.mean,
            ret: m.ret.mean,
            collisions: m.collisions.mean,
            per_uav_step_s: m.per_uav_step_s,
        }
    }
}

/// Deploys the trained per-UAV actors unchanged to every `(uavs, interval)` pair.
pub fn generalize_run(
    run: &TrainedRun,
    uavs: &[usize],
    intervals: &[usize],
    instances: usize,
    opts: &EvalOptions,
) -> Result<(Vec<GridRow>, Vec<MetricRow>), HarnessError> {
    if !run.mode.decentralized_execution() {
        return Err(HarnessError::Mode(format!(
            "{} policies execute through the joint planner and cannot change swarm size",
            run.mode
        )));
    }
    let mut grid = Vec::new();
    let mut rows = Vec::new();
    for &n in uavs {
        for &v in intervals {
            let scenario = ScenarioSpec {
                uavs: n,
                destinations: run.config.env.destinations,
                interval: v,
                ..run.scenario(instances)
            };
            let (m, _) = evaluate_run(
                run,
                &scenario,
                &EvalOptions {
                    keep_trajectories: false,
                    ..*opts
                },
            )?;
            grid.push(GridRow::new(&scenario, &m));
            rows.extend(m.rows);
        }
    }
    Ok((grid, rows))
}

pub fn grid_csv(grid: &[GridRow]) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if grid.is_empty() {
        w.write_record([
            "method", "uavs", "interval", "instances", "time_s", "return", "collisions", "per_uav_step_s",
        ])?;
    }
    for g in grid {
        w.serialize(g)?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}
