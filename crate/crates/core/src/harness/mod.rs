//! End-to-end runs: training, evaluation, generalisation to larger swarms and
//! artifact export.

pub mod config;
pub mod eval;
pub mod export;
pub mod stats;
pub mod svg;
pub mod train;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentError, Mode};
use crate::env::{EnvError, RewardBreakdown, WorldState};
use crate::nets::NetError;

pub use config::{RunConfig, TrainConfig};
pub use eval::{evaluate_run, generalize_run, write_eval, EvalOptions, GridRow, TrainedRun};
pub use export::{read_metrics_csv, write_metrics_csv, write_metrics_json, MetricRow};
pub use svg::{render_trajectory_svg, Projection};
pub use train::{train_run, EpisodeRecord, TrainOutcome};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("unknown config key '{0}'")]
    UnknownKey(String),
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("mode: {0}")]
    Mode(String),
    #[error("layout: {0}")]
    Layout(String),
    #[error("trajectory log is empty")]
    EmptyLog,
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::Io { .. } => "io",
            HarnessError::Config(_) | HarnessError::UnknownKey(_) => "config",
            HarnessError::Scenario(_) => "scenario",
            HarnessError::Mode(_) => "mode",
            HarnessError::Layout(_) => "layout",
            HarnessError::EmptyLog => "empty_log",
            HarnessError::Env(_) => "env",
            HarnessError::Agent(AgentError::Mode { .. } | AgentError::UnknownMode(_)) => "mode",
            HarnessError::Agent(AgentError::Layout(_)) => "layout",
            HarnessError::Agent(_) => "agent",
            HarnessError::Net(NetError::LayoutMismatch { .. }) => "layout",
            HarnessError::Net(_) => "checkpoint",
            HarnessError::Csv(_) => "csv",
            HarnessError::Json(_) => "json",
        }
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    std::fs::write(path, bytes).map_err(io_err(path))
}

pub(crate) fn create_dir(path: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(path).map_err(io_err(path))
}

/// Seed of instance `k` in a family identified by `base`.
pub fn instance_seed(base: u64, k: u64) -> u64 {
    // splitmix64 finaliser over the pair
    let mut z = base ^ k.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// What to run: swarm size, hazard cadence, instance set and method.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub uavs: usize,
    pub destinations: usize,
    pub interval: usize,
    pub instances: usize,
    pub seed: u64,
    pub mode: Mode,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Scenario(m.to_string()));
        if self.instances == 0 {
            return bad("instance count must be >= 1");
        }
        if self.uavs == 0 {
            return bad("uav count must be >= 1");
        }
        if self.destinations == 0 {
            return bad("destination count must be >= 1");
        }
        if self.interval == 0 {
            return bad("change interval must be >= 1");
        }
        Ok(())
    }
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
}

impl Aggregate {
    pub fn of(xs: &[f64]) -> Self {
        Self {
            mean: stats::mean(xs),
            std: stats::std(xs),
        }
    }
}

/// Per-instance results plus aggregates over the instance set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub rows: Vec<MetricRow>,
    pub time_s: Aggregate,
    pub ret: Aggregate,
    pub collisions: Aggregate,
    /// Decision time per UAV per step, pooled over instances.
    pub per_uav_step_s: f64,
}

impl RunMetrics {
    pub fn from_rows(rows: Vec<MetricRow>, decisions: u64) -> Self {
        let col = |f: fn(&MetricRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
        let times = col(|r| r.time_s);
        let total: f64 = times.iter().sum();
        Self {
            time_s: Aggregate::of(&times),
            ret: Aggregate::of(&col(|r| r.ret)),
            collisions: Aggregate::of(&col(|r| r.collisions as f64)),
            per_uav_step_s: if decisions > 0 { total / decisions as f64 } else { 0.0 },
            rows,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardEpoch {
    /// Step at which this hazard set appeared.
    pub t: usize,
    pub centers: Vec<[f64; 3]>,
    pub radii: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardRow {
    pub r_int: f64,
    pub r_avo: f64,
    pub r_con: f64,
    pub r_path: f64,
}

impl From<RewardBreakdown> for RewardRow {
    fn from(r: RewardBreakdown) -> Self {
        Self {
            r_int: r.r_int,
            r_avo: r.r_avo,
            r_con: r.r_con,
            r_path: r.r_path,
        }
    }
}

/// Recorded episode: `positions[i][t]` for `t` in `0..=steps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub instance_id: usize,
    pub method: String,
    pub steps: usize,
    pub arena_min: [f64; 3],
    pub arena_max: [f64; 3],
    pub starts: Vec<[f64; 3]>,
    pub targets: Vec<[f64; 3]>,
    pub positions: Vec<Vec<[f64; 3]>>,
    pub hazards: Vec<HazardEpoch>,
    /// `rewards[t][i]` for the step ending at `t + 1`.
    pub rewards: Vec<Vec<RewardRow>>,
    /// Collision incidences per step, summed over UAVs.
    pub collisions: Vec<u64>,
}

fn arr(v: &crate::Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

impl TrajectoryLog {
    pub fn start(world: &WorldState, instance_id: usize, method: &str) -> Self {
        let a = world.config().arena;
        Self {
            instance_id,
            method: method.to_string(),
            steps: 0,
            arena_min: arr(&a.min),
            arena_max: arr(&a.max),
            starts: world.uavs.iter().map(|u| arr(&u.p_start)).collect(),
            targets: world.uavs.iter().map(|u| arr(&u.p_end)).collect(),
            positions: world.uavs.iter().map(|u| vec![arr(&u.p)]).collect(),
            hazards: vec![Self::epoch(world)],
            rewards: Vec::new(),
            collisions: Vec::new(),
        }
    }

    fn epoch(world: &WorldState) -> HazardEpoch {
        HazardEpoch {
            t: world.t,
            centers: world.hazards.iter().map(|h| arr(&h.p)).collect(),
            radii: world.hazards.iter().map(|h| h.radius).collect(),
        }
    }

    /// Appends the state reached by `world` after a step.
    pub fn record(&mut self, world: &WorldState, outcome: &crate::env::StepOutcome) {
        self.steps += 1;
        for (track, u) in self.positions.iter_mut().zip(&world.uavs) {
            track.push(arr(&u.p));
        }
        self.rewards.push(outcome.rewards.iter().map(|r| RewardRow::from(*r)).collect());
        self.collisions.push(outcome.collisions.iter().sum());
        if outcome.regenerated {
            self.hazards.push(Self::epoch(world));
        }
    }

    pub fn uavs(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty() || self.positions.iter().all(|p| p.is_empty())
    }

    /// Sum of `r_path` over UAVs and steps.
    pub fn total_return(&self) -> f64 {
        self.rewards.iter().flatten().map(|r| r.r_path).sum()
    }

    pub fn total_collisions(&self) -> u64 {
        self.collisions.iter().sum()
    }

    pub fn to_json(&self) -> Result<String, HarnessError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Ok(serde_json::from_str(&text)?)
    }
}
