//! Run configuration as flat `section.key = value` lines (TOML syntax).
//! Nested tables are accepted and flattened; unknown keys are rejected.

use std::path::Path;

use toml::Value;

use super::{io_err, HarnessError};
use crate::agents::{AgentConfig, Mode};
use crate::env::{EnvConfig, Vec3};
use crate::mbrl::HorizonConfig;
use crate::obs::ObsConfig;

/// Environment variable that overrides `train.seed`.
pub const SEED_ENV: &str = "SWARM_SEED";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub episodes: usize,
    /// Distinct training instances, visited round-robin.
    pub instances: usize,
    /// Step budget per episode; episodes also end when every UAV is done.
    pub steps: usize,
    /// Transitions collected before the first update.
    pub warmup: usize,
    /// Environment steps between updates.
    pub update_every: usize,
    pub model_hidden: Vec<usize>,
    pub model_lr: f64,
    /// Requires a policy that executes from per-UAV observations only.
    pub decentralized_execution: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            episodes: 30,
            instances: 100,
            steps: 300,
            warmup: 128,
            update_every: 1,
            model_hidden: vec![128, 128],
            model_lr: 1e-3,
            decentralized_execution: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub obs: ObsConfig,
    pub train: TrainConfig,
    pub horizon: HorizonConfig,
    pub agent: AgentConfig,
}

mod conv {
    use super::*;

    fn wrong(key: &str, want: &str) -> HarnessError {
        HarnessError::Config(format!("{key}: expected {want}"))
    }

    pub fn usize(key: &str, v: &Value) -> Result<usize, HarnessError> {
        v.as_integer()
            .filter(|i| *i >= 0)
            .map(|i| i as usize)
            .ok_or_else(|| wrong(key, "a non-negative integer"))
    }

    pub fn u64(key: &str, v: &Value) -> Result<u64, HarnessError> {
        usize(key, v).map(|x| x as u64)
    }

    pub fn i64(key: &str, v: &Value) -> Result<i64, HarnessError> {
        v.as_integer().ok_or_else(|| wrong(key, "an integer"))
    }

    pub fn f64(key: &str, v: &Value) -> Result<f64, HarnessError> {
        v.as_float()
            .or_else(|| v.as_integer().map(|i| i as f64))
            .filter(|x| x.is_finite())
            .ok_or_else(|| wrong(key, "a finite number"))
    }

    pub fn bool(key: &str, v: &Value) -> Result<bool, HarnessError> {
        v.as_bool().ok_or_else(|| wrong(key, "true or false"))
    }

    pub fn vec3(key: &str, v: &Value) -> Result<Vec3, HarnessError> {
        let a = v.as_array().filter(|a| a.len() == 3).ok_or_else(|| wrong(key, "[x, y, z]"))?;
        Ok(Vec3::new(f64(key, &a[0])?, f64(key, &a[1])?, f64(key, &a[2])?))
    }

    pub fn usizes(key: &str, v: &Value) -> Result<Vec<usize>, HarnessError> {
        let a = v.as_array().ok_or_else(|| wrong(key, "an array of integers"))?;
        a.iter().map(|x| usize(key, x)).collect()
    }

    /// `0` means "not set".
    pub fn opt_usize(key: &str, v: &Value) -> Result<Option<usize>, HarnessError> {
        usize(key, v).map(|n| (n > 0).then_some(n))
    }

    pub mod emit {
        use super::*;

        pub fn usize(x: &usize) -> Value {
            Value::Integer(*x as i64)
        }
        pub fn u64(x: &u64) -> Value {
            Value::Integer(*x as i64)
        }
        pub fn i64(x: &i64) -> Value {
            Value::Integer(*x)
        }
        pub fn f64(x: &f64) -> Value {
            Value::Float(*x)
        }
        pub fn bool(x: &bool) -> Value {
            Value::Boolean(*x)
        }
        pub fn vec3(x: &Vec3) -> Value {
            Value::Array(vec![Value::Float(x.x), Value::Float(x.y), Value::Float(x.z)])
        }
        pub fn usizes(x: &[usize]) -> Value {
            Value::Array(x.iter().map(usize).collect())
        }
        pub fn opt_usize(x: &Option<usize>) -> Value {
            Value::Integer(x.unwrap_or(0) as i64)
        }
    }
}

macro_rules! config_keys {
    ($( $key:literal => $($field:ident).+ : $kind:ident, $doc:literal; )*) => {
        /// Every accepted key with its description.
        pub const KEYS: &[(&str, &str)] = &[$(($key, $doc)),*];

        impl RunConfig {
            fn set(&mut self, key: &str, v: &Value) -> Result<(), HarnessError> {
                match key {
                    $( $key => self.$($field).+ = conv::$kind(key, v)?, )*
                    _ => return Err(HarnessError::UnknownKey(key.to_string())),
                }
                Ok(())
            }

            /// All keys with their current values, in documentation order.
            pub fn pairs(&self) -> Vec<(&'static str, Value)> {
                vec![$( ($key, conv::emit::$kind(&self.$($field).+)) ),*]
            }
        }
    };
}

config_keys! {
    "env.uavs" => env.uavs: usize, "number of UAVs";
    "env.destinations" => env.destinations: usize, "distinct destinations; UAV i flies to destination i mod count";
    "env.hazards_min" => env.hazards_min: usize, "fewest hazards per regeneration";
    "env.hazards_max" => env.hazards_max: usize, "most hazards per regeneration";
    "env.change_interval" => env.change_interval: usize, "steps between hazard regenerations";
    "env.uav_radius" => env.uav_radius: f64, "UAV body radius (m)";
    "env.hazard_radius" => env.hazard_radius: f64, "hazard sphere radius (m)";
    "env.neighbor_dist" => env.neighbor_dist: f64, "sensing range for neighbours and hazards (m)";
    "env.threat_dist" => env.threat_dist: f64, "width of the threat shell around obstacles (m)";
    "env.completion_dist" => env.completion_dist: f64, "distance to target that counts as arrival (m)";
    "env.dt" => env.dt: f64, "sampling period (s)";
    "env.min_segment" => env.min_segment: f64, "shortest segment allowed after a heading change (m)";
    "env.max_path_length" => env.max_path_length: f64, "longest total path allowed (m)";
    "env.min_altitude" => env.min_altitude: f64, "altitude floor (m)";
    "env.max_altitude" => env.max_altitude: f64, "altitude ceiling (m)";
    "env.max_steps" => env.max_steps: usize, "episode step limit";
    "env.threat_penalty" => env.threat_penalty: f64, "constant part of the threat penalty";
    "env.completion_bonus" => env.completion_bonus: f64, "bonus on arrival";
    "env.constraint_penalty" => env.constraint_penalty: f64, "penalty per violated path constraint";
    "env.arena_min" => env.arena.min: vec3, "arena lower corner [x, y, z]";
    "env.arena_max" => env.arena.max: vec3, "arena upper corner [x, y, z]";
    "env.max_speed" => env.max_speed: f64, "speed cap (m/s)";
    "env.cruise_speed" => env.cruise_speed: f64, "free-flow speed (m/s)";
    "env.heading_change_deg" => env.heading_change_deg: f64, "turn angle that activates the minimum segment rule (deg)";
    "env.start_spacing" => env.start_spacing: f64, "minimum spacing between starts and between destinations (m)";
    "env.spawn_band" => env.spawn_band: f64, "depth of the start and destination slabs along x (m)";
    "env.hazard_slots" => obs.hazard_slots: usize, "hazards visible in each local observation";
    "env.aggregate_hazards" => obs.aggregate_hazards: bool, "include hazard slots in the neighbour mean";
    "env.distance_floor" => obs.distance_floor: f64, "lower bound on distances in neighbour weights (m)";
    "train.seed" => train.seed: u64, "master seed (overridden by SWARM_SEED, then by --seed)";
    "train.episodes" => train.episodes: usize, "training episodes";
    "train.instances" => train.instances: usize, "distinct training instances, visited round-robin";
    "train.steps" => train.steps: usize, "step budget per episode";
    "train.warmup" => train.warmup: usize, "transitions collected before the first update";
    "train.update_every" => train.update_every: usize, "environment steps between updates";
    "train.model_hidden" => train.model_hidden: usizes, "hidden widths of the world-model nets";
    "train.model_lr" => train.model_lr: f64, "world-model learning rate";
    "train.decentralized_execution" => train.decentralized_execution: bool, "reject modes that need the joint planner at execution";
    "horizon.eps1" => horizon.eps1: f64, "weight of the transition loss in the model deviation";
    "horizon.eps2" => horizon.eps2: f64, "horizon reduction per unit deviation";
    "horizon.n_base" => horizon.n_base: i64, "horizon at zero deviation before clamping";
    "horizon.n_max" => horizon.n_max: usize, "longest rollout";
    "horizon.force" => horizon.force: opt_usize, "fixed rollout length; 0 uses the adaptive rule";
    "agent.actor_hidden" => agent.actor_hidden: usizes, "actor hidden widths";
    "agent.critic_hidden" => agent.critic_hidden: usizes, "critic hidden widths";
    "agent.actor_lr" => agent.actor_lr: f64, "actor learning rate";
    "agent.critic_lr" => agent.critic_lr: f64, "critic learning rate";
    "agent.gamma" => agent.gamma: f64, "discount factor";
    "agent.zeta" => agent.zeta: f64, "target blending factor (target keeps this share)";
    "agent.batch_size" => agent.batch_size: usize, "replay batch size";
    "agent.buffer_capacity" => agent.buffer_capacity: usize, "replay capacity";
    "agent.noise_sigma" => agent.noise_sigma: f64, "initial exploration noise";
    "agent.noise_decay" => agent.noise_decay: f64, "per-episode noise decay";
    "agent.critic_extended" => agent.critic_extended: bool, "centralised critics see full extended observations";
    "agent.actor_reg" => agent.actor_reg: f64, "L2 penalty on actor pre-squash outputs (0 disables)";
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, Value)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            _ => out.push((key, v.clone())),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        let mut flat = Vec::new();
        flatten("", &table, &mut flat);
        let mut cfg = RunConfig::default();
        for (k, v) in &flat {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::parse(&text)
    }

    /// One `key = value` line per key, in documentation order.
    pub fn to_text(&self) -> String {
        self.pairs().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Default configuration with a comment above every key.
    pub fn documented_defaults() -> String {
        let d = RunConfig::default();
        let mut out = String::new();
        for ((k, v), (_, doc)) in d.pairs().into_iter().zip(KEYS) {
            out.push_str(&format!("# {doc}\n{k} = {v}\n"));
        }
        out
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.env.validate()?;
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        let t = &self.train;
        if t.episodes == 0 || t.instances == 0 || t.steps == 0 || t.update_every == 0 {
            return bad("train.episodes, train.instances, train.steps and train.update_every must be >= 1");
        }
        if !(t.model_lr > 0.0) {
            return bad("train.model_lr must be > 0");
        }
        let a = &self.agent;
        if a.batch_size == 0 || a.buffer_capacity < a.batch_size {
            return bad("agent.batch_size must be >= 1 and <= agent.buffer_capacity");
        }
        if !(0.0..=1.0).contains(&a.gamma) || !(0.0..=1.0).contains(&a.zeta) {
            return bad("agent.gamma and agent.zeta must lie in [0, 1]");
        }
        if !(a.actor_lr > 0.0 && a.critic_lr > 0.0) {
            return bad("learning rates must be > 0");
        }
        if a.noise_sigma < 0.0 || !(0.0..=1.0).contains(&a.noise_decay) {
            return bad("agent.noise_sigma must be >= 0 and agent.noise_decay in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.horizon.eps1) || self.horizon.n_max == 0 {
            return bad("horizon.eps1 must lie in [0, 1] and horizon.n_max >= 1");
        }
        if self.obs.hazard_slots == 0 {
            return bad("env.hazard_slots must be >= 1");
        }
        Ok(())
    }

    /// Rejects combinations that cannot run in `mode`.
    pub fn check_mode(&self, mode: Mode) -> Result<(), HarnessError> {
        if self.train.decentralized_execution && !mode.decentralized_execution() {
            return Err(HarnessError::Config(format!(
                "mode {mode} executes through the joint planner but train.decentralized_execution is set"
            )));
        }
        Ok(())
    }

    /// Applies seed overrides: config < `SWARM_SEED` < explicit flag.
    pub fn apply_seed(&mut self, env_value: Option<&str>, flag: Option<u64>) -> Result<(), HarnessError> {
        if let Some(s) = env_value {
            self.train.seed = s
                .trim()
                .parse()
                .map_err(|_| HarnessError::Config(format!("{SEED_ENV}='{s}' is not an unsigned integer")))?;
        }
        if let Some(s) = flag {
            self.train.seed = s;
        }
        Ok(())
    }
}
