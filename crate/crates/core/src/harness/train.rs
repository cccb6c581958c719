//! Training loop. One episode visits one instance; instances cycle
//! round-robin. Every random stream derives from the run seed.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::RunConfig;
use super::{create_dir, instance_seed, write_file, HarnessError, ScenarioSpec};
use crate::agents::{AgentSet, GaussianNoise, Mode, ReplayBuffer, Transition};
use crate::env::{Vec3, WorldState};
use crate::ifds::Planner;
use crate::mbrl::{adaptive_horizon, deviation, multistep_critic_update, raw_horizon, VirtualModel};
use crate::nets::{config_hash, Checkpoint, RngState};
use crate::obs::encode_all;

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const CONFIG_FILE: &str = "config.toml";
pub const CURVE_FILE: &str = "curve.csv";
pub const MODEL_LOG_FILE: &str = "model_log.csv";

const TRAIN_SALT: u64 = 0x7472_6169_6e00_0000;
const NOISE_SALT: u64 = 0x6e6f_6973_6500_0000;

/// One row of the learning curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub instance: usize,
    /// Sum of path rewards over UAVs and steps.
    #[serde(rename = "return")]
    pub ret: f64,
    pub collisions: u64,
    pub steps: usize,
    pub arrived: usize,
    pub updates: usize,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub noise_sigma: f64,
}

/// Per-episode world-model statistics (means over the episode's updates).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelRecord {
    pub episode: usize,
    pub transition_loss: f64,
    pub reward_loss: f64,
    pub deviation: f64,
    pub horizon: f64,
    pub raw_horizon: f64,
    pub updates: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub records: Vec<EpisodeRecord>,
    pub model_records: Vec<ModelRecord>,
    pub agents: AgentSet,
    pub model: Option<VirtualModel>,
    pub checkpoint: Checkpoint,
}

impl TrainOutcome {
    pub fn returns(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.ret).collect()
    }
}

#[derive(Debug, Default)]
struct UpdateStats {
    critic: f64,
    actor: f64,
    model: Option<(f64, f64, f64, usize, i64)>,
}

/// Mutable training state.
pub struct Trainer {
    pub config: RunConfig,
    pub scenario: ScenarioSpec,
    pub agents: AgentSet,
    pub model: Option<VirtualModel>,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    noise: GaussianNoise,
    planner: Planner,
    episode: usize,
}

impl Trainer {
    /// `scenario` overrides the swarm size, destinations, hazard cadence,
    /// instance count and seed of `config`.
    pub fn new(scenario: &ScenarioSpec, config: &RunConfig) -> Result<Self, HarnessError> {
        scenario.validate()?;
        let mut cfg = config.clone();
        cfg.env.uavs = scenario.uavs;
        cfg.env.destinations = scenario.destinations;
        cfg.env.change_interval = scenario.interval;
        cfg.train.instances = scenario.instances;
        cfg.train.seed = scenario.seed;
        cfg.validate()?;
        cfg.check_mode(scenario.mode)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
        let agents = AgentSet::new(scenario.mode, cfg.env.uavs, &cfg.obs, cfg.agent.clone(), &mut rng);
        let model = scenario.mode.uses_model().then(|| {
            VirtualModel::new(
                cfg.env.uavs,
                agents.layout.obs_dim,
                &cfg.train.model_hidden,
                cfg.train.model_lr,
                &mut rng,
            )
        });
        Ok(Self {
            buffer: ReplayBuffer::new(cfg.agent.buffer_capacity),
            noise: GaussianNoise::new(cfg.agent.noise_sigma, cfg.agent.noise_decay, cfg.train.seed ^ NOISE_SALT),
            planner: Planner::from_config(&cfg.env),
            scenario: scenario.clone(),
            config: cfg,
            agents,
            model,
            rng,
            episode: 0,
        })
    }

    pub fn mode(&self) -> Mode {
        self.scenario.mode
    }

    pub fn episode(&self) -> usize {
        self.episode
    }

    fn update(&mut self) -> Result<UpdateStats, HarnessError> {
        let batch = match self.buffer.sample(self.config.agent.batch_size, &mut self.rng) {
            Ok(b) => b,
            Err(w) => {
                log::debug!("{w}; update skipped");
                return Ok(UpdateStats::default());
            }
        };
        let mut stats = UpdateStats::default();
        let (critic, actor) = match (self.mode(), self.model.as_mut()) {
            (Mode::CtfdeMpc, Some(model)) => {
                let l = model.losses(&batch)?;
                let h = &self.config.horizon;
                let f = deviation(l.transition, l.reward, h.eps1);
                let n = adaptive_horizon(f, h);
                stats.model = Some((l.transition, l.reward, f, n, raw_horizon(f, h)));
                let c = multistep_critic_update(&mut self.agents, model, &batch, n)?;
                let a = self.agents.actor_update(&batch)?;
                model.update(&batch)?;
                (c, a)
            }
            (Mode::DecDdpg, _) => self.agents.dec_ddpg_update(&batch)?,
            _ => {
                let c = self.agents.critic_update(&batch)?;
                (c, self.agents.actor_update(&batch)?)
            }
        };
        self.agents.soft_update_targets()?;
        stats.critic = super::stats::mean(&critic);
        stats.actor = super::stats::mean(&actor);
        Ok(stats)
    }

    fn flat_obs(&self, world: &WorldState) -> Vec<f64> {
        encode_all(world, &self.config.obs, self.mode().extended_obs()).concat()
    }

    /// Runs one episode with exploration noise and online updates.
    pub fn run_episode(&mut self) -> Result<(EpisodeRecord, Option<ModelRecord>), HarnessError> {
        let cfg = &self.config;
        let instance = self.episode % cfg.train.instances;
        let seed = instance_seed(cfg.train.seed ^ TRAIN_SALT, instance as u64);
        let mut world = WorldState::init_instance(&cfg.env, seed)?;
        let steps = cfg.train.steps;
        let update_every = cfg.train.update_every;
        let warmup = cfg.train.warmup.max(cfg.agent.batch_size);
        let uavs = world.uavs.len();
        let d = self.agents.layout.obs_dim;

        let mut obs = self.flat_obs(&world);
        let mut rec = EpisodeRecord {
            episode: self.episode,
            instance,
            ret: 0.0,
            collisions: 0,
            steps: 0,
            arrived: 0,
            updates: 0,
            critic_loss: 0.0,
            actor_loss: 0.0,
            noise_sigma: self.noise.sigma(),
        };
        let mut model_acc: Vec<(f64, f64, f64, usize, i64)> = Vec::new();
        let mut t = 0;
        while t < steps && !world.finished() {
            let mut unit = Vec::with_capacity(uavs * 3);
            let mut plans: Vec<Vec3> = Vec::with_capacity(uavs);
            for i in 0..uavs {
                let (u, a) = self.agents.act(i, &obs[i * d..(i + 1) * d], Some(&mut self.noise))?;
                unit.extend_from_slice(&u);
                plans.push(self.planner.plan(&world, i, &a));
            }
            let out = world.step(&plans)?;
            let next = self.flat_obs(&world);
            let rewards: Vec<f64> = out.rewards.iter().map(|r| r.r_path).collect();
            rec.ret += rewards.iter().sum::<f64>();
            rec.collisions += out.collisions.iter().sum::<u64>();
            self.buffer.push(Transition {
                obs: std::mem::replace(&mut obs, next.clone()),
                actions: unit,
                rewards,
                next_obs: next,
                done: out.done.clone(),
                terminal: out.all_done,
            });
            t += 1;
            if self.buffer.len() >= warmup && t % update_every == 0 {
                let s = self.update()?;
                rec.updates += 1;
                rec.critic_loss += s.critic;
                rec.actor_loss += s.actor;
                model_acc.extend(s.model);
            }
        }
        if rec.updates > 0 {
            rec.critic_loss /= rec.updates as f64;
            rec.actor_loss /= rec.updates as f64;
        }
        rec.steps = t;
        rec.arrived = world.uavs.iter().filter(|u| u.done).count();
        self.noise.end_episode();

        let model_rec = self.model.as_ref().map(|_| {
            let n = model_acc.len() as f64;
            let sum = |f: fn(&(f64, f64, f64, usize, i64)) -> f64| {
                if model_acc.is_empty() {
                    0.0
                } else {
                    model_acc.iter().map(f).sum::<f64>() / n
                }
            };
            ModelRecord {
                episode: self.episode,
                transition_loss: sum(|m| m.0),
                reward_loss: sum(|m| m.1),
                deviation: sum(|m| m.2),
                horizon: sum(|m| m.3 as f64),
                raw_horizon: sum(|m| m.4 as f64),
                updates: model_acc.len(),
            }
        });
        self.episode += 1;
        Ok((rec, model_rec))
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let cfg = &self.config;
        let mode = self.mode();
        let meta = format!(
            "mode={mode};uavs={};seed={};episodes={}",
            cfg.env.uavs, cfg.train.seed, self.episode
        );
        let mut ck = Checkpoint::new(
            &cfg.obs.layout_version(mode.extended_obs()),
            config_hash(&cfg.env),
            &meta,
            self.episode as u64,
            RngState::capture(&self.rng),
        );
        self.agents.push_to_checkpoint(&mut ck);
        if let Some(m) = &self.model {
            ck.push_mlp("model_transition", &m.transition);
            ck.push_mlp("model_reward", &m.reward);
        }
        ck
    }
}

fn csv_text<T: Serialize>(rows: &[T], header: &[&str]) -> Result<String, HarnessError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub const CURVE_HEADER: [&str; 10] = [
    "episode", "instance", "return", "collisions", "steps", "arrived", "updates", "critic_loss", "actor_loss", "noise_sigma",
];
pub const MODEL_LOG_HEADER: [&str; 7] = [
    "episode", "transition_loss", "reward_loss", "deviation", "horizon", "raw_horizon", "updates",
];

pub fn curve_csv(records: &[EpisodeRecord]) -> Result<String, HarnessError> {
    csv_text(records, &CURVE_HEADER)
}

pub fn model_log_csv(records: &[ModelRecord]) -> Result<String, HarnessError> {
    csv_text(records, &MODEL_LOG_HEADER)
}

/// Trains `scenario` under `config`. With an output directory, writes the
/// effective config, the learning curve, the model log (model-based mode
/// only) and the latest checkpoint after every episode.
pub fn train_run(scenario: &ScenarioSpec, config: &RunConfig, out: Option<&Path>) -> Result<TrainOutcome, HarnessError> {
    let mut trainer = Trainer::new(scenario, config)?;
    let paths = out.map(|dir| -> Result<_, HarnessError> {
        create_dir(dir)?;
        let header = format!("# mode = {}\n", scenario.mode);
        write_file(&dir.join(CONFIG_FILE), (header + &trainer.config.to_text()).as_bytes())?;
        Ok(dir.to_path_buf())
    });
    let dir: Option<PathBuf> = paths.transpose()?;
    let mut records = Vec::new();
    let mut model_records = Vec::new();
    for _ in 0..trainer.config.train.episodes {
        let (rec, model_rec) = trainer.run_episode()?;
        log::info!(
            "episode {} instance {} return {:.3} collisions {} steps {} arrived {}",
            rec.episode,
            rec.instance,
            rec.ret,
            rec.collisions,
            rec.steps,
            rec.arrived
        );
        records.push(rec);
        model_records.extend(model_rec);
        if let Some(dir) = &dir {
            write_file(&dir.join(CURVE_FILE), curve_csv(&records)?.as_bytes())?;
            if trainer.model.is_some() {
                write_file(&dir.join(MODEL_LOG_FILE), model_log_csv(&model_records)?.as_bytes())?;
            }
            trainer.checkpoint().save(&dir.join(CHECKPOINT_FILE))?;
        }
    }
    Ok(TrainOutcome {
        checkpoint: trainer.checkpoint(),
        records,
        model_records,
        model: trainer.model,
        agents: trainer.agents,
    })
}
