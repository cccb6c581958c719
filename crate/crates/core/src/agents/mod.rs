//! Deterministic actors with centralised (or independent) critics.

mod noise;
mod replay;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

pub use noise::GaussianNoise;
pub use replay::{Batch, ReplayBuffer, Transition, Warmup};

use crate::ifds::{ActionBounds, ShapingAction, ACTION_DIM};
use crate::nets::{soft_update, Activation, Adam, Checkpoint, Mlp, NetError};
use crate::obs::ObsConfig;
use crate::par::{self, Execution};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("operation requires mode {expected}, agents are {found}")]
    Mode { expected: &'static str, found: Mode },
    #[error("unknown mode '{0}' (expected ctpde, ctfde, ctfde-mpc or dec-ddpg)")]
    UnknownMode(String),
    #[error("batch layout does not match agents: {0}")]
    Layout(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Local observations, execution through the joint planner.
    Ctpde,
    /// Extended observations, decentralised execution.
    Ctfde,
    /// As `Ctfde`, with model-based multi-step critic targets.
    CtfdeMpc,
    /// Independent per-UAV critics.
    DecDdpg,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Ctpde, Mode::Ctfde, Mode::CtfdeMpc, Mode::DecDdpg];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Ctpde => "ctpde",
            Mode::Ctfde => "ctfde",
            Mode::CtfdeMpc => "ctfde-mpc",
            Mode::DecDdpg => "dec-ddpg",
        }
    }

    pub fn extended_obs(self) -> bool {
        self != Mode::Ctpde
    }

    pub fn centralized_critic(self) -> bool {
        self != Mode::DecDdpg
    }

    pub fn uses_model(self) -> bool {
        self == Mode::CtfdeMpc
    }

    /// Policies whose input does not depend on the number of UAVs.
    pub fn decentralized_execution(self) -> bool {
        self != Mode::Ctpde
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = AgentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| AgentError::UnknownMode(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gamma: f64,
    /// Target blending factor.
    pub zeta: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Exploration noise scale in the unit action box.
    pub noise_sigma: f64,
    pub noise_decay: f64,
    /// Centralised critics see full extended observations instead of the local part.
    pub critic_extended: bool,
    /// Weight of an L2 penalty on the actor's pre-squash outputs.
    pub actor_reg: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            actor_hidden: vec![64, 64],
            critic_hidden: vec![128, 128],
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            gamma: 0.99,
            zeta: 0.99,
            batch_size: 128,
            buffer_capacity: 100_000,
            noise_sigma: 0.6,
            noise_decay: 0.995,
            critic_extended: false,
            actor_reg: 0.0,
        }
    }
}

/// Input geometry shared by all agents of a set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub mode: Mode,
    pub uavs: usize,
    pub obs_dim: usize,
    /// Leading part of each observation fed to centralised critics.
    pub critic_obs_dim: usize,
}

impl Layout {
    pub fn new(mode: Mode, uavs: usize, obs: &ObsConfig, critic_extended: bool) -> Self {
        let obs_dim = if mode.extended_obs() {
            obs.extended_dim()
        } else {
            obs.local_dim()
        };
        let critic_obs_dim = if critic_extended { obs_dim } else { obs.local_dim() };
        Self {
            mode,
            uavs,
            obs_dim,
            critic_obs_dim,
        }
    }

    pub fn critic_dim(&self) -> usize {
        if self.mode.centralized_critic() {
            self.uavs * (self.critic_obs_dim + ACTION_DIM)
        } else {
            self.obs_dim + ACTION_DIM
        }
    }

    /// Offset of agent `i`'s action inside its critic input.
    pub fn action_offset(&self, agent: usize) -> usize {
        if self.mode.centralized_critic() {
            self.uavs * self.critic_obs_dim + agent * ACTION_DIM
        } else {
            self.obs_dim
        }
    }

    /// Critic inputs for `rows` joint samples (`obs` is `rows x uavs x obs_dim`).
    pub fn critic_input(&self, obs: &[f64], actions: &[f64], rows: usize, agent: usize) -> Vec<f64> {
        let (n, d, a) = (self.uavs, self.obs_dim, ACTION_DIM);
        let mut out = Vec::with_capacity(rows * self.critic_dim());
        for r in 0..rows {
            let o = &obs[r * n * d..(r + 1) * n * d];
            let act = &actions[r * n * a..(r + 1) * n * a];
            if self.mode.centralized_critic() {
                for j in 0..n {
                    out.extend_from_slice(&o[j * d..j * d + self.critic_obs_dim]);
                }
                out.extend_from_slice(act);
            } else {
                out.extend_from_slice(&o[agent * d..(agent + 1) * d]);
                out.extend_from_slice(&act[agent * a..(agent + 1) * a]);
            }
        }
        out
    }

    /// Rows of agent `agent`'s observation out of joint observations.
    pub fn agent_rows(&self, obs: &[f64], rows: usize, agent: usize) -> Vec<f64> {
        let d = self.obs_dim;
        let mut out = Vec::with_capacity(rows * d);
        for r in 0..rows {
            let base = (r * self.uavs + agent) * d;
            out.extend_from_slice(&obs[base..base + d]);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct AgentNets {
    pub actor: Mlp,
    pub target_actor: Mlp,
    pub critic: Mlp,
    pub target_critic: Mlp,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
}

/// Squashed deterministic action of `net` for a batch of observations.
pub fn squashed_actions(net: &Mlp, obs: &[f64], rows: usize) -> Result<Vec<f64>, NetError> {
    let mut pre = net.forward_batch(obs, rows)?;
    pre.iter_mut().for_each(|x| *x = x.tanh());
    Ok(pre)
}

/// Fits `critic` toward `targets` on stacked inputs; the loss is
/// `sum (Q - y)^2 / denom`. Non-finite losses skip the step.
pub fn fit_critic(nets: &mut AgentNets, inputs: &[f64], targets: &[f64], denom: f64) -> Result<f64, NetError> {
    let rows = targets.len();
    let tape = nets.critic.forward_tape(inputs, rows)?;
    let diff: Vec<f64> = tape.output().iter().zip(targets).map(|(q, y)| q - y).collect();
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / denom;
    if !loss.is_finite() {
        log::warn!("non-finite critic loss; step skipped");
        return Ok(loss);
    }
    let upstream: Vec<f64> = diff.iter().map(|d| 2.0 * d / denom).collect();
    let (grads, _) = nets.critic.backward(&tape, &upstream)?;
    nets.critic_opt.apply(&mut nets.critic, &grads);
    Ok(loss)
}

/// Trainable agents, one per UAV.
#[derive(Debug, Clone)]
pub struct AgentSet {
    pub layout: Layout,
    pub config: AgentConfig,
    pub bounds: ActionBounds,
    pub agents: Vec<AgentNets>,
    pub exec: Execution,
}

impl AgentSet {
    pub fn new<R: Rng + ?Sized>(mode: Mode, uavs: usize, obs: &ObsConfig, config: AgentConfig, rng: &mut R) -> Self {
        let layout = Layout::new(mode, uavs, obs, config.critic_extended);
        let mut actor_sizes = vec![layout.obs_dim];
        actor_sizes.extend(&config.actor_hidden);
        actor_sizes.push(ACTION_DIM);
        let mut critic_sizes = vec![layout.critic_dim()];
        critic_sizes.extend(&config.critic_hidden);
        critic_sizes.push(1);
        let agents = (0..uavs)
            .map(|_| {
                let mut actor = Mlp::new(&actor_sizes, Activation::Identity, rng);
                actor.scale_last_layer(0.1);
                let mut critic = Mlp::new(&critic_sizes, Activation::Identity, rng);
                critic.scale_last_layer(0.1);
                AgentNets {
                    actor_opt: Adam::new(&actor, config.actor_lr),
                    critic_opt: Adam::new(&critic, config.critic_lr),
                    target_actor: actor.clone(),
                    target_critic: critic.clone(),
                    actor,
                    critic,
                }
            })
            .collect();
        Self {
            layout,
            config,
            bounds: ActionBounds::default(),
            agents,
            exec: Execution::default(),
        }
    }

    pub fn mode(&self) -> Mode {
        self.layout.mode
    }

    fn check_batch(&self, batch: &Batch) -> Result<(), AgentError> {
        if batch.uavs != self.layout.uavs || batch.obs_dim != self.layout.obs_dim {
            return Err(AgentError::Layout(format!(
                "batch has {} UAVs x {} obs, agents expect {} x {}",
                batch.uavs, batch.obs_dim, self.layout.uavs, self.layout.obs_dim
            )));
        }
        Ok(())
    }

    /// Unit-box action of agent `i`; exploration noise is added before squashing.
    pub fn act(&self, i: usize, obs: &[f64], noise: Option<&mut GaussianNoise>) -> Result<([f64; ACTION_DIM], ShapingAction), NetError> {
        let mut pre = self.agents[i].actor.forward(obs)?;
        if let Some(n) = noise {
            for (p, e) in pre.iter_mut().zip(n.sample(ACTION_DIM)) {
                *p += e;
            }
        }
        let unit = [pre[0].tanh(), pre[1].tanh(), pre[2].tanh()];
        Ok((unit, self.bounds.from_unit(&unit)))
    }

    /// Joint actions (`rows x uavs x ACTION_DIM`) from online or target actors.
    pub fn joint_actions(&self, obs: &[f64], rows: usize, target: bool) -> Result<Vec<f64>, NetError> {
        let l = self.layout;
        let per_agent = par::map_range(self.exec, l.uavs, |j| {
            let x = l.agent_rows(obs, rows, j);
            let net = if target { &self.agents[j].target_actor } else { &self.agents[j].actor };
            squashed_actions(net, &x, rows)
        });
        let mut out = vec![0.0; rows * l.uavs * ACTION_DIM];
        for (j, acts) in per_agent.into_iter().enumerate() {
            let acts = acts?;
            for r in 0..rows {
                let dst = (r * l.uavs + j) * ACTION_DIM;
                out[dst..dst + ACTION_DIM].copy_from_slice(&acts[r * ACTION_DIM..(r + 1) * ACTION_DIM]);
            }
        }
        Ok(out)
    }

    /// One-step targets `r + gamma * Q'(z', mu'(z'))`, bootstrap dropped on terminal rows.
    pub fn td_targets(&self, batch: &Batch, use_target: bool) -> Result<Vec<Vec<f64>>, AgentError> {
        self.check_batch(batch)?;
        let l = self.layout;
        let b = batch.size;
        let next_act = self.joint_actions(&batch.next_obs, b, use_target)?;
        let gamma = self.config.gamma;
        let out = par::map_range(self.exec, l.uavs, |i| {
            let x = l.critic_input(&batch.next_obs, &next_act, b, i);
            let net = if use_target { &self.agents[i].target_critic } else { &self.agents[i].critic };
            let q = net.forward_batch(&x, b)?;
            Ok::<_, NetError>(
                (0..b)
                    .map(|r| {
                        let boot = if batch.terminal[r] { 0.0 } else { gamma * q[r] };
                        batch.rewards[r * l.uavs + i] + boot
                    })
                    .collect(),
            )
        });
        Ok(out.into_iter().collect::<Result<_, _>>()?)
    }

    /// Single-step critic regression; returns the pre-step loss per agent.
    pub fn critic_update(&mut self, batch: &Batch) -> Result<Vec<f64>, AgentError> {
        let targets = self.td_targets(batch, true)?;
        let l = self.layout;
        let b = batch.size;
        let losses = par::map_mut(self.exec, &mut self.agents, |i, nets| {
            let x = l.critic_input(&batch.obs, &batch.actions, b, i);
            fit_critic(nets, &x, &targets[i], b as f64)
        });
        Ok(losses.into_iter().collect::<Result<_, _>>()?)
    }

    /// Deterministic policy gradient step; other agents' actions come from the batch.
    /// The optional pre-activation penalty is added to the gradient only.
    /// Returns `-mean Q` per agent before the step.
    pub fn actor_update(&mut self, batch: &Batch) -> Result<Vec<f64>, AgentError> {
        self.check_batch(batch)?;
        let l = self.layout;
        let b = batch.size;
        let actor_reg = self.config.actor_reg;
        let losses = par::map_mut(self.exec, &mut self.agents, |i, nets| {
            let x = l.agent_rows(&batch.obs, b, i);
            let tape = nets.actor.forward_tape(&x, b)?;
            let a: Vec<f64> = tape.output().iter().map(|v| v.tanh()).collect();
            let mut joint = batch.actions.clone();
            for r in 0..b {
                let dst = (r * l.uavs + i) * ACTION_DIM;
                joint[dst..dst + ACTION_DIM].copy_from_slice(&a[r * ACTION_DIM..(r + 1) * ACTION_DIM]);
            }
            let cin = l.critic_input(&batch.obs, &joint, b, i);
            let ctape = nets.critic.forward_tape(&cin, b)?;
            let loss = -ctape.output().iter().sum::<f64>() / b as f64;
            if !loss.is_finite() {
                log::warn!("non-finite actor loss; step skipped");
                return Ok(loss);
            }
            let (_, dx) = nets.critic.backward(&ctape, &vec![-1.0 / b as f64; b])?;
            let off = l.action_offset(i);
            let cdim = l.critic_dim();
            let reg = 2.0 * actor_reg / (b * ACTION_DIM) as f64;
            let mut dpre = vec![0.0; b * ACTION_DIM];
            for r in 0..b {
                for k in 0..ACTION_DIM {
                    let y = a[r * ACTION_DIM + k];
                    let pre = tape.output()[r * ACTION_DIM + k];
                    dpre[r * ACTION_DIM + k] = dx[r * cdim + off + k] * (1.0 - y * y) + reg * pre;
                }
            }
            let (grads, _) = nets.actor.backward(&tape, &dpre)?;
            nets.actor_opt.apply(&mut nets.actor, &grads);
            Ok::<_, NetError>(loss)
        });
        Ok(losses.into_iter().collect::<Result<_, _>>()?)
    }

    /// Independent-learner update; each critic sees only its own observation and action.
    pub fn dec_ddpg_update(&mut self, batch: &Batch) -> Result<(Vec<f64>, Vec<f64>), AgentError> {
        if self.mode() != Mode::DecDdpg {
            return Err(AgentError::Mode {
                expected: "dec-ddpg",
                found: self.mode(),
            });
        }
        let c = self.critic_update(batch)?;
        let a = self.actor_update(batch)?;
        Ok((c, a))
    }

    pub fn soft_update_targets(&mut self) -> Result<(), NetError> {
        let zeta = self.config.zeta;
        for n in &mut self.agents {
            soft_update(&mut n.target_actor, &n.actor, zeta)?;
            soft_update(&mut n.target_critic, &n.critic, zeta)?;
        }
        Ok(())
    }

    pub fn hard_update_targets(&mut self) {
        for n in &mut self.agents {
            n.target_actor = n.actor.clone();
            n.target_critic = n.critic.clone();
        }
    }

    pub fn push_to_checkpoint(&self, ck: &mut Checkpoint) {
        for (i, n) in self.agents.iter().enumerate() {
            ck.push_mlp(&format!("actor{i}"), &n.actor);
            ck.push_mlp(&format!("critic{i}"), &n.critic);
            ck.push_mlp(&format!("target_actor{i}"), &n.target_actor);
            ck.push_mlp(&format!("target_critic{i}"), &n.target_critic);
        }
    }

    pub fn policy(&self, obs: &ObsConfig) -> Policy {
        Policy {
            mode: self.mode(),
            obs: obs.clone(),
            bounds: self.bounds,
            actors: self.agents.iter().map(|n| n.actor.clone()).collect(),
        }
    }
}

/// Execution-only view: noiseless actors.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub mode: Mode,
    pub obs: ObsConfig,
    pub bounds: ActionBounds,
    pub actors: Vec<Mlp>,
}

impl Policy {
    pub fn obs_dim(&self) -> usize {
        self.actors[0].input_dim()
    }

    /// UAV `uav` uses actor `uav % actors`, which lets a policy trained on
    /// fewer UAVs drive a larger swarm.
    pub fn action(&self, uav: usize, obs: &[f64]) -> Result<ShapingAction, NetError> {
        let net = &self.actors[uav % self.actors.len()];
        let pre = net.forward(obs)?;
        let unit: Vec<f64> = pre.iter().map(|x| x.tanh()).collect();
        Ok(self.bounds.from_unit(&unit))
    }

    pub fn from_checkpoint(ck: &Checkpoint, mode: Mode, obs: &ObsConfig, uavs: usize) -> Result<Self, NetError> {
        let actors = (0..uavs)
            .map(|i| ck.mlp(&format!("actor{i}")))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            mode,
            obs: obs.clone(),
            bounds: ActionBounds::default(),
            actors,
        })
    }
}
