//! Learned world model and multi-step critic targets.
//!
//! A transition net and a reward net predict the next joint observation and
//! per-UAV rewards. Their fit on the current batch sets the rollout horizon:
//! a poorly fitting model gets short rollouts.

use rand::Rng;

use crate::agents::{fit_critic, AgentError, AgentSet, Batch};
use crate::ifds::ACTION_DIM;
use crate::nets::{Activation, Adam, Mlp, NetError};
use crate::par;

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonConfig {
    /// Weight of the transition loss in the deviation.
    pub eps1: f64,
    /// Horizon reduction per unit deviation.
    pub eps2: f64,
    pub n_base: i64,
    pub n_max: usize,
    /// Fixed horizon that bypasses the adaptive rule.
    pub force: Option<usize>,
}

impl Default for HorizonConfig {
    fn default() -> Self {
        Self {
            eps1: 0.25,
            eps2: 0.66,
            n_base: 6,
            n_max: 5,
            force: None,
        }
    }
}

pub fn deviation(transition_loss: f64, reward_loss: f64, eps1: f64) -> f64 {
    eps1 * transition_loss + (1.0 - eps1) * reward_loss
}

/// Unclamped horizon `floor(n_base - eps2 * F)`.
pub fn raw_horizon(f: f64, cfg: &HorizonConfig) -> i64 {
    let x = (-cfg.eps2 * f + cfg.n_base as f64).floor();
    if x.is_nan() {
        1
    } else {
        x.clamp(i64::MIN as f64, i64::MAX as f64) as i64
    }
}

/// Horizon clamped to `[1, n_max]`, or the forced value.
pub fn adaptive_horizon(f: f64, cfg: &HorizonConfig) -> usize {
    if let Some(n) = cfg.force {
        return n.clamp(1, cfg.n_max.max(1));
    }
    raw_horizon(f, cfg).clamp(1, cfg.n_max.max(1) as i64) as usize
}

/// Anything that predicts `(next joint obs, per-UAV rewards)` for a batch of
/// joint observations and actions.
pub trait EnvModel {
    fn predict_batch(&self, obs: &[f64], actions: &[f64], rows: usize) -> Result<(Vec<f64>, Vec<f64>), NetError>;
}

#[derive(Debug, Clone)]
pub struct VirtualModel {
    pub uavs: usize,
    pub obs_dim: usize,
    pub transition: Mlp,
    pub reward: Mlp,
    transition_opt: Adam,
    reward_opt: Adam,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelLosses {
    pub transition: f64,
    pub reward: f64,
}

impl VirtualModel {
    pub fn new<R: Rng + ?Sized>(uavs: usize, obs_dim: usize, hidden: &[usize], lr: f64, rng: &mut R) -> Self {
        let input = uavs * (obs_dim + ACTION_DIM);
        let sizes = |out: usize| {
            let mut s = vec![input];
            s.extend(hidden);
            s.push(out);
            s
        };
        let transition = Mlp::new(&sizes(uavs * obs_dim), Activation::Identity, rng);
        let reward = Mlp::new(&sizes(uavs), Activation::Identity, rng);
        Self::from_nets(uavs, obs_dim, transition, reward, lr)
    }

    pub fn from_nets(uavs: usize, obs_dim: usize, transition: Mlp, reward: Mlp, lr: f64) -> Self {
        Self {
            uavs,
            obs_dim,
            transition_opt: Adam::new(&transition, lr),
            reward_opt: Adam::new(&reward, lr),
            transition,
            reward,
        }
    }

    fn inputs(&self, obs: &[f64], actions: &[f64], rows: usize) -> Vec<f64> {
        let (od, ad) = (self.uavs * self.obs_dim, self.uavs * ACTION_DIM);
        let mut x = Vec::with_capacity(rows * (od + ad));
        for r in 0..rows {
            x.extend_from_slice(&obs[r * od..(r + 1) * od]);
            x.extend_from_slice(&actions[r * ad..(r + 1) * ad]);
        }
        x
    }

    /// Mean squared prediction errors on a batch (summed over components, averaged over rows).
    pub fn losses(&self, batch: &Batch) -> Result<ModelLosses, NetError> {
        let (z, r) = self.predict_batch(&batch.obs, &batch.actions, batch.size)?;
        let b = batch.size as f64;
        Ok(ModelLosses {
            transition: sq_dist(&z, &batch.next_obs) / b,
            reward: sq_dist(&r, &batch.rewards) / b,
        })
    }

    /// One gradient step on each net; returns the losses before the step.
    pub fn update(&mut self, batch: &Batch) -> Result<ModelLosses, NetError> {
        let x = self.inputs(&batch.obs, &batch.actions, batch.size);
        let b = batch.size as f64;
        let fit = |net: &mut Mlp, opt: &mut Adam, target: &[f64]| -> Result<f64, NetError> {
            let tape = net.forward_tape(&x, batch.size)?;
            let loss = sq_dist(tape.output(), target) / b;
            if !loss.is_finite() {
                log::warn!("non-finite model loss; step skipped");
                return Ok(loss);
            }
            let up: Vec<f64> = tape.output().iter().zip(target).map(|(p, t)| 2.0 * (p - t) / b).collect();
            let (g, _) = net.backward(&tape, &up)?;
            opt.apply(net, &g);
            Ok(loss)
        };
        let transition = fit(&mut self.transition, &mut self.transition_opt, &batch.next_obs)?;
        let reward = fit(&mut self.reward, &mut self.reward_opt, &batch.rewards)?;
        Ok(ModelLosses { transition, reward })
    }
}

impl EnvModel for VirtualModel {
    fn predict_batch(&self, obs: &[f64], actions: &[f64], rows: usize) -> Result<(Vec<f64>, Vec<f64>), NetError> {
        let x = self.inputs(obs, actions, rows);
        Ok((self.transition.forward_batch(&x, rows)?, self.reward.forward_batch(&x, rows)?))
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Imagined continuation of a batch. Step 0 is the real `(z_c, a_c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutTrace {
    pub rows: usize,
    /// `obs[n]`, `actions[n]`: inputs at step `n` (`rows x uavs x dim`).
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    /// `rewards[n]`: predicted rewards at step `n` (`rows x uavs`).
    pub rewards: Vec<Vec<f64>>,
    /// Predicted observation after the last usable step of each row.
    pub final_obs: Vec<f64>,
    /// Usable steps per row; below the requested horizon only after a non-finite prediction.
    pub horizon: Vec<usize>,
}

/// Rolls the model forward `n` steps from the real batch inputs. Actions after
/// step 0 come from the online actors without exploration noise.
pub fn rollout<M: EnvModel + ?Sized>(
    model: &M,
    agents: &AgentSet,
    obs: &[f64],
    actions: &[f64],
    rows: usize,
    n: usize,
) -> Result<RolloutTrace, NetError> {
    let l = agents.layout;
    let od = l.uavs * l.obs_dim;
    let ud = l.uavs;
    let mut trace = RolloutTrace {
        rows,
        obs: vec![obs.to_vec()],
        actions: vec![actions.to_vec()],
        rewards: Vec::with_capacity(n),
        final_obs: obs.to_vec(),
        horizon: vec![n; rows],
    };
    let mut alive = vec![true; rows];
    for step in 0..n {
        let (next, rew) = model.predict_batch(&trace.obs[step], &trace.actions[step], rows)?;
        for r in 0..rows {
            if !alive[r] {
                continue;
            }
            let finite = next[r * od..(r + 1) * od].iter().all(|x| x.is_finite())
                && rew[r * ud..(r + 1) * ud].iter().all(|x| x.is_finite());
            if finite {
                trace.final_obs[r * od..(r + 1) * od].copy_from_slice(&next[r * od..(r + 1) * od]);
            } else {
                alive[r] = false;
                trace.horizon[r] = step;
                log::warn!("non-finite model prediction at step {step}; rollout truncated");
            }
        }
        trace.rewards.push(rew);
        if step + 1 < n {
            // Dead rows keep their last finite observation so the actors see finite inputs.
            let mut z = next;
            for r in (0..rows).filter(|&r| !alive[r]) {
                z[r * od..(r + 1) * od].copy_from_slice(&trace.final_obs[r * od..(r + 1) * od]);
            }
            let a = agents.joint_actions(&z, rows, false)?;
            trace.obs.push(z);
            trace.actions.push(a);
        }
    }
    Ok(trace)
}

/// `y_n = sum_{m=n}^{N-1} gamma^(m-n) r_m + gamma^(N-n) q_final` for `n in 0..N`.
pub fn multistep_targets(rewards: &[f64], q_final: f64, gamma: f64) -> Vec<f64> {
    let big_n = rewards.len();
    (0..big_n)
        .map(|n| {
            let mut y = 0.0;
            let mut disc = 1.0;
            for r in &rewards[n..] {
                y += disc * r;
                disc *= gamma;
            }
            y + disc * q_final
        })
        .collect()
}

/// Critic regression on model-expanded targets with horizon `n`. Terminal
/// rows use a single step without bootstrap. Returns the per-agent loss
/// (summed over steps, averaged over rows) before the step.
pub fn multistep_critic_update<M: EnvModel + ?Sized>(
    agents: &mut AgentSet,
    model: &M,
    batch: &Batch,
    n: usize,
) -> Result<Vec<f64>, AgentError> {
    let l = agents.layout;
    if batch.uavs != l.uavs || batch.obs_dim != l.obs_dim {
        return Err(AgentError::Layout("batch does not match agents".into()));
    }
    let b = batch.size;
    let n = n.max(1);
    let trace = rollout(model, agents, &batch.obs, &batch.actions, b, n)?;
    let horizon: Vec<usize> = (0..b)
        .map(|r| if batch.terminal[r] { trace.horizon[r].min(1) } else { trace.horizon[r] })
        .collect();
    let od = l.uavs * l.obs_dim;
    // Final observations for terminal rows are irrelevant (no bootstrap).
    let mut final_obs = trace.final_obs.clone();
    for r in 0..b {
        if horizon[r] == 1 && batch.terminal[r] {
            final_obs[r * od..(r + 1) * od].copy_from_slice(&trace.obs[0][r * od..(r + 1) * od]);
        }
    }
    let final_act = agents.joint_actions(&final_obs, b, true)?;
    let gamma = agents.config.gamma;
    let losses = par::map_mut(agents.exec, &mut agents.agents, |i, nets| {
        let xf = l.critic_input(&final_obs, &final_act, b, i);
        let q_final = nets.target_critic.forward_batch(&xf, b)?;
        let per_row: Vec<Vec<f64>> = (0..b)
            .map(|r| {
                let rs: Vec<f64> = (0..horizon[r]).map(|s| trace.rewards[s][r * l.uavs + i]).collect();
                let boot = if batch.terminal[r] { 0.0 } else { q_final[r] };
                multistep_targets(&rs, boot, gamma)
            })
            .collect();
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for step in 0..n {
            let rows: Vec<usize> = (0..b).filter(|&r| step < horizon[r]).collect();
            if rows.is_empty() {
                break;
            }
            let x = l.critic_input(&trace.obs[step], &trace.actions[step], b, i);
            let cd = l.critic_dim();
            for &r in &rows {
                inputs.extend_from_slice(&x[r * cd..(r + 1) * cd]);
                targets.push(per_row[r][step]);
            }
        }
        if targets.is_empty() {
            return Ok(0.0);
        }
        fit_critic(nets, &inputs, &targets, b as f64)
    });
    Ok(losses.into_iter().collect::<Result<_, NetError>>()?)
}
