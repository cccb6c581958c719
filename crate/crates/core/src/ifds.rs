//! Interfered fluid flow planner. The learned action sets the repulsive gain,
//! the tangential gain and the horizontal tangent direction; each neighbouring
//! sphere bends the goal-directed free flow around itself.

use std::f64::consts::PI;

use thiserror::Error;

use crate::env::{EnvConfig, Vec3, WorldState};

/// Bound on the exponent argument inside the gain formula.
pub const EXPONENT_CLAMP: f64 = 50.0;

pub const ACTION_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapingAction {
    /// Repulsive gain input.
    pub psi: f64,
    /// Tangential gain input.
    pub theta: f64,
    /// Tangent heading in the horizontal plane, radians.
    pub phi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionBounds {
    pub gain_min: f64,
    pub gain_max: f64,
}

impl Default for ActionBounds {
    fn default() -> Self {
        Self {
            gain_min: 0.1,
            gain_max: 3.0,
        }
    }
}

impl ActionBounds {
    /// Maps a vector in `[-1, 1]^3` onto the action box.
    pub fn from_unit(&self, u: &[f64]) -> ShapingAction {
        let gain = |x: f64| {
            let x = x.clamp(-1.0, 1.0);
            self.gain_min + 0.5 * (x + 1.0) * (self.gain_max - self.gain_min)
        };
        ShapingAction {
            psi: gain(u[0]),
            theta: gain(u[1]),
            phi: u[2].clamp(-1.0, 1.0) * PI,
        }
    }

    pub fn to_unit(&self, a: &ShapingAction) -> [f64; ACTION_DIM] {
        let unit = |g: f64| 2.0 * (g - self.gain_min) / (self.gain_max - self.gain_min) - 1.0;
        [unit(a.psi), unit(a.theta), a.phi / PI]
    }

    pub fn contains(&self, a: &ShapingAction) -> bool {
        let g = self.gain_min..=self.gain_max;
        g.contains(&a.psi) && g.contains(&a.theta) && (-PI..=PI).contains(&a.phi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowParams {
    pub eta: f64,
    pub tau: f64,
    pub kappa: Vec3,
    /// The exponent argument hit the clamp.
    pub saturated: bool,
}

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum ShapingError {
    #[error("position is inside the obstacle (clearance {0})")]
    Penetration(f64),
    #[error("goal reached")]
    GoalReached,
}

pub fn tangent_direction(phi: f64) -> Vec3 {
    Vec3::new(phi.cos(), phi.sin(), 0.0)
}

/// Repulsive/tangential parameters for one obstacle of combined radius `rho` at `p_c`.
pub fn shaping_params(
    p: &Vec3,
    p_end: &Vec3,
    p_c: &Vec3,
    rho: f64,
    action: &ShapingAction,
    completion_dist: f64,
) -> Result<FlowParams, ShapingError> {
    let to_goal = (p - p_end).norm();
    if to_goal < completion_dist {
        return Err(ShapingError::GoalReached);
    }
    let clearance = (p - p_c).norm() - rho;
    if clearance <= 0.0 {
        return Err(ShapingError::Penetration(clearance));
    }
    let raw = 1.0 - 1.0 / (to_goal * clearance);
    let arg = raw.clamp(-EXPONENT_CLAMP, EXPONENT_CLAMP);
    let scale = arg.exp();
    Ok(FlowParams {
        eta: scale * action.psi,
        tau: scale * action.theta,
        kappa: tangent_direction(action.phi),
        saturated: arg != raw,
    })
}

/// Goal-directed free flow at cruise speed.
pub fn free_flow(p: &Vec3, p_end: &Vec3, cruise_speed: f64) -> Vec3 {
    let d = p_end - p;
    let n = d.norm();
    if n > 0.0 {
        d * (cruise_speed / n)
    } else {
        Vec3::zeros()
    }
}

/// Free flow `u` modulated by one spherical obstacle.
pub fn disturbed_speed(u: &Vec3, p: &Vec3, p_c: &Vec3, rho: f64, flow: &FlowParams) -> Vec3 {
    let n = p - p_c;
    let nn = n.norm_squared();
    let n_len = nn.sqrt();
    let ln_gamma = 2.0 * (n_len / rho).ln();
    let nu = n.dot(u);
    let mut out = u - n * ((-ln_gamma / flow.eta).exp() * nu / nn);
    let t = flow.kappa.cross(&n);
    let t_len = t.norm();
    if t_len > 1e-12 * n_len {
        out += t * ((-ln_gamma / flow.tau).exp() * nu / (t_len * n_len));
    }
    out
}

/// Velocity pushing straight out of an obstacle the UAV has entered.
pub fn escape_velocity(p: &Vec3, p_c: &Vec3, speed: f64) -> Vec3 {
    let n = p - p_c;
    let len = n.norm();
    if len > 0.0 {
        n * (speed / len)
    } else {
        Vec3::new(0.0, 0.0, speed)
    }
}

pub fn clamp_norm(v: Vec3, max: f64) -> Vec3 {
    let n = v.norm();
    if n > max {
        v * (max / n)
    } else {
        v
    }
}

/// Averages the per-obstacle velocities (free flow when there are none),
/// caps the speed and integrates over `dt`.
pub fn next_position(p: &Vec3, contributions: &[Vec3], free: &Vec3, dt: f64, max_speed: f64) -> Vec3 {
    let v = if contributions.is_empty() {
        *free
    } else {
        contributions.iter().sum::<Vec3>() / contributions.len() as f64
    };
    p + clamp_norm(v, max_speed) * dt
}

/// Per-UAV planner bound to an environment configuration.
#[derive(Debug, Clone)]
pub struct Planner {
    pub cruise_speed: f64,
    pub max_speed: f64,
    pub dt: f64,
    pub completion_dist: f64,
    pub uav_clearance: f64,
    pub hazard_clearance: f64,
}

impl Planner {
    pub fn from_config(cfg: &EnvConfig) -> Self {
        Self {
            cruise_speed: cfg.cruise_speed,
            max_speed: cfg.max_speed,
            dt: cfg.dt,
            completion_dist: cfg.completion_dist,
            uav_clearance: cfg.uav_clearance(),
            hazard_clearance: cfg.hazard_clearance(),
        }
    }

    /// Next planned position of UAV `i` under `action`.
    pub fn plan(&self, world: &WorldState, i: usize, action: &ShapingAction) -> Vec3 {
        let me = &world.uavs[i];
        if me.done {
            return me.p;
        }
        let (uav_nb, hazard_nb) = world.neighbor_sets(i);
        let obstacles = uav_nb
            .iter()
            .map(|&j| (world.uavs[j].p, self.uav_clearance))
            .chain(
                hazard_nb
                    .iter()
                    .map(|&k| (world.hazards[k].p, self.hazard_clearance)),
            );
        self.plan_among(&me.p, &me.p_end, obstacles, action)
    }

    pub fn plan_among(
        &self,
        p: &Vec3,
        p_end: &Vec3,
        obstacles: impl Iterator<Item = (Vec3, f64)>,
        action: &ShapingAction,
    ) -> Vec3 {
        if (p - p_end).norm() < self.completion_dist {
            return *p_end;
        }
        let u = free_flow(p, p_end, self.cruise_speed);
        let mut contributions = Vec::new();
        let mut deepest: Option<(f64, Vec3)> = None;
        for (p_c, rho) in obstacles {
            match shaping_params(p, p_end, &p_c, rho, action, self.completion_dist) {
                Ok(flow) => {
                    if flow.saturated {
                        log::debug!("flow gain exponent saturated at clearance {}", (p - p_c).norm() - rho);
                    }
                    contributions.push(disturbed_speed(&u, p, &p_c, rho, &flow));
                }
                Err(ShapingError::Penetration(c)) => {
                    if deepest.is_none_or(|(d, _)| c < d) {
                        deepest = Some((c, p_c));
                    }
                }
                Err(ShapingError::GoalReached) => return *p_end,
            }
        }
        if let Some((_, p_c)) = deepest {
            return p + escape_velocity(p, &p_c, self.max_speed) * self.dt;
        }
        next_position(p, &contributions, &u, self.dt, self.max_speed)
    }
}
