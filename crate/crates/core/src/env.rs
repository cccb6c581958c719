//! Stochastic 3-D world: kinematic UAVs, regenerating hazardous areas,
//! path constraints and the path-planning reward.
//!
//! UAVs are point-mass integrators that track the planned position, capped at
//! `max_speed`. Hazards are spheres that teleport every `change_interval`
//! steps and never spawn on top of a UAV (or a UAV's target).

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Rejection-sampling budget per placed object.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
    #[error("could not place {what} after {attempts} attempts")]
    PlacementFailed { what: &'static str, attempts: usize },
    #[error("hazard sampling exhausted after {0} attempts")]
    SamplingExhausted(usize),
    #[error("episode finished at step {0}")]
    EpisodeFinished(usize),
    #[error("expected {expected} planned positions, got {got}")]
    PlanLength { expected: usize, got: usize },
    #[error("UAV index {0} out of range")]
    BadUav(usize),
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    pub fn size(&self) -> Vec3 {
        self.max - self.min
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub uavs: usize,
    /// Distinct destination points; UAV `i` flies to destination `i % destinations`.
    pub destinations: usize,
    pub hazards_min: usize,
    pub hazards_max: usize,
    /// Steps between hazard regenerations.
    pub change_interval: usize,
    pub uav_radius: f64,
    pub hazard_radius: f64,
    pub neighbor_dist: f64,
    pub threat_dist: f64,
    pub completion_dist: f64,
    pub dt: f64,
    pub min_segment: f64,
    pub max_path_length: f64,
    pub min_altitude: f64,
    pub max_altitude: f64,
    pub max_steps: usize,
    /// r_a
    pub threat_penalty: f64,
    /// r_b
    pub completion_bonus: f64,
    /// r_c
    pub constraint_penalty: f64,
    pub arena: Aabb,
    pub max_speed: f64,
    pub cruise_speed: f64,
    /// Heading change above which the minimum segment length applies.
    pub heading_change_deg: f64,
    /// Minimum pairwise distance between start (and destination) points.
    pub start_spacing: f64,
    /// Depth of the start slab (low x) and target slab (high x).
    pub spawn_band: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            uavs: 6,
            destinations: 4,
            hazards_min: 3,
            hazards_max: 5,
            change_interval: 15,
            uav_radius: 0.1,
            hazard_radius: 0.3,
            neighbor_dist: 1.5,
            threat_dist: 0.2,
            completion_dist: 0.2,
            dt: 0.1,
            min_segment: 0.01,
            max_path_length: 50.0,
            min_altitude: 0.2,
            max_altitude: 2.5,
            max_steps: 300,
            threat_penalty: 1.0,
            completion_bonus: 5.0,
            constraint_penalty: 1.0,
            arena: Aabb::new(Vec3::zeros(), Vec3::new(5.0, 5.0, 3.0)),
            max_speed: 1.0,
            cruise_speed: 1.0,
            heading_change_deg: 15.0,
            start_spacing: 0.6,
            spawn_band: 0.8,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: &str| Err(EnvError::InvalidConfig(m.to_string()));
        if self.uavs == 0 {
            return bad("uavs must be >= 1");
        }
        if self.destinations == 0 {
            return bad("destinations must be >= 1");
        }
        if self.hazards_min > self.hazards_max {
            return bad("hazards_min > hazards_max");
        }
        if self.change_interval == 0 {
            return bad("change_interval must be >= 1");
        }
        if !(self.min_altitude < self.max_altitude) {
            return bad("min_altitude must be < max_altitude");
        }
        if !(self.min_segment > 0.0) {
            return bad("min_segment must be > 0");
        }
        if !(self.completion_dist > 0.0) {
            return bad("completion_dist must be > 0");
        }
        if !(self.threat_dist > 0.0) {
            return bad("threat_dist must be > 0");
        }
        if !(self.uav_radius > 0.0 && self.hazard_radius > 0.0) {
            return bad("radii must be > 0");
        }
        if !(self.neighbor_dist > self.uav_radius + self.hazard_radius) {
            return bad("neighbor_dist must exceed uav_radius + hazard_radius");
        }
        if !(self.dt >= 0.0 && self.max_speed > 0.0 && self.cruise_speed > 0.0) {
            return bad("dt must be >= 0 and speeds > 0");
        }
        if self.start_spacing <= 2.0 * self.uav_radius {
            return bad("start_spacing must exceed 2 * uav_radius");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be >= 1");
        }
        Ok(())
    }

    /// Combined radius for a UAV against a hazard (ρ_ik).
    pub fn hazard_clearance(&self) -> f64 {
        self.uav_radius + self.hazard_radius
    }

    /// Combined radius for a UAV against another UAV (ρ_ij).
    pub fn uav_clearance(&self) -> f64 {
        2.0 * self.uav_radius
    }

    /// Canonical text form, used for hashing.
    pub fn canonical(&self) -> String {
        format!("{self:?}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UavState {
    pub id: usize,
    pub p: Vec3,
    pub p_start: Vec3,
    pub p_end: Vec3,
    pub v: Vec3,
    pub path_length: f64,
    pub done: bool,
    /// Displacement of the most recent non-zero segment.
    pub last_segment: Vec3,
    pub collisions: u64,
}

impl UavState {
    fn new(id: usize, start: Vec3, end: Vec3) -> Self {
        Self {
            id,
            p: start,
            p_start: start,
            p_end: end,
            v: Vec3::zeros(),
            path_length: 0.0,
            done: false,
            last_segment: Vec3::zeros(),
            collisions: 0,
        }
    }

    pub fn distance_to_goal(&self) -> f64 {
        (self.p - self.p_end).norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hazard {
    pub p: Vec3,
    pub radius: f64,
}

/// Which path constraints a candidate move violates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConstraintStatus {
    pub segment: bool,
    pub altitude: bool,
    pub path_length: bool,
}

impl ConstraintStatus {
    pub fn violated(&self) -> bool {
        self.segment || self.altitude || self.path_length
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RewardBreakdown {
    pub r_int: f64,
    pub r_avo: f64,
    pub r_con: f64,
    pub r_path: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub rewards: Vec<RewardBreakdown>,
    pub done: Vec<bool>,
    /// Collision incidences per UAV during this step.
    pub collisions: Vec<u64>,
    pub constraints: Vec<ConstraintStatus>,
    pub all_done: bool,
    pub regenerated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub uavs: Vec<UavState>,
    pub hazards: Vec<Hazard>,
    pub t: usize,
    config: EnvConfig,
    rng: ChaCha8Rng,
}

fn sample_range(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

impl WorldState {
    /// Builds a fresh instance. Identical `(config, seed)` gives a bit-identical world.
    pub fn init_instance(config: &EnvConfig, seed: u64) -> Result<Self, EnvError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let arena = config.arena;
        let margin = config.uav_radius;
        let z_lo = arena.min.z.max(config.min_altitude) + margin;
        let z_hi = arena.max.z.min(config.max_altitude) - margin;
        let y_lo = arena.min.y + margin;
        let y_hi = arena.max.y - margin;

        let mut sample_points = |count: usize, x_lo: f64, x_hi: f64, what: &'static str| {
            let mut pts: Vec<Vec3> = Vec::with_capacity(count);
            for _ in 0..count {
                let mut placed = false;
                for _ in 0..MAX_PLACEMENT_ATTEMPTS {
                    let c = Vec3::new(
                        sample_range(&mut rng, x_lo, x_hi),
                        sample_range(&mut rng, y_lo, y_hi),
                        sample_range(&mut rng, z_lo, z_hi),
                    );
                    if pts.iter().all(|q| (q - c).norm() > config.start_spacing) {
                        pts.push(c);
                        placed = true;
                        break;
                    }
                }
                if !placed {
                    return Err(EnvError::PlacementFailed {
                        what,
                        attempts: MAX_PLACEMENT_ATTEMPTS,
                    });
                }
            }
            Ok(pts)
        };

        let band = config.spawn_band.min(0.5 * arena.size().x);
        let starts = sample_points(
            config.uavs,
            arena.min.x + margin,
            arena.min.x + band,
            "UAV start",
        )?;
        let dest_count = config.destinations.min(config.uavs);
        let dests = sample_points(
            dest_count,
            arena.max.x - band,
            arena.max.x - margin,
            "destination",
        )?;

        let uavs = starts
            .iter()
            .enumerate()
            .map(|(i, s)| UavState::new(i, *s, dests[i % dest_count]))
            .collect();
        let mut world = Self {
            uavs,
            hazards: Vec::new(),
            t: 0,
            config: config.clone(),
            rng,
        };
        world.regenerate_hazards()?;
        Ok(world)
    }

    /// Builds a world from explicit parts, e.g. for hand-made scenarios.
    pub fn from_parts(
        config: &EnvConfig,
        starts_and_targets: &[(Vec3, Vec3)],
        hazards: Vec<Hazard>,
        seed: u64,
    ) -> Result<Self, EnvError> {
        config.validate()?;
        let uavs = starts_and_targets
            .iter()
            .enumerate()
            .map(|(i, (s, e))| UavState::new(i, *s, *e))
            .collect();
        let mut cfg = config.clone();
        cfg.uavs = starts_and_targets.len();
        Ok(Self {
            uavs,
            hazards,
            t: 0,
            config: cfg,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }

    pub fn total_collisions(&self) -> u64 {
        self.uavs.iter().map(|u| u.collisions).sum()
    }

    pub fn all_done(&self) -> bool {
        self.uavs.iter().all(|u| u.done)
    }

    /// True when no further `step` is allowed.
    pub fn finished(&self) -> bool {
        self.all_done() || self.t >= self.config.max_steps
    }

    /// UAV and hazard neighbours of UAV `i` (strictly closer than `neighbor_dist`),
    /// in increasing index order.
    pub fn neighbor_sets(&self, i: usize) -> (Vec<usize>, Vec<usize>) {
        let p = self.uavs[i].p;
        let d = self.config.neighbor_dist;
        let uavs = self
            .uavs
            .iter()
            .enumerate()
            .filter(|(j, u)| *j != i && (u.p - p).norm() < d)
            .map(|(j, _)| j)
            .collect();
        let hazards = self
            .hazards
            .iter()
            .enumerate()
            .filter(|(_, h)| (h.p - p).norm() < d)
            .map(|(k, _)| k)
            .collect();
        (uavs, hazards)
    }

    /// Replaces the hazard set. Count is uniform in `[hazards_min, hazards_max]`;
    /// every hazard keeps `hazard_clearance` away from each UAV and each target.
    pub fn regenerate_hazards(&mut self) -> Result<(), EnvError> {
        let cfg = &self.config;
        let count = self.rng.random_range(cfg.hazards_min..=cfg.hazards_max);
        let arena = cfg.arena;
        let band = cfg.spawn_band.min(0.5 * arena.size().x);
        let x_lo = arena.min.x + band;
        let x_hi = arena.max.x - band;
        let z_lo = arena.min.z.max(cfg.min_altitude);
        let z_hi = arena.max.z.min(cfg.max_altitude);
        let keep_out = cfg.hazard_clearance();
        let mut hazards = Vec::with_capacity(count);
        for _ in 0..count {
            let mut placed = None;
            for _ in 0..MAX_PLACEMENT_ATTEMPTS {
                let c = Vec3::new(
                    sample_range(&mut self.rng, x_lo, x_hi),
                    sample_range(&mut self.rng, arena.min.y, arena.max.y),
                    sample_range(&mut self.rng, z_lo, z_hi),
                );
                let clear = self
                    .uavs
                    .iter()
                    .all(|u| (u.p - c).norm() > keep_out && (u.p_end - c).norm() > keep_out);
                if clear {
                    placed = Some(c);
                    break;
                }
            }
            match placed {
                Some(p) => hazards.push(Hazard {
                    p,
                    radius: cfg.hazard_radius,
                }),
                None => return Err(EnvError::SamplingExhausted(MAX_PLACEMENT_ATTEMPTS)),
            }
        }
        self.hazards = hazards;
        Ok(())
    }

    /// Scores UAV `i` at its current position against the current hazards.
    pub fn compute_reward(&self, i: usize, constraint: &ConstraintStatus) -> RewardBreakdown {
        compute_reward(&self.config, &self.uavs, &self.hazards, i, constraint)
    }

    /// Advances one sampling period. `planned` holds one entry per UAV; entries
    /// for finished UAVs are ignored (they hold position).
    pub fn step(&mut self, planned: &[Vec3]) -> Result<StepOutcome, EnvError> {
        if self.finished() {
            return Err(EnvError::EpisodeFinished(self.t));
        }
        if planned.len() != self.uavs.len() {
            return Err(EnvError::PlanLength {
                expected: self.uavs.len(),
                got: planned.len(),
            });
        }
        let cfg = self.config.clone();
        let max_step = cfg.max_speed * cfg.dt;
        let mut constraints = vec![ConstraintStatus::default(); self.uavs.len()];
        for (u, (target, status)) in self
            .uavs
            .iter_mut()
            .zip(planned.iter().zip(constraints.iter_mut()))
        {
            if u.done {
                u.v = Vec3::zeros();
                continue;
            }
            let mut disp = target - u.p;
            let len = disp.norm();
            if len > max_step {
                disp *= max_step / len;
            }
            let next = u.p + disp;
            *status = check_path_constraints(u, &next, &cfg);
            let seg = disp.norm();
            u.p = next;
            u.v = if cfg.dt > 0.0 { disp / cfg.dt } else { Vec3::zeros() };
            u.path_length += seg;
            if seg > 0.0 {
                u.last_segment = disp;
            }
        }
        self.t += 1;

        let rewards: Vec<_> = (0..self.uavs.len())
            .map(|i| self.compute_reward(i, &constraints[i]))
            .collect();

        let hz = cfg.hazard_clearance();
        let uz = cfg.uav_clearance();
        let mut collisions = vec![0u64; self.uavs.len()];
        for (i, c) in collisions.iter_mut().enumerate() {
            let p = self.uavs[i].p;
            *c += self.hazards.iter().filter(|h| (h.p - p).norm() < hz).count() as u64;
            *c += self
                .uavs
                .iter()
                .enumerate()
                .filter(|(j, o)| *j != i && (o.p - p).norm() < uz)
                .count() as u64;
        }
        for (u, c) in self.uavs.iter_mut().zip(&collisions) {
            u.collisions += c;
            if !u.done && u.distance_to_goal() < cfg.completion_dist {
                u.done = true;
            }
        }

        let mut regenerated = false;
        if self.t.is_multiple_of(cfg.change_interval) && !self.all_done() && self.t < cfg.max_steps {
            self.regenerate_hazards()?;
            regenerated = true;
        }

        Ok(StepOutcome {
            rewards,
            done: self.uavs.iter().map(|u| u.done).collect(),
            collisions,
            constraints,
            all_done: self.all_done(),
            regenerated,
        })
    }
}

/// Path-constraint check for moving `uav` to `p_next`.
///
/// The minimum segment length only applies when the heading changes by more
/// than `heading_change_deg` relative to the previous segment.
pub fn check_path_constraints(uav: &UavState, p_next: &Vec3, cfg: &EnvConfig) -> ConstraintStatus {
    let seg = p_next - uav.p;
    let le = seg.norm();
    let turning = if le > 0.0 && uav.last_segment.norm() > 0.0 {
        let cos = seg.dot(&uav.last_segment) / (le * uav.last_segment.norm());
        cos.clamp(-1.0, 1.0).acos() > cfg.heading_change_deg.to_radians()
    } else {
        false
    };
    ConstraintStatus {
        segment: turning && le < cfg.min_segment,
        altitude: p_next.z < cfg.min_altitude || p_next.z > cfg.max_altitude,
        path_length: uav.path_length + le > cfg.max_path_length,
    }
}

/// Threat-zone penalty for one obstacle at distance `dist` with combined radius `rho`.
/// Zero at and beyond `rho + threat_dist`.
pub fn threat_penalty(dist: f64, rho: f64, threat_dist: f64, r_a: f64) -> f64 {
    if dist < rho + threat_dist {
        (dist - (rho + threat_dist)) / rho - r_a
    } else {
        0.0
    }
}

pub fn compute_reward(
    cfg: &EnvConfig,
    uavs: &[UavState],
    hazards: &[Hazard],
    i: usize,
    constraint: &ConstraintStatus,
) -> RewardBreakdown {
    let me = &uavs[i];
    let rho_k = cfg.hazard_clearance();
    let rho_j = cfg.uav_clearance();
    let avo_hazard: f64 = hazards
        .iter()
        .map(|h| (h.p - me.p).norm())
        .filter(|d| *d < cfg.neighbor_dist)
        .map(|d| threat_penalty(d, rho_k, cfg.threat_dist, cfg.threat_penalty))
        .sum();
    let avo_uav: f64 = uavs
        .iter()
        .filter(|o| o.id != me.id)
        .map(|o| (o.p - me.p).norm())
        .filter(|d| *d < cfg.neighbor_dist)
        .map(|d| threat_penalty(d, rho_j, cfg.threat_dist, cfg.threat_penalty))
        .sum();
    let r_avo = avo_hazard + avo_uav;

    let r_int = if me.done {
        0.0
    } else {
        let to_goal = me.distance_to_goal();
        let span = (me.p_start - me.p_end).norm();
        let ratio = if span > 0.0 { to_goal / span } else { 0.0 };
        if to_goal < cfg.completion_dist {
            -ratio + cfg.completion_bonus
        } else {
            -ratio
        }
    };
    let r_con = if constraint.violated() {
        -cfg.constraint_penalty
    } else {
        0.0
    };
    RewardBreakdown {
        r_int,
        r_avo,
        r_con,
        r_path: r_int + r_avo + r_con,
    }
}
