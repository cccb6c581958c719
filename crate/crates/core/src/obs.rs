//! Per-UAV observations and the distance-weighted neighbour mean.
//!
//! Flat layout of a local observation with `H` hazard slots:
//!
//! | offset        | field                          |
//! |---------------|--------------------------------|
//! | 0..3          | own position                   |
//! | 3..3+4H       | per slot: relative position, valid flag |
//! | 3+4H..6+4H    | start position                 |
//! | 6+4H..9+4H    | target position                |
//! | 9+4H..12+4H   | velocity                       |
//!
//! An extended observation is `own ++ neighbour_mean ++ [neighbour_count]`.

use crate::env::{Vec3, WorldState};

#[derive(Debug, Clone, PartialEq)]
pub struct ObsConfig {
    pub hazard_slots: usize,
    /// Include neighbours' hazard slots in the mean (otherwise they are zeroed).
    pub aggregate_hazards: bool,
    /// Distance floor for inverse-distance weights.
    pub distance_floor: f64,
}

impl Default for ObsConfig {
    fn default() -> Self {
        Self {
            hazard_slots: 3,
            aggregate_hazards: true,
            distance_floor: 1e-3,
        }
    }
}

impl ObsConfig {
    pub fn local_dim(&self) -> usize {
        local_dim(self.hazard_slots)
    }

    pub fn extended_dim(&self) -> usize {
        2 * self.local_dim() + 1
    }

    /// Version tag stored in checkpoints; any layout change must change it.
    pub fn layout_version(&self, extended: bool) -> String {
        format!(
            "obs-v1;h={};ext={};agg={}",
            self.hazard_slots,
            u8::from(extended),
            u8::from(self.aggregate_hazards)
        )
    }
}

pub fn local_dim(slots: usize) -> usize {
    12 + 4 * slots
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HazardSlot {
    pub rel: Vec3,
    /// 1 for a real hazard, 0 for the sentinel; fractional inside a neighbour mean.
    pub valid: f64,
}

impl HazardSlot {
    pub const EMPTY: HazardSlot = HazardSlot {
        rel: Vec3::new(0.0, 0.0, 0.0),
        valid: 0.0,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalObservation {
    pub p: Vec3,
    pub slots: Vec<HazardSlot>,
    pub p_start: Vec3,
    pub p_end: Vec3,
    pub v: Vec3,
}

impl LocalObservation {
    pub fn zeros(slots: usize) -> Self {
        Self {
            p: Vec3::zeros(),
            slots: vec![HazardSlot::EMPTY; slots],
            p_start: Vec3::zeros(),
            p_end: Vec3::zeros(),
            v: Vec3::zeros(),
        }
    }

    pub fn encode_into(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(self.p.as_slice());
        for s in &self.slots {
            out.extend_from_slice(s.rel.as_slice());
            out.push(s.valid);
        }
        out.extend_from_slice(self.p_start.as_slice());
        out.extend_from_slice(self.p_end.as_slice());
        out.extend_from_slice(self.v.as_slice());
    }

    pub fn encode(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(local_dim(self.slots.len()));
        self.encode_into(&mut out);
        out
    }

    /// Inverse of [`encode`](Self::encode). `x.len()` must equal `local_dim(slots)`.
    pub fn decode(x: &[f64], slots: usize) -> Self {
        assert_eq!(x.len(), local_dim(slots), "local observation length");
        let v3 = |o: usize| Vec3::new(x[o], x[o + 1], x[o + 2]);
        let tail = 3 + 4 * slots;
        Self {
            p: v3(0),
            slots: (0..slots)
                .map(|s| HazardSlot {
                    rel: v3(3 + 4 * s),
                    valid: x[6 + 4 * s],
                })
                .collect(),
            p_start: v3(tail),
            p_end: v3(tail + 3),
            v: v3(tail + 6),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedObservation {
    pub own: LocalObservation,
    pub neighbor_mean: LocalObservation,
    pub neighbor_count: usize,
}

impl ExtendedObservation {
    pub fn encode(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * local_dim(self.own.slots.len()) + 1);
        self.own.encode_into(&mut out);
        self.neighbor_mean.encode_into(&mut out);
        out.push(self.neighbor_count as f64);
        out
    }

    pub fn decode(x: &[f64], slots: usize) -> Self {
        let d = local_dim(slots);
        assert_eq!(x.len(), 2 * d + 1, "extended observation length");
        Self {
            own: LocalObservation::decode(&x[..d], slots),
            neighbor_mean: LocalObservation::decode(&x[d..2 * d], slots),
            neighbor_count: x[2 * d] as usize,
        }
    }
}

/// Local observation of UAV `i`: the nearest neighbouring hazards (ascending
/// distance, ties by index) fill the slots.
pub fn local_observation(world: &WorldState, i: usize, slots: usize) -> LocalObservation {
    let me = &world.uavs[i];
    let (_, hazards) = world.neighbor_sets(i);
    let mut ranked: Vec<(f64, usize)> = hazards
        .into_iter()
        .map(|k| ((world.hazards[k].p - me.p).norm(), k))
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut out = LocalObservation {
        p: me.p,
        slots: vec![HazardSlot::EMPTY; slots],
        p_start: me.p_start,
        p_end: me.p_end,
        v: me.v,
    };
    for (slot, (_, k)) in out.slots.iter_mut().zip(ranked) {
        *slot = HazardSlot {
            rel: world.hazards[k].p - me.p,
            valid: 1.0,
        };
    }
    out
}

/// Normalised inverse-distance weights.
pub fn neighbor_weights(p: &Vec3, neighbors: &[Vec3], floor: f64) -> Vec<f64> {
    let raw: Vec<f64> = neighbors
        .iter()
        .map(|q| 1.0 / (p - q).norm().max(floor))
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Weighted elementwise mean of `neighbors`, appended to `own`.
pub fn extend_observation(
    own: LocalObservation,
    neighbors: &[LocalObservation],
    weights: &[f64],
    aggregate_hazards: bool,
) -> ExtendedObservation {
    assert_eq!(neighbors.len(), weights.len(), "one weight per neighbour");
    let slots = own.slots.len();
    let mut acc = vec![0.0; local_dim(slots)];
    for (nb, w) in neighbors.iter().zip(weights) {
        for (a, x) in acc.iter_mut().zip(nb.encode()) {
            *a += w * x;
        }
    }
    let mut mean = LocalObservation::decode(&acc, slots);
    if !aggregate_hazards {
        mean.slots.fill(HazardSlot::EMPTY);
    }
    ExtendedObservation {
        own,
        neighbor_mean: mean,
        neighbor_count: neighbors.len(),
    }
}

/// Extended observation of UAV `i` over its UAV neighbours.
pub fn extended_observation(world: &WorldState, i: usize, cfg: &ObsConfig) -> ExtendedObservation {
    let (uav_nb, _) = world.neighbor_sets(i);
    let positions: Vec<Vec3> = uav_nb.iter().map(|&j| world.uavs[j].p).collect();
    let weights = neighbor_weights(&world.uavs[i].p, &positions, cfg.distance_floor);
    let nb_obs: Vec<_> = uav_nb
        .iter()
        .map(|&j| local_observation(world, j, cfg.hazard_slots))
        .collect();
    extend_observation(
        local_observation(world, i, cfg.hazard_slots),
        &nb_obs,
        &weights,
        cfg.aggregate_hazards,
    )
}

/// Encoded observations for every UAV.
pub fn encode_all(world: &WorldState, cfg: &ObsConfig, extended: bool) -> Vec<Vec<f64>> {
    (0..world.uavs.len())
        .map(|i| {
            if extended {
                extended_observation(world, i, cfg).encode()
            } else {
                local_observation(world, i, cfg.hazard_slots).encode()
            }
        })
        .collect()
}
