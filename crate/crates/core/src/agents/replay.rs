use rand::seq::index;
use rand::Rng;
use thiserror::Error;

/// One joint step: flat per-UAV observations and unit-box actions.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    /// `uavs x obs_dim`
    pub obs: Vec<f64>,
    /// `uavs x ACTION_DIM`
    pub actions: Vec<f64>,
    pub rewards: Vec<f64>,
    pub next_obs: Vec<f64>,
    pub done: Vec<bool>,
    /// Every UAV finished; the bootstrap term is dropped. Time-limit truncation is not terminal.
    pub terminal: bool,
}

impl Transition {
    pub fn uavs(&self) -> usize {
        self.rewards.len()
    }
}

/// Column-stacked sample of transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub size: usize,
    pub uavs: usize,
    pub obs_dim: usize,
    pub obs: Vec<f64>,
    pub actions: Vec<f64>,
    /// `size x uavs`
    pub rewards: Vec<f64>,
    pub next_obs: Vec<f64>,
    pub terminal: Vec<bool>,
}

impl Batch {
    pub fn from_transitions(items: &[&Transition]) -> Self {
        assert!(!items.is_empty(), "empty batch");
        let uavs = items[0].uavs();
        let obs_dim = items[0].obs.len() / uavs;
        let mut b = Batch {
            size: items.len(),
            uavs,
            obs_dim,
            obs: Vec::with_capacity(items.len() * uavs * obs_dim),
            actions: Vec::new(),
            rewards: Vec::new(),
            next_obs: Vec::with_capacity(items.len() * uavs * obs_dim),
            terminal: Vec::new(),
        };
        for t in items {
            assert_eq!(t.uavs(), uavs, "mixed UAV counts in one batch");
            b.obs.extend_from_slice(&t.obs);
            b.actions.extend_from_slice(&t.actions);
            b.rewards.extend_from_slice(&t.rewards);
            b.next_obs.extend_from_slice(&t.next_obs);
            b.terminal.push(t.terminal);
        }
        b
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("replay buffer holds {have} transitions, batch needs {need}")]
pub struct Warmup {
    pub have: usize,
    pub need: usize,
}

/// Fixed-capacity ring buffer.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "capacity must be positive");
        Self {
            capacity,
            items: Vec::new(),
            next: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    /// Indices of a uniform sample without replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> Result<Vec<usize>, Warmup> {
        if size == 0 || self.items.len() < size {
            return Err(Warmup {
                have: self.items.len(),
                need: size,
            });
        }
        Ok(index::sample(rng, self.items.len(), size).into_vec())
    }

    pub fn sample<R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> Result<Batch, Warmup> {
        let idx = self.sample_indices(size, rng)?;
        let items: Vec<&Transition> = idx.iter().map(|&i| &self.items[i]).collect();
        Ok(Batch::from_transitions(&items))
    }
}
