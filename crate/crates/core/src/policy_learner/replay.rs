//! FIFO replay buffer with a source tag per transition.

use rand::{Rng, RngCore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Source {
    Real,
    Model,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceFilter {
    All,
    Only(Source),
}

/// Columns of sampled transitions, one row per sample.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Batch {
    pub obs: Vec<f64>,
    /// Unit-range continuous actions, or the action index for discrete
    /// learners.
    pub actions: Vec<f64>,
    pub rewards: Vec<f64>,
    pub next_obs: Vec<f64>,
    /// True only for real terminations; time-limit truncations bootstrap.
    pub terminals: Vec<bool>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    action_dim: usize,
    obs: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    next_obs: Vec<f64>,
    terminals: Vec<bool>,
    sources: Vec<Source>,
    /// Next slot to overwrite once full.
    head: usize,
    len: usize,
    /// Slots holding each source, and each slot's position in that list.
    by_source: [Vec<usize>; 2],
    position: Vec<usize>,
}

fn source_index(s: Source) -> usize {
    match s {
        Source::Real => 0,
        Source::Model => 1,
    }
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize, action_dim: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            obs_dim,
            action_dim,
            obs: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            next_obs: Vec::new(),
            terminals: Vec::new(),
            sources: Vec::new(),
            head: 0,
            len: 0,
            by_source: [Vec::new(), Vec::new()],
            position: Vec::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn count(&self, filter: SourceFilter) -> usize {
        match filter {
            SourceFilter::All => self.len,
            SourceFilter::Only(s) => self.by_source[source_index(s)].len(),
        }
    }

    pub fn push(&mut self, obs: &[f64], action: &[f64], reward: f64, next_obs: &[f64], terminal: bool, source: Source) {
        assert_eq!(obs.len(), self.obs_dim);
        assert_eq!(next_obs.len(), self.obs_dim);
        assert_eq!(action.len(), self.action_dim);
        let slot = if self.len < self.capacity {
            self.obs.extend_from_slice(obs);
            self.actions.extend_from_slice(action);
            self.rewards.push(reward);
            self.next_obs.extend_from_slice(next_obs);
            self.terminals.push(terminal);
            self.sources.push(source);
            self.position.push(0);
            self.len += 1;
            self.len - 1
        } else {
            let slot = self.head;
            self.head = (self.head + 1) % self.capacity;
            self.unlink(slot);
            self.obs[slot * self.obs_dim..(slot + 1) * self.obs_dim].copy_from_slice(obs);
            self.actions[slot * self.action_dim..(slot + 1) * self.action_dim].copy_from_slice(action);
            self.rewards[slot] = reward;
            self.next_obs[slot * self.obs_dim..(slot + 1) * self.obs_dim].copy_from_slice(next_obs);
            self.terminals[slot] = terminal;
            self.sources[slot] = source;
            slot
        };
        let list = &mut self.by_source[source_index(source)];
        self.position[slot] = list.len();
        list.push(slot);
    }

    fn unlink(&mut self, slot: usize) {
        let list = &mut self.by_source[source_index(self.sources[slot])];
        let pos = self.position[slot];
        list.swap_remove(pos);
        if pos < list.len() {
            self.position[list[pos]] = pos;
        }
    }

    /// Uniform sample with replacement among transitions passing `filter`.
    /// Returns `None` when no transition matches.
    pub fn sample(&self, batch: usize, filter: SourceFilter, rng: &mut dyn RngCore) -> Option<Batch> {
        let available = self.count(filter);
        if available == 0 {
            return None;
        }
        let mut out = Batch {
            obs: Vec::with_capacity(batch * self.obs_dim),
            actions: Vec::with_capacity(batch * self.action_dim),
            rewards: Vec::with_capacity(batch),
            next_obs: Vec::with_capacity(batch * self.obs_dim),
            terminals: Vec::with_capacity(batch),
        };
        for _ in 0..batch {
            let k = rng.random_range(0..available);
            let slot = match filter {
                SourceFilter::All => k,
                SourceFilter::Only(s) => self.by_source[source_index(s)][k],
            };
            self.copy_slot(slot, &mut out);
        }
        Some(out)
    }

    /// Every stored transition in slot order.
    pub fn all(&self) -> Batch {
        let mut out = Batch::default();
        for slot in 0..self.len {
            self.copy_slot(slot, &mut out);
        }
        out
    }

    pub fn source(&self, slot: usize) -> Source {
        self.sources[slot]
    }

    fn copy_slot(&self, slot: usize, out: &mut Batch) {
        out.obs.extend_from_slice(&self.obs[slot * self.obs_dim..(slot + 1) * self.obs_dim]);
        out.actions.extend_from_slice(&self.actions[slot * self.action_dim..(slot + 1) * self.action_dim]);
        out.rewards.push(self.rewards[slot]);
        out.next_obs.extend_from_slice(&self.next_obs[slot * self.obs_dim..(slot + 1) * self.obs_dim]);
        out.terminals.push(self.terminals[slot]);
    }
}
