use nalgebra::DMatrix;

use super::ModelError;

/// States `x(0..=T)`, actions `a(0..T)`, rewards and done flags for `T`
/// transitions sampled every `dt` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    state_dim: usize,
    action_dim: usize,
    dt: f64,
    states: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    dones: Vec<bool>,
}

impl Trajectory {
    /// Start a trajectory at `initial_state`.
    pub fn start(initial_state: &[f64], action_dim: usize, dt: f64) -> Result<Self, ModelError> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(ModelError::InvalidTrajectory(format!("dt must be positive, got {dt}")));
        }
        if initial_state.is_empty() {
            return Err(ModelError::InvalidTrajectory("empty state".into()));
        }
        if initial_state.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidTrajectory("non-finite initial state".into()));
        }
        Ok(Self {
            state_dim: initial_state.len(),
            action_dim,
            dt,
            states: initial_state.to_vec(),
            actions: Vec::new(),
            rewards: Vec::new(),
            dones: Vec::new(),
        })
    }

    /// Build from row-major matrices; `states` must have one more row than
    /// `actions`.
    pub fn from_parts(
        states: &DMatrix<f64>,
        actions: &DMatrix<f64>,
        rewards: Vec<f64>,
        dones: Vec<bool>,
        dt: f64,
    ) -> Result<Self, ModelError> {
        let steps = actions.nrows();
        if states.nrows() != steps + 1 || rewards.len() != steps || dones.len() != steps {
            return Err(ModelError::InvalidTrajectory(format!(
                "{} states, {} actions, {} rewards, {} dones",
                states.nrows(),
                steps,
                rewards.len(),
                dones.len()
            )));
        }
        let mut traj = Self::start(&states.row(0).iter().copied().collect::<Vec<_>>(), actions.ncols(), dt)?;
        for t in 0..steps {
            let a: Vec<f64> = actions.row(t).iter().copied().collect();
            let s: Vec<f64> = states.row(t + 1).iter().copied().collect();
            traj.push(&a, &s, rewards[t], dones[t])?;
        }
        Ok(traj)
    }

    pub fn push(&mut self, action: &[f64], next_state: &[f64], reward: f64, done: bool) -> Result<(), ModelError> {
        if action.len() != self.action_dim || next_state.len() != self.state_dim {
            return Err(ModelError::InvalidTrajectory(format!(
                "expected action of {} and state of {}, got {} and {}",
                self.action_dim,
                self.state_dim,
                action.len(),
                next_state.len()
            )));
        }
        if action.iter().chain(next_state).any(|v| !v.is_finite()) || !reward.is_finite() {
            return Err(ModelError::InvalidTrajectory(format!("non-finite values at step {}", self.len())));
        }
        self.actions.extend_from_slice(action);
        self.states.extend_from_slice(next_state);
        self.rewards.push(reward);
        self.dones.push(done);
        Ok(())
    }

    /// Number of transitions `T`.
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn state(&self, t: usize) -> &[f64] {
        &self.states[t * self.state_dim..(t + 1) * self.state_dim]
    }

    pub fn action(&self, t: usize) -> &[f64] {
        &self.actions[t * self.action_dim..(t + 1) * self.action_dim]
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.len())
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn dones(&self) -> &[bool] {
        &self.dones
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    /// `(T+1) x n` state matrix.
    pub fn states_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.len() + 1, self.state_dim, &self.states)
    }

    /// `T x k` action matrix.
    pub fn actions_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.len(), self.action_dim, &self.actions)
    }
}
