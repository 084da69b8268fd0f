//! Soft actor-critic learner, its replay buffer and policy evaluation.

mod adam;
mod checkpoint;
mod mlp;
mod replay;
mod sac;

use rand::RngCore;
use thiserror::Error;

use crate::environments::{Action, ActionSpace, EnvError, Environment};

pub use adam::Adam;
pub use mlp::{Cache, Mlp};
pub use replay::{Batch, ReplayBuffer, Source, SourceFilter};
pub use sac::{ActMode, PolicyKind, Sac, SacConfig, UpdateNoise, UpdateStats};

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("invalid learner configuration: {0}")]
    InvalidConfig(String),
    #[error("expected input of length {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite {what}: {detail}")]
    NonFinite { what: &'static str, detail: String },
    #[error("cannot update on an empty batch")]
    EmptyBatch,
    #[error("checkpoint line {line}: {message}")]
    Checkpoint { line: usize, message: String },
    #[error(transparent)]
    Env(#[from] EnvError),
}

impl PolicyKind {
    pub fn for_space(space: &ActionSpace) -> Self {
        match space {
            ActionSpace::Discrete { count } => PolicyKind::Discrete { actions: *count },
            ActionSpace::Continuous { low, .. } => PolicyKind::Continuous { action_dim: low.len() },
        }
    }
}

/// Map a stored learner action (unit-range vector or `[index]`) to an
/// environment action.
pub fn to_env_action(space: &ActionSpace, stored: &[f64]) -> Action {
    match space {
        ActionSpace::Discrete { count } => Action::Discrete((stored[0].max(0.0) as usize).min(count - 1)),
        ActionSpace::Continuous { .. } => space.from_unit(stored),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub returns: Vec<f64>,
    pub lengths: Vec<usize>,
}

impl Evaluation {
    pub fn mean(&self) -> f64 {
        if self.returns.is_empty() {
            return f64::NAN;
        }
        self.returns.iter().sum::<f64>() / self.returns.len() as f64
    }

    pub fn std(&self) -> f64 {
        let n = self.returns.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        (self.returns.iter().map(|r| (r - m).powi(2)).sum::<f64>() / n as f64).sqrt()
    }
}

/// Run `episodes` episodes with the deterministic policy; episode `i`
/// resets with seed `base_seed + i`.
pub fn evaluate_policy(
    learner: &Sac,
    env: &mut Environment,
    episodes: usize,
    base_seed: u64,
    rng: &mut dyn RngCore,
) -> Result<Evaluation, LearnerError> {
    let mut returns = Vec::with_capacity(episodes);
    let mut lengths = Vec::with_capacity(episodes);
    let space = env.task().spec().action_space.clone();
    for i in 0..episodes {
        let state = env.reset(base_seed.wrapping_add(i as u64));
        let mut obs = env.task().observe(&state);
        let mut total = 0.0;
        let mut steps = 0;
        loop {
            let stored = learner.act(&obs, ActMode::Deterministic, rng)?;
            let step = env.step(&to_env_action(&space, &stored))?;
            total += step.reward;
            steps += 1;
            obs = env.task().observe(&step.next_state);
            if step.done {
                break;
            }
        }
        returns.push(total);
        lengths.push(steps);
    }
    Ok(Evaluation { returns, lengths })
}
