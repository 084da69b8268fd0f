//! Analytic control tasks with known rewards, termination predicates and
//! ground-truth dynamics.

mod cartpole;
mod inverted_pendulum;
mod mountain_car;
mod pendulum;

use std::sync::Arc;

use rand::RngCore;
use thiserror::Error;

use crate::feature_library::FeatureLibrary;
use crate::seeding;
use crate::sindy_model::FitConfig;

pub use cartpole::{small_angle_accelerations, CartPole, CartPoleParams};
pub use inverted_pendulum::{InvertedPendulum, InvertedPendulumParams};
pub use mountain_car::{MountainCar, MountainCarParams};
pub use pendulum::{Pendulum, PendulumParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("unknown environment `{0}`")]
    UnknownEnvironment(String),
    #[error("environment `{env}` has no constant `{name}`")]
    UnknownConstant { env: String, name: String },
    #[error("invalid value {value} for `{name}`: {reason}")]
    InvalidConstant { name: String, value: f64, reason: String },
    #[error("action does not match the action space of `{0}`")]
    ActionMismatch(String),
    #[error("environment must be reset before stepping")]
    NotReset,
    #[error("episode is over; reset before stepping")]
    EpisodeOver,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ActionSpace {
    Discrete { count: usize },
    Continuous { low: Vec<f64>, high: Vec<f64> },
}

impl ActionSpace {
    /// Number of policy outputs: action count for discrete spaces, dimension
    /// for continuous ones.
    pub fn size(&self) -> usize {
        match self {
            ActionSpace::Discrete { count } => *count,
            ActionSpace::Continuous { low, .. } => low.len(),
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, ActionSpace::Discrete { .. })
    }

    /// Map an action in `[-1, 1]^d` onto the continuous bounds.
    pub fn from_unit(&self, unit: &[f64]) -> Action {
        match self {
            ActionSpace::Continuous { low, high } => Action::Continuous(
                unit.iter()
                    .zip(low.iter().zip(high))
                    .map(|(u, (lo, hi))| lo + (u.clamp(-1.0, 1.0) + 1.0) * 0.5 * (hi - lo))
                    .collect(),
            ),
            ActionSpace::Discrete { .. } => panic!("from_unit on a discrete action space"),
        }
    }

    /// Inverse of [`ActionSpace::from_unit`].
    pub fn to_unit(&self, action: &[f64]) -> Vec<f64> {
        match self {
            ActionSpace::Continuous { low, high } => action
                .iter()
                .zip(low.iter().zip(high))
                .map(|(a, (lo, hi))| 2.0 * (a - lo) / (hi - lo) - 1.0)
                .collect(),
            ActionSpace::Discrete { .. } => panic!("to_unit on a discrete action space"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DoneReason {
    Running,
    Termination,
    Truncation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_state: Vec<f64>,
    /// Model input actually applied (clamped force or torque).
    pub control: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub done_reason: DoneReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentSpec {
    pub name: &'static str,
    pub state_dim: usize,
    /// Width of the control input seen by the dynamics model.
    pub control_dim: usize,
    pub observation_dim: usize,
    pub action_space: ActionSpace,
    pub dt: f64,
    pub max_episode_steps: usize,
    pub constants: Vec<(&'static str, f64)>,
}

/// One nonzero term of a reference equation: feature name and coefficient.
pub type Term = (String, f64);

/// A control task. Implementations are stateless; [`Environment`] carries
/// the episode state.
pub trait Task: Send + Sync {
    fn spec(&self) -> &EnvironmentSpec;

    fn sample_initial_state(&self, rng: &mut dyn RngCore) -> Vec<f64>;

    /// Control input applied to the physics for `action`.
    fn control(&self, action: &Action) -> Result<Vec<f64>, EnvError>;

    /// Real next state.
    fn transition(&self, state: &[f64], control: &[f64]) -> Vec<f64>;

    fn reward(&self, state: &[f64], control: &[f64], next_state: &[f64]) -> f64;

    fn is_terminal(&self, state: &[f64]) -> bool;

    /// Policy input.
    fn observe(&self, state: &[f64]) -> Vec<f64>;

    /// Analytic `f(x; a)` in the mode of [`Task::default_fit`]: a derivative
    /// for continuous models, the next state for discrete ones. No clamps.
    fn true_dynamics(&self, state: &[f64], control: &[f64]) -> Vec<f64>;

    /// Exact coefficients of the true dynamics over
    /// [`Task::default_library`], one term list per state dimension, when
    /// the library can represent them exactly.
    fn reference_terms(&self) -> Option<Vec<Vec<Term>>>;

    fn default_library(&self) -> FeatureLibrary;

    fn default_fit(&self) -> FitConfig;

    /// Axis-aligned box covering the reachable states, used for uniform
    /// model rollout starts.
    fn state_box(&self) -> (Vec<f64>, Vec<f64>);
}

pub const ENVIRONMENT_NAMES: [&str; 4] = ["cartpole", "mountain_car", "pendulum", "inverted_pendulum"];

/// Build a task by name with constant overrides.
pub fn make_task(name: &str, overrides: &[(String, f64)]) -> Result<Arc<dyn Task>, EnvError> {
    Ok(match name {
        "cartpole" => Arc::new(CartPole::new(CartPoleParams::with_overrides(overrides)?)),
        "mountain_car" => Arc::new(MountainCar::new(MountainCarParams::with_overrides(overrides)?)),
        "pendulum" => Arc::new(Pendulum::new(PendulumParams::with_overrides(overrides)?)),
        "inverted_pendulum" => Arc::new(InvertedPendulum::new(InvertedPendulumParams::with_overrides(overrides)?)),
        other => return Err(EnvError::UnknownEnvironment(other.to_string())),
    })
}

pub(crate) fn apply_overrides(
    env: &str,
    fields: &mut [(&'static str, &mut f64, bool)],
    overrides: &[(String, f64)],
) -> Result<(), EnvError> {
    for (name, value) in overrides {
        let slot = fields
            .iter_mut()
            .find(|(n, _, _)| n == name)
            .ok_or_else(|| EnvError::UnknownConstant { env: env.to_string(), name: name.clone() })?;
        let positive = slot.2;
        if !value.is_finite() || (positive && *value <= 0.0) || (!positive && *value < 0.0) {
            return Err(EnvError::InvalidConstant {
                name: name.clone(),
                value: *value,
                reason: if positive { "must be positive" } else { "must be non-negative" }.into(),
            });
        }
        *slot.1 = *value;
    }
    Ok(())
}

pub(crate) fn continuous_control(name: &str, space: &ActionSpace, action: &Action) -> Result<Vec<f64>, EnvError> {
    match (space, action) {
        (ActionSpace::Continuous { low, high }, Action::Continuous(a)) if a.len() == low.len() => {
            Ok(a.iter().zip(low.iter().zip(high)).map(|(v, (lo, hi))| v.clamp(*lo, *hi)).collect())
        }
        _ => Err(EnvError::ActionMismatch(name.to_string())),
    }
}

/// A running episode of a [`Task`].
#[derive(Clone)]
pub struct Environment {
    task: Arc<dyn Task>,
    state: Option<Vec<f64>>,
    steps: usize,
    finished: bool,
}

impl Environment {
    pub fn new(task: Arc<dyn Task>) -> Self {
        Self { task, state: None, steps: 0, finished: false }
    }

    pub fn task(&self) -> &Arc<dyn Task> {
        &self.task
    }

    pub fn spec(&self) -> &EnvironmentSpec {
        self.task.spec()
    }

    /// Reset from a seed: identical seeds give identical initial states.
    pub fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = seeding::stream(seed, "reset");
        self.reset_with(&mut rng)
    }

    pub fn reset_with(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        let s = self.task.sample_initial_state(rng);
        self.reset_to(s.clone());
        s
    }

    pub fn reset_to(&mut self, state: Vec<f64>) {
        self.state = Some(state);
        self.steps = 0;
        self.finished = false;
    }

    pub fn state(&self) -> Option<&[f64]> {
        self.state.as_deref()
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn observation(&self) -> Option<Vec<f64>> {
        self.state.as_ref().map(|s| self.task.observe(s))
    }

    pub fn step(&mut self, action: &Action) -> Result<StepResult, EnvError> {
        if self.finished {
            return Err(EnvError::EpisodeOver);
        }
        let state = self.state.as_ref().ok_or(EnvError::NotReset)?;
        let control = self.task.control(action)?;
        let next = self.task.transition(state, &control);
        let reward = self.task.reward(state, &control, &next);
        self.steps += 1;
        let done_reason = if self.task.is_terminal(&next) {
            DoneReason::Termination
        } else if self.steps >= self.task.spec().max_episode_steps {
            DoneReason::Truncation
        } else {
            DoneReason::Running
        };
        let done = done_reason != DoneReason::Running;
        self.finished = done;
        self.state = Some(next.clone());
        Ok(StepResult { next_state: next, control, reward, done, done_reason })
    }
}
