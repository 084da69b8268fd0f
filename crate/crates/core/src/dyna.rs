//! Dyna-style training: fit a sparse model on a few real rollouts, train
//! the learner mostly on model rollouts, and fine-tune on occasional real
//! episodes until the policy passes the convergence check.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng as _, RngCore};
use thiserror::Error;

use crate::environments::{ActionSpace, DoneReason, EnvError, Environment, Task};
use crate::feature_library::FeatureLibrary;
use crate::policy_learner::{
    evaluate_policy, to_env_action, ActMode, LearnerError, PolicyKind, ReplayBuffer, Sac, Source, SourceFilter,
};
use crate::seeding;
use crate::sindy_model::{FitConfig, ModelError, SindyModel, Trajectory};

#[derive(Debug, Error)]
pub enum DynaError {
    #[error("invalid dyna configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error("model diverged in model epoch {epoch} at step {step} from state {start:?}\n{equations}")]
    ModelDiverged { epoch: usize, step: usize, start: Vec<f64>, equations: String },
}

/// Pseudo-random policy for the seed rollouts.
#[derive(Debug, Clone, PartialEq)]
pub enum ExplorationPolicy {
    /// Extreme actions in opposite directions on alternating steps, with a
    /// uniformly random action instead with probability `random_prob`.
    Alternating { random_prob: f64 },
    /// `amplitude · sin(2π t / period + phase)` in unit action space, with
    /// the period drawn from `[period_min, period_max]` and a random phase
    /// per rollout.
    Sinusoid { amplitude: f64, period_min: f64, period_max: f64 },
    Uniform,
}

impl ExplorationPolicy {
    fn validate(&self) -> Result<(), DynaError> {
        let bad = |m: &str| Err(DynaError::InvalidConfig(m.to_string()));
        match *self {
            ExplorationPolicy::Alternating { random_prob } if !(0.0..=1.0).contains(&random_prob) => {
                bad("random_prob must lie in [0, 1]")
            }
            ExplorationPolicy::Sinusoid { amplitude, period_min, period_max }
                if !(0.0..=1.0).contains(&amplitude) || !(period_min > 0.0) || period_max < period_min =>
            {
                bad("sinusoid needs amplitude in [0, 1] and 0 < period_min <= period_max")
            }
            _ => Ok(()),
        }
    }
}

struct ExplorationState {
    period: f64,
    phase: f64,
}

impl ExplorationState {
    fn new(policy: &ExplorationPolicy, rng: &mut dyn RngCore) -> Self {
        match *policy {
            ExplorationPolicy::Sinusoid { period_min, period_max, .. } => Self {
                period: if period_max > period_min { rng.random_range(period_min..=period_max) } else { period_min },
                phase: rng.random_range(0.0..std::f64::consts::TAU),
            },
            _ => Self { period: 1.0, phase: 0.0 },
        }
    }

    /// Stored (learner-form) action for step `t`.
    fn action(&self, policy: &ExplorationPolicy, space: &ActionSpace, t: usize, rng: &mut dyn RngCore) -> Vec<f64> {
        match (policy, space) {
            (ExplorationPolicy::Alternating { random_prob }, _) => {
                if *random_prob > 0.0 && rng.random_bool(*random_prob) {
                    match space {
                        ActionSpace::Discrete { .. } => random_action(space, rng),
                        ActionSpace::Continuous { low, .. } => {
                            (0..low.len()).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect()
                        }
                    }
                } else {
                    match space {
                        ActionSpace::Discrete { count } => vec![if t % 2 == 0 { 0.0 } else { (count - 1) as f64 }],
                        ActionSpace::Continuous { low, .. } => vec![if t % 2 == 0 { -1.0 } else { 1.0 }; low.len()],
                    }
                }
            }
            (ExplorationPolicy::Sinusoid { amplitude, .. }, _) => {
                let s = amplitude * (std::f64::consts::TAU * t as f64 / self.period + self.phase).sin();
                match space {
                    ActionSpace::Discrete { count } => vec![if s < 0.0 { 0.0 } else { (count - 1) as f64 }],
                    ActionSpace::Continuous { low, .. } => vec![s; low.len()],
                }
            }
            (ExplorationPolicy::Uniform, _) => random_action(space, rng),
        }
    }
}

fn random_action(space: &ActionSpace, rng: &mut dyn RngCore) -> Vec<f64> {
    match space {
        ActionSpace::Discrete { count } => vec![rng.random_range(0..*count) as f64],
        ActionSpace::Continuous { low, .. } => (0..low.len()).map(|_| rng.random_range(-1.0..=1.0)).collect(),
    }
}

/// One real step in both forms: the learner view (observations, stored
/// action) and the model view (internal states, control).
struct RealTransition {
    obs: Vec<f64>,
    stored_action: Vec<f64>,
    reward: f64,
    next_obs: Vec<f64>,
    terminal: bool,
}

struct RealRollout {
    trajectory: Trajectory,
    transitions: Vec<RealTransition>,
}

fn real_rollout(
    env: &mut Environment,
    reset_seed: u64,
    max_steps: usize,
    mut choose: impl FnMut(&[f64], &[f64], usize) -> Result<Vec<f64>, DynaError>,
    mut after_step: impl FnMut(&RealTransition) -> Result<(), DynaError>,
) -> Result<RealRollout, DynaError> {
    let task = env.task().clone();
    let spec = task.spec();
    let mut state = env.reset(reset_seed);
    let mut trajectory = Trajectory::start(&state, spec.control_dim, spec.dt)?;
    let mut transitions = Vec::new();
    let mut obs = task.observe(&state);
    for t in 0..max_steps {
        let stored = choose(&state, &obs, t)?;
        let step = env.step(&to_env_action(&spec.action_space, &stored))?;
        trajectory.push(&step.control, &step.next_state, step.reward, step.done)?;
        let next_obs = task.observe(&step.next_state);
        let tr = RealTransition {
            obs,
            stored_action: stored,
            reward: step.reward,
            next_obs: next_obs.clone(),
            terminal: step.done_reason == DoneReason::Termination,
        };
        after_step(&tr)?;
        transitions.push(tr);
        state = step.next_state;
        obs = next_obs;
        if step.done {
            break;
        }
    }
    Ok(RealRollout { trajectory, transitions })
}

fn collect_seed_rollouts(
    env: &mut Environment,
    policy: &ExplorationPolicy,
    rollouts: usize,
    length: usize,
    seed: u64,
) -> Result<Vec<RealRollout>, DynaError> {
    policy.validate()?;
    let space = env.spec().action_space.clone();
    let mut out = Vec::with_capacity(rollouts);
    for i in 0..rollouts {
        let mut rng = seeding::indexed_stream(seed, "seed-policy", i as u64);
        let state = ExplorationState::new(policy, &mut rng);
        let reset_seed = seeding::derive_seed(seed, "seed-reset", i as u64);
        out.push(real_rollout(
            env,
            reset_seed,
            length,
            |_, _, t| Ok(state.action(policy, &space, t, &mut rng)),
            |_| Ok(()),
        )?);
    }
    Ok(out)
}

/// Collect `rollouts` real trajectories of at most `length` steps with the
/// exploration policy. Episodes may end early.
pub fn collect_seed_data(
    env: &mut Environment,
    policy: &ExplorationPolicy,
    rollouts: usize,
    length: usize,
    seed: u64,
) -> Result<Vec<Trajectory>, DynaError> {
    Ok(collect_seed_rollouts(env, policy, rollouts, length, seed)?.into_iter().map(|r| r.trajectory).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceCriterion {
    pub target: f64,
    pub consecutive: usize,
    pub eval_episodes: usize,
}

/// True when the last `consecutive` evaluation means all reach `target`.
pub fn convergence_check(recent: &[f64], criterion: &ConvergenceCriterion) -> bool {
    let k = criterion.consecutive.max(1);
    recent.len() >= k && recent[recent.len() - k..].iter().all(|r| *r >= criterion.target)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelEpochs {
    Fixed(usize),
    /// Train on the model until the policy passes the convergence check on
    /// model rollouts, or `budget` epochs have run.
    Unbounded { budget: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelStart {
    /// Initial states from the environment's reset distribution.
    Reset,
    /// Uniform over the task's state box.
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynaConfig {
    pub seed_rollouts: usize,
    pub rollout_length: usize,
    pub model_epochs: ModelEpochs,
    /// Steps per model rollout; `None` uses the episode limit.
    pub model_horizon: Option<usize>,
    pub model_start: ModelStart,
    /// Deterministic model rollouts per model-side convergence check.
    pub model_eval_episodes: usize,
    pub model_eval_every: usize,
    /// Consecutive passing model-side checks that end an unbounded model
    /// phase.
    pub model_consecutive: usize,
    pub exploration: ExplorationPolicy,
    pub convergence: ConvergenceCriterion,
    pub max_real_episodes: usize,
    /// Evaluate on the real environment after every k-th real episode.
    pub eval_every: usize,
    pub updates_per_step: usize,
    /// Uniformly random actions and no updates until the buffer holds this
    /// many transitions.
    pub warmup_steps: usize,
    pub buffer_capacity: usize,
    pub real_batch_source: SourceFilter,
    pub refit: bool,
    pub fit: FitConfig,
}

impl DynaConfig {
    pub fn validate(&self) -> Result<(), DynaError> {
        let bad = |m: &str| Err(DynaError::InvalidConfig(m.to_string()));
        if self.seed_rollouts == 0 {
            return bad("seed_rollouts must be at least 1");
        }
        if self.rollout_length < 2 {
            return bad("rollout_length must be at least 2");
        }
        if self.convergence.eval_episodes == 0 {
            return bad("eval_episodes must be at least 1");
        }
        if self.model_eval_episodes == 0 || self.model_eval_every == 0 || self.eval_every == 0 {
            return bad("evaluation counts and cadences must be at least 1");
        }
        if self.buffer_capacity == 0 {
            return bad("buffer_capacity must be positive");
        }
        if self.model_horizon == Some(0) {
            return bad("model_horizon must be positive");
        }
        self.exploration.validate()
    }

    pub fn is_model_free(&self) -> bool {
        self.model_epochs == ModelEpochs::Fixed(0)
    }
}

/// One log row, written after every real-environment evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRow {
    pub iteration: usize,
    pub real_steps: usize,
    pub model_steps: usize,
    pub real_episodes: usize,
    pub model_epochs: usize,
    pub eval_mean: f64,
    pub eval_std: f64,
    pub nonzero: usize,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Converged,
    NotConverged,
    Cancelled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub rows: Vec<EpochRow>,
    pub status: RunStatus,
    /// Real steps consumed by the seed rollouts.
    pub seed_steps: usize,
    /// Real episodes beyond the seed rollouts.
    pub fine_tuning_episodes: usize,
    /// Cumulative real steps at the evaluation that passed the check.
    pub steps_to_threshold: Option<usize>,
}

pub struct RunResult {
    pub record: RunRecord,
    pub learner: Sac,
    pub model: Option<SindyModel>,
    /// Trajectories the model was fitted on (seed plus fine-tuning).
    pub d_sindy: Vec<Trajectory>,
    /// Every real trajectory, in collection order.
    pub d_env: Vec<Trajectory>,
}

struct Trainer<'a> {
    learner: Sac,
    buffer: ReplayBuffer,
    config: &'a DynaConfig,
    update_rng: seeding::Rng,
    act_rng: seeding::Rng,
}

impl Trainer<'_> {
    fn choose(&mut self, obs: &[f64], space: &ActionSpace) -> Result<Vec<f64>, DynaError> {
        if self.buffer.len() < self.config.warmup_steps {
            Ok(random_action(space, &mut self.act_rng))
        } else {
            Ok(self.learner.act(obs, ActMode::Stochastic, &mut self.act_rng)?)
        }
    }

    fn push_and_train(&mut self, t: &RealTransition, source: Source, filter: SourceFilter) -> Result<(), DynaError> {
        self.buffer.push(&t.obs, &t.stored_action, t.reward, &t.next_obs, t.terminal, source);
        if self.buffer.len() < self.config.warmup_steps {
            return Ok(());
        }
        let batch_size = self.learner.config().batch_size;
        for _ in 0..self.config.updates_per_step {
            if let Some(batch) = self.buffer.sample(batch_size, filter, &mut self.update_rng) {
                self.learner.update(&batch, &mut self.update_rng)?;
            }
        }
        Ok(())
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Run the Dyna loop. With `model_epochs = Fixed(0)` no model is fitted and
/// the learner trains on real episodes only.
pub fn run_dyna(
    config: &DynaConfig,
    task: Arc<dyn Task>,
    library: &FeatureLibrary,
    learner: Sac,
    seed: u64,
    cancel: Option<&AtomicBool>,
) -> Result<RunResult, DynaError> {
    config.validate()?;
    let started = Instant::now();
    let spec = task.spec().clone();
    let space = spec.action_space.clone();
    let mut env = Environment::new(task.clone());
    let mut eval_env = Environment::new(task.clone());
    let obs_dim = spec.observation_dim;
    if learner.obs_dim() != obs_dim || learner.kind() != PolicyKind::for_space(&space) {
        return Err(DynaError::InvalidConfig("learner does not match the environment".into()));
    }
    let mut trainer = Trainer {
        buffer: ReplayBuffer::new(config.buffer_capacity, obs_dim, learner.kind().stored_action_dim()),
        learner,
        config,
        update_rng: seeding::stream(seed, "updates"),
        act_rng: seeding::stream(seed, "actions"),
    };
    let cancelled = || cancel.is_some_and(|c| c.load(Ordering::Relaxed));

    let mut d_sindy = Vec::new();
    let mut d_env = Vec::new();
    let mut real_steps = 0;
    let mut model = None;
    if !config.is_model_free() {
        for rollout in collect_seed_rollouts(&mut env, &config.exploration, config.seed_rollouts, config.rollout_length, seed)? {
            real_steps += rollout.trajectory.len();
            for t in &rollout.transitions {
                trainer.buffer.push(&t.obs, &t.stored_action, t.reward, &t.next_obs, t.terminal, Source::Real);
            }
            d_sindy.push(rollout.trajectory.clone());
            d_env.push(rollout.trajectory);
        }
        model = Some(SindyModel::fit(&d_sindy, library, &config.fit)?);
    }
    let seed_steps = real_steps;

    let mut rows = Vec::new();
    let mut evaluations = Vec::new();
    let mut model_steps = 0;
    let mut model_epochs = 0;
    let mut real_episodes = 0;
    let mut model_rng = seeding::stream(seed, "model-starts");
    let mut status = RunStatus::NotConverged;
    let mut steps_to_threshold = None;
    let horizon = config.model_horizon.unwrap_or(spec.max_episode_steps);

    for iteration in 0.. {
        if cancelled() {
            status = RunStatus::Cancelled;
            break;
        }
        if let Some(model) = &model {
            let budget = match config.model_epochs {
                ModelEpochs::Fixed(n) => n,
                ModelEpochs::Unbounded { budget } => budget,
            };
            let mut model_evals = Vec::new();
            for e in 0..budget {
                if cancelled() {
                    break;
                }
                model_steps += model_epoch(&mut trainer, model, task.as_ref(), horizon, config.model_start, &mut model_rng, model_epochs)?;
                model_epochs += 1;
                if let ModelEpochs::Unbounded { .. } = config.model_epochs {
                    if (e + 1) % config.model_eval_every == 0 {
                        let ret = model_evaluation(&trainer.learner, model, task.as_ref(), spec.max_episode_steps, config.model_eval_episodes, &mut model_rng)?;
                        model_evals.push(ret);
                        let criterion = ConvergenceCriterion { consecutive: config.model_consecutive, ..config.convergence };
                        if convergence_check(&model_evals, &criterion) {
                            break;
                        }
                    }
                }
            }
        }

        if iteration % config.eval_every == 0 {
            let eval_seed = seeding::derive_seed(seed, "evaluation", iteration as u64);
            let mut eval_rng = seeding::indexed_stream(seed, "evaluation-actions", iteration as u64);
            let eval = evaluate_policy(&trainer.learner, &mut eval_env, config.convergence.eval_episodes, eval_seed, &mut eval_rng)?;
            let (mean, std) = mean_std(&eval.returns);
            evaluations.push(mean);
            rows.push(EpochRow {
                iteration,
                real_steps,
                model_steps,
                real_episodes,
                model_epochs,
                eval_mean: mean,
                eval_std: std,
                nonzero: model.as_ref().map_or(0, |m| m.nonzero_count()),
                wall_seconds: started.elapsed().as_secs_f64(),
            });
            if convergence_check(&evaluations, &config.convergence) {
                status = RunStatus::Converged;
                steps_to_threshold = Some(real_steps);
                break;
            }
        }
        if real_episodes >= config.max_real_episodes {
            break;
        }

        let reset_seed = seeding::derive_seed(seed, "real-reset", real_episodes as u64);
        let filter = config.real_batch_source;
        let trainer_cell = std::cell::RefCell::new(&mut trainer);
        let rollout = real_rollout(
            &mut env,
            reset_seed,
            spec.max_episode_steps,
            |_, obs, _| trainer_cell.borrow_mut().choose(obs, &space),
            |t| trainer_cell.borrow_mut().push_and_train(t, Source::Real, filter),
        )?;
        real_episodes += 1;
        real_steps += rollout.trajectory.len();
        d_env.push(rollout.trajectory.clone());
        if model.is_some() {
            d_sindy.push(rollout.trajectory);
            if config.refit {
                model = Some(SindyModel::fit(&d_sindy, library, &config.fit)?);
            }
        }
    }

    let fine_tuning_episodes = real_episodes;
    Ok(RunResult {
        record: RunRecord { rows, status, seed_steps, fine_tuning_episodes, steps_to_threshold },
        learner: trainer.learner,
        model,
        d_sindy,
        d_env,
    })
}

fn model_start(task: &dyn Task, start: ModelStart, rng: &mut dyn RngCore) -> Vec<f64> {
    match start {
        ModelStart::Reset => task.sample_initial_state(rng),
        ModelStart::Uniform => {
            let (lo, hi) = task.state_box();
            lo.iter().zip(&hi).map(|(l, h)| if h > l { rng.random_range(*l..*h) } else { *l }).collect()
        }
    }
}

/// One model rollout with learner updates after every step. Returns the
/// number of model steps taken.
fn model_epoch(
    trainer: &mut Trainer<'_>,
    model: &SindyModel,
    task: &dyn Task,
    horizon: usize,
    start: ModelStart,
    rng: &mut dyn RngCore,
    epoch: usize,
) -> Result<usize, DynaError> {
    let spec = task.spec();
    let initial = model_start(task, start, rng);
    let mut state = initial.clone();
    let mut obs = task.observe(&state);
    for step in 0..horizon {
        let stored = trainer.choose(&obs, &spec.action_space)?;
        let control = task.control(&to_env_action(&spec.action_space, &stored))?;
        let next = model.simulate_step(&state, &control, spec.dt).map_err(|e| match e {
            ModelError::Diverged { .. } => DynaError::ModelDiverged {
                epoch,
                step,
                start: initial.clone(),
                equations: model.equations_to_string(),
            },
            other => DynaError::Model(other),
        })?;
        let reward = task.reward(&state, &control, &next);
        let terminal = task.is_terminal(&next);
        let next_obs = task.observe(&next);
        let t = RealTransition { obs, stored_action: stored, reward, next_obs: next_obs.clone(), terminal };
        trainer.push_and_train(&t, Source::Model, SourceFilter::All)?;
        if terminal {
            return Ok(step + 1);
        }
        state = next;
        obs = next_obs;
    }
    Ok(horizon)
}

/// Mean deterministic return over model rollouts from reset states.
fn model_evaluation(
    learner: &Sac,
    model: &SindyModel,
    task: &dyn Task,
    horizon: usize,
    episodes: usize,
    rng: &mut dyn RngCore,
) -> Result<f64, DynaError> {
    let spec = task.spec();
    let mut total = 0.0;
    for _ in 0..episodes {
        let mut state = task.sample_initial_state(rng);
        for _ in 0..horizon {
            let stored = learner.act(&task.observe(&state), ActMode::Deterministic, rng)?;
            let control = task.control(&to_env_action(&spec.action_space, &stored))?;
            let next = match model.simulate_step(&state, &control, spec.dt) {
                Ok(next) => next,
                // A diverging evaluation rollout just fails the check.
                Err(ModelError::Diverged { .. }) => return Ok(f64::NEG_INFINITY),
                Err(e) => return Err(e.into()),
            };
            total += task.reward(&state, &control, &next);
            if task.is_terminal(&next) {
                break;
            }
            state = next;
        }
    }
    Ok(total / episodes as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::make_task;
    use crate::policy_learner::SacConfig;

    #[test]
    fn convergence_needs_consecutive_passes() {
        let c = ConvergenceCriterion { target: 195.0, consecutive: 3, eval_episodes: 10 };
        assert!(convergence_check(&[200.0, 200.0, 200.0], &c));
        assert!(!convergence_check(&[200.0, 100.0, 200.0], &c));
        assert!(!convergence_check(&[200.0, 200.0], &c));
        assert!(convergence_check(&[0.0, 196.0, 195.0, 250.0], &c));
    }

    #[test]
    fn alternating_without_randomness_strictly_alternates() {
        let mut env = Environment::new(make_task("cartpole", &[]).unwrap());
        let trajs = collect_seed_data(&mut env, &ExplorationPolicy::Alternating { random_prob: 0.0 }, 1, 30, 4).unwrap();
        assert_eq!(trajs.len(), 1);
        let t = &trajs[0];
        assert!(t.len() <= 30 && t.len() >= 2);
        for i in 1..t.len() {
            assert_eq!(t.action(i)[0], -t.action(i - 1)[0]);
        }
    }

    #[test]
    fn seed_collection_is_reproducible() {
        let task = make_task("pendulum", &[]).unwrap();
        let policy = ExplorationPolicy::Sinusoid { amplitude: 0.5, period_min: 10.0, period_max: 30.0 };
        let a = collect_seed_data(&mut Environment::new(task.clone()), &policy, 3, 20, 11).unwrap();
        let b = collect_seed_data(&mut Environment::new(task), &policy, 3, 20, 11).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
    }

    fn small_config(model_epochs: ModelEpochs) -> DynaConfig {
        let task = make_task("pendulum", &[]).unwrap();
        DynaConfig {
            seed_rollouts: 1,
            rollout_length: 20,
            model_epochs,
            model_horizon: Some(30),
            model_start: ModelStart::Reset,
            model_eval_episodes: 2,
            model_eval_every: 1,
            model_consecutive: 1,
            exploration: ExplorationPolicy::Sinusoid { amplitude: 0.5, period_min: 10.0, period_max: 30.0 },
            convergence: ConvergenceCriterion { target: 1e9, consecutive: 1, eval_episodes: 1 },
            max_real_episodes: 2,
            eval_every: 1,
            updates_per_step: 1,
            warmup_steps: 40,
            buffer_capacity: 10_000,
            real_batch_source: SourceFilter::All,
            refit: false,
            fit: task.default_fit(),
        }
    }

    fn run(config: &DynaConfig, seed: u64, cancel: Option<&AtomicBool>) -> RunResult {
        let task = make_task("pendulum", &[("max_episode_steps".into(), 50.0)]).unwrap();
        let mut rng = seeding::stream(seed, "init");
        let sac_config = SacConfig { hidden: vec![16, 16], batch_size: 32, ..Default::default() };
        let learner = Sac::new(PolicyKind::for_space(&task.spec().action_space), task.spec().observation_dim, sac_config, &mut rng).unwrap();
        run_dyna(config, task.clone(), &task.default_library(), learner, seed, cancel).unwrap()
    }

    #[test]
    fn real_step_accounting_and_append_only_model_data() {
        let config = small_config(ModelEpochs::Fixed(2));
        let result = run(&config, 5, None);
        let record = &result.record;
        assert_eq!(record.status, RunStatus::NotConverged);
        assert_eq!(record.fine_tuning_episodes, 2);
        assert_eq!(record.seed_steps, 20);
        assert_eq!(result.d_sindy.len(), 1 + 2);
        assert_eq!(result.d_sindy, result.d_env);
        let total: usize = result.d_env.iter().map(|t| t.len()).sum();
        let last = record.rows.last().unwrap();
        assert_eq!(last.real_steps, total);
        assert_eq!(last.model_steps, 3 * 2 * 30);
        assert_eq!(record.rows.len(), 3);
        for w in record.rows.windows(2) {
            assert!(w[1].real_steps >= w[0].real_steps && w[1].model_steps >= w[0].model_steps);
            assert_eq!(w[1].real_steps - w[0].real_steps, 50);
        }

        // Single fit: the final model equals a fit on the seed data alone.
        let task = make_task("pendulum", &[]).unwrap();
        let seed_only = SindyModel::fit(&result.d_sindy[..1], &task.default_library(), &config.fit).unwrap();
        assert_eq!(result.model.unwrap().coefficients(), seed_only.coefficients());
    }

    #[test]
    fn zero_model_epochs_is_model_free() {
        let result = run(&small_config(ModelEpochs::Fixed(0)), 6, None);
        assert!(result.model.is_none());
        assert!(result.d_sindy.is_empty());
        assert_eq!(result.record.seed_steps, 0);
        assert!(result.record.rows.iter().all(|r| r.model_steps == 0));
        assert_eq!(result.record.rows.last().unwrap().real_steps, 2 * 50);
    }

    #[test]
    fn unbounded_model_phase_respects_budget() {
        let result = run(&small_config(ModelEpochs::Unbounded { budget: 3 }), 7, None);
        // The unreachable target never ends the model phase early.
        assert_eq!(result.record.rows[0].model_epochs, 3);
    }

    #[test]
    fn runs_are_deterministic_and_cancellable() {
        let config = small_config(ModelEpochs::Fixed(1));
        let a = run(&config, 8, None);
        let b = run(&config, 8, None);
        let strip = |r: &RunRecord| r.rows.iter().map(|row| (row.real_steps, row.model_steps, row.eval_mean.to_bits())).collect::<Vec<_>>();
        assert_eq!(strip(&a.record), strip(&b.record));
        assert_eq!(a.learner.actor().params(), b.learner.actor().params());

        let cancel = AtomicBool::new(true);
        let c = run(&config, 8, Some(&cancel));
        assert_eq!(c.record.status, RunStatus::Cancelled);
        assert!(c.record.rows.is_empty());
    }
}
