use rand::{Rng, RngCore};

use super::{apply_overrides, continuous_control, Action, ActionSpace, EnvError, EnvironmentSpec, Task, Term};
use crate::feature_library::FeatureLibrary;
use crate::sindy_model::{FitConfig, SindyMode};
use crate::sparse_regression::StlsqConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct MountainCarParams {
    pub power: f64,
    /// Scale of the slope term `-gravity * cos(3 p)`.
    pub gravity: f64,
    pub max_speed: f64,
    pub min_position: f64,
    pub max_position: f64,
    pub goal_position: f64,
    pub goal_reward: f64,
    pub action_cost: f64,
    pub max_episode_steps: f64,
}

impl Default for MountainCarParams {
    fn default() -> Self {
        Self {
            power: 0.0015,
            gravity: 0.0025,
            max_speed: 0.07,
            min_position: -1.2,
            max_position: 0.6,
            goal_position: 0.45,
            goal_reward: 100.0,
            action_cost: 0.1,
            max_episode_steps: 999.0,
        }
    }
}

impl MountainCarParams {
    pub fn with_overrides(overrides: &[(String, f64)]) -> Result<Self, EnvError> {
        let mut p = Self::default();
        let mut min_position = -p.min_position;
        apply_overrides(
            "mountain_car",
            &mut [
                ("power", &mut p.power, true),
                ("gravity", &mut p.gravity, true),
                ("max_speed", &mut p.max_speed, true),
                ("min_position_magnitude", &mut min_position, true),
                ("max_position", &mut p.max_position, true),
                ("goal_position", &mut p.goal_position, true),
                ("goal_reward", &mut p.goal_reward, false),
                ("action_cost", &mut p.action_cost, false),
                ("max_episode_steps", &mut p.max_episode_steps, true),
            ],
            overrides,
        )?;
        p.min_position = -min_position;
        Ok(p)
    }
}

/// Under-powered car in a valley, continuous force in `[-1, 1]`.
/// State `(position, velocity)`.
#[derive(Debug, Clone)]
pub struct MountainCar {
    params: MountainCarParams,
    spec: EnvironmentSpec,
}

impl MountainCar {
    pub fn new(params: MountainCarParams) -> Self {
        let p = &params;
        let spec = EnvironmentSpec {
            name: "mountain_car",
            state_dim: 2,
            control_dim: 1,
            observation_dim: 2,
            action_space: ActionSpace::Continuous { low: vec![-1.0], high: vec![1.0] },
            dt: 1.0,
            max_episode_steps: p.max_episode_steps as usize,
            constants: vec![
                ("power", p.power),
                ("gravity", p.gravity),
                ("max_speed", p.max_speed),
                ("min_position", p.min_position),
                ("max_position", p.max_position),
                ("goal_position", p.goal_position),
                ("goal_reward", p.goal_reward),
                ("action_cost", p.action_cost),
                ("max_episode_steps", p.max_episode_steps),
            ],
        };
        Self { params, spec }
    }

    pub fn params(&self) -> &MountainCarParams {
        &self.params
    }

    /// Position where the slope term vanishes: `cos(3 p) = 0`.
    pub fn valley_bottom(&self) -> f64 {
        -std::f64::consts::PI / 6.0
    }
}

impl Default for MountainCar {
    fn default() -> Self {
        Self::new(MountainCarParams::default())
    }
}

impl Task for MountainCar {
    fn spec(&self) -> &EnvironmentSpec {
        &self.spec
    }

    fn sample_initial_state(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        vec![rng.random_range(-0.6..-0.4), 0.0]
    }

    fn control(&self, action: &Action) -> Result<Vec<f64>, EnvError> {
        continuous_control("mountain_car", &self.spec.action_space, action)
    }

    fn transition(&self, state: &[f64], control: &[f64]) -> Vec<f64> {
        let p = &self.params;
        let velocity = state[1] + control[0] * p.power - p.gravity * (3.0 * state[0]).cos();
        let mut velocity = velocity.clamp(-p.max_speed, p.max_speed);
        let position = (state[0] + velocity).clamp(p.min_position, p.max_position);
        if position == p.min_position && velocity < 0.0 {
            velocity = 0.0;
        }
        vec![position, velocity]
    }

    fn reward(&self, _state: &[f64], control: &[f64], next: &[f64]) -> f64 {
        let p = &self.params;
        let bonus = if self.is_terminal(next) { p.goal_reward } else { 0.0 };
        bonus - p.action_cost * control[0] * control[0]
    }

    fn is_terminal(&self, state: &[f64]) -> bool {
        state[0] >= self.params.goal_position && state[1] >= 0.0
    }

    fn observe(&self, state: &[f64]) -> Vec<f64> {
        let p = &self.params;
        let mid = 0.5 * (p.min_position + p.max_position);
        let half = 0.5 * (p.max_position - p.min_position);
        vec![(state[0] - mid) / half, state[1] / p.max_speed]
    }

    fn true_dynamics(&self, state: &[f64], control: &[f64]) -> Vec<f64> {
        let p = &self.params;
        let velocity = state[1] + control[0] * p.power - p.gravity * (3.0 * state[0]).cos();
        vec![state[0] + velocity, velocity]
    }

    fn reference_terms(&self) -> Option<Vec<Vec<Term>>> {
        let p = &self.params;
        let shared = |extra: Vec<Term>| {
            let mut terms = extra;
            terms.push(("x1".into(), 1.0));
            terms.push(("a0".into(), p.power));
            terms.push(("cos(3*x0)".into(), -p.gravity));
            terms
        };
        Some(vec![shared(vec![("x0".into(), 1.0)]), shared(Vec::new())])
    }

    fn default_library(&self) -> FeatureLibrary {
        FeatureLibrary::from_expressions(2, 1, &["1", "x0", "x1", "a0", "x0^2", "x1^2", "a0^2"])
            .and_then(|l| l.concat(FeatureLibrary::fourier(2, 1, &[0], 3)?))
            .expect("mountain car library is well formed")
    }

    fn default_fit(&self) -> FitConfig {
        FitConfig {
            mode: SindyMode::Discrete,
            stlsq: StlsqConfig { threshold: 0.0009, ridge_alpha: 0.0, max_iterations: 20, normalize_columns: false },
            ..FitConfig::default()
        }
    }

    fn state_box(&self) -> (Vec<f64>, Vec<f64>) {
        let p = &self.params;
        (vec![p.min_position, -p.max_speed], vec![p.goal_position, p.max_speed])
    }
}
