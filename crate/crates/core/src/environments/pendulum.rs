use std::f64::consts::PI;

use rand::{Rng, RngCore};

use super::{apply_overrides, continuous_control, Action, ActionSpace, EnvError, EnvironmentSpec, Task, Term};
use crate::feature_library::FeatureLibrary;
use crate::sindy_model::{FitConfig, SindyMode};
use crate::sparse_regression::StlsqConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct PendulumParams {
    pub gravity: f64,
    pub mass: f64,
    pub length: f64,
    pub dt: f64,
    pub max_speed: f64,
    pub max_torque: f64,
    /// Viscous friction at the pivot; zero in the standard task.
    pub damping: f64,
    pub max_episode_steps: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self {
            gravity: 10.0,
            mass: 1.0,
            length: 1.0,
            dt: 0.05,
            max_speed: 8.0,
            max_torque: 2.0,
            damping: 0.0,
            max_episode_steps: 200.0,
        }
    }
}

impl PendulumParams {
    pub fn with_overrides(overrides: &[(String, f64)]) -> Result<Self, EnvError> {
        let mut p = Self::default();
        apply_overrides(
            "pendulum",
            &mut [
                ("gravity", &mut p.gravity, true),
                ("mass", &mut p.mass, true),
                ("length", &mut p.length, true),
                ("dt", &mut p.dt, true),
                ("max_speed", &mut p.max_speed, true),
                ("max_torque", &mut p.max_torque, true),
                ("damping", &mut p.damping, false),
                ("max_episode_steps", &mut p.max_episode_steps, true),
            ],
            overrides,
        )?;
        Ok(p)
    }
}

/// Wrap an angle into `[-π, π)`.
pub fn angle_normalize(theta: f64) -> f64 {
    (theta + PI).rem_euclid(2.0 * PI) - PI
}

/// Torque-limited swing-up of a rod pendulum. The internal state is the
/// unwrapped angle from upright and the angular velocity; the policy sees
/// `(cos θ, sin θ, θ̇)`.
#[derive(Debug, Clone)]
pub struct Pendulum {
    params: PendulumParams,
    spec: EnvironmentSpec,
}

impl Pendulum {
    pub fn new(params: PendulumParams) -> Self {
        let p = &params;
        let spec = EnvironmentSpec {
            name: "pendulum",
            state_dim: 2,
            control_dim: 1,
            observation_dim: 3,
            action_space: ActionSpace::Continuous { low: vec![-p.max_torque], high: vec![p.max_torque] },
            dt: p.dt,
            max_episode_steps: p.max_episode_steps as usize,
            constants: vec![
                ("gravity", p.gravity),
                ("mass", p.mass),
                ("length", p.length),
                ("dt", p.dt),
                ("max_speed", p.max_speed),
                ("max_torque", p.max_torque),
                ("damping", p.damping),
                ("max_episode_steps", p.max_episode_steps),
            ],
        };
        Self { params, spec }
    }

    pub fn params(&self) -> &PendulumParams {
        &self.params
    }

    fn angular_acceleration(&self, theta: f64, omega: f64, torque: f64) -> f64 {
        let p = &self.params;
        let inertia = p.mass * p.length * p.length;
        3.0 * p.gravity / (2.0 * p.length) * theta.sin() + 3.0 / inertia * (torque - p.damping * omega)
    }

    /// Mechanical energy of the rod with the pivot as potential reference.
    pub fn energy(&self, state: &[f64]) -> f64 {
        let p = &self.params;
        let inertia = p.mass * p.length * p.length / 3.0;
        0.5 * inertia * state[1] * state[1] + p.mass * p.gravity * 0.5 * p.length * state[0].cos()
    }
}

impl Default for Pendulum {
    fn default() -> Self {
        Self::new(PendulumParams::default())
    }
}

impl Task for Pendulum {
    fn spec(&self) -> &EnvironmentSpec {
        &self.spec
    }

    fn sample_initial_state(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        vec![rng.random_range(-PI..PI), rng.random_range(-1.0..1.0)]
    }

    fn control(&self, action: &Action) -> Result<Vec<f64>, EnvError> {
        continuous_control("pendulum", &self.spec.action_space, action)
    }

    fn transition(&self, state: &[f64], control: &[f64]) -> Vec<f64> {
        let p = &self.params;
        let acc = self.angular_acceleration(state[0], state[1], control[0]);
        let omega = (state[1] + acc * p.dt).clamp(-p.max_speed, p.max_speed);
        vec![state[0] + omega * p.dt, omega]
    }

    fn reward(&self, state: &[f64], control: &[f64], _next: &[f64]) -> f64 {
        let theta = angle_normalize(state[0]);
        -(theta * theta + 0.1 * state[1] * state[1] + 0.001 * control[0] * control[0])
    }

    fn is_terminal(&self, _state: &[f64]) -> bool {
        false
    }

    fn observe(&self, state: &[f64]) -> Vec<f64> {
        vec![state[0].cos(), state[0].sin(), state[1] / self.params.max_speed]
    }

    fn true_dynamics(&self, state: &[f64], control: &[f64]) -> Vec<f64> {
        let p = &self.params;
        let omega = state[1] + self.angular_acceleration(state[0], state[1], control[0]) * p.dt;
        vec![state[0] + omega * p.dt, omega]
    }

    fn reference_terms(&self) -> Option<Vec<Vec<Term>>> {
        let p = &self.params;
        let dt = p.dt;
        let inertia = p.mass * p.length * p.length;
        let gravity = 3.0 * p.gravity / (2.0 * p.length) * dt;
        let torque = 3.0 / inertia * dt;
        let friction = 1.0 - p.damping * torque;
        let omega: Vec<Term> = vec![("x1".into(), friction), ("a0".into(), torque), ("sin(x0)".into(), gravity)];
        let theta: Vec<Term> = vec![
            ("x0".into(), 1.0),
            ("x1".into(), friction * dt),
            ("a0".into(), torque * dt),
            ("sin(x0)".into(), gravity * dt),
        ];
        Some(vec![theta, omega])
    }

    fn default_library(&self) -> FeatureLibrary {
        FeatureLibrary::from_expressions(2, 1, &["1", "x0", "x1", "a0", "x1^2", "x1*a0", "a0^2"])
            .and_then(|l| l.concat(FeatureLibrary::fourier(2, 1, &[0], 2)?))
            .expect("pendulum library is well formed")
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
        (vec![-PI, -p.max_speed], vec![PI, p.max_speed])
    }
}
