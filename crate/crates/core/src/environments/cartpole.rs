use rand::{Rng, RngCore};

use super::{apply_overrides, Action, ActionSpace, EnvError, EnvironmentSpec, Task, Term};
use crate::differentiation::Differentiator;
use crate::feature_library::FeatureLibrary;
use crate::sindy_model::{FitConfig, Integrator, SindyMode};
use crate::sparse_regression::StlsqConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct CartPoleParams {
    pub gravity: f64,
    pub masscart: f64,
    pub masspole: f64,
    /// Pole length `l` as it appears in the equations of motion.
    pub length: f64,
    pub force_mag: f64,
    pub dt: f64,
    pub theta_threshold: f64,
    pub x_threshold: f64,
    pub max_episode_steps: f64,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        Self {
            gravity: 9.8,
            masscart: 1.0,
            masspole: 0.1,
            length: 0.5,
            force_mag: 10.0,
            dt: 0.02,
            theta_threshold: 12.0 * std::f64::consts::PI / 180.0,
            x_threshold: 2.4,
            max_episode_steps: 500.0,
        }
    }
}

impl CartPoleParams {
    pub fn with_overrides(overrides: &[(String, f64)]) -> Result<Self, EnvError> {
        let mut p = Self::default();
        apply_overrides(
            "cartpole",
            &mut [
                ("gravity", &mut p.gravity, true),
                ("masscart", &mut p.masscart, true),
                ("masspole", &mut p.masspole, true),
                ("length", &mut p.length, true),
                ("force_mag", &mut p.force_mag, true),
                ("dt", &mut p.dt, true),
                ("theta_threshold", &mut p.theta_threshold, true),
                ("x_threshold", &mut p.x_threshold, true),
                ("max_episode_steps", &mut p.max_episode_steps, true),
            ],
            overrides,
        )?;
        Ok(p)
    }

    pub(crate) fn constants(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("gravity", self.gravity),
            ("masscart", self.masscart),
            ("masspole", self.masspole),
            ("length", self.length),
            ("force_mag", self.force_mag),
            ("dt", self.dt),
            ("theta_threshold", self.theta_threshold),
            ("x_threshold", self.x_threshold),
            ("max_episode_steps", self.max_episode_steps),
        ]
    }
}

/// Linear viscous damping on the cart and the pole joint.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub(crate) struct Damping {
    pub cart: f64,
    pub pole: f64,
}

/// `(x_ddot, theta_ddot)` for state `(x, x_dot, theta, theta_dot)` and
/// horizontal force `force`.
pub(crate) fn accelerations(p: &CartPoleParams, damping: Damping, state: &[f64], force: f64) -> (f64, f64) {
    let (x_dot, theta, theta_dot) = (state[1], state[2], state[3]);
    let total = p.masspole + p.masscart;
    let (sin, cos) = theta.sin_cos();
    let c = (force - damping.cart * x_dot + p.length * theta_dot * theta_dot * sin) / total;
    let pole_friction = damping.pole * theta_dot / (p.masspole * p.length);
    let theta_acc = (p.gravity * sin - cos * c - pole_friction)
        / (p.length * (4.0 / 3.0 - p.masspole / total * cos * cos));
    let x_acc = c - p.length / total * theta_acc * cos;
    (x_acc, theta_acc)
}

/// Accelerations under `sin θ ≈ θ`, `cos θ ≈ 1`.
pub fn small_angle_accelerations(p: &CartPoleParams, state: &[f64], force: f64) -> (f64, f64) {
    let (theta, theta_dot) = (state[2], state[3]);
    let total = p.masspole + p.masscart;
    let c = (force + p.length * theta_dot * theta_dot * theta) / total;
    let theta_acc = (p.gravity * theta - c) / (p.length * (4.0 / 3.0 - p.masspole / total));
    let x_acc = c - p.length / total * theta_acc;
    (x_acc, theta_acc)
}

/// Semi-implicit Euler: velocities first, then positions.
pub(crate) fn euler_step(dt: f64, state: &[f64], acc: (f64, f64)) -> Vec<f64> {
    let x_dot = state[1] + dt * acc.0;
    let theta_dot = state[3] + dt * acc.1;
    vec![state[0] + dt * x_dot, x_dot, state[2] + dt * theta_dot, theta_dot]
}

/// The step map written as `(s' - s) / dt`, which is what an explicit Euler
/// model step has to reproduce.
pub(crate) fn step_rate(dt: f64, state: &[f64], acc: (f64, f64)) -> Vec<f64> {
    vec![state[1] + dt * acc.0, acc.0, state[3] + dt * acc.1, acc.1]
}

pub(crate) fn cartpole_fit() -> FitConfig {
    FitConfig {
        mode: SindyMode::Continuous(Integrator::Euler),
        stlsq: StlsqConfig { threshold: 0.0009, ridge_alpha: 1e-6, max_iterations: 20, normalize_columns: false },
        differentiator: Differentiator::Forward,
        include_boundary_rows: false,
    }
}

pub(crate) fn uniform_state(rng: &mut dyn RngCore, half_width: f64) -> Vec<f64> {
    (0..4).map(|_| rng.random_range(-half_width..half_width)).collect()
}

/// Pole balancing on a cart with two discrete actions: push left, push right.
#[derive(Debug, Clone)]
pub struct CartPole {
    params: CartPoleParams,
    spec: EnvironmentSpec,
}

impl CartPole {
    pub fn new(params: CartPoleParams) -> Self {
        let spec = EnvironmentSpec {
            name: "cartpole",
            state_dim: 4,
            control_dim: 1,
            observation_dim: 4,
            action_space: ActionSpace::Discrete { count: 2 },
            dt: params.dt,
            max_episode_steps: params.max_episode_steps as usize,
            constants: params.constants(),
        };
        Self { params, spec }
    }

    pub fn params(&self) -> &CartPoleParams {
        &self.params
    }

    pub fn accelerations(&self, state: &[f64], force: f64) -> (f64, f64) {
        accelerations(&self.params, Damping::default(), state, force)
    }
}

impl Default for CartPole {
    fn default() -> Self {
        Self::new(CartPoleParams::default())
    }
}

impl Task for CartPole {
    fn spec(&self) -> &EnvironmentSpec {
        &self.spec
    }

    fn sample_initial_state(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        uniform_state(rng, 0.05)
    }

    fn control(&self, action: &Action) -> Result<Vec<f64>, EnvError> {
        match action {
            Action::Discrete(0) => Ok(vec![-self.params.force_mag]),
            Action::Discrete(1) => Ok(vec![self.params.force_mag]),
            _ => Err(EnvError::ActionMismatch("cartpole".into())),
        }
    }

    fn transition(&self, state: &[f64], control: &[f64]) -> Vec<f64> {
        euler_step(self.params.dt, state, self.accelerations(state, control[0]))
    }

    fn reward(&self, _state: &[f64], _control: &[f64], _next: &[f64]) -> f64 {
        1.0
    }

    fn is_terminal(&self, state: &[f64]) -> bool {
        state[0].abs() > self.params.x_threshold || state[2].abs() > self.params.theta_threshold
    }

    fn observe(&self, state: &[f64]) -> Vec<f64> {
        vec![
            state[0] / self.params.x_threshold,
            state[1] / 2.0,
            state[2] / self.params.theta_threshold,
            state[3] / 2.0,
        ]
    }

    fn true_dynamics(&self, state: &[f64], control: &[f64]) -> Vec<f64> {
        step_rate(self.params.dt, state, self.accelerations(state, control[0]))
    }

    fn reference_terms(&self) -> Option<Vec<Vec<Term>>> {
        None
    }

    fn default_library(&self) -> FeatureLibrary {
        FeatureLibrary::cartpole()
    }

    fn default_fit(&self) -> FitConfig {
        cartpole_fit()
    }

    fn state_box(&self) -> (Vec<f64>, Vec<f64>) {
        let p = &self.params;
        (
            vec![-p.x_threshold, -2.0, -p.theta_threshold, -2.0],
            vec![p.x_threshold, 2.0, p.theta_threshold, 2.0],
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upright_rest_is_an_equilibrium() {
        let env = CartPole::default();
        assert_eq!(env.accelerations(&[0.0; 4], 0.0), (0.0, 0.0));
        assert_eq!(env.transition(&[0.0; 4], &[0.0]), vec![0.0; 4]);
    }

    #[test]
    fn small_angle_form_agrees_within_one_percent() {
        let env = CartPole::default();
        let mut worst: f64 = 0.0;
        for i in 0..=40 {
            let theta = -0.05 + 0.1 * i as f64 / 40.0;
            for theta_dot in [-2.0, -0.5, 0.0, 0.7, 2.0] {
                for force in [-10.0, 10.0] {
                    let s = [0.3, -0.2, theta, theta_dot];
                    let (_, exact) = env.accelerations(&s, force);
                    let (_, approx) = small_angle_accelerations(env.params(), &s, force);
                    worst = worst.max(((exact - approx) / exact).abs());
                }
            }
        }
        assert!(worst < 0.01, "worst relative error {worst}");
    }

    #[test]
    fn oracle_matches_step_rate() {
        let env = CartPole::default();
        let s = [0.1, -0.3, 0.05, 0.4];
        let next = env.transition(&s, &[10.0]);
        let rate = env.true_dynamics(&s, &[10.0]);
        for i in 0..4 {
            assert!((s[i] + env.params().dt * rate[i] - next[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn termination_bounds() {
        let env = CartPole::default();
        assert!(!env.is_terminal(&[2.3, 0.0, 0.2, 0.0]));
        assert!(env.is_terminal(&[2.5, 0.0, 0.0, 0.0]));
        assert!(env.is_terminal(&[0.0, 0.0, -0.21, 0.0]));
    }
}
