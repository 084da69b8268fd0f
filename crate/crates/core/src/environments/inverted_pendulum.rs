use rand::RngCore;

use super::cartpole::{accelerations, cartpole_fit, euler_step, step_rate, uniform_state, CartPoleParams, Damping};
use super::{apply_overrides, continuous_control, Action, ActionSpace, EnvError, EnvironmentSpec, Task, Term};
use crate::feature_library::FeatureLibrary;
use crate::sindy_model::FitConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct InvertedPendulumParams {
    pub cart: CartPoleParams,
    /// Viscous friction on the cart, N·s/m.
    pub cart_damping: f64,
    /// Viscous friction at the pole joint, N·m·s.
    pub pole_damping: f64,
}

impl Default for InvertedPendulumParams {
    fn default() -> Self {
        Self {
            cart: CartPoleParams { theta_threshold: 0.2, max_episode_steps: 1000.0, ..CartPoleParams::default() },
            cart_damping: 0.1,
            pole_damping: 0.05,
        }
    }
}

impl InvertedPendulumParams {
    pub fn with_overrides(overrides: &[(String, f64)]) -> Result<Self, EnvError> {
        let mut p = Self::default();
        let c = &mut p.cart;
        apply_overrides(
            "inverted_pendulum",
            &mut [
                ("gravity", &mut c.gravity, true),
                ("masscart", &mut c.masscart, true),
                ("masspole", &mut c.masspole, true),
                ("length", &mut c.length, true),
                ("force_mag", &mut c.force_mag, true),
                ("dt", &mut c.dt, true),
                ("theta_threshold", &mut c.theta_threshold, true),
                ("x_threshold", &mut c.x_threshold, true),
                ("max_episode_steps", &mut c.max_episode_steps, true),
                ("cart_damping", &mut p.cart_damping, false),
                ("pole_damping", &mut p.pole_damping, false),
            ],
            overrides,
        )?;
        Ok(p)
    }
}

/// Cart-pole balancing with a continuous force and viscous damping on both
/// the cart and the pole joint.
#[derive(Debug, Clone)]
pub struct InvertedPendulum {
    params: InvertedPendulumParams,
    spec: EnvironmentSpec,
}

impl InvertedPendulum {
    pub fn new(params: InvertedPendulumParams) -> Self {
        let mut constants = params.cart.constants();
        constants.push(("cart_damping", params.cart_damping));
        constants.push(("pole_damping", params.pole_damping));
        let f = params.cart.force_mag;
        let spec = EnvironmentSpec {
            name: "inverted_pendulum",
            state_dim: 4,
            control_dim: 1,
            observation_dim: 4,
            action_space: ActionSpace::Continuous { low: vec![-f], high: vec![f] },
            dt: params.cart.dt,
            max_episode_steps: params.cart.max_episode_steps as usize,
            constants,
        };
        Self { params, spec }
    }

    pub fn params(&self) -> &InvertedPendulumParams {
        &self.params
    }

    pub fn accelerations(&self, state: &[f64], force: f64) -> (f64, f64) {
        let damping = Damping { cart: self.params.cart_damping, pole: self.params.pole_damping };
        accelerations(&self.params.cart, damping, state, force)
    }
}

impl Default for InvertedPendulum {
    fn default() -> Self {
        Self::new(InvertedPendulumParams::default())
    }
}

impl Task for InvertedPendulum {
    fn spec(&self) -> &EnvironmentSpec {
        &self.spec
    }

    fn sample_initial_state(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        uniform_state(rng, 0.01)
    }

    fn control(&self, action: &Action) -> Result<Vec<f64>, EnvError> {
        continuous_control("inverted_pendulum", &self.spec.action_space, action)
    }

    fn transition(&self, state: &[f64], control: &[f64]) -> Vec<f64> {
        euler_step(self.params.cart.dt, state, self.accelerations(state, control[0]))
    }

    fn reward(&self, _state: &[f64], _control: &[f64], _next: &[f64]) -> f64 {
        1.0
    }

    fn is_terminal(&self, state: &[f64]) -> bool {
        let c = &self.params.cart;
        state[0].abs() > c.x_threshold || state[2].abs() > c.theta_threshold
    }

    fn observe(&self, state: &[f64]) -> Vec<f64> {
        let c = &self.params.cart;
        vec![state[0] / c.x_threshold, state[1] / 2.0, state[2] / c.theta_threshold, state[3] / 2.0]
    }

    fn true_dynamics(&self, state: &[f64], control: &[f64]) -> Vec<f64> {
        step_rate(self.params.cart.dt, state, self.accelerations(state, control[0]))
    }

    fn reference_terms(&self) -> Option<Vec<Vec<Term>>> {
        None
    }

    fn default_library(&self) -> FeatureLibrary {
        FeatureLibrary::cartpole()
    }

    fn default_fit(&self) -> FitConfig {
        let mut fit = cartpole_fit();
        fit.stlsq.ridge_alpha = 0.05;
        fit
    }

    fn state_box(&self) -> (Vec<f64>, Vec<f64>) {
        let c = &self.params.cart;
        (
            vec![-c.x_threshold, -2.0, -c.theta_threshold, -2.0],
            vec![c.x_threshold, 2.0, c.theta_threshold, 2.0],
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::CartPole;

    #[test]
    fn zero_damping_reduces_to_cartpole_physics() {
        let params = InvertedPendulumParams { cart_damping: 0.0, pole_damping: 0.0, ..Default::default() };
        let ip = InvertedPendulum::new(params.clone());
        let cp = CartPole::new(params.cart.clone());
        for (s, f) in [([0.1, -0.2, 0.05, 0.3], 3.5), ([0.0, 1.0, -0.15, -1.2], -10.0), ([0.0; 4], 0.0)] {
            assert_eq!(ip.transition(&s, &[f]), cp.transition(&s, &[f]));
        }
    }

    #[test]
    fn force_is_clamped() {
        let ip = InvertedPendulum::default();
        assert_eq!(ip.control(&Action::Continuous(vec![25.0])).unwrap(), vec![10.0]);
        assert!(ip.control(&Action::Discrete(1)).is_err());
    }

    #[test]
    fn hanging_free_response_decays() {
        // Near the hanging equilibrium the damped pole oscillates with a
        // shrinking peak angular speed.
        let ip = InvertedPendulum::new(InvertedPendulumParams {
            cart: CartPoleParams { theta_threshold: 10.0, x_threshold: 1e9, ..Default::default() },
            ..Default::default()
        });
        let mut s = vec![0.0, 0.0, std::f64::consts::PI - 0.1, 0.0];
        let mut speeds = Vec::new();
        for _ in 0..2000 {
            s = ip.transition(&s, &[0.0]);
            speeds.push(s[3].abs());
        }
        let peaks: Vec<f64> = speeds
            .windows(3)
            .filter(|w| w[1] > w[0] && w[1] >= w[2])
            .map(|w| w[1])
            .take_while(|p| *p > 1e-4)
            .collect();
        assert!(peaks.len() > 5);
        assert!(peaks.windows(2).all(|p| p[1] <= p[0]), "{peaks:?}");
        assert!(peaks.last().unwrap() < &(0.8 * peaks[0]));
    }
}
