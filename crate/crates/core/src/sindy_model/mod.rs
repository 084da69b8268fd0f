//! Fitted SINDy dynamics models `f(x; a) = Θ(x; a) · Ξ`.

mod io;
mod trajectory;

use std::fmt::Write as _;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::differentiation::{DifferentiationError, Differentiator};
use crate::feature_library::{FeatureLibrary, LibraryError};
use crate::sparse_regression::{
    stlsq, CoefficientMatrix, ColumnDiagnostics, RegressionError, RegressionProblem, StlsqConfig,
};

pub use io::ParseModelError;
pub use trajectory::Trajectory;

/// Magnitude beyond which a simulated state counts as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("no trajectories to fit")]
    NoData,
    #[error("trajectories disagree: {0}")]
    Inconsistent(String),
    #[error("trajectory {index} has {len} transitions, need at least {needed}")]
    TooShort { index: usize, len: usize, needed: usize },
    #[error("expected state of {state} and action of {action}, got {got_state} and {got_action}")]
    Dimension { state: usize, action: usize, got_state: usize, got_action: usize },
    #[error("operation requires a continuous-time model")]
    NotContinuous,
    #[error("simulation diverged at step {step}")]
    Diverged { step: usize },
    #[error("dt must be positive, got {0}")]
    InvalidStep(f64),
    #[error(transparent)]
    Library(#[from] LibraryError),
    #[error(transparent)]
    Regression(#[from] RegressionError),
    #[error(transparent)]
    Differentiation(#[from] DifferentiationError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    Rk4,
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SindyMode {
    /// `dx/dt = Θ Ξ`, integrated with a zero-order hold on the action.
    Continuous(Integrator),
    /// `x(t+1) = Θ(x(t); a(t)) Ξ`.
    Discrete,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub mode: SindyMode,
    pub stlsq: StlsqConfig,
    pub differentiator: Differentiator,
    /// Keep derivative rows computed with shortened boundary stencils.
    pub include_boundary_rows: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            mode: SindyMode::Continuous(Integrator::Rk4),
            stlsq: StlsqConfig::default(),
            differentiator: Differentiator::default(),
            include_boundary_rows: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SindyModel {
    library: FeatureLibrary,
    coefficients: CoefficientMatrix,
    mode: SindyMode,
    dt: f64,
    diagnostics: Vec<ColumnDiagnostics>,
}

/// Stack the regression inputs and targets of every trajectory. Targets are
/// computed per trajectory so nothing is differenced across boundaries.
pub fn assemble(
    trajectories: &[Trajectory],
    library: &FeatureLibrary,
    config: &FitConfig,
) -> Result<(DMatrix<f64>, DMatrix<f64>), ModelError> {
    let first = trajectories.first().ok_or(ModelError::NoData)?;
    let (n, k, dt) = (first.state_dim(), first.action_dim(), first.dt());
    if library.state_dim() != n || library.action_dim() != k {
        return Err(ModelError::Dimension {
            state: library.state_dim(),
            action: library.action_dim(),
            got_state: n,
            got_action: k,
        });
    }
    let mut inputs: Vec<(DMatrix<f64>, DMatrix<f64>)> = Vec::new();
    let mut targets: Vec<DMatrix<f64>> = Vec::new();
    for (index, traj) in trajectories.iter().enumerate() {
        if traj.state_dim() != n || traj.action_dim() != k || traj.dt() != dt {
            return Err(ModelError::Inconsistent(format!("trajectory {index} differs in dimensions or dt")));
        }
        let states = traj.states_matrix();
        let actions = traj.actions_matrix();
        let steps = traj.len();
        match config.mode {
            SindyMode::Discrete => {
                if steps < 1 {
                    return Err(ModelError::TooShort { index, len: steps, needed: 1 });
                }
                inputs.push((states.rows(0, steps).into_owned(), actions));
                targets.push(states.rows(1, steps).into_owned());
            }
            SindyMode::Continuous(_) => {
                let needed = config.differentiator.min_samples();
                if steps + 1 < needed {
                    return Err(ModelError::TooShort { index, len: steps, needed: needed.saturating_sub(1) });
                }
                let est = config.differentiator.apply(&states, dt)?;
                let range = if config.include_boundary_rows { 0..steps } else { est.valid_range.start..est.valid_range.end.min(steps) };
                let rows: Vec<usize> = range.collect();
                inputs.push((states.select_rows(&rows), actions.select_rows(&rows)));
                targets.push(est.values.select_rows(&rows));
            }
        }
    }
    let total: usize = targets.iter().map(|t| t.nrows()).sum();
    if total == 0 {
        return Err(ModelError::NoData);
    }
    let mut theta = DMatrix::zeros(total, library.len());
    let mut y = DMatrix::zeros(total, n);
    let mut offset = 0;
    for ((s, a), t) in inputs.iter().zip(&targets) {
        let rows = t.nrows();
        theta.rows_mut(offset, rows).copy_from(&library.evaluate(s, a)?);
        y.rows_mut(offset, rows).copy_from(t);
        offset += rows;
    }
    Ok((theta, y))
}

impl SindyModel {
    pub fn fit(trajectories: &[Trajectory], library: &FeatureLibrary, config: &FitConfig) -> Result<Self, ModelError> {
        let (theta, targets) = assemble(trajectories, library, config)?;
        let problem = RegressionProblem::new(theta, targets)?;
        let result = stlsq(&problem, &config.stlsq)?;
        Ok(Self {
            library: library.clone(),
            coefficients: result.coefficients,
            mode: config.mode,
            dt: trajectories[0].dt(),
            diagnostics: result.diagnostics,
        })
    }

    /// Assemble a model from known coefficients (`F x n`).
    pub fn from_coefficients(
        library: FeatureLibrary,
        coefficients: CoefficientMatrix,
        mode: SindyMode,
        dt: f64,
    ) -> Result<Self, ModelError> {
        if coefficients.features() != library.len() || coefficients.dims() != library.state_dim() {
            return Err(ModelError::Dimension {
                state: library.state_dim(),
                action: library.len(),
                got_state: coefficients.dims(),
                got_action: coefficients.features(),
            });
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(ModelError::InvalidStep(dt));
        }
        Ok(Self { library, coefficients, mode, dt, diagnostics: Vec::new() })
    }

    pub fn library(&self) -> &FeatureLibrary {
        &self.library
    }

    pub fn coefficients(&self) -> &CoefficientMatrix {
        &self.coefficients
    }

    pub fn mode(&self) -> SindyMode {
        self.mode
    }

    /// Sample period of the data the model was fitted on.
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn diagnostics(&self) -> &[ColumnDiagnostics] {
        &self.diagnostics
    }

    pub fn state_dim(&self) -> usize {
        self.library.state_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.library.action_dim()
    }

    /// P = n * F.
    pub fn parameter_count(&self) -> usize {
        self.coefficients.parameter_count()
    }

    /// P': nonzero coefficients.
    pub fn nonzero_count(&self) -> usize {
        self.coefficients.nonzero_count()
    }

    fn check_dims(&self, x: &[f64], a: &[f64]) -> Result<(), ModelError> {
        if x.len() != self.state_dim() || a.len() != self.action_dim() {
            return Err(ModelError::Dimension {
                state: self.state_dim(),
                action: self.action_dim(),
                got_state: x.len(),
                got_action: a.len(),
            });
        }
        Ok(())
    }

    /// `Θ(x; a) · Ξ`: the derivative in continuous mode, the next state in
    /// discrete mode.
    pub fn evaluate(&self, x: &[f64], a: &[f64]) -> Result<Vec<f64>, ModelError> {
        self.check_dims(x, a)?;
        let features = self.library.evaluate_point(x, a)?;
        let xi = self.coefficients.values();
        let mut out = vec![0.0; self.state_dim()];
        for (j, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (i, phi) in features.iter().enumerate() {
                let c = xi[(i, j)];
                if c != 0.0 {
                    acc += c * phi;
                }
            }
            *o = acc;
        }
        Ok(out)
    }

    pub fn predict_derivative(&self, x: &[f64], a: &[f64]) -> Result<Vec<f64>, ModelError> {
        match self.mode {
            SindyMode::Continuous(_) => self.evaluate(x, a),
            SindyMode::Discrete => Err(ModelError::NotContinuous),
        }
    }

    /// Advance one step holding `a` constant. Discrete models ignore `dt`.
    pub fn simulate_step(&self, x: &[f64], a: &[f64], dt: f64) -> Result<Vec<f64>, ModelError> {
        let next = match self.mode {
            SindyMode::Discrete => self.evaluate(x, a)?,
            SindyMode::Continuous(integrator) => {
                if !(dt > 0.0) || !dt.is_finite() {
                    return Err(ModelError::InvalidStep(dt));
                }
                let k1 = self.evaluate(x, a)?;
                match integrator {
                    Integrator::Euler => x.iter().zip(&k1).map(|(xi, k)| xi + dt * k).collect(),
                    Integrator::Rk4 => {
                        let shifted = |k: &[f64], h: f64| -> Vec<f64> { x.iter().zip(k).map(|(xi, ki)| xi + h * ki).collect() };
                        let k2 = self.evaluate(&shifted(&k1, dt / 2.0), a)?;
                        let k3 = self.evaluate(&shifted(&k2, dt / 2.0), a)?;
                        let k4 = self.evaluate(&shifted(&k3, dt), a)?;
                        (0..x.len())
                            .map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
                            .collect()
                    }
                }
            }
        };
        if next.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT) {
            return Err(ModelError::Diverged { step: 0 });
        }
        Ok(next)
    }

    /// Roll the model forward under `policy` for up to `horizon` steps.
    /// Rewards and termination come from the caller's known functions; the
    /// rollout stops early at a terminal state.
    pub fn rollout(
        &self,
        initial_state: &[f64],
        horizon: usize,
        dt: f64,
        mut policy: impl FnMut(&[f64]) -> Vec<f64>,
        reward: impl Fn(&[f64], &[f64], &[f64]) -> f64,
        is_terminal: impl Fn(&[f64]) -> bool,
    ) -> Result<Trajectory, ModelError> {
        let mut traj = Trajectory::start(initial_state, self.action_dim(), dt)?;
        let mut x = initial_state.to_vec();
        for step in 0..horizon {
            let a = policy(&x);
            let next = self
                .simulate_step(&x, &a, dt)
                .map_err(|e| match e {
                    ModelError::Diverged { .. } => ModelError::Diverged { step },
                    other => other,
                })?;
            let r = reward(&x, &a, &next);
            let done = is_terminal(&next);
            traj.push(&a, &next, r, done)?;
            x = next;
            if done {
                break;
            }
        }
        Ok(traj)
    }

    /// One line per state dimension listing the nonzero terms.
    pub fn equations_to_string(&self) -> String {
        let names = self.library.names();
        let xi = self.coefficients.values();
        let mut out = String::new();
        for j in 0..self.state_dim() {
            match self.mode {
                SindyMode::Continuous(_) => write!(out, "d x{j}/dt = ").unwrap(),
                SindyMode::Discrete => write!(out, "x{j}[t+1] = ").unwrap(),
            }
            let mut first = true;
            for (i, name) in names.iter().enumerate() {
                let c = xi[(i, j)];
                if c == 0.0 {
                    continue;
                }
                let magnitude = format!("{:.4}", c.abs());
                let term = if name == "1" { magnitude } else { format!("{magnitude}·{name}") };
                match (first, c < 0.0) {
                    (true, false) => out.push_str(&term),
                    (true, true) => write!(out, "-{term}").unwrap(),
                    (false, false) => write!(out, " + {term}").unwrap(),
                    (false, true) => write!(out, " - {term}").unwrap(),
                }
                first = false;
            }
            if first {
                out.push('0');
            }
            out.push('\n');
        }
        out
    }

    pub fn to_text(&self) -> String {
        io::write(self)
    }

    pub fn from_text(text: &str) -> Result<Self, ParseModelError> {
        io::read(text)
    }
}
