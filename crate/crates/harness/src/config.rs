//! Experiment configuration files (TOML).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use sindy_rl::differentiation::Differentiator;
use sindy_rl::dyna::{ConvergenceCriterion, DynaConfig, ExplorationPolicy, ModelEpochs, ModelStart};
use sindy_rl::environments::{make_task, Task};
use sindy_rl::feature_library::FeatureLibrary;
use sindy_rl::policy_learner::{SacConfig, SourceFilter};
use sindy_rl::sindy_model::{FitConfig, Integrator, SindyMode};
use sindy_rl::sparse_regression::StlsqConfig;
use std::sync::Arc;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("bad override '{0}': expected KEY=VALUE")]
    Override(String),
}

fn invalid(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { path: path.to_string(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub environment: EnvironmentSection,
    pub library: LibrarySection,
    pub sindy: SindySection,
    pub dyna: DynaSection,
    pub convergence: ConvergenceSection,
    #[serde(default)]
    pub sac: SacSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSection {
    pub name: String,
    #[serde(default)]
    pub overrides: BTreeMap<String, f64>,
}

/// Either a built-in library name (`default` for the environment's own,
/// `cartpole`) or a list of feature expressions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LibrarySection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expressions: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Continuous,
    Discrete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegratorName {
    Rk4,
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DifferentiationName {
    Smoothed,
    Central,
    Forward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SindySection {
    pub mode: ModeName,
    #[serde(default = "default_integrator")]
    pub integrator: IntegratorName,
    pub threshold: f64,
    pub ridge_alpha: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default)]
    pub normalize_columns: bool,
    #[serde(default = "default_differentiation")]
    pub differentiation: DifferentiationName,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_poly_order")]
    pub poly_order: usize,
    #[serde(default)]
    pub include_boundary_rows: bool,
}

fn default_integrator() -> IntegratorName {
    IntegratorName::Rk4
}
fn default_max_iterations() -> usize {
    20
}
fn default_differentiation() -> DifferentiationName {
    DifferentiationName::Smoothed
}
fn default_window() -> usize {
    7
}
fn default_poly_order() -> usize {
    3
}

/// `model_epochs` is an integer or the string "unbounded".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelEpochsSetting {
    Count(usize),
    Named(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelStartName {
    Reset,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchSourceName {
    All,
    Real,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplorationKind {
    Alternating,
    Sinusoid,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplorationSection {
    pub kind: ExplorationKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynaSection {
    pub seed_rollouts: usize,
    pub rollout_length: usize,
    pub model_epochs: ModelEpochsSetting,
    #[serde(default = "default_budget")]
    pub model_epoch_budget: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_horizon: Option<usize>,
    #[serde(default = "default_model_start")]
    pub model_start: ModelStartName,
    #[serde(default = "default_ten")]
    pub model_eval_episodes: usize,
    #[serde(default = "default_five")]
    pub model_eval_every: usize,
    #[serde(default = "default_three")]
    pub model_consecutive: usize,
    pub max_real_episodes: usize,
    #[serde(default = "default_one")]
    pub eval_every: usize,
    #[serde(default = "default_one")]
    pub updates_per_step: usize,
    #[serde(default = "default_warmup")]
    pub warmup_steps: usize,
    #[serde(default = "default_capacity")]
    pub buffer_capacity: usize,
    #[serde(default = "default_batch_source")]
    pub real_batch_source: BatchSourceName,
    #[serde(default)]
    pub refit: bool,
    pub exploration: ExplorationSection,
}

fn default_budget() -> usize {
    300
}
fn default_model_start() -> ModelStartName {
    ModelStartName::Reset
}
fn default_one() -> usize {
    1
}
fn default_three() -> usize {
    3
}
fn default_five() -> usize {
    5
}
fn default_ten() -> usize {
    10
}
fn default_warmup() -> usize {
    1000
}
fn default_capacity() -> usize {
    1_000_000
}
fn default_batch_source() -> BatchSourceName {
    BatchSourceName::All
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSection {
    pub target: f64,
    #[serde(default = "default_one")]
    pub consecutive: usize,
    #[serde(default = "default_ten")]
    pub eval_episodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SacSection {
    pub hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub alpha_lr: f64,
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub initial_alpha: f64,
    pub learn_alpha: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_entropy: Option<f64>,
}

impl Default for SacSection {
    fn default() -> Self {
        let d = SacConfig::default();
        Self {
            hidden: d.hidden,
            actor_lr: d.actor_lr,
            critic_lr: d.critic_lr,
            alpha_lr: d.alpha_lr,
            gamma: d.gamma,
            tau: d.tau,
            batch_size: d.batch_size,
            initial_alpha: d.initial_alpha,
            learn_alpha: d.learn_alpha,
            target_entropy: d.target_entropy,
        }
    }
}

/// Parse a TOML value written on the command line; bare words that are not
/// valid TOML become strings.
fn parse_override_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Set `a.b.c = value` in a table, creating intermediate tables.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), ConfigError> {
    let (key, value) = spec.split_once('=').ok_or_else(|| ConfigError::Override(spec.to_string()))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::Override(spec.to_string()));
    }
    let mut current = table;
    for part in &parts[..parts.len() - 1] {
        let entry = current.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        current = match entry {
            toml::Value::Table(t) => t,
            _ => return Err(invalid(key.trim(), format!("'{part}' is not a table"))),
        };
    }
    current.insert(parts[parts.len() - 1].to_string(), parse_override_value(value.trim()));
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Self::from_toml_with_overrides::<&str>(text, &[])
    }

    pub fn from_toml_with_overrides<S: AsRef<str>>(text: &str, overrides: &[S]) -> Result<Self, ConfigError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o.as_ref())?;
        }
        let config: Self = serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
            let path = e.path().to_string();
            invalid(&path, e.into_inner().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml_with_overrides(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "at least one seed is required"));
        }
        self.task()?;
        self.library()?;
        self.fit_config()?;
        self.dyna_config()?;
        self.sac_config()?;
        Ok(())
    }

    pub fn task(&self) -> Result<Arc<dyn Task>, ConfigError> {
        let overrides: Vec<(String, f64)> = self.environment.overrides.iter().map(|(k, v)| (k.clone(), *v)).collect();
        make_task(&self.environment.name, &overrides).map_err(|e| invalid("environment", e.to_string()))
    }

    pub fn library(&self) -> Result<FeatureLibrary, ConfigError> {
        let task = self.task()?;
        let spec = task.spec();
        match (&self.library.builtin, &self.library.expressions) {
            (Some(_), Some(_)) => Err(invalid("library", "set either builtin or expressions, not both")),
            (None, None) => Err(invalid("library", "set builtin or expressions")),
            (Some(name), None) => match name.as_str() {
                "default" => Ok(task.default_library()),
                "cartpole" if spec.state_dim == 4 && spec.control_dim == 1 => Ok(FeatureLibrary::cartpole()),
                other => Err(invalid("library.builtin", format!("unknown or incompatible library '{other}'"))),
            },
            (None, Some(exprs)) => FeatureLibrary::from_expressions(spec.state_dim, spec.control_dim, exprs)
                .map_err(|e| invalid("library.expressions", e.to_string())),
        }
    }

    pub fn fit_config(&self) -> Result<FitConfig, ConfigError> {
        let s = &self.sindy;
        let integrator = match s.integrator {
            IntegratorName::Rk4 => Integrator::Rk4,
            IntegratorName::Euler => Integrator::Euler,
        };
        let stlsq = StlsqConfig {
            threshold: s.threshold,
            ridge_alpha: s.ridge_alpha,
            max_iterations: s.max_iterations,
            normalize_columns: s.normalize_columns,
        };
        stlsq.validate().map_err(|e| invalid("sindy", e.to_string()))?;
        Ok(FitConfig {
            mode: match s.mode {
                ModeName::Continuous => SindyMode::Continuous(integrator),
                ModeName::Discrete => SindyMode::Discrete,
            },
            stlsq,
            differentiator: match s.differentiation {
                DifferentiationName::Smoothed => Differentiator::Smoothed { window: s.window, poly_order: s.poly_order },
                DifferentiationName::Central => Differentiator::Central,
                DifferentiationName::Forward => Differentiator::Forward,
            },
            include_boundary_rows: s.include_boundary_rows,
        })
    }

    pub fn exploration(&self) -> Result<ExplorationPolicy, ConfigError> {
        let e = &self.dyna.exploration;
        let need = |v: Option<f64>, key: &str| v.ok_or_else(|| invalid(&format!("dyna.exploration.{key}"), "required for this kind"));
        Ok(match e.kind {
            ExplorationKind::Alternating => ExplorationPolicy::Alternating { random_prob: e.random_prob.unwrap_or(0.2) },
            ExplorationKind::Sinusoid => ExplorationPolicy::Sinusoid {
                amplitude: need(e.amplitude, "amplitude")?,
                period_min: need(e.period_min, "period_min")?,
                period_max: need(e.period_max, "period_max")?,
            },
            ExplorationKind::Uniform => ExplorationPolicy::Uniform,
        })
    }

    pub fn dyna_config(&self) -> Result<DynaConfig, ConfigError> {
        let d = &self.dyna;
        let model_epochs = match &d.model_epochs {
            ModelEpochsSetting::Count(n) => ModelEpochs::Fixed(*n),
            ModelEpochsSetting::Named(s) if s == "unbounded" => ModelEpochs::Unbounded { budget: d.model_epoch_budget },
            ModelEpochsSetting::Named(s) => {
                return Err(invalid("dyna.model_epochs", format!("expected an integer or \"unbounded\", got \"{s}\"")))
            }
        };
        let config = DynaConfig {
            seed_rollouts: d.seed_rollouts,
            rollout_length: d.rollout_length,
            model_epochs,
            model_horizon: d.model_horizon,
            model_start: match d.model_start {
                ModelStartName::Reset => ModelStart::Reset,
                ModelStartName::Uniform => ModelStart::Uniform,
            },
            model_eval_episodes: d.model_eval_episodes,
            model_eval_every: d.model_eval_every,
            model_consecutive: d.model_consecutive,
            exploration: self.exploration()?,
            convergence: ConvergenceCriterion {
                target: self.convergence.target,
                consecutive: self.convergence.consecutive,
                eval_episodes: self.convergence.eval_episodes,
            },
            max_real_episodes: d.max_real_episodes,
            eval_every: d.eval_every,
            updates_per_step: d.updates_per_step,
            warmup_steps: d.warmup_steps,
            buffer_capacity: d.buffer_capacity,
            real_batch_source: match d.real_batch_source {
                BatchSourceName::All => SourceFilter::All,
                BatchSourceName::Real => SourceFilter::Only(sindy_rl::policy_learner::Source::Real),
            },
            refit: d.refit,
            fit: self.fit_config()?,
        };
        config.validate().map_err(|e| invalid("dyna", e.to_string()))?;
        Ok(config)
    }

    pub fn sac_config(&self) -> Result<SacConfig, ConfigError> {
        let s = &self.sac;
        let config = SacConfig {
            hidden: s.hidden.clone(),
            actor_lr: s.actor_lr,
            critic_lr: s.critic_lr,
            alpha_lr: s.alpha_lr,
            gamma: s.gamma,
            tau: s.tau,
            batch_size: s.batch_size,
            initial_alpha: s.initial_alpha,
            learn_alpha: s.learn_alpha,
            target_entropy: s.target_entropy,
        };
        config.validate().map_err(|e| invalid("sac", e.to_string()))?;
        Ok(config)
    }
}
