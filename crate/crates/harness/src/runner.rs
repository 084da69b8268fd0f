//! Seeded experiment runs and their on-disk artifacts.

use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use sindy_rl::dyna::{collect_seed_data, run_dyna, DynaError, RunRecord, RunStatus};
use sindy_rl::environments::Environment;
use sindy_rl::policy_learner::{PolicyKind, Sac};
use sindy_rl::seeding;
use sindy_rl::sindy_model::{ModelError, SindyModel};

use crate::config::{ConfigError, ExperimentConfig};
use crate::report::{compare_with_truth, model_report, Comparison};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{0}")]
    Incompatible(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dyna(#[from] DynaError),
}

pub(crate) fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

/// Write through a temporary file and rename, so readers never see a
/// partially written file.
pub(crate) fn write_atomic(path: &Path, contents: &str) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_error(parent))?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents).map_err(io_error(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_error(path))
}

#[derive(Debug, Clone, PartialEq)]
pub enum SeedStatus {
    Converged,
    NotConverged,
    Cancelled,
    Failed(String),
}

impl SeedStatus {
    pub fn label(&self) -> &str {
        match self {
            SeedStatus::Converged => "converged",
            SeedStatus::NotConverged => "not_converged",
            SeedStatus::Cancelled => "cancelled",
            SeedStatus::Failed(_) => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedOutcome {
    pub seed: u64,
    pub status: SeedStatus,
    pub record: Option<RunRecord>,
    pub parameters: usize,
    pub nonzero: usize,
    pub total_real_steps: usize,
    pub wall_seconds: f64,
}

impl SeedOutcome {
    pub fn steps_to_threshold(&self) -> Option<usize> {
        self.record.as_ref().and_then(|r| r.steps_to_threshold)
    }

    pub fn fine_tuning_episodes(&self) -> usize {
        self.record.as_ref().map_or(0, |r| r.fine_tuning_episodes)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub iteration: usize,
    pub seeds: usize,
    pub real_steps_mean: f64,
    pub real_steps_std: f64,
    pub model_steps_mean: f64,
    pub model_steps_std: f64,
    pub eval_mean: f64,
    pub eval_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub seeds: Vec<SeedOutcome>,
    pub aggregates: Vec<AggregateRow>,
}

impl ResultTable {
    pub fn any_failed(&self) -> bool {
        self.seeds.iter().any(|s| matches!(s.status, SeedStatus::Failed(_)))
    }

    pub fn all_converged(&self) -> bool {
        self.seeds.iter().all(|s| s.status == SeedStatus::Converged)
    }
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean and population standard deviation across seeds at each iteration
/// index present in at least one seed.
pub fn aggregate(seeds: &[SeedOutcome]) -> Vec<AggregateRow> {
    let longest = seeds.iter().filter_map(|s| s.record.as_ref()).map(|r| r.rows.len()).max().unwrap_or(0);
    (0..longest)
        .map(|i| {
            let rows: Vec<_> = seeds.iter().filter_map(|s| s.record.as_ref()).filter_map(|r| r.rows.get(i)).collect();
            let (real_steps_mean, real_steps_std) = mean_std(&rows.iter().map(|r| r.real_steps as f64).collect::<Vec<_>>());
            let (model_steps_mean, model_steps_std) = mean_std(&rows.iter().map(|r| r.model_steps as f64).collect::<Vec<_>>());
            let (eval_mean, eval_std) = mean_std(&rows.iter().map(|r| r.eval_mean).collect::<Vec<_>>());
            AggregateRow {
                iteration: i,
                seeds: rows.len(),
                real_steps_mean,
                real_steps_std,
                model_steps_mean,
                model_steps_std,
                eval_mean,
                eval_std,
            }
        })
        .collect()
}

fn learner_for(config: &ExperimentConfig, seed: u64) -> Result<Sac, HarnessError> {
    let task = config.task()?;
    let spec = task.spec();
    let mut rng = seeding::stream(seed, "learner-init");
    Sac::new(PolicyKind::for_space(&spec.action_space), spec.observation_dim, config.sac_config()?, &mut rng)
        .map_err(|e| HarnessError::Dyna(DynaError::Learner(e)))
}

fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join("seeds").join(format!("seed_{seed}"))
}

fn run_seed(config: &ExperimentConfig, seed: u64, out: &Path, cancel: Option<&AtomicBool>) -> SeedOutcome {
    let started = Instant::now();
    let outcome = (|| -> Result<SeedOutcome, HarnessError> {
        let task = config.task()?;
        let library = config.library()?;
        let dyna = config.dyna_config()?;
        let result = run_dyna(&dyna, task.clone(), &library, learner_for(config, seed)?, seed, cancel)?;
        let dir = seed_dir(out, seed);
        if let Some(model) = &result.model {
            let samples = result.d_sindy.iter().map(|t| t.len()).sum();
            write_atomic(&dir.join("model.txt"), &model.to_text())?;
            write_atomic(&dir.join("equations.txt"), &model_report(task.as_ref(), model, samples))?;
        }
        write_atomic(&dir.join("policy.txt"), &result.learner.to_checkpoint())?;
        let status = match result.record.status {
            RunStatus::Converged => SeedStatus::Converged,
            RunStatus::NotConverged => SeedStatus::NotConverged,
            RunStatus::Cancelled => SeedStatus::Cancelled,
        };
        Ok(SeedOutcome {
            seed,
            status,
            parameters: result.model.as_ref().map_or(0, |m| m.parameter_count()),
            nonzero: result.model.as_ref().map_or(0, |m| m.nonzero_count()),
            total_real_steps: result.d_env.iter().map(|t| t.len()).sum(),
            record: Some(result.record),
            wall_seconds: 0.0,
        })
    })();
    let mut outcome = outcome.unwrap_or_else(|e| SeedOutcome {
        seed,
        status: SeedStatus::Failed(e.to_string()),
        record: None,
        parameters: 0,
        nonzero: 0,
        total_real_steps: 0,
        wall_seconds: 0.0,
    });
    outcome.wall_seconds = started.elapsed().as_secs_f64();
    outcome
}

/// Worker slots from `SINDY_RL_WORKERS`, defaulting to the available
/// parallelism.
pub fn worker_count() -> usize {
    std::env::var("SINDY_RL_WORKERS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Run every seed of `config` and write the merged result files into `out`.
pub fn run_experiment(
    config: &ExperimentConfig,
    out: &Path,
    workers: usize,
    cancel: Option<&AtomicBool>,
) -> Result<ResultTable, HarnessError> {
    config.validate()?;
    std::fs::create_dir_all(out).map_err(io_error(out))?;
    write_atomic(&out.join("config.toml"), &config.to_toml())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| HarnessError::Incompatible(format!("cannot start worker pool: {e}")))?;
    let mut seeds: Vec<SeedOutcome> =
        pool.install(|| config.seeds.par_iter().map(|&seed| run_seed(config, seed, out, cancel)).collect());
    seeds.sort_by_key(|s| s.seed);
    let table = ResultTable { aggregates: aggregate(&seeds), seeds };
    crate::results::write_results(&table, out)?;
    Ok(table)
}

pub struct FitOutcome {
    pub model: SindyModel,
    pub report: String,
    pub comparison: Option<Comparison>,
    pub samples: usize,
}

/// Seed collection and a single fit, without any policy training.
pub fn fit_only(config: &ExperimentConfig, seed: u64) -> Result<FitOutcome, HarnessError> {
    let task = config.task()?;
    let library = config.library()?;
    let dyna = config.dyna_config()?;
    let mut env = Environment::new(task.clone());
    let data = collect_seed_data(&mut env, &dyna.exploration, dyna.seed_rollouts, dyna.rollout_length, seed)?;
    let model = SindyModel::fit(&data, &library, &dyna.fit)?;
    let samples = data.iter().map(|t| t.len()).sum();
    Ok(FitOutcome {
        report: model_report(task.as_ref(), &model, samples),
        comparison: compare_with_truth(task.as_ref(), &model),
        model,
        samples,
    })
}
