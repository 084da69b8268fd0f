//! Steps-to-threshold comparison between result directories.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::results::{read_csv, NOT_REACHED};
use crate::runner::{write_atomic, HarnessError};

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub name: String,
    pub environment: String,
    /// Per seed: steps to threshold (if reached) and total real steps.
    pub seeds: BTreeMap<u64, (Option<usize>, usize)>,
}

/// Real-steps ratio `reference / candidate`.
#[derive(Debug, Clone, PartialEq)]
pub enum Speedup {
    Ratio(f64),
    /// The reference never reached the threshold; its total real steps
    /// give a lower bound on the ratio.
    ReferenceNotReached { lower_bound: f64 },
    NotReached,
}

impl Speedup {
    pub fn between(reference: (Option<usize>, usize), candidate: (Option<usize>, usize)) -> Self {
        match (reference.0, candidate.0) {
            (Some(r), Some(c)) => Speedup::Ratio(r as f64 / c as f64),
            (None, Some(c)) => Speedup::ReferenceNotReached { lower_bound: reference.1 as f64 / c as f64 },
            _ => Speedup::NotReached,
        }
    }

    /// A guaranteed lower bound on the ratio, when one exists.
    pub fn at_least(&self) -> Option<f64> {
        match self {
            Speedup::Ratio(r) => Some(*r),
            Speedup::ReferenceNotReached { lower_bound } => Some(*lower_bound),
            Speedup::NotReached => None,
        }
    }
}

pub fn load_summary(dir: &Path) -> Result<RunSummary, HarnessError> {
    let config = ExperimentConfig::load(&dir.join("config.toml"), &[])?;
    let path = dir.join("summary.csv");
    let (header, rows) = read_csv(&path)?;
    let col = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| HarnessError::Format { path: path.clone(), message: format!("missing column {name}") })
    };
    let (seed_col, steps_col, total_col) = (col("seed")?, col("steps_to_threshold")?, col("total_real_steps")?);
    let bad = |m: String| HarnessError::Format { path: path.clone(), message: m };
    let mut seeds = BTreeMap::new();
    for row in rows {
        let seed = row[seed_col].parse().map_err(|_| bad(format!("bad seed '{}'", row[seed_col])))?;
        let steps = match row[steps_col].as_str() {
            NOT_REACHED => None,
            s => Some(s.parse().map_err(|_| bad(format!("bad step count '{s}'")))?),
        };
        let total = row[total_col].parse().map_err(|_| bad(format!("bad step count '{}'", row[total_col])))?;
        seeds.insert(seed, (steps, total));
    }
    Ok(RunSummary { dir: dir.to_path_buf(), name: config.name, environment: config.environment.name, seeds })
}

fn mean(values: &[usize]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<usize>() as f64 / values.len() as f64)
}

fn speedup_cells(s: &Speedup) -> [String; 2] {
    match s {
        Speedup::Ratio(r) => [r.to_string(), r.to_string()],
        Speedup::ReferenceNotReached { lower_bound } => [NOT_REACHED.to_string(), lower_bound.to_string()],
        Speedup::NotReached => [NOT_REACHED.to_string(), String::new()],
    }
}

/// Compare each candidate directory against the first (reference) one,
/// seed by seed on the shared seeds, plus a row comparing mean
/// steps-to-threshold. Writes `comparison.csv` and `comparison_curves.csv`
/// into `out`.
pub fn compare_runs(dirs: &[PathBuf], out: &Path) -> Result<Vec<(String, u64, Speedup)>, HarnessError> {
    if dirs.len() < 2 {
        return Err(HarnessError::Incompatible("compare needs at least two result directories".into()));
    }
    let runs = dirs.iter().map(|d| load_summary(d)).collect::<Result<Vec<_>, _>>()?;
    let reference = &runs[0];
    for r in &runs[1..] {
        if r.environment != reference.environment {
            return Err(HarnessError::Incompatible(format!(
                "{} uses environment '{}' but {} uses '{}'",
                r.dir.display(),
                r.environment,
                reference.dir.display(),
                reference.environment
            )));
        }
    }

    let mut rows = Vec::new();
    let mut results = Vec::new();
    for cand in &runs[1..] {
        for (seed, c) in &cand.seeds {
            let Some(r) = reference.seeds.get(seed) else { continue };
            let s = Speedup::between(*r, *c);
            let fmt = |v: Option<usize>| v.map_or(NOT_REACHED.to_string(), |n| n.to_string());
            let [ratio, bound] = speedup_cells(&s);
            rows.push(vec![cand.name.clone(), seed.to_string(), fmt(r.0), fmt(c.0), ratio, bound]);
            results.push((cand.name.clone(), *seed, s));
        }
        let shared: Vec<u64> = cand.seeds.keys().filter(|s| reference.seeds.contains_key(s)).copied().collect();
        let reached = |run: &crate::compare::RunSummary| -> Vec<usize> { shared.iter().filter_map(|s| run.seeds[s].0).collect() };
        let all_reached = |run: &crate::compare::RunSummary| shared.iter().all(|s| run.seeds[s].0.is_some());
        let ref_mean = if all_reached(reference) { mean(&reached(reference)) } else { None };
        let cand_mean = if all_reached(cand) { mean(&reached(cand)) } else { None };
        let ref_total = mean(&shared.iter().map(|s| reference.seeds[s].1).collect::<Vec<_>>()).unwrap_or(0.0);
        let s = match (ref_mean, cand_mean) {
            (Some(r), Some(c)) => Speedup::Ratio(r / c),
            (None, Some(c)) => Speedup::ReferenceNotReached { lower_bound: ref_total / c },
            _ => Speedup::NotReached,
        };
        let fmt = |v: Option<f64>| v.map_or(NOT_REACHED.to_string(), |x| x.to_string());
        let [ratio, bound] = speedup_cells(&s);
        rows.push(vec![cand.name.clone(), "mean".into(), fmt(ref_mean), fmt(cand_mean), ratio, bound]);
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    let wrap = |e: csv::Error| HarnessError::Format { path: out.join("comparison.csv"), message: e.to_string() };
    w.write_record(["candidate", "seed", "reference_steps", "candidate_steps", "speedup", "speedup_lower_bound"]).map_err(wrap)?;
    for row in &rows {
        w.write_record(row).map_err(wrap)?;
    }
    let text = String::from_utf8(w.into_inner().map_err(|e| HarnessError::Format { path: out.into(), message: e.to_string() })?).unwrap();
    write_atomic(&out.join("comparison.csv"), &text)?;

    let mut curves = String::from("run,seed,real_steps,eval_mean\n");
    for run in &runs {
        let (_, rows) = read_csv(&run.dir.join("curves.csv"))?;
        for row in rows {
            curves.push_str(&format!("{},{},{},{}\n", run.name, row[0], row[1], row[2]));
        }
    }
    write_atomic(&out.join("comparison_curves.csv"), &curves)?;
    Ok(results)
}
