//! CSV result files.

use std::path::Path;

use crate::runner::{write_atomic, HarnessError, ResultTable, SeedStatus};

pub const RAW_HEADER: [&str; 9] =
    ["seed", "iteration", "real_steps", "model_steps", "real_episodes", "model_epochs", "eval_mean", "eval_std", "nonzero"];

pub const NOT_REACHED: &str = "not reached";

fn to_csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let wrap = |e: csv::Error| HarnessError::Format { path: "<csv>".into(), message: e.to_string() };
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        w.write_record(&row).map_err(wrap)?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Format { path: "<csv>".into(), message: e.to_string() })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Write `raw.csv`, `aggregate.csv`, `curves.csv`, `summary.csv` and
/// `timings.csv`. Everything except the timings is a deterministic function
/// of the configuration and seeds.
pub fn write_results(table: &ResultTable, out: &Path) -> Result<(), HarnessError> {
    let mut raw = Vec::new();
    let mut curves = Vec::new();
    let mut timings = Vec::new();
    for s in &table.seeds {
        if let Some(record) = &s.record {
            for r in &record.rows {
                raw.push(vec![
                    s.seed.to_string(),
                    r.iteration.to_string(),
                    r.real_steps.to_string(),
                    r.model_steps.to_string(),
                    r.real_episodes.to_string(),
                    r.model_epochs.to_string(),
                    r.eval_mean.to_string(),
                    r.eval_std.to_string(),
                    r.nonzero.to_string(),
                ]);
                curves.push(vec![s.seed.to_string(), r.real_steps.to_string(), r.eval_mean.to_string()]);
                timings.push(vec![s.seed.to_string(), r.iteration.to_string(), format!("{:.3}", r.wall_seconds)]);
            }
        }
        timings.push(vec![s.seed.to_string(), "total".into(), format!("{:.3}", s.wall_seconds)]);
    }
    write_atomic(&out.join("raw.csv"), &to_csv(&RAW_HEADER, raw)?)?;
    write_atomic(&out.join("curves.csv"), &to_csv(&["seed", "real_steps", "eval_mean"], curves)?)?;
    write_atomic(&out.join("timings.csv"), &to_csv(&["seed", "iteration", "wall_seconds"], timings)?)?;

    let aggregates = table.aggregates.iter().map(|a| {
        vec![
            a.iteration.to_string(),
            a.seeds.to_string(),
            a.real_steps_mean.to_string(),
            a.real_steps_std.to_string(),
            a.model_steps_mean.to_string(),
            a.model_steps_std.to_string(),
            a.eval_mean.to_string(),
            a.eval_std.to_string(),
        ]
    });
    write_atomic(
        &out.join("aggregate.csv"),
        &to_csv(
            &["iteration", "seeds", "real_steps_mean", "real_steps_std", "model_steps_mean", "model_steps_std", "eval_mean", "eval_std"],
            aggregates,
        )?,
    )?;

    let summary = table.seeds.iter().map(|s| {
        let record = s.record.as_ref();
        vec![
            s.seed.to_string(),
            s.status.label().to_string(),
            record.map_or(0, |r| r.seed_steps).to_string(),
            s.fine_tuning_episodes().to_string(),
            s.steps_to_threshold().map_or(NOT_REACHED.to_string(), |n| n.to_string()),
            s.total_real_steps.to_string(),
            s.parameters.to_string(),
            s.nonzero.to_string(),
            record.and_then(|r| r.rows.last()).map_or(String::new(), |r| r.eval_mean.to_string()),
            match &s.status {
                SeedStatus::Failed(e) => e.clone(),
                _ => String::new(),
            },
        ]
    });
    write_atomic(
        &out.join("summary.csv"),
        &to_csv(
            &[
                "seed",
                "status",
                "seed_steps",
                "fine_tuning_episodes",
                "steps_to_threshold",
                "total_real_steps",
                "parameters",
                "nonzero",
                "final_eval_mean",
                "error",
            ],
            summary,
        )?,
    )
}

/// Read a CSV file into its header and rows.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), HarnessError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| HarnessError::Format { path: path.to_path_buf(), message: e.to_string() })?;
    let header = reader
        .headers()
        .map_err(|e| HarnessError::Format { path: path.to_path_buf(), message: e.to_string() })?
        .iter()
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| HarnessError::Format { path: path.to_path_buf(), message: e.to_string() })?;
        rows.push(record.iter().map(String::from).collect());
    }
    Ok((header, rows))
}
