//! Human-readable model reports.

use std::fmt::Write as _;

use sindy_rl::environments::Task;
use sindy_rl::sindy_model::SindyModel;

/// Coefficient comparison against an environment's exact dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub max_deviation: f64,
    /// Fitted nonzeros with no counterpart in the true dynamics.
    pub spurious: Vec<(usize, String, f64)>,
    /// True terms the fit set to zero.
    pub missing: Vec<(usize, String, f64)>,
    rows: Vec<(usize, String, f64, f64)>,
}

pub fn compare_with_truth(task: &dyn Task, model: &SindyModel) -> Option<Comparison> {
    let reference = task.reference_terms()?;
    let names = model.library().names();
    if reference.len() != model.state_dim() || names != task.default_library().names() {
        return None;
    }
    let xi = model.coefficients().values();
    let mut comparison = Comparison { max_deviation: 0.0, spurious: Vec::new(), missing: Vec::new(), rows: Vec::new() };
    for (j, terms) in reference.iter().enumerate() {
        for (i, name) in names.iter().enumerate() {
            let truth = terms.iter().find(|(n, _)| n == name).map_or(0.0, |(_, c)| *c);
            let fitted = xi[(i, j)];
            comparison.max_deviation = comparison.max_deviation.max((fitted - truth).abs());
            if truth == 0.0 && fitted != 0.0 {
                comparison.spurious.push((j, name.clone(), fitted));
            }
            if truth != 0.0 && fitted == 0.0 {
                comparison.missing.push((j, name.clone(), truth));
            }
            if truth != 0.0 || fitted != 0.0 {
                comparison.rows.push((j, name.clone(), fitted, truth));
            }
        }
    }
    Some(comparison)
}

pub fn model_report(task: &dyn Task, model: &SindyModel, samples: usize) -> String {
    let mut out = String::new();
    writeln!(out, "environment: {}", task.spec().name).unwrap();
    writeln!(out, "training samples: {samples}").unwrap();
    writeln!(
        out,
        "parameters: P = {} x {} = {}",
        model.state_dim(),
        model.library().len(),
        model.parameter_count()
    )
    .unwrap();
    writeln!(out, "nonzero parameters: P' = {}", model.nonzero_count()).unwrap();
    writeln!(out).unwrap();
    out.push_str(&model.equations_to_string());
    if let Some(c) = compare_with_truth(task, model) {
        writeln!(out).unwrap();
        writeln!(out, "comparison with true dynamics").unwrap();
        writeln!(out, "{:<6} {:<14} {:>22} {:>22} {:>12}", "dim", "feature", "fitted", "true", "abs error").unwrap();
        for (j, name, fitted, truth) in &c.rows {
            writeln!(out, "x{j:<5} {name:<14} {fitted:>22.12e} {truth:>22.12e} {:>12.3e}", (fitted - truth).abs()).unwrap();
        }
        writeln!(out, "max deviation: {:e}", c.max_deviation).unwrap();
        writeln!(out, "spurious terms: {}", c.spurious.len()).unwrap();
        writeln!(out, "missing terms: {}", c.missing.len()).unwrap();
    }
    out
}
