//! Plain-text model files.
//!
//! ```text
//! sindy-model v1
//! mode continuous rk4
//! dt 0.02
//! state_dim 2
//! action_dim 1
//! features 3
//! x0
//! x1
//! a0
//! coefficients
//! 0.0000000000000000e0 0.0000000000000000e0
//! ...
//! ```

use nalgebra::DMatrix;
use thiserror::Error;

use super::{Integrator, SindyMode, SindyModel};
use crate::feature_library::FeatureLibrary;
use crate::sparse_regression::CoefficientMatrix;

const HEADER: &str = "sindy-model v1";

#[derive(Debug, Error, Clone, PartialEq)]
#[error("model file line {line}: {message}")]
pub struct ParseModelError {
    pub line: usize,
    pub message: String,
}

pub(super) fn write(model: &SindyModel) -> String {
    let mut out = String::new();
    out.push_str(HEADER);
    out.push('\n');
    let mode = match model.mode() {
        SindyMode::Continuous(Integrator::Rk4) => "continuous rk4",
        SindyMode::Continuous(Integrator::Euler) => "continuous euler",
        SindyMode::Discrete => "discrete",
    };
    out.push_str(&format!("mode {mode}\n"));
    out.push_str(&format!("dt {:.16e}\n", model.dt()));
    out.push_str(&format!("state_dim {}\n", model.state_dim()));
    out.push_str(&format!("action_dim {}\n", model.action_dim()));
    out.push_str(&format!("features {}\n", model.library().len()));
    for name in model.library().names() {
        out.push_str(&name);
        out.push('\n');
    }
    out.push_str("coefficients\n");
    let xi = model.coefficients().values();
    for i in 0..xi.nrows() {
        let row: Vec<String> = (0..xi.ncols()).map(|j| format!("{:.16e}", xi[(i, j)])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str, ParseModelError> {
        match self.inner.next() {
            Some((i, l)) => {
                self.last = i + 1;
                Ok(l.trim_end())
            }
            None => Err(self.error("unexpected end of file")),
        }
    }

    fn error(&self, message: impl Into<String>) -> ParseModelError {
        ParseModelError { line: self.last, message: message.into() }
    }

    fn field(&mut self, key: &str) -> Result<&'a str, ParseModelError> {
        let line = self.next()?;
        line.strip_prefix(key)
            .and_then(|rest| rest.strip_prefix(' '))
            .ok_or_else(|| self.error(format!("expected `{key} ...`")))
    }

    fn number<T: std::str::FromStr>(&mut self, key: &str) -> Result<T, ParseModelError> {
        let raw = self.field(key)?;
        raw.trim().parse().map_err(|_| self.error(format!("invalid {key} `{raw}`")))
    }
}

pub(super) fn read(text: &str) -> Result<SindyModel, ParseModelError> {
    let mut lines = Lines { inner: text.lines().enumerate(), last: 0 };
    if lines.next()? != HEADER {
        return Err(lines.error(format!("expected header `{HEADER}`")));
    }
    let mode = match lines.field("mode")? {
        "continuous rk4" => SindyMode::Continuous(Integrator::Rk4),
        "continuous euler" => SindyMode::Continuous(Integrator::Euler),
        "discrete" => SindyMode::Discrete,
        other => return Err(lines.error(format!("unknown mode `{other}`"))),
    };
    let dt: f64 = lines.number("dt")?;
    let state_dim: usize = lines.number("state_dim")?;
    let action_dim: usize = lines.number("action_dim")?;
    let features: usize = lines.number("features")?;
    let mut names = Vec::with_capacity(features);
    for _ in 0..features {
        names.push(lines.next()?.to_string());
    }
    let library = FeatureLibrary::from_expressions(state_dim, action_dim, &names).map_err(|e| lines.error(e.to_string()))?;
    if library.names() != names {
        return Err(lines.error("feature names are not in normalized form"));
    }
    if lines.next()? != "coefficients" {
        return Err(lines.error("expected `coefficients`"));
    }
    let mut values = DMatrix::zeros(features, state_dim);
    for i in 0..features {
        let line = lines.next()?;
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| lines.error("invalid coefficient"))?;
        if row.len() != state_dim || row.iter().any(|v| !v.is_finite()) {
            return Err(lines.error(format!("expected {state_dim} finite coefficients")));
        }
        for (j, v) in row.into_iter().enumerate() {
            values[(i, j)] = v;
        }
    }
    SindyModel::from_coefficients(library, CoefficientMatrix::from_values(values), mode, dt)
        .map_err(|e| lines.error(e.to_string()))
}
