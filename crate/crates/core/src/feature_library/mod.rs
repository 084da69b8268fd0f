//! Candidate feature libraries over the concatenated state-action input.

pub mod expr;

use nalgebra::DMatrix;
use thiserror::Error;

pub use expr::{EvalError, Expr, ExprError, Var};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LibraryError {
    #[error("feature {index} (`{source_text}`): {error}")]
    Expr { index: usize, source_text: String, error: ExprError },
    #[error("duplicate feature name `{0}`")]
    DuplicateName(String),
    #[error("a feature library needs at least one function")]
    Empty,
    #[error("{0}")]
    Domain(String),
    #[error("expected {expected} input columns, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("states have {states} rows but actions have {actions}")]
    RowMismatch { states: usize, actions: usize },
    #[error("feature `{feature}` is not finite at row {row}")]
    NonFinite { feature: String, row: usize },
    #[error("feature `{feature}` divides by zero at row {row}")]
    DivisionByZero { feature: String, row: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFunction {
    name: String,
    expr: Expr,
    inputs: Vec<usize>,
}

impl FeatureFunction {
    fn new(expr: Expr, state_dim: usize) -> Self {
        let inputs = expr.variables().into_iter().map(|v| v.slot(state_dim)).collect();
        Self { name: expr.to_string(), expr, inputs }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    /// Slots of the concatenated input read by this function.
    pub fn inputs(&self) -> &[usize] {
        &self.inputs
    }
}

/// Ordered list of features; the order fixes the coefficient row order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureLibrary {
    state_dim: usize,
    action_dim: usize,
    functions: Vec<FeatureFunction>,
}

fn slot_var(slot: usize, state_dim: usize) -> Var {
    if slot < state_dim {
        Var::State(slot)
    } else {
        Var::Action(slot - state_dim)
    }
}

fn monomial(powers: &[(usize, u32)], state_dim: usize) -> Expr {
    let factor = |&(slot, p): &(usize, u32)| {
        let v = Expr::var(slot_var(slot, state_dim));
        if p == 1 {
            v
        } else {
            Expr::Pow(Box::new(v), Box::new(Expr::Const(p as f64)))
        }
    };
    let mut iter = powers.iter();
    let first = iter.next().map(factor).unwrap_or(Expr::Const(1.0));
    iter.fold(first, |acc, f| Expr::Mul(Box::new(acc), Box::new(factor(f))))
}

/// Group a sorted multiset of slots into (slot, power) pairs.
fn powers_of(slots: &[usize]) -> Vec<(usize, u32)> {
    let mut out: Vec<(usize, u32)> = Vec::new();
    for &s in slots {
        match out.last_mut() {
            Some((last, p)) if *last == s => *p += 1,
            _ => out.push((s, 1)),
        }
    }
    out
}

fn combinations_with_replacement(n: usize, k: usize, start: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if prefix.len() == k {
        out.push(prefix.clone());
        return;
    }
    for i in start..n {
        prefix.push(i);
        combinations_with_replacement(n, k, i, prefix, out);
        prefix.pop();
    }
}

impl FeatureLibrary {
    pub fn new(state_dim: usize, action_dim: usize, functions: Vec<FeatureFunction>) -> Result<Self, LibraryError> {
        if functions.is_empty() {
            return Err(LibraryError::Empty);
        }
        let mut seen = std::collections::HashSet::new();
        for f in &functions {
            if !seen.insert(f.name.as_str()) {
                return Err(LibraryError::DuplicateName(f.name.clone()));
            }
            if f.inputs.iter().any(|&s| s >= state_dim + action_dim) {
                return Err(LibraryError::Domain(format!(
                    "feature `{}` reads an input outside {} slots",
                    f.name,
                    state_dim + action_dim
                )));
            }
        }
        Ok(Self { state_dim, action_dim, functions })
    }

    fn from_exprs(state_dim: usize, action_dim: usize, exprs: Vec<Expr>) -> Result<Self, LibraryError> {
        let functions = exprs.into_iter().map(|e| FeatureFunction::new(e, state_dim)).collect();
        Self::new(state_dim, action_dim, functions)
    }

    /// Parse one feature per expression string. Names are the normalized
    /// expressions.
    pub fn from_expressions<S: AsRef<str>>(state_dim: usize, action_dim: usize, specs: &[S]) -> Result<Self, LibraryError> {
        let exprs = specs
            .iter()
            .enumerate()
            .map(|(index, s)| {
                expr::parse(s.as_ref(), state_dim, action_dim).map_err(|error| LibraryError::Expr {
                    index,
                    source_text: s.as_ref().to_string(),
                    error,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_exprs(state_dim, action_dim, exprs)
    }

    /// All monomials of total degree `1..=degree` (and `1` if `include_bias`)
    /// over the concatenated inputs, in graded lexicographic order.
    pub fn polynomial(state_dim: usize, action_dim: usize, degree: usize, include_bias: bool) -> Result<Self, LibraryError> {
        if degree == 0 {
            return Err(LibraryError::Domain("polynomial degree must be >= 1".into()));
        }
        let n = state_dim + action_dim;
        if n == 0 {
            return Err(LibraryError::Domain("polynomial library needs at least one input".into()));
        }
        let mut exprs = Vec::new();
        if include_bias {
            exprs.push(Expr::Const(1.0));
        }
        for d in 1..=degree {
            let mut combos = Vec::new();
            combinations_with_replacement(n, d, 0, &mut Vec::new(), &mut combos);
            exprs.extend(combos.iter().map(|c| monomial(&powers_of(c), state_dim)));
        }
        Self::from_exprs(state_dim, action_dim, exprs)
    }

    /// `sin(k*u)` and `cos(k*u)` for each selected input slot `u` and
    /// `k = 1..=k_max`.
    pub fn fourier(state_dim: usize, action_dim: usize, slots: &[usize], k_max: usize) -> Result<Self, LibraryError> {
        if slots.is_empty() {
            return Err(LibraryError::Domain("fourier library needs at least one input index".into()));
        }
        if k_max == 0 {
            return Err(LibraryError::Domain("fourier k_max must be >= 1".into()));
        }
        let n = state_dim + action_dim;
        let mut exprs = Vec::new();
        for &slot in slots {
            if slot >= n {
                return Err(LibraryError::Domain(format!("input index {slot} out of range for {n} inputs")));
            }
            let v = Expr::var(slot_var(slot, state_dim));
            for k in 1..=k_max {
                let arg = if k == 1 {
                    v.clone()
                } else {
                    Expr::Mul(Box::new(Expr::Const(k as f64)), Box::new(v.clone()))
                };
                exprs.push(Expr::Sin(Box::new(arg.clone())));
                exprs.push(Expr::Cos(Box::new(arg)));
            }
        }
        Self::from_exprs(state_dim, action_dim, exprs)
    }

    /// The cart-pole family `1, v, v^2, v*w, v^2*w` over the four state
    /// variables and the force input `a0`: 1 + 5 + 5 + 10 + 20 = 41 features.
    pub fn cartpole() -> Self {
        let (state_dim, n) = (4, 5);
        let mut exprs = vec![Expr::Const(1.0)];
        for i in 0..n {
            exprs.push(monomial(&[(i, 1)], state_dim));
        }
        for i in 0..n {
            exprs.push(monomial(&[(i, 2)], state_dim));
        }
        for i in 0..n {
            for j in i + 1..n {
                exprs.push(monomial(&[(i, 1), (j, 1)], state_dim));
            }
        }
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let mut p = vec![(i, 2), (j, 1)];
                    p.sort();
                    exprs.push(monomial(&p, state_dim));
                }
            }
        }
        Self::from_exprs(state_dim, 1, exprs).expect("cartpole library is well formed")
    }

    /// Append the functions of `other`; names must stay unique.
    pub fn concat(mut self, other: FeatureLibrary) -> Result<Self, LibraryError> {
        if self.state_dim != other.state_dim || self.action_dim != other.action_dim {
            return Err(LibraryError::Domain("cannot join libraries over different inputs".into()));
        }
        self.functions.extend(other.functions);
        Self::new(self.state_dim, self.action_dim, self.functions)
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn input_dim(&self) -> usize {
        self.state_dim + self.action_dim
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn functions(&self) -> &[FeatureFunction] {
        &self.functions
    }

    pub fn names(&self) -> Vec<String> {
        self.functions.iter().map(|f| f.name.clone()).collect()
    }

    /// Evaluate every feature at one concatenated input `[x; a]`. `row` only
    /// labels errors.
    pub fn evaluate_into(&self, input: &[f64], out: &mut [f64], row: usize) -> Result<(), LibraryError> {
        if input.len() != self.input_dim() {
            return Err(LibraryError::DimensionMismatch { expected: self.input_dim(), got: input.len() });
        }
        for (f, slot) in self.functions.iter().zip(out.iter_mut()) {
            let v = f.expr.eval(input, self.state_dim).map_err(|_| LibraryError::DivisionByZero {
                feature: f.name.clone(),
                row,
            })?;
            if !v.is_finite() {
                return Err(LibraryError::NonFinite { feature: f.name.clone(), row });
            }
            *slot = v;
        }
        Ok(())
    }

    pub fn evaluate_point(&self, state: &[f64], action: &[f64]) -> Result<Vec<f64>, LibraryError> {
        let mut input = Vec::with_capacity(state.len() + action.len());
        input.extend_from_slice(state);
        input.extend_from_slice(action);
        let mut out = vec![0.0; self.len()];
        self.evaluate_into(&input, &mut out, 0)?;
        Ok(out)
    }

    /// Design matrix with one row per sample. `actions` may have zero columns.
    pub fn evaluate(&self, states: &DMatrix<f64>, actions: &DMatrix<f64>) -> Result<DMatrix<f64>, LibraryError> {
        if states.nrows() != actions.nrows() {
            return Err(LibraryError::RowMismatch { states: states.nrows(), actions: actions.nrows() });
        }
        let width = states.ncols() + actions.ncols();
        if width != self.input_dim() {
            return Err(LibraryError::DimensionMismatch { expected: self.input_dim(), got: width });
        }
        let mut theta = DMatrix::zeros(states.nrows(), self.len());
        let mut input = vec![0.0; width];
        let mut row_out = vec![0.0; self.len()];
        for r in 0..states.nrows() {
            for c in 0..states.ncols() {
                input[c] = states[(r, c)];
            }
            for c in 0..actions.ncols() {
                input[states.ncols() + c] = actions[(r, c)];
            }
            self.evaluate_into(&input, &mut row_out, r)?;
            for (c, v) in row_out.iter().enumerate() {
                theta[(r, c)] = *v;
            }
        }
        Ok(theta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn binomial(n: usize, k: usize) -> usize {
        (1..=k).fold(1, |acc, i| acc * (n + 1 - i) / i)
    }

    #[test]
    fn polynomial_enumeration() {
        let lib = FeatureLibrary::polynomial(2, 0, 1, true).unwrap();
        assert_eq!(lib.names(), ["1", "x0", "x1"]);
        let lib = FeatureLibrary::polynomial(2, 0, 2, true).unwrap();
        assert_eq!(lib.names(), ["1", "x0", "x1", "x0^2", "x0*x1", "x1^2"]);
        let lib = FeatureLibrary::polynomial(3, 1, 2, true).unwrap();
        assert_eq!(lib.len(), binomial(4 + 2, 2));
        assert_eq!(lib.names()[4], "a0");
        let lib = FeatureLibrary::polynomial(2, 1, 3, false).unwrap();
        assert_eq!(lib.len(), binomial(3 + 3, 3) - 1);
        assert!(FeatureLibrary::polynomial(2, 0, 0, true).is_err());
    }

    #[test]
    fn fourier_enumeration() {
        let lib = FeatureLibrary::fourier(1, 0, &[0], 3).unwrap();
        assert_eq!(
            lib.names(),
            ["sin(x0)", "cos(x0)", "sin(2*x0)", "cos(2*x0)", "sin(3*x0)", "cos(3*x0)"]
        );
        let lib = FeatureLibrary::fourier(1, 0, &[0], 1).unwrap();
        assert_eq!(lib.evaluate_point(&[0.0], &[]).unwrap(), vec![0.0, 1.0]);
        assert!(FeatureLibrary::fourier(1, 0, &[], 1).is_err());
        assert!(FeatureLibrary::fourier(1, 0, &[1], 1).is_err());
    }

    #[test]
    fn cartpole_family() {
        let lib = FeatureLibrary::cartpole();
        assert_eq!(lib.len(), 41);
        assert_eq!(lib.len() * lib.state_dim(), 164);
        let values = lib.evaluate_point(&[0.0; 4], &[3.0]).unwrap();
        for (name, v) in lib.names().iter().zip(&values) {
            let expected = match name.as_str() {
                "1" => 1.0,
                "a0" => 3.0,
                "a0^2" => 9.0,
                _ => 0.0,
            };
            assert_eq!(*v, expected, "{name}");
        }
        assert_eq!(FeatureLibrary::cartpole().names(), lib.names());
    }

    #[test]
    fn evaluation_examples() {
        let lib = FeatureLibrary::from_expressions(1, 0, &["1", "x0", "x0^2"]).unwrap();
        let states = DMatrix::from_column_slice(2, 1, &[2.0, 3.0]);
        let theta = lib.evaluate(&states, &DMatrix::zeros(2, 0)).unwrap();
        assert_eq!(theta, DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 4.0, 1.0, 3.0, 9.0]));
    }

    #[test]
    fn evaluation_errors() {
        let lib = FeatureLibrary::from_expressions(1, 1, &["x0", "1/a0"]).unwrap();
        let states = DMatrix::from_column_slice(2, 1, &[1.0, 2.0]);
        let actions = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        assert_eq!(
            lib.evaluate(&states, &actions),
            Err(LibraryError::DivisionByZero { feature: "1/a0".into(), row: 1 })
        );
        let lib = FeatureLibrary::from_expressions(1, 0, &["x0^-1*0+x0^0.5"]).unwrap();
        assert!(matches!(
            lib.evaluate(&DMatrix::from_column_slice(1, 1, &[-1.0]), &DMatrix::zeros(1, 0)),
            Err(LibraryError::NonFinite { row: 0, .. })
        ));
        assert_eq!(
            FeatureLibrary::from_expressions(1, 0, &["x0", "x0 "]),
            Err(LibraryError::DuplicateName("x0".into()))
        );
        assert!(matches!(
            FeatureLibrary::from_expressions(1, 0, &["x0", "q"]),
            Err(LibraryError::Expr { index: 1, .. })
        ));
        assert_eq!(FeatureLibrary::from_expressions::<&str>(1, 0, &[]), Err(LibraryError::Empty));
    }

    #[test]
    fn matrix_evaluation_matches_naive_loop() {
        let lib = FeatureLibrary::cartpole();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let states = DMatrix::from_fn(20, 4, |_, _| rng.random_range(-2.0..2.0));
        let actions = DMatrix::from_fn(20, 1, |_, _| rng.random_range(-10.0..10.0));
        let theta = lib.evaluate(&states, &actions).unwrap();
        for r in 0..20 {
            let input: Vec<f64> = states.row(r).iter().chain(actions.row(r).iter()).copied().collect();
            for (c, f) in lib.functions().iter().enumerate() {
                assert_eq!(theta[(r, c)], f.expr().eval(&input, 4).unwrap());
            }
        }
    }

    #[test]
    fn names_round_trip_through_the_parser() {
        let libs = [
            FeatureLibrary::cartpole(),
            FeatureLibrary::polynomial(2, 1, 3, true).unwrap(),
            FeatureLibrary::fourier(2, 1, &[0, 1, 2], 3).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for lib in libs {
            let names = lib.names();
            let parsed = FeatureLibrary::from_expressions(lib.state_dim(), lib.action_dim(), &names).unwrap();
            assert_eq!(parsed.names(), names);
            for _ in 0..1000 {
                let input: Vec<f64> = (0..lib.input_dim()).map(|_| rng.random_range(-3.0..3.0)).collect();
                let mut a = vec![0.0; lib.len()];
                let mut b = vec![0.0; lib.len()];
                lib.evaluate_into(&input, &mut a, 0).unwrap();
                parsed.evaluate_into(&input, &mut b, 0).unwrap();
                for (x, y) in a.iter().zip(&b) {
                    assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
                }
            }
        }
    }

    proptest! {
        #[test]
        fn polynomial_count_is_binomial(n in 1usize..5, d in 1usize..4, bias: bool) {
            let lib = FeatureLibrary::polynomial(n, 0, d, bias).unwrap();
            prop_assert_eq!(lib.len(), binomial(n + d, d) - usize::from(!bias));
            prop_assert_eq!(lib.names(), FeatureLibrary::polynomial(n, 0, d, bias).unwrap().names());
        }
    }
}
