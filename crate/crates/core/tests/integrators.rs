use nalgebra::DMatrix;
use sindy_rl::feature_library::FeatureLibrary;
use sindy_rl::sindy_model::{Integrator, SindyMode, SindyModel};
use sindy_rl::sparse_regression::CoefficientMatrix;

/// Harmonic oscillator `x0' = x1, x1' = -x0` over the library `1, x0, x1, a0`.
fn oscillator(integrator: Integrator) -> SindyModel {
    let library = FeatureLibrary::polynomial(2, 1, 1, true).unwrap();
    assert_eq!(library.names(), ["1", "x0", "x1", "a0"]);
    let mut xi = DMatrix::zeros(4, 2);
    xi[(2, 0)] = 1.0;
    xi[(1, 1)] = -1.0;
    SindyModel::from_coefficients(library, CoefficientMatrix::from_values(xi), SindyMode::Continuous(integrator), 0.1).unwrap()
}

fn error_at_one(model: &SindyModel, steps: usize) -> f64 {
    let h = 1.0 / steps as f64;
    let mut x = vec![1.0, 0.0];
    for _ in 0..steps {
        x = model.simulate_step(&x, &[0.0], h).unwrap();
    }
    ((x[0] - 1f64.cos()).powi(2) + (x[1] + 1f64.sin()).powi(2)).sqrt()
}

#[test]
fn rk4_global_error_is_fourth_order() {
    let model = oscillator(Integrator::Rk4);
    for steps in [10, 20, 40] {
        let ratio = error_at_one(&model, steps) / error_at_one(&model, 2 * steps);
        assert!(ratio >= 15.0, "halving dt reduced the error only {ratio}x");
        assert!((ratio.log2() - 4.0).abs() < 0.1, "observed order {}", ratio.log2());
    }
}

#[test]
fn euler_global_error_is_first_order() {
    let model = oscillator(Integrator::Euler);
    let ratio = error_at_one(&model, 200) / error_at_one(&model, 400);
    assert!((ratio.log2() - 1.0).abs() < 0.05, "observed order {}", ratio.log2());
}
