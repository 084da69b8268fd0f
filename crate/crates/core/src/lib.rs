//! Sparse identification of nonlinear dynamics (SINDy) for control systems,
//! and a Dyna-style reinforcement-learning loop that trains a soft
//! actor-critic policy almost entirely inside the identified model.
//!
//! The crate is organized bottom-up:
//!
//! - [`sparse_regression`]: ridge-regularized sequentially thresholded least squares.
//! - [`differentiation`]: finite-difference and local-polynomial derivative estimates.
//! - [`feature_library`]: candidate feature functions and the design matrix.
//! - [`sindy_model`]: fitted models, trajectories, integration and serialization.
//! - [`environments`]: analytic ground-truth control tasks.
//! - [`policy_learner`]: soft actor-critic (continuous and discrete variants).
//! - [`dyna`]: the seed / fit / model-train / fine-tune loop.

pub mod differentiation;
pub mod dyna;
pub mod environments;
pub mod feature_library;
pub mod policy_learner;
pub mod seeding;
pub mod sindy_model;
pub mod sparse_regression;

mod linalg;
