//! Goodness-of-fit tests for high-dimensional elliptical models.
//!
//! An elliptical observation factorizes after affine standardization into a
//! positive radius and an independent direction uniform on the unit sphere.
//! This crate tests that factorization by correlating the log-radius with
//! every directional coordinate: a sum statistic catches dense departures, a
//! max statistic catches sparse ones, and a Cauchy combination adapts between
//! the two. Location and shape are either supplied (oracle mode) or fitted by
//! a robust Hettmansperger-Randles procedure built from spatial signs, a
//! graphical-lasso initializer and banded fixed-point updates.
//!
//! Module map:
//!
//! * [`linalg`] - symmetric eigendecomposition, matrix powers, banding;
//! * [`robust`] - spatial median, sign covariance, graphical lasso, HR fit;
//! * [`stats`] - standardization, correlation statistics, p-values;
//! * [`calibrate`] - bootstrap mean-variance correction, permutation check;
//! * [`datagen`] - radial laws, shape structures, alternatives;
//! * [`sim`] - Monte Carlo harness for size and power tables;
//! * [`ingest`] - CSV loading and window extraction;
//! * [`cli`] - the `elliptgof` command-line front end.
//!
//! The `examples/` directory demonstrates each capability end to end; start
//! with `gof_test` and `size_table`.

pub mod calibrate;
pub mod cli;
pub mod datagen;
pub mod ingest;
pub mod linalg;
pub mod robust;
mod seeding;
pub mod sim;
pub mod stats;

/// Observations-by-variables matrix; rows are observations.
pub type DataMatrix = nalgebra::DMatrix<f64>;

pub use calibrate::{bootstrap_calibrate, permutation_check, BootstrapResult, PermutationResult};
pub use linalg::SymMatrix;
pub use robust::{hr_fit, HrConfig, HrEstimate};
pub use stats::{run_test, run_test_full, StandardizedSample, TestMode, TestOutcome, TestReport};
