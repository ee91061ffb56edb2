//! Autoregressive coefficient estimation for series contaminated by an
//! unknown, unstructured dynamic drift.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bootstrap;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod model;
pub mod preprocess;
pub mod simulate;
pub mod solver;
pub mod stats;
pub mod tuning;

pub use error::{Error, Result};
pub use model::{Coefficients, DesignOperator, NoiseKind, NoiseModel, TimeSeries};
pub use solver::{fit, fit_warm, FitConfig, FitResult, SolverMethod, StepRule};
