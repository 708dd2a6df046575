//! Multilevel ptychographic phase retrieval.
//!
//! The crate is generic over the floating-point type through [`Real`]; the
//! root aliases fix it to `f64`.

// Negated comparisons such as `!(x > 0.0)` are used to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod fourier;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod multigrid;
pub mod properties;
pub mod scalar;
pub mod simulate;
pub mod solvers;
pub mod surrogate;

pub use error::{Error, Result};
pub use grid::{ComplexField, Field2D, RealField, RegionIndex};
pub use metrics::{check_stop, compute_metrics, MetricRow};
pub use scalar::{Real, Sample};
pub use simulate::{ObjectKind, ScanPlan};
pub use solvers::{Algorithm, RunLog, RunStatus, SolverConfig};

pub type ComplexField2D = grid::ComplexField<f64>;
pub type RealField2D = grid::RealField<f64>;
pub type Dataset = simulate::Dataset<f64>;
pub type LevelStack = multigrid::LevelStack<f64>;
pub type PhaseCache = surrogate::PhaseCache<f64>;
