//! Simulation of the nonlocal one-phase Stefan problem.
//!
//! The population density `u` evolves by `∂ₜu = J * u - u` inside a habitat
//! whose edge advances at the rate population is dispersed across it. Four
//! geometries are supported: the line with one free boundary, a bounded
//! interval with two, the half-line with a constant datum on `(-d, 0)`, and
//! balls in `R^N`.
//!
//! The crate provides the kernels and averaging operators ([`kernel`]), the
//! discrete state ([`state`]), a conservative exponential integrator
//! ([`stepper`]), stationary correctors and eigenvalues ([`correctors`]),
//! asymptotic diagnostics ([`diagnostics`]), and an independent space-time
//! fixed-point solver used for cross-checks ([`oracle`]).

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod correctors;
pub mod diagnostics;
pub mod error;
pub mod kernel;
pub mod oracle;
pub mod quadrature;
pub mod state;
pub mod stepper;

pub use config::{parse_config, serialize_config, ScenarioConfig};
pub use error::{Error, Result};
pub use kernel::{build_kernel, Kernel, KernelKind, RadialKernelMatrix};
pub use state::{BoundaryState, DensityField, Grid, RunRecord, Variant};
pub use stepper::{run, Simulation, StepParams};
