//! Monte Carlo simulation and analysis of single-shot dispersive qubit readout.
// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod experiments;
pub mod model;
pub mod traceio;
pub mod trajectory;

pub use config::{parse_config, serialize, SimParams};
pub use experiments::{analyze_experiment, run_experiment, ExperimentError, ExperimentReport};
