// Validation writes `!(x > 0.0)` instead of `x <= 0.0` so NaN fails too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Scenario-driven experiment runner: TOML scenarios in, CSV studies out.
//!
//! [`scenario`] owns the file format and its validation; [`experiments`]
//! turns a validated scenario into the array-gain and minimum-power CSV
//! studies. The binary in `main.rs` is a thin shell over these.

pub mod experiments;
pub mod scenario;

pub use experiments::{run_array_gain, run_min_power, write_atomic, RunError};
pub use scenario::{dbm_to_watts, load_scenario, watts_to_dbm, Scenario, ScenarioError};
