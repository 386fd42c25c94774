//! Scenario-driven front end for `qlab-core`.
// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod error;
pub mod manifest;
pub mod plot;
pub mod scenario;

pub use commands::Outcome;
pub use error::{CliError, Result};
pub use scenario::{parse_scenario, Overrides, Scenario};
