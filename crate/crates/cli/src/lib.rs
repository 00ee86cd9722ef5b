//! Configuration-driven experiment runner for `nessedp-core`.
//!
//! A TOML file defines the system and the run; [`run::execute`] dispatches on the
//! experiment kind and writes `<name>.csv`, extra tables, plot panels and
//! `<name>.summary.json`.

// `!(x > 0.0)` is the NaN-rejecting form used in every domain check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod plot;
pub mod run;
pub mod table;

pub use config::{parse_config, parse_config_str, parse_config_with, ExperimentConfig, ExperimentKind, Overrides, SystemSpec};
pub use error::{CliError, Result};
pub use plot::{emit_plotdata, PlotSpec};
pub use run::{execute, resolve_kind, run_experiment, Report};
pub use table::{Cell, Check, ResultTable, Summary, TableMetadata};
