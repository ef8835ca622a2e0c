//! Scenario-driven front end for the `kdq-core` toolkit.
//!
//! A scenario document names one of the [`ScenarioKind`]s, its operands and
//! sweeps. [`run_scenario`] validates the document, runs it and returns a
//! [`Report`], which [`emit`] writes as a JSON document and/or a CSV table.

pub mod config;
pub mod error;
pub mod report;
pub mod scenarios;

pub use config::{ScenarioConfig, ScenarioKind};
pub use error::{CliError, Result};
pub use report::{emit, from_document, to_document, to_table, OutputFormat, Report};
pub use scenarios::{run_scenario, validate_scenario};
