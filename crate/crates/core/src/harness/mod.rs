//! Monte Carlo experiments: configuration, replication, reports and
//! property checks.

pub mod config;
pub mod experiment;
pub mod properties;
pub mod report;

pub use config::{DtRule, ExperimentConfig, LimitSpec, PropertySpec};
pub use experiment::{run_experiment, run_partial};
pub use properties::{property_suite, PropertyOutcome, Status};
pub use report::{build_report, write_report, ExperimentReport};
