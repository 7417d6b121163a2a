//! Scenario files, seeded experiments and output writers around
//! [`cscp_core`].

pub mod error;
pub mod experiment;
pub mod output;
pub mod scenario_file;

pub use error::{CliError, Result};
pub use experiment::{run_experiment, Experiment, ExperimentSummary, RunOutcome, SummaryRow};
pub use output::{emit_field_dump, write_trace_csv, FieldKind};
pub use scenario_file::{load_scenario, EmitFields, ScenarioFile};
