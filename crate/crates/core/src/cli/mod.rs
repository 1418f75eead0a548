//! Configuration-driven experiments behind the `drsplit` binary.

pub mod check;
pub mod config;
pub mod experiment;
pub mod plot;

pub use check::{check, CheckItem, CheckReport};
pub use config::{load_config, parse_config, ExperimentConfig, ProblemConfig};
pub use experiment::{build_instance, build_reference, compare, output_root, run_experiment, Instance, RunSummary};
pub use plot::{emit_plot, PlotKind, PlotScale};

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_CHECK: i32 = 3;

/// Exit code for an error: bad configuration or input data gives 1,
/// anything else 2.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::Parse { .. } | Error::Image(_) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}
