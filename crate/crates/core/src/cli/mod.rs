//! Configuration, task execution and result files for the `modham` binary.

pub mod config;
pub mod output;
pub mod run;

pub use config::{parse_config, parse_config_str, Format, RunConfig, Task};
pub use run::{exit_code_for, run, run_tasks, RunOutcome};
