//! Configuration, presets and orchestration for RMBP/RMP experiments.
//!
//! [`config`] parses the line-based experiment format, [`experiment`] runs
//! a configuration and writes its artifacts, [`checks`] holds the
//! acceptance criteria evaluated by `reproduce`.

pub mod checks;
pub mod config;
pub mod error;
pub mod experiment;
pub mod presets;

pub use config::{parse_config, parse_config_with, ExperimentConfig};
pub use error::{HarnessError, Result};
pub use experiment::{run_experiment, write_artifacts, RunSummary};
