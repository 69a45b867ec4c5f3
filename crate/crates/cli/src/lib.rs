//! Config-driven experiment runner for thdsim.

pub mod config;
pub mod presets;
pub mod run;
pub mod sweep;

pub use config::{load_config, parse_config, AnalysisRequest, ConfigError, ExperimentConfig};
pub use run::{resolve_out_dir, run_experiment, Manifest, RunError, RunReport};
pub use sweep::{sub_seed, sweep, with_parameter, SweepReport};
