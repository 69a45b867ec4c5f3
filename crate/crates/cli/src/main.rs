use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thdsim_cli::presets::{preset, PRESET_NAMES};
use thdsim_cli::{load_config, resolve_out_dir, run_experiment, sweep, ConfigError, RunError};

/// Time-resolved homodyne detection simulator.
#[derive(Parser)]
#[command(name = "thdsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Run {
        config: PathBuf,
        /// Output directory (default: config output_dir, then $THDSIM_OUT_DIR, then ./thdsim-out).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run the experiment once per value of one numeric parameter.
    Sweep {
        config: PathBuf,
        /// Dotted parameter path, e.g. error_model.timing_jitter_sigma.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Print a bundled config.
    Preset { name: String },
    /// Check a config without running it.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<(), RunError> {
    match command {
        Command::Run { config, out, seed, threads } => {
            let mut c = load_config(&config)?;
            if let Some(s) = seed {
                c.seed = s;
            }
            let dir = resolve_out_dir(out.as_deref(), &c);
            let report = run_experiment(&c, &dir, threads)?;
            println!("{} files written to {}", report.manifest.files.len(), report.out_dir.display());
        }
        Command::Sweep { config, param, values, out, threads } => {
            let c = load_config(&config)?;
            let dir = resolve_out_dir(out.as_deref(), &c);
            let report = sweep(&c, &param, &values, &dir, threads)?;
            println!("{} points written to {}", report.points.len(), dir.display());
        }
        Command::Preset { name } => match preset(&name) {
            Some(text) => print!("{text}"),
            None => {
                return Err(ConfigError::Other(format!("unknown preset {name:?}; available: {}", PRESET_NAMES.join(", "))).into())
            }
        },
        Command::Validate { config } => {
            load_config(&config)?.validate()?;
            println!("{}: ok", config.display());
        }
    }
    Ok(())
}
