//! `flood` — config-driven flood-forecasting pipeline.
//!
//! Subcommands cover the pipeline stages: `flatten` conditions the DEM,
//! `build` simulates the steady-state library, `train` fits per-pixel
//! thresholds from historical observations, `forecast` turns a gauge level
//! into a risk map, `evaluate` scores forecasts against ground truth, and
//! `render` redraws a saved forecast.
//!
//! Exit codes: 0 success, 1 validation error, 2 numerical failure,
//! 3 I/O error.

mod commands;
mod config;
mod render;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};
use flood_core::solver::SolverError;

use config::PipelineConfig;

#[derive(Parser)]
#[command(name = "flood", version, about = "Gauge-driven flood inundation forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the conditioned DEM with the riverbed flattened to a linear
    /// downstream gradient.
    Flatten {
        #[arg(long)]
        config: PathBuf,
        /// Output raster; defaults to paths.conditioned_dem.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate one steady state per configured inflow level and save the
    /// library.
    Build {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to paths.library_dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit per-pixel thresholds from the historical observation stack.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to paths.threshold_dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Produce a risk map for a forecast gauge level.
    Forecast {
        #[arg(long)]
        config: PathBuf,
        /// Forecast gauge water level (meters).
        #[arg(long)]
        level: f64,
        /// Overrides forecast.seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; defaults to paths.forecast_dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score saved forecasts against ground-truth wet masks.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        /// Saved forecast directory; repeat for batch evaluation.
        #[arg(long = "forecast-dir", required = true)]
        forecast_dirs: Vec<PathBuf>,
        /// Ground-truth wet mask (0/1 ASCII grid), one per forecast dir.
        #[arg(long = "truth", required = true)]
        truths: Vec<PathBuf>,
        /// Optional validity mask per truth raster (pixels actually
        /// observed).
        #[arg(long = "truth-valid")]
        truth_valids: Vec<PathBuf>,
        /// Output directory; defaults to "evaluation" beside the forecast
        /// dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-render a saved forecast, optionally outlining ground truth.
    Render {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "forecast-dir")]
        forecast_dir: PathBuf,
        /// Ground-truth wet mask to outline.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Output image; defaults to render.png inside the forecast dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Map an error chain to the documented exit codes: numerical solver
/// failures are 2, anything rooted in the filesystem is 3, and every other
/// (validation) failure is 1.
fn exit_code_for(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(solver) = cause.downcast_ref::<SolverError>() {
            match solver {
                SolverError::NonFinite { .. } | SolverError::NoConvergence { .. } => return 2,
                _ => return 1,
            }
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
    }
    1
}

/// Honor FLOOD_WORKERS before any parallel region spins up the default
/// thread pool. Worker count never changes results, only wall time.
fn configure_workers() -> Result<()> {
    if let Ok(raw) = std::env::var("FLOOD_WORKERS") {
        let workers: usize = raw
            .parse()
            .map_err(|_| anyhow::anyhow!("FLOOD_WORKERS must be a positive integer, got {raw:?}"))?;
        if workers == 0 {
            anyhow::bail!("FLOOD_WORKERS must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| anyhow::anyhow!("configuring {workers} workers: {e}"))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_workers()?;
    match cli.command {
        Command::Flatten { config, out } => {
            commands::cmd_flatten(&PipelineConfig::load(&config)?, out)
        }
        Command::Build { config, out } => {
            commands::cmd_build(&PipelineConfig::load(&config)?, out)
        }
        Command::Train { config, out } => {
            commands::cmd_train(&PipelineConfig::load(&config)?, out)
        }
        Command::Forecast {
            config,
            level,
            seed,
            out,
        } => commands::cmd_forecast(&PipelineConfig::load(&config)?, level, seed, out),
        Command::Evaluate {
            config,
            forecast_dirs,
            truths,
            truth_valids,
            out,
        } => commands::cmd_evaluate(
            &PipelineConfig::load(&config)?,
            &forecast_dirs,
            &truths,
            &truth_valids,
            out,
        ),
        Command::Render {
            config,
            forecast_dir,
            truth,
            out,
        } => commands::cmd_render(&PipelineConfig::load(&config)?, &forecast_dir, truth, out),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    match run(cli) {
        Ok(()) => {}
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(exit_code_for(&err));
        }
    }
}
