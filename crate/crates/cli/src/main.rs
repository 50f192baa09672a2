use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

#[derive(Parser)]
#[command(name = "carl", version, about = "Collective atomic recoil laser in a harmonic trap")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one run and write its trajectory, snapshots, predictor report and plots.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Gain spectrum over a uniform pump-probe detuning grid.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = -10.0, allow_negative_numbers = true)]
        delta21_min: f64,
        #[arg(long, default_value_t = 25.0, allow_negative_numbers = true)]
        delta21_max: f64,
        #[arg(long, default_value_t = 141)]
        points: usize,
        /// Worker threads; defaults to CARL_THREADS, then to the machine's parallelism.
        #[arg(long, env = "CARL_THREADS")]
        workers: Option<usize>,
        /// Give grid point `i` the seed `seed + i` instead of sharing one ensemble.
        #[arg(long)]
        per_point_seeds: bool,
    },
    /// Analytic gain prediction from a snapshot CSV.
    Predict {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        snapshot: PathBuf,
    },
    /// Peak detection and Raman comb comparison for a spectrum CSV.
    Peaks {
        #[arg(long)]
        spectrum: PathBuf,
        /// Trap frequency of the comb.
        #[arg(long, default_value_t = 2.0)]
        nu: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        min_height: f64,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Run the built-in invariant checks.
    Selftest,
}

/// Config file plus the flags that override it.
#[derive(Args, Clone, Debug, Default)]
pub struct RunArgs {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_atoms: Option<usize>,
    #[arg(long)]
    pub tau_end: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub delta21: Option<f64>,
    #[arg(long)]
    pub nu: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { run } => commands::simulate(&run),
        Command::Sweep {
            run,
            delta21_min,
            delta21_max,
            points,
            workers,
            per_point_seeds,
        } => commands::sweep(
            &run,
            commands::GridArgs {
                delta21_min,
                delta21_max,
                points,
                workers,
                per_point_seeds,
            },
        ),
        Command::Predict { run, snapshot } => commands::predict(&run, &snapshot),
        Command::Peaks {
            spectrum,
            nu,
            min_height,
            out_dir,
        } => commands::peaks(&spectrum, nu, min_height, out_dir.as_deref()),
        Command::Selftest => commands::selftest(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("carl: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
