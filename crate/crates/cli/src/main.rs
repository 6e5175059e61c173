use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use magtorus_cli::{execute, load_config, workers_from_env, CliError, ClassifyOptions, Preset};

#[derive(Parser)]
#[command(name = "magtorus", version, about = "Magnetic geodesic flows on the 2-torus with quadratic integrals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; missing fields take default-preset values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root directory for run directories.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Built-in configuration, ignored when --config is given.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the symmetry-flow jet and write Λ, Ω and the verification report.
    Deform(Common),
    /// Recompute the stationary residuals and check them against the threshold.
    Verify(Common),
    /// Integrate the flow from the start lattice and record integral drift.
    Simulate(Common),
    /// Run the all-levels classifier on bundled and user candidates.
    ClassifyCheck {
        #[command(flatten)]
        common: Common,
        /// Extra candidate file (JSON spectra); may be repeated.
        #[arg(long)]
        candidate: Vec<PathBuf>,
        /// Only check the candidates given with --candidate.
        #[arg(long)]
        no_bundled: bool,
    },
    /// Turn the artifacts of a run into plot-ready tables.
    ExportPlots(Common),
}

fn run(cli: Cli) -> Result<serde_json::Value, CliError> {
    if let Some(n) = workers_from_env(std::env::var("MAGTORUS_WORKERS").ok().as_deref())? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    }
    let (name, common, opts) = match cli.command {
        Command::Deform(c) => ("deform", c, ClassifyOptions::default()),
        Command::Verify(c) => ("verify", c, ClassifyOptions::default()),
        Command::Simulate(c) => ("simulate", c, ClassifyOptions::default()),
        Command::ExportPlots(c) => ("export-plots", c, ClassifyOptions::default()),
        Command::ClassifyCheck {
            common,
            candidate,
            no_bundled,
        } => (
            "classify-check",
            common,
            ClassifyOptions {
                candidates: candidate,
                no_bundled,
            },
        ),
    };
    let cfg = load_config(common.config.as_deref(), common.preset)?;
    execute(name, &cfg, &common.out, &opts)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", serde_json::to_string_pretty(&e.to_json()).expect("error serializes"));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
