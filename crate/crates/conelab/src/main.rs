use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use conelab::config::parse_config;
use conelab::pipeline::{run_command, Command};

#[derive(Parser)]
#[command(
    name = "conelab",
    about = "Quadratic-cone certificates and squeezing checks for periodically forced systems",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct RunArgs {
    /// Path to the run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.directory` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// RNG seed; overrides `analysis.seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sweep the frequency-domain condition along the shifted imaginary axis.
    CheckFreq(RunArgs),
    /// Solve the Riccati system for the certificate P and audit its inertia.
    SolveKyp(RunArgs),
    /// Integrate the forced system from a random initial state.
    Simulate(RunArgs),
    /// Check the squeezing inequality on random trajectory pairs.
    VerifySqueeze(RunArgs),
    /// Iterate the period map from random starts and classify the orbits.
    FindPeriodic(RunArgs),
    /// Reconstruct fibre points of the amenable set over a coordinate grid.
    ReconstructFibre(RunArgs),
    /// Measure the distance from a generic trajectory to the fibre family.
    Attraction(RunArgs),
    /// Run every stage in order against one configuration.
    FullPipeline(RunArgs),
}

impl Cmd {
    fn split(self) -> (Command, RunArgs) {
        match self {
            Cmd::CheckFreq(a) => (Command::CheckFreq, a),
            Cmd::SolveKyp(a) => (Command::SolveKyp, a),
            Cmd::Simulate(a) => (Command::Simulate, a),
            Cmd::VerifySqueeze(a) => (Command::VerifySqueeze, a),
            Cmd::FindPeriodic(a) => (Command::FindPeriodic, a),
            Cmd::ReconstructFibre(a) => (Command::ReconstructFibre, a),
            Cmd::Attraction(a) => (Command::Attraction, a),
            Cmd::FullPipeline(a) => (Command::FullPipeline, a),
        }
    }
}

fn main() -> ExitCode {
    let (cmd, args) = Cli::parse().cmd.split();

    let mut config = match parse_config(&args.config) {
        Ok(config) => config,
        Err(e) => {
            eprintln!("conelab: {e}");
            return ExitCode::from(4);
        }
    };
    if let Some(out) = args.out {
        config.output.directory = out.display().to_string();
    }
    if let Some(seed) = args.seed {
        config.analysis.seed = seed;
    }

    match run_command(cmd, &config) {
        Ok(outcome) => {
            println!("{}", outcome.status_line);
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("conelab: {e}");
            ExitCode::from(4)
        }
    }
}
