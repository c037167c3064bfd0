use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use splinelens_lab::runner::{run_command, Command, RunOptions};
use splinelens_lab::LabError;

/// Desk-scale experiments on shallow univariate ReLU networks seen as
/// splines.
#[derive(Parser)]
#[command(name = "splinelens", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct RunArgs {
    /// JSON config; the defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Also write SVG plots.
    #[arg(long)]
    plot: bool,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Replace the config's seed list.
    #[arg(long = "seed", num_args = 1..)]
    seeds: Vec<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Breakpoint and delta-slope histograms at initialization.
    InitDensity(RunArgs),
    /// Output-scale sweep against linear and natural cubic interpolants.
    AlphaSweep(RunArgs),
    /// Standard against spiky initialization.
    Spiky(RunArgs),
    /// Roughness in a data gap against width and weight scale.
    RoughnessSweep(RunArgs),
    /// Lonely datapoints at initialization against overparametrization.
    LonelySweep(RunArgs),
    /// Segmented regression (DP, greedy merge) against trained networks.
    SegregBench(RunArgs),
    /// Hessian spectrum and zero-eigenvalue fraction at trained minima.
    HessianReport(RunArgs),
    /// Gradient-flow frames, cluster events and knot log.
    GfFrames(RunArgs),
    /// Standard against uniform-breakpoint initialization.
    DataDependentInit(RunArgs),
    /// Print a command's default config.
    Defaults {
        /// Command name, e.g. alpha-sweep.
        command: String,
    },
}

fn run(cli: Cli) -> Result<(), LabError> {
    let (command, args) = match cli.cmd {
        Cmd::InitDensity(a) => (Command::InitDensity, a),
        Cmd::AlphaSweep(a) => (Command::AlphaSweep, a),
        Cmd::Spiky(a) => (Command::Spiky, a),
        Cmd::RoughnessSweep(a) => (Command::RoughnessSweep, a),
        Cmd::LonelySweep(a) => (Command::LonelySweep, a),
        Cmd::SegregBench(a) => (Command::SegregBench, a),
        Cmd::HessianReport(a) => (Command::HessianReport, a),
        Cmd::GfFrames(a) => (Command::GfFrames, a),
        Cmd::DataDependentInit(a) => (Command::DataDependentInit, a),
        Cmd::Defaults { command } => {
            let c = Command::from_name(&command)
                .ok_or_else(|| LabError::Config(format!("unknown command {command:?}")))?;
            println!("{}", c.default_config());
            return Ok(());
        }
    };
    let config = match &args.config {
        Some(path) => Some(std::fs::read_to_string(path).map_err(|e| {
            LabError::Config(format!("cannot read {}: {e}", path.display()))
        })?),
        None => None,
    };
    let opts = RunOptions {
        config,
        seeds: (!args.seeds.is_empty()).then_some(args.seeds),
        out: args.out,
        plot: args.plot,
    };
    let report = run_command(command, &opts)?;
    for f in &report.files {
        println!("{}", f.display());
    }
    match report.failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("splinelens: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
