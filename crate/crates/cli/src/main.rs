mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cubesphere::error::{Error, Result};

use crate::commands::{
    BenchArgs, ConvertArgs, EstimateArgs, LossesArgs, MetricsCommand, RenderArgs, WarpArgs,
};
use crate::config::Config;

/// Environment variable overriding the worker thread count.
const THREADS_ENV: &str = "CUBESPHERE_THREADS";

#[derive(Parser)]
#[command(
    name = "cubesphere",
    version,
    about = "Panorama projection, cubemap warping and direct pose estimation",
    after_help = "Set CUBESPHERE_THREADS to limit the number of worker threads."
)]
struct Cli {
    /// JSON config file; flags take precedence over it
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Print the effective configuration as JSON and exit
    #[arg(long, global = true)]
    dump_config: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert between an equirectangular panorama and cubemap faces
    Convert(ConvertArgs),
    /// Render a synthetic scene along a trajectory
    Render(RenderArgs),
    /// Warp a target panorama into the reference view on the cube
    Warp(WarpArgs),
    /// Evaluate the training objective on one frame pair
    Losses(LossesArgs),
    /// Estimate the camera motion between two frames
    EstimatePose(EstimateArgs),
    /// Depth and relative-pose error metrics
    #[command(subcommand)]
    Metrics(MetricsCommand),
    /// Time equirectangular against cubemap warping
    Bench(BenchArgs),
}

fn init_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            Error::InvalidArgument(format!("{THREADS_ENV} must be a positive integer, got {value:?}"))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidArgument(e.to_string()))
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    let mut cfg = Config::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Convert(_) => {}
        Command::Render(a) => a.apply(&mut cfg),
        Command::Warp(_) => {}
        Command::Losses(a) => a.apply(&mut cfg),
        Command::EstimatePose(a) => a.apply(&mut cfg),
        Command::Metrics(a) => a.apply(&mut cfg),
        Command::Bench(a) => a.apply(&mut cfg),
    }
    if cli.dump_config {
        println!("{}", cubesphere::io::to_json_string(&cfg)?);
        return Ok(());
    }
    match &cli.command {
        Command::Convert(a) => a.run(),
        Command::Render(a) => a.run(&cfg),
        Command::Warp(a) => a.run(),
        Command::Losses(a) => a.run(&cfg),
        Command::EstimatePose(a) => a.run(&cfg),
        Command::Metrics(a) => a.run(&cfg),
        Command::Bench(a) => a.run(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
