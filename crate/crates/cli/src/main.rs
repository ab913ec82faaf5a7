use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use updsim::pipeline::{run, validate, RunConfig, Stage, StageStatus};
use updsim::Error;

/// Ultrafast power Doppler simulator.
#[derive(Debug, Parser)]
#[command(name = "updsim", version)]
struct Cli {
    /// JSON run configuration; the built-in demo is used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the run seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the working-memory budget.
    #[arg(long, global = true)]
    memory_budget_bytes: Option<u64>,
    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the vessel skeleton and intensity volume.
    GenVessel,
    /// Derive (or import) the flow field.
    GenFlow,
    /// Trace blood particles.
    Trace,
    /// Generate and classify the tissue cloud.
    GenTissue,
    /// Synthesize RF channel data.
    SimRf,
    /// Delay-and-sum reconstruction.
    Beamform,
    /// Clutter filtering, power Doppler and rendering.
    Post,
    /// Ground truth and image metrics.
    Metrics,
    /// Run the pipeline.
    Run {
        /// Comma-separated stage list, e.g. `beamform,post`.
        #[arg(long)]
        stages: Option<String>,
    },
    /// Check the configuration without running anything.
    Validate,
    /// Print the resolved configuration as JSON.
    ShowConfig,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_STAGE: u8 = 3;

fn load_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::demo("demo_out"),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(b) = cli.memory_budget_bytes {
        cfg.memory_budget_bytes = b;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } => EXIT_CONFIG,
        _ => EXIT_STAGE,
    }
}

fn run_stages(cfg: &RunConfig, only: Option<Vec<Stage>>) -> Result<(), Error> {
    let report = run(cfg, only.as_deref())?;
    for (stage, status) in &report.stages {
        let label = match status {
            StageStatus::Ran => "ran",
            StageStatus::Cached => "cached",
            StageStatus::NotSelected => continue,
        };
        let secs = report
            .manifests
            .iter()
            .find(|m| m.stage == stage.name())
            .map_or(0.0, |m| m.duration_s);
        println!("{:<10} {:<7} {:>9.2} s", stage.name(), label, secs);
    }
    println!("outputs in {}", cfg.output_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cfg = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let single = |s: Stage| Some(vec![s]);
    let result = match &cli.command {
        Command::Validate => {
            let report = validate(&cfg);
            println!("{report}");
            return if report.is_ok() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_CONFIG)
            };
        }
        Command::ShowConfig => {
            println!("{}", cfg.to_json());
            return ExitCode::SUCCESS;
        }
        Command::Run { stages } => match stages.as_deref().map(Stage::parse_list).transpose() {
            Ok(only) => run_stages(&cfg, only),
            Err(e) => Err(e),
        },
        Command::GenVessel => run_stages(&cfg, single(Stage::Vessel)),
        Command::GenFlow => run_stages(&cfg, single(Stage::Flow)),
        Command::Trace => run_stages(&cfg, single(Stage::Particles)),
        Command::GenTissue => run_stages(&cfg, single(Stage::Tissue)),
        Command::SimRf => run_stages(&cfg, single(Stage::Rf)),
        Command::Beamform => run_stages(&cfg, single(Stage::Beamform)),
        Command::Post => run_stages(&cfg, single(Stage::Post)),
        Command::Metrics => run_stages(&cfg, single(Stage::Metrics)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
