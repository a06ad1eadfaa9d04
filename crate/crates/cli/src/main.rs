//! `echodiet` command-line tool. Every stage reads and writes files, so a
//! pipeline can be resumed from any intermediate artifact.

mod commands;
mod config;
mod manifest;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use manifest::FileEntry;

#[derive(Debug, Parser)]
#[command(name = "echodiet", version, about = "Ultrasonic dietary-activity sensing pipeline")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Seed for simulation, splits, augmentation and weight initialization.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Run everything on one thread, in a fixed order.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// Print a single JSON object on stdout instead of text.
    #[arg(long, global = true)]
    pub json: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a scene and activity script to raw audio plus per-second truth.
    Simulate(commands::SimulateArgs),
    /// Compute echo and differential echo profiles from raw audio.
    Process(commands::ProcessArgs),
    /// Cut differential profiles into labeled windows.
    Dataset(commands::DatasetArgs),
    /// Train a classifier with one group held out.
    Train(commands::TrainArgs),
    /// Evaluate a checkpoint: predictions, metrics, timeline and episode report.
    Eval(commands::EvalArgs),
    /// Episode analytics from predicted and true per-second timelines.
    Report(commands::ReportArgs),
    /// Cohen's kappa between two per-second timelines.
    Kappa(commands::KappaArgs),
    /// Leave-one-participant-out run on synthetic participants.
    Benchmark(commands::BenchmarkArgs),
    /// Benchmark over a grid of window lengths and sensing ranges.
    Sweep(commands::SweepArgs),
    /// Heatmap of an echo profile or a confusion matrix (PNG + CSV).
    Plot(commands::PlotArgs),
}

#[derive(Debug)]
pub enum CliError {
    Core(echodiet::Error),
    Usage(String),
}

impl From<echodiet::Error> for CliError {
    fn from(e: echodiet::Error) -> Self {
        CliError::Core(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => e.fmt(f),
            CliError::Usage(m) => write!(f, "usage: {m}"),
        }
    }
}

impl CliError {
    /// 2: usage, configuration or unreadable input; 3: data that does not fit
    /// the requested operation; 4: training diverged.
    fn exit_code(&self) -> u8 {
        use echodiet::Error::*;
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) => match e {
                Config(_) | Format { .. } | Io(_) | Json(_) => 2,
                Argument(_) | Coverage(_) | Scene(_) => 3,
                Training(_) => 4,
            },
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// What a command hands back for printing.
#[derive(Debug, Serialize)]
pub struct Summary {
    pub command: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub outputs: Vec<FileEntry>,
    pub result: serde_json::Value,
    #[serde(skip)]
    pub message: String,
}

fn run(cli: &Cli) -> CliResult<Summary> {
    let g = &cli.global;
    let threads = if g.deterministic { Some(1) } else { g.threads };
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot configure threads: {e}")))?;
    }
    match &cli.command {
        Command::Simulate(a) => commands::simulate(a, g),
        Command::Process(a) => commands::process(a, g),
        Command::Dataset(a) => commands::dataset(a, g),
        Command::Train(a) => commands::train(a, g),
        Command::Eval(a) => commands::eval(a, g),
        Command::Report(a) => commands::report(a, g),
        Command::Kappa(a) => commands::kappa(a, g),
        Command::Benchmark(a) => commands::benchmark(a, g),
        Command::Sweep(a) => commands::sweep(a, g),
        Command::Plot(a) => commands::plot(a, g),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            if cli.global.json {
                println!("{}", serde_json::to_string(&summary).expect("summary serializes"));
            } else {
                println!("{}", summary.message);
                if let Some(dir) = &summary.out_dir {
                    println!("wrote {} file(s) to {}", summary.outputs.len() + 1, dir.display());
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let code = e.exit_code();
            eprintln!("error: {e}");
            if cli.global.json {
                println!("{}", serde_json::json!({ "error": e.to_string(), "exit_code": code }));
            }
            ExitCode::from(code)
        }
    }
}
