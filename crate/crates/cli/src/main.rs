mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "hdsg", version, about = "Hierarchical dynamic scene graph pipelines")]
pub struct Cli {
    /// TOML or JSON run configuration.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for simulation noise.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Print the resolved configuration as JSON and exit.
    #[arg(long, global = true)]
    pub print_config: bool,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the global static graph from a posed scan.
    BuildStatic(BuildStaticArgs),
    /// Cut a camera stream into windows and build one subgraph per tick.
    RunDynamic(RunDynamicArgs),
    /// Fuse per-camera subgraphs onto the static graph, one snapshot per tick.
    Fuse(FuseArgs),
    /// Serve snapshots over HTTP.
    ServeStore(ServeStoreArgs),
    /// Prompt the planner with the latest snapshot and execute its plan.
    Agent(AgentArgs),
    /// Generate perception streams and ground truth from a scenario.
    Simulate(SimulateArgs),
    /// Score the pipeline against simulated ground truth.
    Eval(EvalArgs),
    /// Run simulation, graph building and the agent in one loop.
    Demo(DemoArgs),
}

#[derive(Debug, Args)]
pub struct BuildStaticArgs {
    /// FrameObservation JSONL with 3D boxes.
    #[arg(long, value_name = "FILE")]
    pub frames: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub regions: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub doorways: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Volume threshold in cubic meters.
    #[arg(long)]
    pub vthr: Option<f64>,
    /// Static class list, one per line or comma separated.
    #[arg(long, value_name = "FILE")]
    pub classes: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunDynamicArgs {
    /// Stream JSONL of frame and relation lines.
    #[arg(long, value_name = "FILE")]
    pub stream: PathBuf,
    /// Window length in seconds.
    #[arg(long)]
    pub window: Option<f64>,
    #[arg(long)]
    pub hz: Option<f64>,
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Camera id; defaults to the id in the stream.
    #[arg(long)]
    pub camera: Option<String>,
    /// Number of ticks; defaults to every window the stream covers.
    #[arg(long)]
    pub ticks: Option<u64>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    #[arg(long = "static", value_name = "FILE")]
    pub static_graph: PathBuf,
    /// Directory of `dyn.<camera>.<tick>.json` files.
    #[arg(long, value_name = "DIR")]
    pub dynamic: PathBuf,
    #[arg(long, value_parser = ["spatial", "semantic"])]
    pub mode: Option<String>,
    #[arg(long)]
    pub bthr: Option<f64>,
    /// JSON object mapping camera id to region id.
    #[arg(long, value_name = "FILE")]
    pub camera_region: Option<PathBuf>,
    /// Output directory, or a path containing `<tick>` or `{tick}`.
    #[arg(long)]
    pub out: String,
}

#[derive(Debug, Args)]
pub struct ServeStoreArgs {
    #[arg(long = "static", value_name = "FILE")]
    pub static_graph: PathBuf,
    /// Directory of `snap.<tick>.json` files to commit in tick order.
    #[arg(long, value_name = "DIR")]
    pub snapshots: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8000")]
    pub addr: String,
    #[arg(long)]
    pub history: Option<usize>,
    /// Stop after this many seconds instead of serving until killed.
    #[arg(long, value_name = "SECONDS")]
    pub for_seconds: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AgentArgs {
    /// Store service URL or a directory of snapshot files.
    #[arg(long)]
    pub store: String,
    /// Skill templates, one per line.
    #[arg(long, value_name = "FILE")]
    pub skills: Option<PathBuf>,
    #[arg(long, value_name = "URL", conflicts_with = "mock")]
    pub llm_endpoint: Option<String>,
    /// Scripted replies keyed by tick.
    #[arg(long, value_name = "FILE")]
    pub mock: Option<PathBuf>,
    /// Execution log (JSONL); stdout when omitted.
    #[arg(long, value_name = "FILE")]
    pub log: Option<PathBuf>,
    /// Region the robot starts in.
    #[arg(long)]
    pub robot_start: Option<String>,
    /// Also write the rendered prompt here.
    #[arg(long, value_name = "FILE")]
    pub prompt_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_name = "FILE")]
    pub scenario: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Window used for the per-tick ground truth.
    #[arg(long)]
    pub window: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_name = "FILE")]
    pub scenario: PathBuf,
    /// JSON report.
    #[arg(long, value_name = "FILE")]
    pub report: PathBuf,
    /// Also write per-interval metrics as CSV.
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,
    /// Print the per-tick graph size table.
    #[arg(long)]
    pub counts: bool,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(long, value_name = "FILE")]
    pub scenario: PathBuf,
    /// Mock replies; defaults to `<scenario stem>.mock.json` next to it.
    #[arg(long, value_name = "FILE")]
    pub mock: Option<PathBuf>,
    /// Event log (JSONL).
    #[arg(long, value_name = "FILE")]
    pub log: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result =
        RunConfig::resolve(cli.config.as_deref(), |k| std::env::var(k).ok()).and_then(|cfg| commands::run(&cli, cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
