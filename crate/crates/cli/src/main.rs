mod commands;
mod output;
mod settings;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cyclelife_core::datapipe::Task;
use cyclelife_core::trainer::Part;

use settings::{Settings, UsageError};

/// Battery cycle-life pipeline: synthesize or ingest data, rank attributes,
/// train and evaluate the classifier and predictor, and plot results.
#[derive(Parser, Debug)]
#[command(name = "cyclelife", version)]
struct Cli {
    /// JSON document of default settings (keys are flag names with `_`).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic corpus.
    Synth(SynthArgs),
    /// Rank the 24 attributes by Δ(cycle 100, cycle 10) against cycle life.
    Rank(RankArgs),
    /// Train the classifier or the predictor.
    Train(TrainArgs),
    /// Evaluate a trained run on one split.
    Eval(EvalArgs),
    /// Render a CSV as an SVG chart.
    Plot(PlotArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Number of batteries.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Relative noise level.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Samples per cycle and series.
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    pub points: Option<u64>,
    /// Cycles stored per battery.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub cycles: Option<u64>,
}

#[derive(Args, Debug)]
pub struct RankArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Ranking CSV; scatter CSVs go next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Skip rolling-median outlier removal.
    #[arg(long)]
    pub no_outliers: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum TaskArg {
    Classify,
    Predict,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Task {
        match t {
            TaskArg::Classify => Task::Classify,
            TaskArg::Predict => Task::Predict,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub split_seed: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub epochs: Option<u64>,
    /// Attention after the classifier's LSTM.
    #[arg(long, value_enum)]
    pub attention: Option<Switch>,
    /// Run directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Parameter initialisation and dropout seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Minibatch size (default: whole training split).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub batch_size: Option<u64>,
    /// Gradient-norm clip; 0 disables clipping.
    #[arg(long)]
    pub clip_norm: Option<f64>,
    /// Stop after this many epochs without validation improvement.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub early_stop: Option<u64>,
    /// Use the k best-ranked attributes instead of the default 15.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..=24))]
    pub top_k: Option<u64>,
    /// Predictor: learn log cycle life.
    #[arg(long)]
    pub log_target: bool,
    #[arg(long)]
    pub no_outliers: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Part {
    fn from(s: SplitArg) -> Part {
        match s {
            SplitArg::Train => Part::Train,
            SplitArg::Val => Part::Val,
            SplitArg::Test => Part::Test,
        }
    }
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Run directory written by `train`.
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long, value_enum)]
    pub split: Option<SplitArg>,
    /// Dataset directory (default: the one recorded at training time).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory (default: the run directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PlotKind {
    Scatter,
    Line,
}

#[derive(Args, Debug)]
pub struct PlotArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub kind: Option<PlotKind>,
    /// X column (default: first column).
    #[arg(long)]
    pub x: Option<String>,
    /// Comma-separated Y columns (default: the second column for scatter,
    /// every other numeric column for line).
    #[arg(long)]
    pub y: Option<String>,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let settings = Settings::load(cli.config.as_deref())?;
    match cli.command {
        Command::Synth(a) => commands::synth::run(&settings, a),
        Command::Rank(a) => commands::rank::run(&settings, a),
        Command::Train(a) => commands::train::run(&settings, a),
        Command::Eval(a) => commands::eval::run(&settings, a),
        Command::Plot(a) => commands::plot::run(&settings, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
