use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod error;
mod output;
mod plot;

#[derive(Parser, Debug)]
#[command(name = "ptsne", version, about = "Parallel t-SNE with chunk&mix")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Embed a dataset and write coordinates, costs, kNP and a scatter plot.
    Run(RunArgs),
    /// Continue an embedding at a lower perplexity on the full data.
    Refine(RefineArgs),
    /// Evaluate an embedding against its dataset.
    Eval(EvalArgs),
    /// Write a synthetic dataset as CSV.
    Generate(GenerateArgs),
    /// Render an embedding as SVG.
    Plot(PlotArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ColorBy {
    None,
    PairwiseDistanceRank,
    LabelColumn,
}

#[derive(Args, Debug, Clone)]
pub struct PlotOptions {
    /// Point coloring.
    #[arg(long, value_enum, default_value = "none")]
    pub color_by: ColorBy,
    /// Reference point for pairwise-distance-rank coloring.
    #[arg(long, default_value_t = 0)]
    pub ref_point: usize,
    /// Circle radius in pixels.
    #[arg(long, default_value_t = 2.0)]
    pub point_size: f64,
}

#[derive(Args, Debug)]
pub struct InputArgs {
    /// Dataset as CSV with a header row, or MatrixMarket (.mtx).
    #[arg(long)]
    pub input: PathBuf,
    /// Non-numeric column holding point labels.
    #[arg(long)]
    pub label_column: Option<String>,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value = ".")]
    pub outdir: PathBuf,
    #[arg(long, default_value_t = 30.0)]
    pub ppx: f64,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    #[arg(long, default_value_t = 1)]
    pub layers: usize,
    #[arg(long, default_value_t = 0.5)]
    pub theta: f64,
    /// Defaults to ceil(4 ln n).
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Iterations per epoch; defaults to ceil(4 ln nu).
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub no_momentum: bool,
    /// Neighbor index file, loaded when present and written otherwise.
    #[arg(long)]
    pub cache_index: Option<PathBuf>,
    /// Write per-iteration diagnostics of this thread (0-based) to debug_thread.csv.
    #[arg(long)]
    pub debug_thread: Option<usize>,
    #[command(flatten)]
    pub plot: PlotOptions,
}

#[derive(Args, Debug)]
pub struct RefineArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// embedding.csv of a previous run; its layer 1 is the starting point.
    #[arg(long)]
    pub embedding: PathBuf,
    #[arg(long, default_value = ".")]
    pub outdir: PathBuf,
    /// Low perplexity for the refinement.
    #[arg(long)]
    pub ppx: f64,
    /// Number of extra iterations.
    #[arg(long, default_value_t = 250)]
    pub iters: usize,
    #[arg(long, default_value_t = 0.5)]
    pub theta: f64,
    #[command(flatten)]
    pub plot: PlotOptions,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub embedding: PathBuf,
    #[arg(long, default_value = ".")]
    pub outdir: PathBuf,
    /// Evaluate every layer instead of layer 1.
    #[arg(long)]
    pub all_layers: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GenerateKind {
    Sierpinski,
    Sierpinski3d,
    Gaussians,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(value_enum)]
    pub kind: GenerateKind,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub depth: u32,
    #[arg(long, default_value_t = 2)]
    pub levels: u32,
    #[arg(long, default_value_t = 2)]
    pub clusters: usize,
    /// Points per leaf cluster.
    #[arg(long, default_value_t = 100)]
    pub points: usize,
    #[arg(long, default_value_t = 10.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 10)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Largest number of points that may be generated.
    #[arg(long, default_value_t = ptsne::synth::DEFAULT_CAP)]
    pub cap: usize,
}

#[derive(Args, Debug)]
pub struct PlotArgs {
    #[arg(long)]
    pub embedding: PathBuf,
    /// Dataset, needed for distance-rank or label coloring.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub label_column: Option<String>,
    #[arg(long, default_value = "scatter.svg")]
    pub output: PathBuf,
    /// 1-based layer to draw.
    #[arg(long, default_value_t = 1)]
    pub layer: usize,
    #[command(flatten)]
    pub plot: PlotOptions,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => commands::run(a),
        Command::Refine(a) => commands::refine(a),
        Command::Eval(a) => commands::eval(a),
        Command::Generate(a) => commands::generate(a),
        Command::Plot(a) => commands::plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
