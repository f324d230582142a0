use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod fixture;
mod pipeline;

#[derive(Parser)]
#[command(name = "frameprobe", version, about = "Frame-semantic knowledge probing toolkit")]
struct Cli {
    /// Log progress to standard error (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lexicon utilities.
    #[command(subcommand)]
    Lexicon(LexiconCmd),
    /// Parse tokenized sentences into frame annotations.
    Parse(ParseArgs),
    /// Train the parser heads on gold annotations.
    Train(TrainArgs),
    /// Frame graph utilities.
    #[command(subcommand)]
    Graph(GraphCmd),
    /// Probe generation.
    #[command(subcommand)]
    Probes(ProbesCmd),
    /// Model evaluation.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Run the stages listed in a pipeline config file.
    Pipeline(PipelineArgs),
    /// Write the bundled travel-dialogue fixture (lexicon, gold
    /// annotations, sentences, pipeline config) into a directory.
    Fixture(FixtureArgs),
}

#[derive(Subcommand)]
enum LexiconCmd {
    /// Check a lexicon file. Prints `RULE<TAB>ID<TAB>message` per violation.
    Validate { path: PathBuf },
    /// Print frame, FE, LU and relation counts.
    Stats { path: PathBuf },
}

#[derive(Args)]
pub struct ParseArgs {
    #[arg(long)]
    pub lexicon: PathBuf,
    #[arg(long)]
    pub heads: PathBuf,
    /// One sentence per line: `DOC_ID<TAB>tokens` or just `tokens`,
    /// tokens separated by spaces.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub lexicon: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long, default_value = "hash")]
    pub encoder: String,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, default_value_t = frameprobe::parser::DEFAULT_FE_HIDDEN)]
    pub fe_hidden: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Subcommand)]
enum GraphCmd {
    /// Build one graph per document from an annotation file.
    Build(GraphBuildArgs),
}

#[derive(Args)]
pub struct GraphBuildArgs {
    #[arg(long)]
    pub lexicon: PathBuf,
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write a Graphviz rendering.
    #[arg(long)]
    pub dot: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ProbesCmd {
    /// Generate probes from a graph file.
    Gen(ProbesGenArgs),
}

#[derive(Args)]
pub struct ProbesGenArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub lexicon: PathBuf,
    /// Comma-separated probe types.
    #[arg(long, default_value = "IFES,EFES,SFES,IFESR,EFESR,FFR")]
    pub types: String,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON object mapping probe types to prompt templates.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also export train-split probes as surface-QA records.
    #[arg(long)]
    pub augment_out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum EvalCmd {
    /// Evaluate a model adapter on probes or surface-QA items.
    Run(EvalRunArgs),
    /// Random-guess baseline.
    Random(EvalRandomArgs),
    /// Compare a surface-QA report (SKP) with a probe report (HKP).
    Compare(EvalCompareArgs),
}

#[derive(Args)]
#[group(id = "items", required = true, multiple = false, args = ["probes", "dataset"])]
pub struct ItemSource {
    /// Probe file written by `probes gen`.
    #[arg(long)]
    pub probes: Option<PathBuf>,
    /// Surface-QA file.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalRunArgs {
    #[command(flatten)]
    pub items: ItemSource,
    /// Adapter name: http, constant or random.
    #[arg(long)]
    pub adapter: String,
    #[arg(long)]
    pub base_url: Option<String>,
    #[arg(long, default_value = "")]
    pub model: String,
    /// Environment variable holding the API token.
    #[arg(long)]
    pub token_env: Option<String>,
    #[arg(long)]
    pub rate_limit: Option<u32>,
    /// Reply text of the constant adapter.
    #[arg(long)]
    pub reply: Option<String>,
    #[arg(long, default_value_t = 4)]
    pub concurrency: usize,
    #[arg(long, default_value_t = 2)]
    pub retries: u32,
    #[arg(long, default_value_t = 60_000)]
    pub timeout_ms: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Evaluate on N randomly sampled items per repeat.
    #[arg(long)]
    pub sample: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Write per-item replies as JSON lines.
    #[arg(long)]
    pub replies: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalRandomArgs {
    #[command(flatten)]
    pub items: ItemSource,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    /// Defaults to standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalCompareArgs {
    #[arg(long)]
    pub skp: PathBuf,
    #[arg(long)]
    pub hkp: PathBuf,
    /// Compare reports of different models.
    #[arg(long)]
    pub force: bool,
    /// Defaults to standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Radar chart data: probe type to HKP accuracy, null when absent.
    #[arg(long)]
    pub radar: Option<PathBuf>,
}

#[derive(Args)]
pub struct PipelineArgs {
    /// TOML pipeline config.
    pub config: PathBuf,
}

#[derive(Args)]
pub struct FixtureArgs {
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let result = match cli.command {
        Command::Lexicon(LexiconCmd::Validate { path }) => commands::lexicon_validate(&path),
        Command::Lexicon(LexiconCmd::Stats { path }) => commands::lexicon_stats(&path),
        Command::Parse(a) => commands::parse(&a),
        Command::Train(a) => commands::train(&a),
        Command::Graph(GraphCmd::Build(a)) => commands::graph_build(&a),
        Command::Probes(ProbesCmd::Gen(a)) => commands::probes_gen(&a),
        Command::Eval(EvalCmd::Run(a)) => commands::eval_run(&a),
        Command::Eval(EvalCmd::Random(a)) => commands::eval_random(&a),
        Command::Eval(EvalCmd::Compare(a)) => commands::eval_compare(&a),
        Command::Pipeline(a) => pipeline::run(&a.config),
        Command::Fixture(a) => fixture::write(&a.out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
