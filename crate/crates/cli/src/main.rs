mod commands;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// CoinJoin detection, entity clustering and mixing metrics over an NDJSON
/// transaction feed.
#[derive(Debug, Parser)]
#[command(name = "mixtrace", version, about)]
struct Cli {
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and index a feed, report its shape.
    IngestCheck(IngestArgs),
    /// Generate a synthetic chain with ground-truth labels.
    Synth(SynthArgs),
    /// Run the Wasabi heuristics and the Whirlpool scanner.
    Detect(DetectArgs),
    /// Write the eight classifier features per transaction.
    Features(FeaturesArgs),
    /// Train the random forest on a labelled feed.
    Train(TrainArgs),
    /// Compare the forest against WCDH on one held-out split.
    Eval(EvalArgs),
    /// Cluster addresses into entities and assign flow levels.
    Cluster(ClusterArgs),
    /// Full pipeline: detection, clustering and every metric table.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct FeedArgs {
    /// NDJSON feed, optionally gzip-compressed. Repeat to concatenate feeds
    /// in the given order.
    #[arg(long = "feed", required = true, value_name = "PATH")]
    pub feeds: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Output directory, created if missing.
    #[arg(long = "out", value_name = "DIR")]
    pub dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct DetectorArgs {
    /// Known coordinator addresses, one per line.
    #[arg(long, value_name = "PATH")]
    pub coordinators: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub min_equal_outputs: usize,
    /// Centre of the accepted equal-output band, in BTC.
    #[arg(long, default_value = "0.1")]
    pub mode_center: String,
    /// Half-width of the band, in BTC, inclusive.
    #[arg(long, default_value = "0.02")]
    pub mode_tolerance: String,
    #[arg(long, default_value_t = 2)]
    pub min_unique_values: usize,
    /// Premix tolerance above the pool denomination, in BTC, for every pool.
    #[arg(long, default_value = "0.0011")]
    pub premix_tolerance: String,
    /// Pinned genesis mixes for one pool: `POOL=PATH`, one txid per line.
    /// Pools without a pin use the genesis predicate.
    #[arg(long = "genesis", value_name = "POOL=PATH")]
    pub genesis: Vec<String>,
    /// Forest model JSON; its Wasabi labels are added to the heuristics.
    #[arg(long, value_name = "PATH")]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    /// Attribution tags CSV (`target_type,target,label,category`).
    #[arg(long, value_name = "PATH")]
    pub tags: Option<PathBuf>,
    /// Entities with more counterparties than this are not expanded.
    #[arg(long, default_value_t = 100)]
    pub threshold: usize,
}

#[derive(Debug, Args)]
pub struct ForestArgs {
    #[arg(long, default_value_t = 500)]
    pub trees: usize,
    #[arg(long, default_value_t = 2)]
    pub mtry: usize,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub min_leaf: usize,
    /// Sample each class down to at most this many rows.
    #[arg(long)]
    pub per_class: Option<usize>,
    /// Seeds sampling, the split and tree growth.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub feed: FeedArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Default,
    Empty,
    Wcdh,
    Classifier,
    Whirlpool,
    Star,
    Collector,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub out: OutArgs,
    /// Scenario plan JSON; missing fields take the default plan's values.
    #[arg(long, value_name = "PATH", conflicts_with = "preset")]
    pub plan: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Preset::Default)]
    pub preset: Preset,
    /// Overrides the plan's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fan size for the star and collector presets.
    #[arg(long, default_value_t = 20)]
    pub fan: usize,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub feed: FeedArgs,
    #[command(flatten)]
    pub out: OutArgs,
    #[command(flatten)]
    pub detector: DetectorArgs,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[command(flatten)]
    pub feed: FeedArgs,
    #[command(flatten)]
    pub out: OutArgs,
    /// Ground-truth labels (`txid,label,pool`); restricts rows to labelled
    /// transactions and adds a label column.
    #[arg(long, value_name = "PATH")]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub feed: FeedArgs,
    #[arg(long, value_name = "PATH")]
    pub labels: PathBuf,
    /// Where to write the model JSON.
    #[arg(long, value_name = "PATH")]
    pub model_out: PathBuf,
    #[command(flatten)]
    pub forest: ForestArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub feed: FeedArgs,
    #[command(flatten)]
    pub out: OutArgs,
    #[arg(long, value_name = "PATH")]
    pub labels: PathBuf,
    #[arg(long, default_value_t = 0.7)]
    pub train_fraction: f64,
    #[command(flatten)]
    pub forest: ForestArgs,
    #[command(flatten)]
    pub detector: DetectorArgs,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub feed: FeedArgs,
    #[command(flatten)]
    pub out: OutArgs,
    #[command(flatten)]
    pub detector: DetectorArgs,
    #[command(flatten)]
    pub graph: GraphArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub feed: FeedArgs,
    #[command(flatten)]
    pub out: OutArgs,
    #[command(flatten)]
    pub detector: DetectorArgs,
    #[command(flatten)]
    pub graph: GraphArgs,
    /// Daily USD rates CSV (`date,rate`).
    #[arg(long, value_name = "PATH")]
    pub rates: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { commands::EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new()
        .filter_level(match cli.verbose {
            0 => log::LevelFilter::Warn,
            1 => log::LevelFilter::Info,
            _ => log::LevelFilter::Debug,
        })
        .format_timestamp(None)
        .init();

    let result = match cli.command {
        Command::IngestCheck(a) => commands::ingest_check(a),
        Command::Synth(a) => commands::synth(a),
        Command::Detect(a) => commands::detect(a),
        Command::Features(a) => commands::features(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Cluster(a) => commands::cluster(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(summary) => {
            let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
            // A closed stdout (e.g. piped into `head`) is not a failure.
            let _ = writeln!(std::io::stdout(), "{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", render(&e.inner));
            ExitCode::from(e.code)
        }
    }
}

/// The error chain joined by `: `, skipping causes already spelled out by
/// the message above them.
fn render(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !out.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}
