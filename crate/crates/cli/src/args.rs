use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use ljp_core::report::ReportFormat;
use ljp_core::{Language, Split};

#[derive(Debug, Parser)]
#[command(name = "ljp", version, about = "Zero-shot legal judgment prediction harness")]
pub struct Cli {
    /// Experiment config (TOML); required by run, sweep and swap.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// More logging on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a corpus and print its label distribution per split.
    Ingest(IngestArgs),
    /// Print the exact prompt for one document.
    Render(RenderArgs),
    /// Run an experiment from --config.
    Run(RunArgs),
    /// Print the expected baseline rows for a split.
    Baselines(BaselinesArgs),
    /// Run the experiment once per output length.
    Sweep(SweepArgs),
    /// Run the experiment with original and exchanged answer options.
    Swap(SwapArgs),
    /// Re-render a stored result.
    Report(ReportArgs),
    /// One prompt, one completion, one parse.
    Try(TryArgs),
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    s.parse().map_err(|e: ljp_core::Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Only this split; all splits by default.
    #[arg(long)]
    pub split: Option<Split>,
    #[arg(long)]
    pub language: Option<Language>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub doc: String,
    /// Split to search; all splits by default.
    #[arg(long)]
    pub split: Option<Split>,
    /// Template language; the document's language by default.
    #[arg(long)]
    pub language: Option<Language>,
    #[arg(long, default_value_t = ljp_core::template::DEFAULT_BUDGET)]
    pub budget: usize,
    /// Template file instead of the builtin one.
    #[arg(long)]
    pub template: Option<PathBuf>,
    /// Exchange the answer options.
    #[arg(long)]
    pub swap: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, default_value = "table", value_parser = parse_format)]
    pub format: ReportFormat,
}

#[derive(Debug, Args)]
pub struct BaselinesArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: Split,
    #[arg(long)]
    pub language: Option<Language>,
    #[arg(long, default_value = "table", value_parser = parse_format)]
    pub format: ReportFormat,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Comma-separated max_new_tokens values.
    #[arg(long, value_delimiter = ',', default_value = "1,5,10,20,50")]
    pub lengths: Vec<u32>,
}

#[derive(Debug, Args)]
pub struct SwapArgs {}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// result.json or the run directory holding it.
    #[arg(long)]
    pub result: PathBuf,
    #[arg(long, default_value = "table", value_parser = parse_format)]
    pub format: ReportFormat,
}

#[derive(Debug, Args)]
pub struct TryArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub doc: String,
    #[arg(long)]
    pub split: Option<Split>,
    #[arg(long)]
    pub language: Option<Language>,
    /// Replaces the template question.
    #[arg(long, conflicts_with = "no_question")]
    pub question: Option<String>,
    /// Send the bare document with no question or options.
    #[arg(long)]
    pub no_question: bool,
    /// Option texts as "positive,negative".
    #[arg(long)]
    pub options: Option<String>,
    /// Inference server base URL.
    #[arg(long, env = "LJP_ENDPOINT")]
    pub backend: Option<String>,
    /// Canned completion instead of a server; wins over --backend.
    #[arg(long)]
    pub mock: Option<String>,
    #[arg(long, default_value = "EleutherAI/gpt-j-6b")]
    pub model: String,
    #[arg(long, default_value_t = 50)]
    pub max_new_tokens: u32,
    #[arg(long, default_value_t = ljp_core::template::DEFAULT_BUDGET)]
    pub budget: usize,
    #[arg(long, default_value_t = 120)]
    pub timeout_secs: u64,
}
