use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "marnn",
    version,
    about = "Train and inspect memory-augmented RNNs on formal languages"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate train/test corpora and their length/depth histograms.
    Generate(ExperimentArgs),
    /// Train a model variant over several seeds and write checkpoints and reports.
    Train(TrainArgs),
    /// Sequence-level accuracy of a checkpoint on a dataset file.
    Eval(EvalArgs),
    /// Per-step memory actions and contents for one input string.
    Trace(TraceArgs),
    /// Combine report files into one aligned table.
    Report(ReportArgs),
}

/// Settings shared by `generate` and `train`. Flags override the config file,
/// which overrides the task preset.
#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// TOML file with experiment settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Task preset: dyck2, dyck3, dyck6, hom_palindrome, palindrome, reversal.
    #[arg(long)]
    pub task: Option<String>,
    /// Model variant, e.g. stack_rnn+softmax or vanilla_lstm.
    #[arg(long)]
    pub model: Option<String>,
    /// Seeds as a list and/or ranges: `0,1,2`, `0..10`.
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long = "mem-dim")]
    pub mem_dim: Option<usize>,
    #[arg(long = "mem-slots")]
    pub mem_slots: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long = "train-count")]
    pub train_count: Option<usize>,
    #[arg(long = "test-count")]
    pub test_count: Option<usize>,
    #[arg(long = "data-seed")]
    pub data_seed: Option<u64>,
    /// Disable gradient-norm clipping.
    #[arg(long = "no-clip")]
    pub no_clip: bool,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// Parallel seed workers.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Existing training set; generated from the settings when omitted.
    #[arg(long = "train-data", requires = "test_data")]
    pub train_data: Option<PathBuf>,
    #[arg(long = "test-data", requires = "train_data")]
    pub test_data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Also write the result as JSON to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Input string, e.g. `([])`.
    #[arg(long)]
    pub input: String,
    /// Memory rows per snapshot.
    #[arg(long, default_value_t = 8, conflicts_with = "full")]
    pub rows: usize,
    /// Export every memory row.
    #[arg(long)]
    pub full: bool,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// `report.json` files or training output directories.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Write the combined CSV and table into this directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `0,2,5..8` into `[0, 2, 5, 6, 7]`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let mut seeds = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let num = |x: &str| {
            x.trim()
                .parse::<u64>()
                .map_err(|_| format!("bad seed {x:?} in {s:?}"))
        };
        match part.split_once("..") {
            Some((a, b)) => seeds.extend(num(a)?..num(b)?),
            None => seeds.push(num(part)?),
        }
    }
    if seeds.is_empty() {
        return Err(format!("no seeds in {s:?}"));
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(d) = seeds.iter().find(|s| !seen.insert(**s)) {
        return Err(format!("seed {d} listed twice"));
    }
    Ok(seeds)
}
