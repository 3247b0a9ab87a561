//! `debias`: mine templates, estimate a bias subspace, remove it from embeddings,
//! and score association tests before and after.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use debias_core::harness::AblationMode;
use debias_core::CenteringMode;

#[derive(Debug, Parser)]
#[command(name = "debias", version, about, args_override_self = true)]
pub struct Cli {
    /// `key = value` file; flags on the command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads (default: logical cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Seed for every random choice in the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct EncoderArgs {
    /// `word_avg:<vectors>`, `hash:<dim>` or `sidecar:<command line>`.
    #[arg(long)]
    pub encoder: String,
    /// JSONL embedding cache, created if missing.
    #[arg(long, value_name = "FILE")]
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Tuple-set file; defaults to the bundled gender pairs.
    #[arg(long, value_name = "FILE")]
    pub lexicon: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    #[arg(long, default_value_t = CenteringMode::Tuple)]
    pub centering: CenteringMode,
    /// Scale each centered row to unit length before PCA.
    #[arg(long)]
    pub pre_normalize: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mine sentence templates from corpora into a template store.
    Templates {
        #[arg(long, value_name = "FILE")]
        lexicon: Option<PathBuf>,
        /// `[domain=]path`, one sentence per line; the domain defaults to the file stem.
        #[arg(long, required = true, action = clap::ArgAction::Append)]
        corpus: Vec<String>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        #[arg(long)]
        keep_mixed: bool,
        #[arg(long)]
        max_fraction: Option<f64>,
        #[arg(long)]
        max_templates: Option<usize>,
    },
    /// Estimate a bias subspace from a template store.
    Estimate {
        #[arg(long, value_name = "FILE")]
        templates: PathBuf,
        #[command(flatten)]
        encoder: EncoderArgs,
        #[command(flatten)]
        estimate: EstimateArgs,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Remove a subspace from JSONL embeddings.
    Debias {
        #[arg(long, value_name = "FILE")]
        subspace: PathBuf,
        #[arg(long, value_name = "FILE")]
        input: PathBuf,
        #[arg(long, value_name = "FILE")]
        output: PathBuf,
        /// Apply the subspace to embeddings from a different encoder.
        #[arg(long)]
        force: bool,
    },
    /// Score association tests, optionally before and after debiasing.
    Eval {
        /// Test spec JSON; defaults to the bundled gender and religion tests.
        #[arg(long, value_name = "FILE", action = clap::ArgAction::Append)]
        tests: Vec<PathBuf>,
        #[command(flatten)]
        encoder: EncoderArgs,
        #[arg(long, value_name = "FILE")]
        subspace: Option<PathBuf>,
        #[arg(long)]
        force: bool,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Template quantity or domain ablation.
    Ablate {
        #[arg(long, default_value_t = AblationMode::Quantity)]
        mode: AblationMode,
        #[arg(long, value_name = "FILE")]
        templates: PathBuf,
        #[command(flatten)]
        encoder: EncoderArgs,
        #[command(flatten)]
        estimate: EstimateArgs,
        /// Binary test spec JSON; defaults to the bundled gender tests.
        #[arg(long, value_name = "FILE", action = clap::ArgAction::Append)]
        tests: Vec<PathBuf>,
        /// Partitions for the quantity ablation.
        #[arg(long, default_value_t = 5)]
        parts: usize,
        /// Templates per run for the domain ablation.
        #[arg(long, default_value_t = 1080)]
        total: usize,
        #[arg(long, value_name = "FILE")]
        out_runs: PathBuf,
        #[arg(long, value_name = "FILE")]
        out_summary: PathBuf,
    },
    /// Write the averaged template vector of each word as CSV.
    ExportConceptMeans {
        /// Word list, one per line.
        #[arg(long, value_name = "FILE")]
        words: Option<PathBuf>,
        #[arg(long, action = clap::ArgAction::Append)]
        word: Vec<String>,
        #[command(flatten)]
        encoder: EncoderArgs,
        #[arg(long, value_name = "FILE")]
        subspace: Option<PathBuf>,
        #[arg(long)]
        force: bool,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
}

const SUBCOMMANDS: &[&str] = &[
    "templates",
    "estimate",
    "debias",
    "eval",
    "ablate",
    "export-concept-means",
];

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();

    let mut args: Vec<String> = std::env::args().collect();
    if let Some(path) = config::find_config(&args) {
        match config::load(path.as_ref()) {
            Ok(entries) => args = config::splice(args, SUBCOMMANDS, &entries),
            Err(e) => return fail(&e),
        }
    }
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

fn fail(e: &debias_core::Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}
