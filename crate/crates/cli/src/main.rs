mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "synthcat", version, about = "Synthesizer preset dataset forge and evaluation toolkit")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the work plan without writing anything.
    #[arg(long, global = true)]
    dry_run: bool,
    /// Report failures as one JSON object on stderr.
    #[arg(long, global = true)]
    json_errors: bool,
    /// Worker threads (overrides the config).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct OutDir {
    /// Output root (overrides `out_dir` in the config).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the timbre, envelope and content banks.
    Bank(OutDir),
    /// Render the timbre × envelope × content product.
    Render(OutDir),
    /// Label the rendered manifest with train/test/excluded splits.
    Splits(OutDir),
    /// Sample perturbation triplets over the training split.
    Triplets(TripletArgs),
    /// Emit (source, reference, ground truth) conversion pairs.
    Pairs(PairArgs),
    /// Convert one file to another file's timbre and envelope.
    Convert(ConvertArgs),
    /// Convert the emitted pairs and score them against ground truth.
    Eval(EvalArgs),
    /// Dump the analysis of one file as JSONL.
    Inspect(InspectArgs),
}

#[derive(Args, Debug)]
pub struct TripletArgs {
    #[command(flatten)]
    pub out: OutDir,
    /// Number of anchors (overrides `splits.triplets`).
    #[arg(long)]
    pub count: Option<usize>,
}

#[derive(Args, Debug)]
pub struct PairArgs {
    #[command(flatten)]
    pub out: OutDir,
    /// References per source (overrides `splits.n_refs`).
    #[arg(long)]
    pub n_refs: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Oracle,
    ClosedWorld,
}

#[derive(Args, Debug, Clone, Copy)]
pub struct Ablation {
    /// Keep the source timbre.
    #[arg(long)]
    pub no_timbre: bool,
    /// Keep the source envelope.
    #[arg(long)]
    pub no_adsr: bool,
}

#[derive(Args, Debug)]
pub struct ConvertArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub reference: PathBuf,
    /// Output WAV file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "oracle")]
    pub mode: Mode,
    /// Pipeline output root holding the banks and rendered dataset for
    /// closed-world lookups (overrides `out_dir` in the config).
    #[arg(long)]
    pub root: Option<PathBuf>,
    #[command(flatten)]
    pub ablation: Ablation,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub out: OutDir,
    #[arg(long, value_enum, default_value = "oracle")]
    pub mode: Mode,
    /// Evaluate only the first N pairs.
    #[arg(long)]
    pub limit: Option<usize>,
    #[command(flatten)]
    pub ablation: Ablation,
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Write `inspect/<stem>.jsonl` under this root instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A failure with its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            kind: "config",
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            kind: "io",
            message: message.into(),
        }
    }

    /// Outputs were requested but not all of them were produced or valid.
    pub fn incomplete(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            kind: "incomplete",
            message: message.into(),
        }
    }

    /// Classifies a library error: anything caused by an `io::Error` is an
    /// I/O failure, everything else a processing failure.
    pub fn from_error(err: &(dyn std::error::Error + 'static)) -> Self {
        let mut cause = Some(err);
        while let Some(e) = cause {
            if e.is::<std::io::Error>() {
                return Self::io(err.to_string());
            }
            cause = e.source();
        }
        Self {
            code: 1,
            kind: "failed",
            message: err.to_string(),
        }
    }
}

pub struct Context {
    pub config: RunConfig,
    pub dry_run: bool,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = RunConfig::load(cli.config.as_deref())?;
    if let Some(w) = cli.workers {
        config.workers = w;
    }
    config.validate()?;
    let ctx = Context {
        config,
        dry_run: cli.dry_run,
    };
    match cli.command {
        Command::Bank(out) => commands::bank(&ctx, &out),
        Command::Render(out) => commands::render(&ctx, &out),
        Command::Splits(out) => commands::splits(&ctx, &out),
        Command::Triplets(args) => commands::triplets(&ctx, &args),
        Command::Pairs(args) => commands::pairs(&ctx, &args),
        Command::Convert(args) => commands::convert(&ctx, &args),
        Command::Eval(args) => commands::eval(&ctx, &args),
        Command::Inspect(args) => commands::inspect(&ctx, &args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        // Usage errors exit 2, --help and --version exit 0.
        Err(e) => e.exit(),
    };
    let json_errors = cli.json_errors;
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            if json_errors {
                let body = serde_json::json!({
                    "error": err.kind,
                    "message": err.message,
                    "exit_code": err.code,
                });
                eprintln!("{body}");
            } else {
                eprintln!("error: {}", err.message);
            }
            ExitCode::from(err.code)
        }
    }
}
