#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config_file;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fdprox::detector::Mode;
use fdprox::regularizer::RegularizerKind;
use serde_json::json;

pub const SCHEMA: &str = include_str!("../schema/fdprox.schema.json");

#[derive(Parser, Debug)]
#[command(name = "fdprox", version, about = "High-dimensional change-point estimation")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Flat `key = value` file; keys are long flag names, explicit flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Print the JSON schema of all outputs and exit.
    #[arg(long)]
    schema: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic signal and noisy observations.
    Generate(GenerateArgs),
    /// Estimate change-points.
    Detect(DetectArgs),
    /// Estimate the Gaussian distance of a structured signal.
    Eta(EtaArgs),
    /// Reconstruct the signal between detected change-points.
    Reconstruct(ReconstructArgs),
    /// Run a scripted experiment.
    Experiment {
        #[command(subcommand)]
        action: ExperimentAction,
    },
}

#[derive(Subcommand, Debug)]
enum ExperimentAction {
    Run(ExperimentArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SignalKind {
    SparseBlocks,
    PlantedLowrank,
    CutMatrix,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long, value_enum)]
    pub kind: SignalKind,
    #[arg(long)]
    pub n: usize,
    /// Vector dimension (sparse-blocks).
    #[arg(long)]
    pub p: Option<usize>,
    /// Matrix side (planted-lowrank, cut-matrix).
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub k_blocks: Option<usize>,
    /// Nonzeros per block.
    #[arg(long)]
    pub s: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub base: f64,
    #[arg(long, default_value_t = 1.2)]
    pub growth: f64,
    #[arg(long)]
    pub change_at: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long, value_delimiter = ',')]
    pub change_points: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Observations (CPD-CSV).
    #[arg(long)]
    pub output: PathBuf,
    /// Signal sidecar (default: `<output stem>.signal.json`).
    #[arg(long)]
    pub signal_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DetectArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub theta: usize,
    #[arg(long)]
    pub gamma: f64,
    /// A number, or `auto` (needs --signal and a noise level).
    #[arg(long, default_value = "0")]
    pub lambda: String,
    #[arg(long, default_value = "none")]
    pub prox: RegularizerKind,
    #[arg(long, default_value = "full")]
    pub mode: Mode,
    /// Report JSON (default: standard output).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Signal sidecar supplying representatives for `--lambda auto`.
    #[arg(long)]
    pub signal: Option<PathBuf>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, default_value_t = 2000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Feed observations through the online detector.
    #[arg(long)]
    pub stream: bool,
}

#[derive(Args, Debug)]
pub struct EtaArgs {
    #[arg(long)]
    pub prox: RegularizerKind,
    #[arg(long)]
    pub sparsity: Option<usize>,
    #[arg(long)]
    pub rank: Option<usize>,
    /// p for vectors, d for d x d matrices.
    #[arg(long)]
    pub dim: usize,
    #[arg(long, default_value_t = 2000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
    /// Default: the report's window.
    #[arg(long)]
    pub theta: Option<usize>,
    /// Default: the report's regularizer.
    #[arg(long)]
    pub prox: Option<RegularizerKind>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub signal: Option<PathBuf>,
    #[arg(long)]
    pub lambda_prime: Option<f64>,
    #[arg(long, default_value_t = 2000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Exponent used when checking the recovery condition.
    #[arg(long, default_value_t = 1.5)]
    pub r: f64,
    /// Segment values (CPD-CSV, one row per segment).
    #[arg(long)]
    pub output: PathBuf,
    /// Segment metadata (default: `<output stem>.json`).
    #[arg(long)]
    pub meta: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub id: fdprox::harness::ExperimentId,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn diagnostic(level: &str, kind: &str, message: &str, extra: serde_json::Value) {
    let mut v = json!({ "level": level, "kind": kind, "message": message });
    if let (Some(o), serde_json::Value::Object(e)) = (v.as_object_mut(), extra) {
        o.extend(e);
    }
    eprintln!("{v}");
}

fn fail(err: &fdprox::Error) -> ExitCode {
    let (kind, code) = if err.is_config() {
        ("config", 2)
    } else {
        ("numerical", 3)
    };
    let extra = match err {
        fdprox::Error::Parse { line, .. } => json!({ "line": line }),
        _ => json!({}),
    };
    diagnostic("error", kind, &err.to_string(), extra);
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let raw: Vec<OsString> = std::env::args_os().collect();
    let argv = match config_file::merge(raw) {
        Ok(a) => a,
        Err(e) => return fail(&e),
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            // clap spreads the offending flag over several lines; keep them, drop usage
            let msg = e.to_string();
            let text: Vec<&str> = msg
                .lines()
                .take_while(|l| !l.starts_with("Usage:"))
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .collect();
            diagnostic(
                "error",
                "config",
                text.join(" ").trim_start_matches("error: "),
                json!({}),
            );
            return ExitCode::from(2);
        }
    };
    if cli.schema {
        print!("{SCHEMA}");
        return ExitCode::SUCCESS;
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return fail(&fdprox::Error::Config("--threads must be >= 1".into()));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail(&fdprox::Error::Config(format!("cannot size thread pool: {e}")));
        }
    }
    let result = match cli.command {
        None => Err(fdprox::Error::Config(
            "no subcommand given (generate|detect|eta|reconstruct|experiment)".into(),
        )),
        Some(Command::Generate(a)) => commands::generate(&a),
        Some(Command::Detect(a)) => commands::detect(&a),
        Some(Command::Eta(a)) => commands::eta(&a),
        Some(Command::Reconstruct(a)) => commands::reconstruct(&a),
        Some(Command::Experiment {
            action: ExperimentAction::Run(a),
        }) => commands::experiment(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
