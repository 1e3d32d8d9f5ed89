//! Experiment driver for `sfde-core`: JSON configs in, JSON/CSV artifacts and
//! a provenance record out, with byte-exact replay.
//!
//! Exit codes: 0 when every assertion passes, 1 on an assertion failure,
//! replay mismatch or numerical failure, 2 on configuration or input errors.

// `!(x > 0)` is the NaN-rejecting form used throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiments;
pub mod provenance;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

pub use config::{ExperimentConfig, Kind};
pub use experiments::{describe, run, Artifact, Assertion, Outcome};
pub use provenance::{execute, replay, Provenance, ReplayReport, RunSummary};

/// Environment variable that overrides `--out`.
pub const OUT_ENV: &str = "SFDE_LAB_OUT";

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] sfde_core::Error),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    #[error("provenance mismatch: {0}")]
    Mismatch(String),
}

impl LabError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Io { .. } | Self::MissingArtifact(_) => 2,
            Self::Core(_) | Self::Mismatch(_) => 1,
        }
    }

    fn category(&self) -> &'static str {
        match self {
            Self::Config(_) => "config",
            Self::Core(_) => "numerical",
            Self::Io { .. } => "io",
            Self::MissingArtifact(_) => "missing-artifact",
            Self::Mismatch(_) => "mismatch",
        }
    }

    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Self::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "sfde-lab",
    version,
    about = "Stochastic fast diffusion numerical laboratory"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (overridden by SFDE_LAB_OUT).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Base seed; path i uses seed + i.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scalar certificate suite (config optional).
    ScalarVerify(RunArgs),
    /// Ensemble simulation with energy statistics.
    Simulate(RunArgs),
    /// Coupled regularization ladder and rate fit.
    Converge(RunArgs),
    /// H^-1 contraction between two initial data.
    Contraction(RunArgs),
    /// Variational-inequality checks against test processes.
    SviCheck(RunArgs),
    /// Print the resolved experiment plan without running it.
    Describe {
        #[command(flatten)]
        args: RunArgs,
        /// Experiment kind; defaults to the config's `kind`.
        #[arg(long, value_parser = parse_kind)]
        kind: Option<Kind>,
    },
    /// Re-run a recorded experiment and compare artifacts byte for byte.
    Replay {
        /// provenance.json of the original run.
        provenance: PathBuf,
        /// Directory for the re-run (default: `<run dir>/replay`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn parse_kind(s: &str) -> Result<Kind, String> {
    serde_json::from_value(json!(s)).map_err(|_| format!("unknown experiment kind `{s}`"))
}

/// Loads the config (or defaults for `scalar-verify`) and applies flag overrides.
pub fn resolve_config(kind: Option<Kind>, args: &RunArgs) -> Result<ExperimentConfig, LabError> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None if kind == Some(Kind::ScalarVerify) => ExperimentConfig::default(),
        None => return Err(LabError::Config("--config is required".into())),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(t) = args.threads {
        cfg.threads = t;
    }
    Ok(cfg)
}

/// Output directory: `SFDE_LAB_OUT`, then `--out`, then the config, then `out/<kind>`.
pub fn resolve_out(flag: Option<&Path>, cfg: &ExperimentConfig, kind: Kind) -> PathBuf {
    if let Some(env) = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(env);
    }
    if let Some(f) = flag {
        return f.to_path_buf();
    }
    if let Some(o) = &cfg.output {
        return PathBuf::from(o);
    }
    PathBuf::from("out").join(kind.name())
}

fn report_error(e: &LabError) -> i32 {
    eprintln!(
        "{}",
        json!({ "error": e.category(), "message": e.to_string(), "exit_code": e.exit_code() })
    );
    e.exit_code()
}

fn run_kind(kind: Kind, args: &RunArgs) -> Result<i32, LabError> {
    let cfg = resolve_config(Some(kind), args)?;
    let out = resolve_out(args.out.as_deref(), &cfg, kind);
    let summary = execute(kind, &cfg, &out)?;
    println!(
        "{}",
        serde_json::to_string(&summary).expect("summary serializes")
    );
    Ok(if summary.passed { 0 } else { 1 })
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::ScalarVerify(a) => run_kind(Kind::ScalarVerify, a),
        Command::Simulate(a) => run_kind(Kind::Simulate, a),
        Command::Converge(a) => run_kind(Kind::Converge, a),
        Command::Contraction(a) => run_kind(Kind::Contraction, a),
        Command::SviCheck(a) => run_kind(Kind::SviCheck, a),
        Command::Describe { args, kind } => (|| {
            let cfg = resolve_config(*kind, args)?;
            let kind = kind.or(cfg.kind).ok_or_else(|| {
                LabError::Config("no experiment kind: pass --kind or set `kind`".into())
            })?;
            print!("{}", describe(kind, &cfg)?);
            Ok(0)
        })(),
        Command::Replay {
            provenance,
            out,
            threads,
        } => (|| {
            let report = replay(provenance, out.as_deref(), *threads)?;
            println!(
                "{}",
                serde_json::to_string(&report).expect("report serializes")
            );
            Ok(0)
        })(),
    };
    result.unwrap_or_else(|e| report_error(&e))
}
