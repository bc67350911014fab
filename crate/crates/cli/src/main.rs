//! `relu-limit`: generate network families, enumerate regions, and run
//! convergence experiments, emitting JSON/CSV artifacts.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod output;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use relu_limit::NormKind;
use serde::{Deserialize, Serialize};

/// Exit statuses shared by every command.
pub mod exit {
    pub const OK: u8 = 0;
    pub const PROPERTY_FAILURE: u8 = 1;
    pub const INVALID_ARGS: u8 = 2;
    pub const THEORY_VIOLATION: u8 = 3;
    pub const GUARDRAIL: u8 = 4;
}

#[derive(Parser, Debug)]
#[command(
    name = "relu-limit",
    version,
    about = "Convergence experiments for deep ReLU network families"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    /// Re-execute a persisted run_config.json.
    #[arg(long, global = true, value_name = "FILE")]
    replay: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct Global {
    /// Norm for matrices and vectors: l1, l2 or linf.
    #[arg(long, global = true, default_value = "l1")]
    pub norm: NormKind,
    #[arg(long, global = true, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory [default: out].
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Comma-separated depth schedule.
    #[arg(long, global = true, value_delimiter = ',', value_name = "LIST")]
    pub depths: Option<Vec<usize>>,
}

impl Global {
    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}

#[derive(Subcommand, Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Command {
    /// Realize a sequence spec as a network file.
    Gen(GenArgs),
    /// Evaluate a network and its affine pieces at points.
    Eval(EvalArgs),
    /// Enumerate activation regions.
    Regions(RegionsArgs),
    /// Masked products and bias series of a spec.
    Products(ProductsArgs),
    /// Pointwise convergence experiment with necessary-condition audit.
    Converge(ConvergeArgs),
    /// Run the bundled invariant suite.
    Verify(VerifyArgs),
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct GenArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub depth: usize,
    /// File name inside the output directory.
    #[arg(long, default_value = "network.json")]
    pub name: String,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub network: PathBuf,
    /// Comma-separated input point; repeatable.
    #[arg(long = "point", value_name = "X")]
    pub points: Vec<String>,
    /// Additional uniform samples from [0,1]^d.
    #[arg(long, default_value_t = 0)]
    pub samples: usize,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct RegionsArgs {
    #[arg(long)]
    pub network: PathBuf,
    /// Layers to enumerate [default: all].
    #[arg(long)]
    pub depth: Option<usize>,
    /// Cross-check against a lattice census with this many points per axis.
    #[arg(long)]
    pub census: Option<usize>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ProductsArgs {
    #[arg(long)]
    pub spec: PathBuf,
    /// identity | zero-after:K | random:P | input:X1,X2,…
    #[arg(long, default_value = "identity")]
    pub masks: String,
    #[arg(long, default_value_t = 500)]
    pub n_max: usize,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ConvergeArgs {
    #[arg(long)]
    pub spec: PathBuf,
    /// Point traced at every scheduled depth.
    #[arg(long)]
    pub probe: Option<String>,
    /// default | lattice:R | halton:N
    #[arg(long, default_value = "default")]
    pub grid: String,
    #[arg(long, default_value_t = 1000)]
    pub mc_samples: usize,
    /// Exponent of the Monte-Carlo L^p estimates.
    #[arg(long, default_value = "l2")]
    pub lp: NormKind,
    /// Audit horizon [default: deepest scheduled depth].
    #[arg(long)]
    pub horizon: Option<usize>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct VerifyArgs {
    /// Run only checks whose name contains this string.
    #[arg(long)]
    pub filter: Option<String>,
    #[arg(long, hide = true, value_enum)]
    pub fault: Option<Fault>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    /// Evaluate affine pieces on a pattern with one flipped neuron.
    FlipMask,
}

/// Everything needed to re-execute a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub version: String,
    pub global: Global,
    pub command: Command,
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("RELU_LIMIT_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().map_err(|_| {
        relu_limit::Error::InvalidArgument(format!("RELU_LIMIT_THREADS must be an integer, got {raw:?}"))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring thread pool")?;
    Ok(())
}

fn resolve(cli: Cli) -> Result<RunConfig> {
    if let Some(path) = &cli.replay {
        let mut config: RunConfig = commands::read_input(path)?;
        if cli.global.out.is_some() {
            config.global.out = cli.global.out;
        }
        return Ok(config);
    }
    let Some(command) = cli.command else {
        return Err(relu_limit::Error::InvalidArgument("a subcommand or --replay is required".into()).into());
    };
    let mut global = cli.global;
    global.out = Some(global.out_dir());
    Ok(RunConfig {
        version: env!("CARGO_PKG_VERSION").to_string(),
        global,
        command,
    })
}

fn run(cli: Cli) -> Result<u8> {
    configure_threads()?;
    let config = resolve(cli)?;
    if !(config.global.tol > 0.0) {
        return Err(relu_limit::Error::InvalidArgument("--tol must be positive".into()).into());
    }
    output::write_json(&config.global.out_dir().join("run_config.json"), &config)?;
    let g = &config.global;
    match &config.command {
        Command::Gen(a) => commands::gen(g, a),
        Command::Eval(a) => commands::eval(g, a),
        Command::Regions(a) => commands::regions(g, a),
        Command::Products(a) => commands::products(g, a),
        Command::Converge(a) => commands::converge(g, a),
        Command::Verify(a) => verify::run(g, a),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use relu_limit::Error;
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::InvalidArgument(_) | Error::Boundary { .. }) => exit::INVALID_ARGS,
        Some(Error::ResourceLimit(_)) => exit::GUARDRAIL,
        _ => exit::PROPERTY_FAILURE,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
