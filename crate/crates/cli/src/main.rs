//! `dfvm`: train, compare and benchmark neural PDE solvers from the command line.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dfvm_core::loss::{FluxEstimator, LowerOrderRule, Method};
use dfvm_core::network::Architecture;

use config::{FileConfig, LossSection, NetworkSection, ProblemSection, TrainSection};

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or configuration; exit code 2.
    Usage(String),
    /// Failure while running; exit code 1.
    Run(String),
}

#[derive(Parser)]
#[command(name = "dfvm", version, about = "Deep finite volume PDE solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one network and write config.toml, metrics.csv and checkpoint.bin.
    Train(TrainArgs),
    /// Train several methods with shared seeds and budget; write compare.csv.
    Compare(CompareArgs),
    /// Time forward, gradient, dense second-order and cube-flux evaluation.
    BenchAd(BenchArgs),
    /// Evaluate one divergence estimator on an analytic field against the dense oracle.
    Estimate(EstimateArgs),
    /// List the built-in problems and their defaults.
    ListProblems,
}

#[derive(Args, Debug, Clone, Default)]
struct RunArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    /// Spatial dimension (poisson-hd, nonlinear).
    #[arg(long)]
    dim: Option<usize>,
    /// Run directory (default: $DFVM_OUTPUT_ROOT/<problem>-<method>-s<seed>).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    arch: Option<String>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    lower_order: Option<String>,
    #[arg(long)]
    estimator: Option<String>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    n_interior: Option<usize>,
    #[arg(long)]
    n_boundary: Option<usize>,
    #[arg(long)]
    n_eval: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    method: Option<Method>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated methods, at least two.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "dfvm-cube,dfvm-sphere,pinn"
    )]
    methods: Vec<Method>,
    /// Run the methods on parallel threads; timings are then not comparable.
    #[arg(long)]
    parallel: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "2,10,50")]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 3)]
    depth: usize,
    #[arg(long, default_value_t = 20)]
    n_points: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Minimum milliseconds spent on each measurement.
    #[arg(long, default_value_t = 50)]
    min_ms: u64,
    /// Also time full loss steps of every method on poisson-hd at this dimension.
    #[arg(long)]
    step_dim: Option<usize>,
    #[arg(long, default_value_t = 3)]
    step_iters: usize,
    /// Directory for bench_ad.csv and bench_steps.csv (default: $DFVM_OUTPUT_ROOT/bench-ad).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FieldName {
    Sumsq,
    Sin1,
    Sinavg,
    Linear,
    Const,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Estimator {
    Q1,
    Q2,
    Q3,
    Q4,
    Q5,
    Cube,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DiffusionName {
    Identity,
    Quadratic,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long, value_enum)]
    field: FieldName,
    #[arg(long, value_enum)]
    est: Estimator,
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 1e-3)]
    r: f64,
    /// Directions (sphere estimators) or points per face (cube).
    #[arg(long, default_value_t = 20)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = DiffusionName::Identity)]
    diffusion: DiffusionName,
    /// Evaluation point, comma-separated (default: 0.3 in every coordinate).
    #[arg(long, value_delimiter = ',')]
    x: Option<Vec<f64>>,
}

fn parse_kebab<T: serde::de::DeserializeOwned>(
    field: &str,
    v: &Option<String>,
) -> Result<Option<T>, CliError> {
    v.as_ref()
        .map(|s| {
            T::deserialize(serde::de::value::StrDeserializer::<serde::de::value::Error>::new(s))
                .map_err(|e| CliError::Usage(format!("--{field}: {e}")))
        })
        .transpose()
}

impl RunArgs {
    /// Flags as a config layer over the file (if any).
    fn layered(&self, method: Option<Method>) -> Result<FileConfig, CliError> {
        let base = match &self.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let arch: Option<Architecture> = match &self.arch {
            Some(s) => Some(
                s.parse()
                    .map_err(|e| CliError::Usage(format!("--arch: {e}")))?,
            ),
            None => None,
        };
        let flags = FileConfig {
            method,
            output: self.out.clone(),
            problem: ProblemSection {
                name: self.problem.clone(),
                dim: self.dim,
            },
            network: NetworkSection {
                arch,
                width: self.width,
                depth: self.depth,
            },
            loss: LossSection {
                eps: self.eps,
                k: self.k,
                lambda: self.lambda,
                lower_order: parse_kebab::<LowerOrderRule>("lower-order", &self.lower_order)?,
                estimator: parse_kebab::<FluxEstimator>("estimator", &self.estimator)?,
                ..LossSection::default()
            },
            train: TrainSection {
                steps: self.steps,
                lr: self.lr,
                seed: self.seed,
                eval_every: self.eval_every,
                n_interior: self.n_interior,
                n_boundary: self.n_boundary,
                n_eval: self.n_eval,
                ..TrainSection::default()
            },
        };
        Ok(base.overlay(flags))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => a.run.layered(a.method).and_then(|c| commands::train(&c)),
        Command::Compare(a) => a
            .run
            .layered(None)
            .and_then(|c| commands::compare(&c, &a.methods, a.parallel)),
        Command::BenchAd(a) => commands::bench_ad(&a),
        Command::Estimate(a) => commands::estimate(&a),
        Command::ListProblems => commands::list_problems(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
