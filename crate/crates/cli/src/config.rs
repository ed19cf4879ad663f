//! Run configuration: a TOML file, flag overrides and the fully resolved form.

use std::path::{Path, PathBuf};

use dfvm_core::loss::{FluxEstimator, LossConfig, LowerOrderRule, Method};
use dfvm_core::network::{Architecture, NetworkConfig};
use dfvm_core::problems::{by_name, Problem};
use dfvm_core::train::{AdamConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const OUTPUT_ROOT_VAR: &str = "DFVM_OUTPUT_ROOT";
pub const DEFAULT_OUTPUT_ROOT: &str = "runs";

/// Every key is optional; missing keys take the problem's defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub method: Option<Method>,
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub problem: ProblemSection,
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(default)]
    pub loss: LossSection,
    #[serde(default)]
    pub train: TrainSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub name: Option<String>,
    /// Spatial dimension, for problems that have a choice.
    pub dim: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub arch: Option<Architecture>,
    pub width: Option<usize>,
    pub depth: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSection {
    pub eps: Option<f64>,
    pub k: Option<usize>,
    pub lambda: Option<f64>,
    pub antithetic: Option<bool>,
    pub qmc: Option<bool>,
    pub lower_order: Option<LowerOrderRule>,
    pub estimator: Option<FluxEstimator>,
    pub pinn_step: Option<f64>,
    pub chunk_rows: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub steps: Option<usize>,
    pub lr: Option<f64>,
    pub lr_decay: Option<f64>,
    pub lr_decay_steps: Option<usize>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub adam_eps: Option<f64>,
    pub eval_every: Option<usize>,
    pub resample: Option<bool>,
    pub seed: Option<u64>,
    pub n_interior: Option<usize>,
    pub n_boundary: Option<usize>,
    pub n_eval: Option<usize>,
    pub n_eval_initial: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// `other`'s keys win where set.
    pub fn overlay(self, other: FileConfig) -> FileConfig {
        macro_rules! pick {
            ($($a:ident).+) => { other.$($a).+.clone().or(self.$($a).+.clone()) };
        }
        FileConfig {
            method: pick!(method),
            output: pick!(output),
            problem: ProblemSection {
                name: pick!(problem.name),
                dim: pick!(problem.dim),
            },
            network: NetworkSection {
                arch: pick!(network.arch),
                width: pick!(network.width),
                depth: pick!(network.depth),
            },
            loss: LossSection {
                eps: pick!(loss.eps),
                k: pick!(loss.k),
                lambda: pick!(loss.lambda),
                antithetic: pick!(loss.antithetic),
                qmc: pick!(loss.qmc),
                lower_order: pick!(loss.lower_order),
                estimator: pick!(loss.estimator),
                pinn_step: pick!(loss.pinn_step),
                chunk_rows: pick!(loss.chunk_rows),
            },
            train: TrainSection {
                steps: pick!(train.steps),
                lr: pick!(train.lr),
                lr_decay: pick!(train.lr_decay),
                lr_decay_steps: pick!(train.lr_decay_steps),
                beta1: pick!(train.beta1),
                beta2: pick!(train.beta2),
                adam_eps: pick!(train.adam_eps),
                eval_every: pick!(train.eval_every),
                resample: pick!(train.resample),
                seed: pick!(train.seed),
                n_interior: pick!(train.n_interior),
                n_boundary: pick!(train.n_boundary),
                n_eval: pick!(train.n_eval),
                n_eval_initial: pick!(train.n_eval_initial),
            },
        }
    }
}

/// A configuration with every default filled in.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub problem: Problem,
    pub dim: usize,
    pub network: NetworkConfig,
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub output: PathBuf,
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

pub fn default_output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_VAR)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT))
}

impl Resolved {
    pub fn from_file(cfg: &FileConfig) -> Result<Self, CliError> {
        let name = cfg.problem.name.as_deref().ok_or_else(|| {
            CliError::Usage("missing required field `problem.name` (flag --problem)".into())
        })?;
        let problem =
            by_name(name, cfg.problem.dim).map_err(|e| invalid(format!("`problem`: {e}")))?;
        let method = cfg.method.unwrap_or(Method::DfvmCube);

        let base = problem.default_network();
        let network = NetworkConfig {
            arch: cfg.network.arch.unwrap_or(base.arch),
            input_dim: problem.dim(),
            width: cfg.network.width.unwrap_or(base.width),
            depth: cfg.network.depth.unwrap_or(base.depth),
        };
        network
            .validate()
            .map_err(|e| invalid(format!("`network`: {e}")))?;

        let l = &cfg.loss;
        let mut loss = LossConfig::new(method, l.eps.unwrap_or(problem.defaults.eps));
        loss.cv.k = l.k.unwrap_or(loss.cv.k);
        loss.cv.antithetic = l.antithetic.unwrap_or(loss.cv.antithetic);
        loss.cv.qmc = l.qmc.unwrap_or(loss.cv.qmc);
        loss.lambda = l.lambda.unwrap_or(loss.lambda);
        loss.lower_order = l.lower_order.unwrap_or(loss.lower_order);
        loss.estimator = l.estimator.unwrap_or(loss.estimator);
        loss.pinn_step = l.pinn_step.unwrap_or(loss.pinn_step);
        loss.chunk_rows = l.chunk_rows.unwrap_or(loss.chunk_rows);
        loss.validate()
            .map_err(|e| invalid(format!("`loss`: {e}")))?;

        let t = &cfg.train;
        let d = TrainConfig::default();
        let train = TrainConfig {
            steps: t.steps.unwrap_or(d.steps),
            lr: t.lr.unwrap_or(d.lr),
            lr_decay: t.lr_decay.unwrap_or(d.lr_decay),
            lr_decay_steps: t.lr_decay_steps.unwrap_or(d.lr_decay_steps),
            adam: AdamConfig {
                beta1: t.beta1.unwrap_or(d.adam.beta1),
                beta2: t.beta2.unwrap_or(d.adam.beta2),
                eps: t.adam_eps.unwrap_or(d.adam.eps),
            },
            eval_every: t.eval_every.unwrap_or(d.eval_every),
            resample: t.resample.unwrap_or(d.resample),
            seed: t.seed.unwrap_or(d.seed),
            n_interior: Some(t.n_interior.unwrap_or(problem.defaults.n_interior)),
            n_boundary: Some(t.n_boundary.unwrap_or(problem.defaults.n_boundary)),
            n_eval: t.n_eval.unwrap_or(d.n_eval),
            n_eval_initial: if problem.is_parabolic() {
                t.n_eval_initial.unwrap_or(d.n_eval_initial)
            } else {
                0
            },
            checkpoint: None,
        };
        train
            .validate()
            .map_err(|e| invalid(format!("`train`: {e}")))?;

        let output = cfg.output.clone().unwrap_or_else(|| {
            default_output_root().join(format!(
                "{}-{}-s{}",
                problem.name,
                method.name(),
                train.seed
            ))
        });
        Ok(Self {
            dim: problem.spatial_dim(),
            problem,
            network,
            loss,
            train,
            output,
        })
    }

    /// The file form with every key set; loading it reproduces this run.
    pub fn to_file(&self) -> FileConfig {
        let (l, t) = (&self.loss, &self.train);
        FileConfig {
            method: Some(l.method),
            output: Some(self.output.clone()),
            problem: ProblemSection {
                name: Some(self.problem.name.to_string()),
                dim: Some(self.dim),
            },
            network: NetworkSection {
                arch: Some(self.network.arch),
                width: Some(self.network.width),
                depth: Some(self.network.depth),
            },
            loss: LossSection {
                eps: Some(l.cv.eps),
                k: Some(l.cv.k),
                lambda: Some(l.lambda),
                antithetic: Some(l.cv.antithetic),
                qmc: Some(l.cv.qmc),
                lower_order: Some(l.lower_order),
                estimator: Some(l.estimator),
                pinn_step: Some(l.pinn_step),
                chunk_rows: Some(l.chunk_rows),
            },
            train: TrainSection {
                steps: Some(t.steps),
                lr: Some(t.lr),
                lr_decay: Some(t.lr_decay),
                lr_decay_steps: Some(t.lr_decay_steps),
                beta1: Some(t.adam.beta1),
                beta2: Some(t.adam.beta2),
                adam_eps: Some(t.adam.eps),
                eval_every: Some(t.eval_every),
                resample: Some(t.resample),
                seed: Some(t.seed),
                n_interior: t.n_interior,
                n_boundary: t.n_boundary,
                n_eval: Some(t.n_eval),
                n_eval_initial: Some(t.n_eval_initial),
            },
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_file()).expect("resolved config serializes")
    }
}
