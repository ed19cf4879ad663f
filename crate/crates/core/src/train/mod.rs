//! Adam training loop, relative-error evaluation and metrics.

mod adam;
mod metrics;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use metrics::{fmt_sig, write_metrics_csv, MetricsRow, METRICS_HEADER};

use std::path::PathBuf;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::loss::{loss_and_gradient, LossConfig, LossError};
use crate::network::{eval, init_params, NetworkConfig, NetworkError, ParamSet};
use crate::problems::{Exact, Problem};
use crate::rng::derive_seed;
use crate::sampling::{sample_interior, Domain, Points, SamplingError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training setting `{field}`: {reason}")]
    Config { field: &'static str, reason: String },
    #[error("non-finite {what} at step {step}; last good parameters saved to {checkpoint:?}")]
    NonFinite {
        what: &'static str,
        step: usize,
        checkpoint: Option<PathBuf>,
    },
    #[error("exact solution vanishes on the evaluation set")]
    ZeroReference,
    #[error("evaluation set is empty")]
    EmptyEval,
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f64,
    /// `lr * lr_decay^(step / lr_decay_steps)`; 1 disables the schedule.
    pub lr_decay: f64,
    pub lr_decay_steps: usize,
    pub adam: AdamConfig,
    pub eval_every: usize,
    /// Draw fresh collocation and boundary points every step.
    pub resample: bool,
    pub seed: u64,
    /// Overrides of the problem's default point counts.
    pub n_interior: Option<usize>,
    pub n_boundary: Option<usize>,
    pub n_eval: usize,
    /// Evaluation points at the initial time (parabolic problems).
    pub n_eval_initial: usize,
    /// Parameter file written at every evaluation and on abort.
    pub checkpoint: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 20_000,
            lr: 1e-3,
            lr_decay: 1.0,
            lr_decay_steps: 1000,
            adam: AdamConfig::default(),
            eval_every: 500,
            resample: true,
            seed: 0,
            n_interior: None,
            n_boundary: None,
            n_eval: 100_000,
            n_eval_initial: 10_000,
            checkpoint: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |field, reason: String| Err(TrainError::Config { field, reason });
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return bad("lr", format!("must be positive, got {}", self.lr));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad(
                "lr_decay",
                format!("must lie in (0, 1], got {}", self.lr_decay),
            );
        }
        if self.lr_decay_steps == 0 {
            return bad("lr_decay_steps", "must be at least 1".into());
        }
        if self.eval_every == 0 {
            return bad("eval_every", "must be at least 1".into());
        }
        if self.n_eval == 0 {
            return bad("n_eval", "must be at least 1".into());
        }
        if self.n_interior == Some(0) || self.n_boundary == Some(0) {
            return bad("n_interior", "point counts must be at least 1".into());
        }
        self.adam.validate()
    }

    pub fn lr_at(&self, step: usize) -> f64 {
        if self.lr_decay == 1.0 {
            self.lr
        } else {
            self.lr * self.lr_decay.powf(step as f64 / self.lr_decay_steps as f64)
        }
    }
}

/// Wall-clock split of the training steps (evaluation excluded).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TrainTimings {
    pub sampling: Duration,
    pub loss: Duration,
    pub backward: Duration,
    pub update: Duration,
    pub total: Duration,
    pub evaluation: Duration,
}

impl TrainTimings {
    pub fn parts(&self) -> Duration {
        self.sampling + self.loss + self.backward + self.update
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: ParamSet,
    pub rows: Vec<MetricsRow>,
    /// Loss of every step, in order.
    pub losses: Vec<f64>,
    pub timings: TrainTimings,
}

impl TrainOutput {
    pub fn final_row(&self) -> &MetricsRow {
        self.rows.last().expect("training emits at least one row")
    }
}

/// `||u_theta - u|| / ||u||` over the rows of `points`.
pub fn relative_l2(
    params: &ParamSet,
    exact: &dyn Exact,
    points: &Points,
) -> Result<f64, TrainError> {
    if points.is_empty() {
        return Err(TrainError::EmptyEval);
    }
    let u = eval(params, points.as_flat())?;
    let (mut num, mut den) = (0.0, 0.0);
    for (x, v) in points.rows().zip(&u) {
        let e = exact.value(x);
        num += (v - e) * (v - e);
        den += e * e;
    }
    if den == 0.0 {
        return Err(TrainError::ZeroReference);
    }
    Ok((num / den).sqrt())
}

/// Fixed evaluation sets for one run.
#[derive(Debug, Clone)]
pub struct EvalSets {
    pub domain: Points,
    pub initial: Option<Points>,
}

impl EvalSets {
    pub fn new(problem: &Problem, cfg: &TrainConfig) -> Result<Self, TrainError> {
        let seed = derive_seed(cfg.seed, STREAM_EVAL);
        let domain = sample_interior(&Domain::new(problem.domain.clone(), 0.0), cfg.n_eval, seed)?;
        let initial = if cfg.n_eval_initial > 0 {
            problem.initial_points(cfg.n_eval_initial, derive_seed(seed, 1))?
        } else {
            None
        };
        Ok(Self { domain, initial })
    }

    /// `(RE, RE0)`.
    pub fn errors(
        &self,
        params: &ParamSet,
        problem: &Problem,
    ) -> Result<(f64, Option<f64>), TrainError> {
        let re = relative_l2(params, problem.exact(), &self.domain)?;
        let re0 = match &self.initial {
            Some(p) => Some(relative_l2(params, problem.exact(), p)?),
            None => None,
        };
        Ok((re, re0))
    }
}

const STREAM_INIT: u64 = 1;
const STREAM_POINTS: u64 = 2;
const STREAM_CV: u64 = 3;
const STREAM_EVAL: u64 = 4;

/// Collocation and boundary points for `step`.
pub fn training_points(
    problem: &Problem,
    loss_cfg: &LossConfig,
    cfg: &TrainConfig,
    step: usize,
) -> Result<(Points, Points), TrainError> {
    let round = if cfg.resample { step as u64 } else { 0 };
    let seed = derive_seed(derive_seed(cfg.seed, STREAM_POINTS), round);
    let n_int = cfg.n_interior.unwrap_or(problem.defaults.n_interior);
    let n_bnd = cfg.n_boundary.unwrap_or(problem.defaults.n_boundary);
    Ok((
        problem.interior_points(loss_cfg.margin(), n_int, derive_seed(seed, 0))?,
        problem.boundary_points(n_bnd, derive_seed(seed, 1))?,
    ))
}

/// Trains from a seeded initialization.
pub fn train(
    problem: &Problem,
    net_cfg: &NetworkConfig,
    loss_cfg: &LossConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutput, TrainError> {
    train_with(problem, net_cfg, loss_cfg, cfg, |_, _| {})
}

/// Like [`train`], calling `on_row` with every metrics row as it is produced.
pub fn train_with(
    problem: &Problem,
    net_cfg: &NetworkConfig,
    loss_cfg: &LossConfig,
    cfg: &TrainConfig,
    mut on_row: impl FnMut(&MetricsRow, &ParamSet),
) -> Result<TrainOutput, TrainError> {
    cfg.validate()?;
    loss_cfg.validate()?;
    if net_cfg.input_dim != problem.dim() {
        return Err(TrainError::Config {
            field: "input_dim",
            reason: format!(
                "network takes {} inputs, problem has {}",
                net_cfg.input_dim,
                problem.dim()
            ),
        });
    }
    let mut params = init_params(*net_cfg, derive_seed(cfg.seed, STREAM_INIT))?;
    let mut last_good = params.clone();
    let mut state = AdamState::new(params.len());
    let mut timings = TrainTimings::default();

    let t_eval = Instant::now();
    let evals = EvalSets::new(problem, cfg)?;
    timings.evaluation += t_eval.elapsed();

    let mut rows = Vec::new();
    let mut losses = Vec::with_capacity(cfg.steps);
    let mut points = None;

    let abort = |what, step, good: &ParamSet| {
        let checkpoint = cfg.checkpoint.clone();
        if let Some(path) = &checkpoint {
            good.save(path)?;
        }
        Err(TrainError::NonFinite {
            what,
            step,
            checkpoint,
        })
    };

    // step == cfg.steps only measures the final parameters
    for step in 0..=cfg.steps {
        let training = step < cfg.steps;
        let t0 = Instant::now();
        if cfg.resample || points.is_none() {
            points = Some(training_points(problem, loss_cfg, cfg, step)?);
        }
        let (interior, boundary) = points.as_ref().expect("points sampled");
        let t_sampled = t0.elapsed();
        let cv_seed = derive_seed(derive_seed(cfg.seed, STREAM_CV), step as u64);
        let out = loss_and_gradient(
            &params, problem, loss_cfg, interior, boundary, cv_seed, training,
        )?;
        let batch = &out.batch;
        if !batch.loss.is_finite() {
            return abort("loss", step, &last_good);
        }

        let mut eval_time = Duration::ZERO;
        if step % cfg.eval_every == 0 || !training {
            let seconds = (timings.total + t0.elapsed()).as_secs_f64();
            let t1 = Instant::now();
            let (re, re0) = evals.errors(&params, problem)?;
            if let Some(path) = &cfg.checkpoint {
                params.save(path)?;
            }
            let row = MetricsRow {
                step,
                loss: batch.loss,
                interior: batch.interior_term,
                boundary: batch.boundary_term,
                re,
                re0,
                seconds,
            };
            on_row(&row, &params);
            rows.push(row);
            eval_time = t1.elapsed();
            timings.evaluation += eval_time;
        }
        if !training {
            break;
        }
        losses.push(batch.loss);

        let t2 = Instant::now();
        let grad = out.gradient.as_deref().expect("gradient requested");
        last_good.values_mut().copy_from_slice(params.values());
        if adam_step(
            params.values_mut(),
            grad,
            &mut state,
            &cfg.adam,
            cfg.lr_at(step),
        )
        .is_err()
        {
            return abort("gradient", step, &last_good);
        }
        timings.update += t2.elapsed();
        timings.sampling += t_sampled;
        timings.loss += out.timings.forward;
        timings.backward += out.timings.backward;
        timings.total += t0.elapsed().saturating_sub(eval_time);
    }
    Ok(TrainOutput {
        params,
        rows,
        losses,
        timings,
    })
}
