//! Wall-clock cost of derivative evaluation and of full loss steps.

use std::time::{Duration, Instant};

use crate::autodiff::input_gradient;
use crate::divest::fields::NetField;
use crate::divest::{brute_divergence, Diffusion, DivestError};
use crate::loss::{loss_and_gradient, ControlVolume, LossConfig, LossError, Method};
use crate::network::{eval, eval_with_tangent, init_params, NetworkConfig, NetworkError};
use crate::problems::{poisson_highdim, ProblemError};
use crate::rng::derive_seed;
use crate::sampling::{sample_interior, Domain, SamplingError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid benchmark setting `{field}`: {reason}")]
    Config { field: &'static str, reason: String },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Divest(#[from] DivestError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

pub const AD_HEADER: &str = "d,forward,gradient,second_order,cube_flux";
pub const STEP_HEADER: &str = "d,method,seconds_per_step";

#[derive(Debug, Clone, Copy)]
pub struct AdSettings {
    pub width: usize,
    pub depth: usize,
    pub n_points: usize,
    /// Step of the dense second-order oracle.
    pub h: f64,
    /// Half-width of the cube control volume.
    pub eps: f64,
    /// Each measurement repeats until it has run at least this long.
    pub min_time: Duration,
    pub seed: u64,
}

impl Default for AdSettings {
    fn default() -> Self {
        Self {
            width: 64,
            depth: 3,
            n_points: 20,
            h: 1e-4,
            eps: 1e-3,
            min_time: Duration::from_millis(50),
            seed: 0,
        }
    }
}

/// Seconds to process all `n_points` points at dimension `d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdRow {
    pub d: usize,
    pub forward: f64,
    pub gradient: f64,
    /// Full `div(grad u)` by the dense finite-difference oracle.
    pub second_order: f64,
    pub cube_flux: f64,
}

impl AdRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{:.6e},{:.6e},{:.6e},{:.6e}",
            self.d, self.forward, self.gradient, self.second_order, self.cube_flux
        )
    }
}

/// Mean duration of `f`, repeated until `min_time` has elapsed.
fn time_it<T>(min_time: Duration, mut f: impl FnMut() -> T) -> f64 {
    let t0 = Instant::now();
    let mut reps = 0u32;
    while reps == 0 || t0.elapsed() < min_time {
        std::hint::black_box(f());
        reps += 1;
    }
    t0.elapsed().as_secs_f64() / reps as f64
}

/// Times forward evaluation, input gradients, the dense second-order
/// oracle and the cube flux on a random fully connected net for each `d`.
pub fn bench_ad(dims: &[usize], s: &AdSettings) -> Result<Vec<AdRow>, BenchError> {
    if s.n_points == 0 {
        return Err(BenchError::Config {
            field: "n_points",
            reason: "must be at least 1".into(),
        });
    }
    let mut out = Vec::with_capacity(dims.len());
    for &d in dims {
        let cfg = NetworkConfig::fcnn(d, s.width, s.depth);
        cfg.validate()?;
        let params = init_params(cfg, derive_seed(s.seed, d as u64))?;
        let pts = sample_interior(&Domain::hypercube(0.0, 1.0, d), s.n_points, s.seed)?;
        let x = pts.as_flat();

        let (mut cx, mut ct) = (Vec::new(), Vec::new());
        for p in pts.rows() {
            let cv = ControlVolume::cube(p, d, s.eps, 1, true, 0)?;
            cx.extend_from_slice(cv.points.as_flat());
            ct.extend_from_slice(cv.flux_directions(&Diffusion::Identity).as_flat());
        }
        let weight = 1.0 / (2.0 * s.eps);

        let forward = time_it(s.min_time, || eval(&params, x));
        let gradient = time_it(s.min_time, || input_gradient(&params, x));
        let field = NetField(&params);
        let second_order = time_it(s.min_time, || {
            pts.rows()
                .map(|p| brute_divergence(&field, &Diffusion::Identity, p, s.h))
                .collect::<Result<Vec<_>, _>>()
        });
        let cube_flux = time_it(s.min_time, || {
            eval_with_tangent(&params, &cx, &ct).map(|(_, du)| {
                du.chunks(2 * d)
                    .map(|c| weight * c.iter().sum::<f64>())
                    .collect::<Vec<_>>()
            })
        });
        // surface any evaluation error once, outside the timed loops
        eval(&params, x)?;
        input_gradient(&params, x)?;
        brute_divergence(&field, &Diffusion::Identity, pts.row(0), s.h)?;
        eval_with_tangent(&params, &cx, &ct)?;

        out.push(AdRow {
            d,
            forward,
            gradient,
            second_order,
            cube_flux,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRow {
    pub d: usize,
    pub method: Method,
    pub seconds_per_step: f64,
}

impl StepRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{:.6e}",
            self.d,
            self.method.name(),
            self.seconds_per_step
        )
    }
}

/// Mean wall-clock of one loss-and-gradient evaluation on the `d`-dimensional
/// Poisson problem with its default network and point counts, over `steps`
/// evaluations with fresh control-volume seeds.
pub fn bench_steps(
    d: usize,
    methods: &[Method],
    steps: usize,
    seed: u64,
) -> Result<Vec<StepRow>, BenchError> {
    if steps == 0 {
        return Err(BenchError::Config {
            field: "steps",
            reason: "must be at least 1".into(),
        });
    }
    let problem = poisson_highdim(d)?;
    let params = init_params(problem.default_network(), seed)?;
    let mut out = Vec::with_capacity(methods.len());
    for &method in methods {
        let cfg = LossConfig::new(method, problem.defaults.eps);
        let interior = problem.interior_points(cfg.margin(), problem.defaults.n_interior, seed)?;
        let boundary = problem.boundary_points(problem.defaults.n_boundary, seed)?;
        let t0 = Instant::now();
        for step in 0..steps {
            loss_and_gradient(
                &params,
                &problem,
                &cfg,
                &interior,
                &boundary,
                step as u64,
                true,
            )?;
        }
        out.push(StepRow {
            d,
            method,
            seconds_per_step: t0.elapsed().as_secs_f64() / steps as f64,
        });
    }
    Ok(out)
}
