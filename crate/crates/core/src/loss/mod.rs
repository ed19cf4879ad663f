//! DFVM and PINN losses.
//!
//! The interior residual at a collocation point `x` is
//!
//! ```text
//! r(x) = mean_V(x) (-div(A grad u)) + h(x)
//! h    = B . grad u + c u + s_t u_t + N(grad u) - f
//! ```
//!
//! where the first term is a surface quadrature over a control volume
//! (DFVM) or a central difference of the flux `A grad u` with a tiny step
//! (PINN baseline). `h` is taken at the center or averaged over the
//! control-volume nodes. The loss is `mean(r^2) + lambda mean((u - g)^2)`.

mod batch;
mod cv;

pub use batch::{dfvm_loss, loss_and_gradient, pinn_loss, LossOutput, LossTimings};
pub use cv::ControlVolume;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::AdError;
use crate::divest::{Diffusion, ScalarField};
use crate::network::NetworkError;
use crate::problems::Problem;
use crate::rng::derive_seed;
use crate::sampling::{sphere_directions, SamplingError};

#[derive(Debug, Error)]
pub enum LossError {
    #[error("control volume of collocation point {index} at {point:?} leaves the domain")]
    NotEmbedded { index: usize, point: Vec<f64> },
    #[error("invalid loss setting `{field}`: {reason}")]
    Config { field: &'static str, reason: String },
    #[error("point set has dimension {got}, problem expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Ad(#[from] AdError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    DfvmCube,
    DfvmSphere,
    Pinn,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Self::DfvmCube => "dfvm-cube",
            Self::DfvmSphere => "dfvm-sphere",
            Self::Pinn => "pinn",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "dfvm-cube" => Ok(Self::DfvmCube),
            "dfvm-sphere" => Ok(Self::DfvmSphere),
            "pinn" => Ok(Self::Pinn),
            other => Err(format!(
                "unknown method `{other}` (expected dfvm-cube, dfvm-sphere or pinn)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LowerOrderRule {
    CenterPoint,
    CvAverage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FluxEstimator {
    /// Input derivatives along `A n` from the network's tangent pass.
    AdGradient,
    /// Central differences of step `eps` along `A n`.
    Difference,
}

/// Control-volume shape and sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvSpec {
    pub eps: f64,
    /// Directions (sphere) or points per face (cube).
    pub k: usize,
    pub antithetic: bool,
    pub qmc: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    pub method: Method,
    pub cv: CvSpec,
    pub lambda: f64,
    pub lower_order: LowerOrderRule,
    pub estimator: FluxEstimator,
    /// Difference step of the PINN second-order operator.
    pub pinn_step: f64,
    /// Upper bound on network rows per tape (also capped so an activation
    /// block holds at most about 12000 values).
    pub chunk_rows: usize,
}

pub const DEFAULT_SPHERE_K: usize = 20;
pub const DEFAULT_CUBE_PPF: usize = 1;
pub const DEFAULT_PINN_STEP: f64 = 1e-4;

impl LossConfig {
    /// Defaults for `method` with radius `eps`.
    pub fn new(method: Method, eps: f64) -> Self {
        Self {
            method,
            cv: CvSpec {
                eps,
                k: match method {
                    Method::DfvmSphere => DEFAULT_SPHERE_K,
                    _ => DEFAULT_CUBE_PPF,
                },
                antithetic: true,
                qmc: true,
            },
            lambda: 1.0,
            lower_order: LowerOrderRule::CenterPoint,
            estimator: FluxEstimator::AdGradient,
            pinn_step: DEFAULT_PINN_STEP,
            chunk_rows: 256,
        }
    }

    pub fn validate(&self) -> Result<(), LossError> {
        let bad = |field, reason: String| Err(LossError::Config { field, reason });
        if !(self.cv.eps > 0.0) {
            return bad("eps", format!("must be positive, got {}", self.cv.eps));
        }
        if self.cv.k == 0 {
            return bad("k", "must be at least 1".into());
        }
        if self.method == Method::DfvmSphere && self.cv.antithetic && self.cv.k % 2 == 1 {
            return bad(
                "k",
                format!("antithetic sampling needs an even count, got {}", self.cv.k),
            );
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad(
                "lambda",
                format!("must be non-negative, got {}", self.lambda),
            );
        }
        if !(self.pinn_step > 0.0) {
            return bad(
                "pinn_step",
                format!("must be positive, got {}", self.pinn_step),
            );
        }
        if self.chunk_rows == 0 {
            return bad("chunk_rows", "must be at least 1".into());
        }
        Ok(())
    }

    /// The sampling margin that keeps control volumes inside the domain.
    /// Shared by every method so comparisons see the same points.
    pub fn margin(&self) -> f64 {
        self.cv.eps
    }
}

/// Per-point residuals and the assembled loss.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBatch {
    pub interior: Vec<f64>,
    pub boundary: Vec<f64>,
    pub lambda: f64,
    /// `mean(interior^2)`.
    pub interior_term: f64,
    /// `mean(boundary^2)`.
    pub boundary_term: f64,
    pub loss: f64,
}

impl ResidualBatch {
    pub fn new(interior: Vec<f64>, boundary: Vec<f64>, lambda: f64) -> Self {
        let interior_term = mean_square(&interior);
        let boundary_term = mean_square(&boundary);
        Self {
            interior,
            boundary,
            lambda,
            interior_term,
            boundary_term,
            loss: interior_term + lambda * boundary_term,
        }
    }
}

/// Pairwise-summed mean of squares (0 for an empty slice).
pub fn mean_square(v: &[f64]) -> f64 {
    fn pairwise(v: &[f64]) -> f64 {
        if v.len() <= 32 {
            v.iter().map(|x| x * x).sum()
        } else {
            let (a, b) = v.split_at(v.len() / 2);
            pairwise(a) + pairwise(b)
        }
    }
    if v.is_empty() {
        0.0
    } else {
        pairwise(v) / v.len() as f64
    }
}

/// Per-point stream: depends on the coordinates, not on the position in
/// the batch, so the loss is invariant to point order.
pub fn point_seed(seed: u64, x: &[f64]) -> u64 {
    x.iter().fold(seed, |s, v| derive_seed(s, v.to_bits()))
}

/// Control volume at collocation point `x` for one loss evaluation seeded
/// with `seed`. The PINN baseline uses the central-difference stencil.
pub fn control_volume(
    problem: &Problem,
    cfg: &LossConfig,
    x: &[f64],
    seed: u64,
) -> Result<ControlVolume, LossError> {
    let ds = problem.spatial_dim();
    let point_seed = point_seed(seed, x);
    Ok(match cfg.method {
        Method::DfvmCube => {
            ControlVolume::cube(x, ds, cfg.cv.eps, cfg.cv.k, cfg.cv.qmc, point_seed)?
        }
        Method::DfvmSphere => {
            let dirs = sphere_directions(ds, cfg.cv.k, cfg.cv.antithetic, point_seed)?;
            ControlVolume::sphere(x, cfg.cv.eps, &dirs)
        }
        Method::Pinn => ControlVolume::central_difference(x, ds, cfg.pinn_step),
    })
}

/// Volume-normalized flux of `-A grad u` over a sphere of radius `cv.eps`
/// sampled with `cv.k` directions.
pub fn flux_sphere(
    u: &impl ScalarField,
    a: &Diffusion,
    x: &[f64],
    ds: usize,
    cv: &CvSpec,
    seed: u64,
) -> Result<f64, LossError> {
    let dirs = sphere_directions(ds, cv.k, cv.antithetic, seed)?;
    Ok(ControlVolume::sphere(x, cv.eps, &dirs).flux(u, a))
}

/// Volume-normalized flux of `-A grad u` over the cube `x ± cv.eps` with
/// `cv.k` points per face.
pub fn flux_cube(
    u: &impl ScalarField,
    a: &Diffusion,
    x: &[f64],
    ds: usize,
    cv: &CvSpec,
    seed: u64,
) -> Result<f64, LossError> {
    Ok(ControlVolume::cube(x, ds, cv.eps, cv.k, cv.qmc, seed)?.flux(u, a))
}

/// `h = B . grad u + c u + s_t u_t + N(grad u) - f` at the center, or
/// averaged over the nodes of `cv`.
pub fn lower_order_term(
    u: &impl ScalarField,
    problem: &Problem,
    x: &[f64],
    rule: LowerOrderRule,
    cv: &ControlVolume,
) -> f64 {
    let mut g = vec![0.0; problem.dim()];
    let mut at = |p: &[f64]| {
        u.gradient(p, &mut g);
        problem.lower_order(p, u.value(p), &g)
    };
    match rule {
        LowerOrderRule::CenterPoint => at(x),
        LowerOrderRule::CvAverage => {
            let total: f64 = cv.points.rows().map(&mut at).sum();
            total / cv.len() as f64
        }
    }
}

/// Interior residual of `u` at `x`, evaluated point by point. Matches the
/// batched loss for the same seed.
pub fn interior_residual(
    u: &impl ScalarField,
    problem: &Problem,
    cfg: &LossConfig,
    x: &[f64],
    seed: u64,
) -> Result<f64, LossError> {
    let cv = control_volume(problem, cfg, x, seed)?;
    let flux = match (cfg.method, cfg.estimator) {
        (Method::Pinn, _) | (_, FluxEstimator::AdGradient) => cv.flux(u, &problem.diffusion),
        (_, FluxEstimator::Difference) => cv.flux_by_differences(u, &problem.diffusion, cfg.cv.eps),
    };
    Ok(flux + lower_order_term(u, problem, x, cfg.lower_order, &cv))
}

/// Residuals and loss of an arbitrary field, point by point.
pub fn field_residuals(
    u: &impl ScalarField,
    problem: &Problem,
    cfg: &LossConfig,
    interior: &crate::sampling::Points,
    boundary: &crate::sampling::Points,
    seed: u64,
) -> Result<ResidualBatch, LossError> {
    let int = interior
        .rows()
        .map(|x| interior_residual(u, problem, cfg, x, seed))
        .collect::<Result<Vec<_>, _>>()?;
    let bnd = boundary
        .rows()
        .map(|x| u.value(x) - problem.boundary_value(x))
        .collect();
    Ok(ResidualBatch::new(int, bnd, cfg.lambda))
}

#[cfg(test)]
mod tests;
