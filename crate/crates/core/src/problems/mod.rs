//! Benchmark problems written in the residual form
//!
//! ```text
//! -div(A grad u) + B . grad u + c u + s_t u_t + N(grad u) - f = 0
//! ```
//!
//! with Dirichlet (or terminal) data `u = g`. `s_t` is zero for elliptic
//! problems.

mod exact;

pub use exact::{BlackScholesExact, Exact, ExactField, LshapeExact, NonlinearExact, PoissonExact};

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::divest::Diffusion;
use crate::network::NetworkConfig;
use crate::sampling::{
    sample_boundary, sample_interior, Domain, DomainKind, Points, SamplingError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error(
        "unknown problem `{0}` (expected poisson-hd, poisson-lshape, nonlinear or black-scholes)"
    )]
    Unknown(String),
    #[error("{problem} needs dimension >= {min}, got {got}")]
    Dimension {
        problem: &'static str,
        min: usize,
        got: usize,
    },
    #[error("{problem} has fixed dimension {fixed}, got {got}")]
    FixedDimension {
        problem: &'static str,
        fixed: usize,
        got: usize,
    },
    #[error("terminal time must be positive, got {0}")]
    Horizon(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorKind {
    Elliptic,
    Parabolic,
}

/// Extra first-order nonlinearity in the residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Nonlinearity {
    /// `|grad u|^2 / 2` over the spatial gradient.
    HalfGradSquared,
}

/// Settings the experiments use for each problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Defaults {
    pub eps: f64,
    pub n_interior: usize,
    pub n_boundary: usize,
    pub width: usize,
}

type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type VectorFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

#[derive(Clone)]
pub struct Problem {
    pub name: &'static str,
    pub kind: OperatorKind,
    pub domain: DomainKind,
    pub diffusion: Diffusion,
    drift: Option<VectorFn>,
    /// Constant reaction coefficient `c`.
    pub reaction: f64,
    /// Coefficient `s_t` of `u_t`.
    pub time_coef: f64,
    pub nonlinear: Option<Nonlinearity>,
    source: ScalarFn,
    boundary: ScalarFn,
    exact: Arc<dyn Exact>,
    pub defaults: Defaults,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("kind", &self.kind)
            .field("domain", &self.domain)
            .field("diffusion", &self.diffusion)
            .field("reaction", &self.reaction)
            .field("time_coef", &self.time_coef)
            .field("nonlinear", &self.nonlinear)
            .field("defaults", &self.defaults)
            .finish_non_exhaustive()
    }
}

pub const DEFAULT_BLOCKS: usize = 3;

pub const NAMES: [&str; 4] = ["poisson-hd", "poisson-lshape", "nonlinear", "black-scholes"];

/// Looks a problem up by its CLI name. `dim` is the spatial dimension where
/// the problem has one to choose.
pub fn by_name(name: &str, dim: Option<usize>) -> Result<Problem, ProblemError> {
    match name {
        "poisson-hd" => poisson_highdim(dim.unwrap_or(10)),
        "poisson-lshape" => fixed(poisson_lshape(), dim),
        "nonlinear" => nonlinear_elliptic(dim.unwrap_or(5)),
        "black-scholes" => fixed(black_scholes(), dim),
        other => Err(ProblemError::Unknown(other.to_string())),
    }
}

fn fixed(p: Problem, dim: Option<usize>) -> Result<Problem, ProblemError> {
    match dim {
        Some(d) if d != p.spatial_dim() => Err(ProblemError::FixedDimension {
            problem: p.name,
            fixed: p.spatial_dim(),
            got: d,
        }),
        _ => Ok(p),
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn alpha_quadratic(x: &[f64]) -> f64 {
    1.0 + x.iter().map(|v| v * v).sum::<f64>()
}

/// `-lap u = f` on `(0,1)^d` with `u = s^2 + sin s`, `s = mean(x)`.
pub fn poisson_highdim(d: usize) -> Result<Problem, ProblemError> {
    if d == 0 {
        return Err(ProblemError::Dimension {
            problem: "poisson-hd",
            min: 1,
            got: d,
        });
    }
    let exact = Arc::new(PoissonExact { dim: d });
    let g = exact.clone();
    Ok(Problem {
        name: "poisson-hd",
        kind: OperatorKind::Elliptic,
        domain: DomainKind::Hypercube {
            lo: 0.0,
            hi: 1.0,
            dim: d,
        },
        diffusion: Diffusion::Identity,
        drift: None,
        reaction: 0.0,
        time_coef: 0.0,
        nonlinear: None,
        source: Arc::new(move |x| (mean(x).sin() - 2.0) / d as f64),
        boundary: Arc::new(move |x| g.value(x)),
        exact,
        defaults: Defaults {
            eps: 1e-3,
            n_interior: 2000,
            n_boundary: 100 * d,
            // 128 for the 100- and 200-dimensional runs, 40 below
            width: if d >= 100 { 128 } else { 40 },
        },
    })
}

/// `-div((1+|x|^2) grad u) = f` on the L-shape `(-1,1)^2 \ [0,1)^2`.
pub fn poisson_lshape() -> Problem {
    let exact = Arc::new(LshapeExact);
    let g = exact.clone();
    Problem {
        name: "poisson-lshape",
        kind: OperatorKind::Elliptic,
        domain: DomainKind::Lshape { dim: 2 },
        diffusion: Diffusion::quadratic(),
        drift: None,
        reaction: 0.0,
        time_coef: 0.0,
        nonlinear: None,
        source: Arc::new(|x| {
            let (s1, c1) = (PI / 2.0 * x[0]).sin_cos();
            let (s2, c2) = (PI / 2.0 * x[1]).sin_cos();
            PI * PI / 2.0 * alpha_quadratic(x) * s1 * c2 + PI * x[1] * s1 * s2 - PI * x[0] * c1 * c2
        }),
        boundary: Arc::new(move |x| g.value(x)),
        exact,
        defaults: Defaults {
            eps: 1e-3,
            n_interior: 2000,
            n_boundary: 600,
            width: 40,
        },
    }
}

/// `-div((1+|x|^2) grad u) + |grad u|^2/2 = f` on `(-1,1)^d`.
pub fn nonlinear_elliptic(d: usize) -> Result<Problem, ProblemError> {
    if d < 2 {
        return Err(ProblemError::Dimension {
            problem: "nonlinear",
            min: 2,
            got: d,
        });
    }
    let exact = Arc::new(NonlinearExact { dim: d });
    let g = exact.clone();
    Ok(Problem {
        name: "nonlinear",
        kind: OperatorKind::Elliptic,
        domain: DomainKind::Hypercube {
            lo: -1.0,
            hi: 1.0,
            dim: d,
        },
        diffusion: Diffusion::quadratic(),
        drift: None,
        reaction: 0.0,
        time_coef: 0.0,
        nonlinear: Some(Nonlinearity::HalfGradSquared),
        source: Arc::new(|x| {
            let rho0 = PI * x[0] * x[0] / 2.0 + x[1] * x[1] / 2.0;
            let rho1 = PI * PI * x[0] * x[0] / 4.0 + x[1] * x[1] / 4.0;
            let a = alpha_quadratic(x);
            let (s, c) = rho0.sin_cos();
            4.0 * rho1 * a * s - 4.0 * rho0 * c - (PI + 1.0) * a * c + 2.0 * rho1 * c * c
        }),
        boundary: Arc::new(move |x| g.value(x)),
        exact,
        defaults: Defaults {
            eps: 1e-5,
            n_interior: 10_000,
            n_boundary: 60 * d,
            width: 40,
        },
    })
}

/// Black–Scholes on `[0,2]^2 x (0,T)` with terminal data `|x|^2`, `T = 1`.
pub fn black_scholes() -> Problem {
    black_scholes_with_horizon(1.0).expect("T = 1 is valid")
}

/// Black–Scholes in divergence form,
///
/// ```text
/// u_t = -0.08 div(diag(x^2) grad u) + 0.05 u + 0.11 x . grad u,
/// ```
///
/// written with `A = 0.08 diag(x^2)`, `B = 0.11 x`, `c = 0.05`, `s_t = -1`
/// (the negated equation, so `A` is positive definite).
pub fn black_scholes_with_horizon(t_end: f64) -> Result<Problem, ProblemError> {
    if !(t_end > 0.0) {
        return Err(ProblemError::Horizon(t_end));
    }
    let exact = Arc::new(BlackScholesExact { t_end });
    Ok(Problem {
        name: "black-scholes",
        kind: OperatorKind::Parabolic,
        domain: DomainKind::Spacetime {
            spatial: Box::new(DomainKind::Hypercube {
                lo: 0.0,
                hi: 2.0,
                dim: 2,
            }),
            t0: 0.0,
            t_end,
        },
        diffusion: Diffusion::matrix(
            |x, m| {
                m.copy_from_slice(&[0.08 * x[0] * x[0], 0.0, 0.0, 0.08 * x[1] * x[1]]);
            },
            |x, out| {
                out[0] = 0.16 * x[0];
                out[1] = 0.16 * x[1];
            },
        ),
        drift: Some(Arc::new(|x, out| {
            out[0] = 0.11 * x[0];
            out[1] = 0.11 * x[1];
        })),
        reaction: 0.05,
        time_coef: -1.0,
        nonlinear: None,
        source: Arc::new(|_| 0.0),
        boundary: Arc::new(|x| x[0] * x[0] + x[1] * x[1]),
        exact,
        defaults: Defaults {
            eps: 1e-3,
            n_interior: 1000,
            n_boundary: 1000,
            width: 64,
        },
    })
}

impl Problem {
    /// Network input dimension (spatial plus time).
    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Residual network with three blocks at the problem's default width.
    pub fn default_network(&self) -> NetworkConfig {
        NetworkConfig::resnet(self.dim(), self.defaults.width, DEFAULT_BLOCKS)
    }

    pub fn spatial_dim(&self) -> usize {
        self.domain.spatial_dim()
    }

    pub fn is_parabolic(&self) -> bool {
        self.kind == OperatorKind::Parabolic
    }

    pub fn has_drift(&self) -> bool {
        self.drift.is_some()
    }

    /// `B(x)` over the spatial coordinates.
    pub fn drift(&self, x: &[f64], out: &mut [f64]) {
        match &self.drift {
            Some(b) => b(x, out),
            None => out.fill(0.0),
        }
    }

    /// Direction `(B(x), s_t)` whose derivative of `u` gives the first-order
    /// linear terms `B . grad u + s_t u_t`. Length is [`Problem::dim`].
    pub fn first_order_direction(&self, x: &[f64], out: &mut [f64]) {
        let ds = self.spatial_dim();
        self.drift(x, &mut out[..ds]);
        if self.is_parabolic() {
            out[ds] = self.time_coef;
        }
    }

    /// Whether any first-order linear term is present.
    pub fn has_first_order(&self) -> bool {
        self.has_drift() || self.time_coef != 0.0
    }

    /// Replaces the source term `f`.
    pub fn with_source(mut self, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.source = Arc::new(f);
        self
    }

    /// Replaces the boundary (or terminal) data `g`.
    pub fn with_boundary(mut self, g: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.boundary = Arc::new(g);
        self
    }

    pub fn source(&self, x: &[f64]) -> f64 {
        (self.source)(x)
    }

    pub fn boundary_value(&self, x: &[f64]) -> f64 {
        (self.boundary)(x)
    }

    pub fn exact(&self) -> &dyn Exact {
        &*self.exact
    }

    pub fn exact_field(&self) -> ExactField<'_> {
        ExactField(&*self.exact)
    }

    /// `B . grad u + c u + s_t u_t + N(grad u) - f` given `u` and the full
    /// input gradient at `x`.
    pub fn lower_order(&self, x: &[f64], u: f64, grad: &[f64]) -> f64 {
        let mut dir = vec![0.0; self.dim()];
        self.first_order_direction(x, &mut dir);
        let linear: f64 = dir.iter().zip(grad).map(|(a, b)| a * b).sum();
        let nonlinear = match self.nonlinear {
            Some(Nonlinearity::HalfGradSquared) => {
                0.5 * grad[..self.spatial_dim()]
                    .iter()
                    .map(|g| g * g)
                    .sum::<f64>()
            }
            None => 0.0,
        };
        linear + self.reaction * u + nonlinear - self.source(x)
    }

    /// Strong-form residual of the exact solution at `x`; zero up to rounding.
    pub fn exact_residual(&self, x: &[f64]) -> f64 {
        let (d, ds) = (self.dim(), self.spatial_dim());
        let mut grad = vec![0.0; d];
        let mut hess = vec![0.0; d * d];
        self.exact.gradient(x, &mut grad);
        self.exact.hessian(x, &mut hess);
        let a = self.diffusion.dense(x, ds);
        let mut div_a = vec![0.0; ds];
        self.diffusion
            .divergence(x, &mut div_a)
            .expect("shipped coefficients provide their divergence");
        let mut div_flux = 0.0;
        for j in 0..ds {
            div_flux += div_a[j] * grad[j];
            for i in 0..ds {
                div_flux += a[i * ds + j] * hess[i * d + j];
            }
        }
        -div_flux + self.lower_order(x, self.exact.value(x), &grad)
    }

    /// The domain with collocation margin `eps`.
    pub fn domain_with_margin(&self, eps: f64) -> Domain {
        Domain::new(self.domain.clone(), eps)
    }

    pub fn interior_points(
        &self,
        margin: f64,
        n: usize,
        seed: u64,
    ) -> Result<Points, SamplingError> {
        sample_interior(&self.domain_with_margin(margin), n, seed)
    }

    pub fn boundary_points(&self, n: usize, seed: u64) -> Result<Points, SamplingError> {
        sample_boundary(&self.domain_with_margin(0.0), n, seed)
    }

    /// Uniform points at `t = t0` for the initial-time error of parabolic problems.
    pub fn initial_points(&self, n: usize, seed: u64) -> Result<Option<Points>, SamplingError> {
        let DomainKind::Spacetime { spatial, t0, .. } = &self.domain else {
            return Ok(None);
        };
        let s = sample_interior(&Domain::new((**spatial).clone(), 0.0), n, seed)?;
        let mut out = Points::with_capacity(self.dim(), n);
        let mut row = vec![0.0; self.dim()];
        for x in s.rows() {
            row[..x.len()].copy_from_slice(x);
            row[x.len()] = *t0;
            out.push(&row);
        }
        Ok(Some(out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_problems() -> Vec<Problem> {
        vec![
            poisson_highdim(10).unwrap(),
            poisson_lshape(),
            nonlinear_elliptic(5).unwrap(),
            black_scholes(),
        ]
    }

    #[test]
    fn exact_solutions_satisfy_the_equations() {
        for p in all_problems() {
            let pts = p.interior_points(0.0, 1000, 11).unwrap();
            let worst = pts
                .rows()
                .map(|x| p.exact_residual(x).abs())
                .fold(0.0, f64::max);
            assert!(worst <= 1e-8, "{}: {worst}", p.name);
        }
    }

    #[test]
    fn boundary_data_matches_exact_solution() {
        for p in all_problems() {
            let pts = p.boundary_points(1000, 12).unwrap();
            for x in pts.rows() {
                let gap = (p.boundary_value(x) - p.exact().value(x)).abs();
                assert!(gap <= 1e-12, "{}: {gap} at {x:?}", p.name);
            }
        }
    }

    #[test]
    fn poisson_point_values() {
        let p = poisson_highdim(10).unwrap();
        assert_eq!(p.exact().value(&[0.0; 10]), 0.0);
        assert!((p.exact().value(&[1.0; 10]) - (1.0 + 1f64.sin())).abs() < 1e-15);
        assert_eq!(p.defaults.n_boundary, 1000);
    }

    #[test]
    fn lshape_point_values() {
        let p = poisson_lshape();
        assert!((p.exact().value(&[-1.0, 0.0]) + 1.0).abs() < 1e-15);
        assert_eq!(p.exact().value(&[0.0, -1.0]), 0.0);
    }

    #[test]
    fn nonlinear_depends_on_first_two_coordinates() {
        let p = nonlinear_elliptic(5).unwrap();
        assert_eq!(p.exact().value(&[0.0; 5]), 0.0);
        let a = p.exact().value(&[0.3, -0.5, 0.1, 0.2, 0.9]);
        let b = p.exact().value(&[0.3, -0.5, -0.7, 0.0, 0.4]);
        assert_eq!(a, b);
        assert!(matches!(
            nonlinear_elliptic(1),
            Err(ProblemError::Dimension { .. })
        ));
    }

    #[test]
    fn black_scholes_terminal_and_origin() {
        let p = black_scholes();
        assert_eq!(p.exact().value(&[1.5, 0.5, 1.0]), 1.5 * 1.5 + 0.5 * 0.5);
        for t in [0.0, 0.3, 1.0] {
            assert_eq!(p.exact().value(&[0.0, 0.0, t]), 0.0);
        }
        let init = p.initial_points(50, 1).unwrap().unwrap();
        assert!(init.rows().all(|x| x[2] == 0.0));
    }

    #[test]
    fn diffusion_is_symmetric() {
        let mut r = crate::rng::rng(3);
        use rand::Rng;
        for p in all_problems() {
            let ds = p.spatial_dim();
            for _ in 0..20 {
                let x: Vec<f64> = (0..p.dim()).map(|_| r.random_range(0.0..1.0)).collect();
                let a = p.diffusion.dense(&x, ds);
                for i in 0..ds {
                    for j in 0..ds {
                        assert_eq!(a[i * ds + j], a[j * ds + i]);
                    }
                }
            }
        }
    }

    #[test]
    fn lookup_by_name() {
        for name in NAMES {
            assert_eq!(by_name(name, None).unwrap().name, name);
        }
        assert_eq!(by_name("poisson-hd", Some(3)).unwrap().dim(), 3);
        assert!(matches!(
            by_name("heat", None),
            Err(ProblemError::Unknown(_))
        ));
        assert!(by_name("poisson-lshape", Some(3)).is_err());
    }
}
