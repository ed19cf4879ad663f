//! Stochastic surface estimators of `div(A grad u)` at a point, and a dense
//! finite-difference oracle to check them against.

pub mod fields;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::sampling::Points;

/// A scalar function with an input gradient.
pub trait ScalarField {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], out: &mut [f64]);

    /// Values at every row of `xs`.
    fn values(&self, xs: &[f64]) -> Vec<f64> {
        xs.chunks_exact(self.dim()).map(|x| self.value(x)).collect()
    }
}

impl<F: ScalarField + ?Sized> ScalarField for &F {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        (**self).value(x)
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        (**self).gradient(x, out)
    }
    fn values(&self, xs: &[f64]) -> Vec<f64> {
        (**self).values(xs)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DivestError {
    #[error("estimator needs a scalar diffusion coefficient")]
    NotScalar,
    #[error("estimator needs the gradient of the diffusion coefficient")]
    MissingGradient,
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("need at least one direction")]
    NoDirections,
    #[error("point has dimension {got}, field expects {expected}")]
    Dimension { expected: usize, got: usize },
}

type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type VectorFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Diffusion coefficient `A(x)`.
///
/// Coefficients take the full point (including time, if any) and act on
/// vectors of the spatial dimension.
#[derive(Clone)]
pub enum Diffusion {
    Identity,
    /// `a * I`.
    Constant(f64),
    /// `alpha(x) * I`, optionally with `grad alpha`.
    Scalar {
        alpha: ScalarFn,
        grad: Option<VectorFn>,
    },
    /// Symmetric matrix written row-major into a `d*d` buffer, with its
    /// column divergence `(sum_i d_i A_ij)_j`.
    Matrix {
        a: VectorFn,
        div: VectorFn,
    },
}

impl fmt::Debug for Diffusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Identity => f.write_str("Identity"),
            Self::Constant(a) => write!(f, "Constant({a})"),
            Self::Scalar { grad, .. } => write!(f, "Scalar {{ grad: {} }}", grad.is_some()),
            Self::Matrix { .. } => f.write_str("Matrix"),
        }
    }
}

impl Diffusion {
    pub fn scalar(
        alpha: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: Option<VectorFn>,
    ) -> Self {
        Self::Scalar {
            alpha: Arc::new(alpha),
            grad,
        }
    }

    pub fn matrix(
        a: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        div: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self::Matrix {
            a: Arc::new(a),
            div: Arc::new(div),
        }
    }

    /// `alpha(x) = 1 + |x|^2` with its gradient `2x`.
    pub fn quadratic() -> Self {
        Self::scalar(
            |x| 1.0 + x.iter().map(|v| v * v).sum::<f64>(),
            Some(Arc::new(|x: &[f64], out: &mut [f64]| {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = 2.0 * v;
                }
            })),
        )
    }

    /// `alpha(x)` when `A = alpha I`.
    pub fn scalar_value(&self, x: &[f64]) -> Option<f64> {
        match self {
            Self::Identity => Some(1.0),
            Self::Constant(a) => Some(*a),
            Self::Scalar { alpha, .. } => Some(alpha(x)),
            Self::Matrix { .. } => None,
        }
    }

    /// `grad alpha(x)` over the `out.len()` spatial coordinates.
    pub fn scalar_gradient(&self, x: &[f64], out: &mut [f64]) -> Result<(), DivestError> {
        match self {
            Self::Identity | Self::Constant(_) => {
                out.fill(0.0);
                Ok(())
            }
            Self::Scalar { grad: Some(g), .. } => {
                g(x, out);
                Ok(())
            }
            Self::Scalar { grad: None, .. } => Err(DivestError::MissingGradient),
            Self::Matrix { .. } => Err(DivestError::NotScalar),
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, Self::Identity) || matches!(self, Self::Constant(a) if *a == 1.0)
    }

    /// `out = A(x) v`.
    pub fn apply(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        match self {
            Self::Matrix { a, .. } => {
                let d = v.len();
                let mut m = vec![0.0; d * d];
                a(x, &mut m);
                for (i, o) in out.iter_mut().enumerate() {
                    *o = m[i * d..(i + 1) * d]
                        .iter()
                        .zip(v)
                        .map(|(a, b)| a * b)
                        .sum();
                }
            }
            _ => {
                let s = self
                    .scalar_value(x)
                    .expect("non-matrix coefficient is scalar");
                for (o, vi) in out.iter_mut().zip(v) {
                    *o = s * vi;
                }
            }
        }
    }

    /// Dense `d x d` matrix `A(x)`.
    pub fn dense(&self, x: &[f64], d: usize) -> Vec<f64> {
        let mut m = vec![0.0; d * d];
        match self {
            Self::Matrix { a, .. } => a(x, &mut m),
            _ => {
                let s = self
                    .scalar_value(x)
                    .expect("non-matrix coefficient is scalar");
                for i in 0..d {
                    m[i * d + i] = s;
                }
            }
        }
        m
    }

    /// Column divergence `(sum_i d_i A_ij)_j`.
    pub fn divergence(&self, x: &[f64], out: &mut [f64]) -> Result<(), DivestError> {
        match self {
            Self::Matrix { div, .. } => {
                div(x, out);
                Ok(())
            }
            _ => self.scalar_gradient(x, out),
        }
    }

    /// The same coefficient expressed through the general matrix path.
    pub fn to_matrix(&self, d: usize) -> Result<Self, DivestError> {
        if let Self::Matrix { .. } = self {
            return Ok(self.clone());
        }
        let s = self.clone();
        let t = self.clone();
        // fail early if the divergence is unavailable
        self.scalar_gradient(&vec![0.0; d], &mut vec![0.0; d])?;
        Ok(Self::matrix(
            move |x, m| m.copy_from_slice(&s.dense(x, d)),
            move |x, out| {
                t.scalar_gradient(x, out)
                    .expect("gradient availability checked above")
            },
        ))
    }
}

fn check(u: &impl ScalarField, x: &[f64], r: f64, dirs: &Points) -> Result<usize, DivestError> {
    let d = u.dim();
    if x.len() != d {
        return Err(DivestError::Dimension {
            expected: d,
            got: x.len(),
        });
    }
    if !(r > 0.0) {
        return Err(DivestError::NonPositive {
            name: "radius",
            value: r,
        });
    }
    if dirs.is_empty() {
        return Err(DivestError::NoDirections);
    }
    if dirs.dim() != d {
        return Err(DivestError::Dimension {
            expected: d,
            got: dirs.dim(),
        });
    }
    Ok(d)
}

fn offset(x: &[f64], s: f64, n: &[f64], out: &mut [f64]) {
    for ((o, a), b) in out.iter_mut().zip(x).zip(n) {
        *o = a + s * b;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Q1 = d/(k r) sum_j (A grad u . n_j)(x + r n_j)`, with exact input gradients.
pub fn q1_sphere_ad(
    u: &impl ScalarField,
    a: &Diffusion,
    x: &[f64],
    r: f64,
    dirs: &Points,
) -> Result<f64, DivestError> {
    let d = check(u, x, r, dirs)?;
    let (mut y, mut g, mut ag) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let mut sum = 0.0;
    for n in dirs.rows() {
        offset(x, r, n, &mut y);
        u.gradient(&y, &mut g);
        a.apply(&y, &g, &mut ag);
        sum += dot(&ag, n);
    }
    Ok(d as f64 / (dirs.len() as f64 * r) * sum)
}

/// `Q2`: [`q1_sphere_ad`] with each flux replaced by a central difference of
/// step `eps_fd` along `A n_j`. Uses `2k` field values and no gradients.
pub fn q2_sphere_diff(
    u: &impl ScalarField,
    a: &Diffusion,
    x: &[f64],
    r: f64,
    eps_fd: f64,
    dirs: &Points,
) -> Result<f64, DivestError> {
    let d = check(u, x, r, dirs)?;
    if !(eps_fd > 0.0) {
        return Err(DivestError::NonPositive {
            name: "difference step",
            value: eps_fd,
        });
    }
    let (mut y, mut an, mut p) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let mut sum = 0.0;
    for n in dirs.rows() {
        offset(x, r, n, &mut y);
        a.apply(&y, n, &mut an);
        offset(&y, eps_fd, &an, &mut p);
        let plus = u.value(&p);
        offset(&y, -eps_fd, &an, &mut p);
        sum += plus - u.value(&p);
    }
    Ok(d as f64 / (2.0 * dirs.len() as f64 * r * eps_fd) * sum)
}

/// `Q3 = d/(2 k r^2) sum_j alpha(x + r n_j) (u(x + 2r n_j) - u(x))`, for `A = alpha I`.
pub fn q3_sphere_onesided(
    u: &impl ScalarField,
    a: &Diffusion,
    x: &[f64],
    r: f64,
    dirs: &Points,
) -> Result<f64, DivestError> {
    let d = check(u, x, r, dirs)?;
    if matches!(a, Diffusion::Matrix { .. }) {
        return Err(DivestError::NotScalar);
    }
    let u0 = u.value(x);
    let mut y = vec![0.0; d];
    let mut sum = 0.0;
    for n in dirs.rows() {
        offset(x, r, n, &mut y);
        let alpha = a.scalar_value(&y).expect("checked scalar");
        offset(x, 2.0 * r, n, &mut y);
        sum += alpha * (u.value(&y) - u0);
    }
    Ok(d as f64 / (2.0 * dirs.len() as f64 * r * r) * sum)
}

/// `Q4 = 2d/(k r^2) (sum_j u(x + r n_j) - k u(x))`, the Laplacian.
pub fn q4_constant_alpha(
    u: &impl ScalarField,
    x: &[f64],
    r: f64,
    dirs: &Points,
) -> Result<f64, DivestError> {
    let d = check(u, x, r, dirs)?;
    let k = dirs.len() as f64;
    let mut y = vec![0.0; d];
    let mut sum = 0.0;
    for n in dirs.rows() {
        offset(x, r, n, &mut y);
        sum += u.value(&y);
    }
    Ok(2.0 * d as f64 / (k * r * r) * (sum - k * u.value(x)))
}

/// `Q5 = alpha(x) Q4 + (u(x + r grad alpha) - u(x - r grad alpha)) / (2r)`.
pub fn q5_split(
    u: &impl ScalarField,
    a: &Diffusion,
    x: &[f64],
    r: f64,
    dirs: &Points,
) -> Result<f64, DivestError> {
    let d = check(u, x, r, dirs)?;
    let alpha = a.scalar_value(x).ok_or(DivestError::NotScalar)?;
    let mut ga = vec![0.0; d];
    a.scalar_gradient(x, &mut ga)?;
    let q4 = q4_constant_alpha(u, x, r, dirs)?;
    if ga.iter().all(|v| *v == 0.0) {
        return Ok(alpha * q4);
    }
    let mut y = vec![0.0; d];
    offset(x, r, &ga, &mut y);
    let plus = u.value(&y);
    offset(x, -r, &ga, &mut y);
    Ok(alpha * q4 + (plus - u.value(&y)) / (2.0 * r))
}

/// Dense nested central differences of `div(A grad u)` with step `h`:
/// the flux `A grad u` is differenced on all `d^2` (i, j) pairs, using
/// `4 d^2` field values.
pub fn brute_divergence(
    u: &impl ScalarField,
    a: &Diffusion,
    x: &[f64],
    h: f64,
) -> Result<f64, DivestError> {
    let d = u.dim();
    if x.len() != d {
        return Err(DivestError::Dimension {
            expected: d,
            got: x.len(),
        });
    }
    if !(h > 0.0) {
        return Err(DivestError::NonPositive {
            name: "step",
            value: h,
        });
    }
    let grad_fd = |y: &mut Vec<f64>, g: &mut [f64]| {
        for j in 0..d {
            let orig = y[j];
            y[j] = orig + h;
            let p = u.value(y);
            y[j] = orig - h;
            let m = u.value(y);
            y[j] = orig;
            g[j] = (p - m) / (2.0 * h);
        }
    };
    let mut y = x.to_vec();
    let mut g = vec![0.0; d];
    let mut total = 0.0;
    for i in 0..d {
        let mut flux = [0.0; 2];
        for (s, f) in [1.0, -1.0].iter().zip(flux.iter_mut()) {
            y[i] = x[i] + s * h;
            grad_fd(&mut y, &mut g);
            let m = a.dense(&y, d);
            *f = dot(&m[i * d..(i + 1) * d], &g);
        }
        y[i] = x[i];
        total += (flux[0] - flux[1]) / (2.0 * h);
    }
    Ok(total)
}
