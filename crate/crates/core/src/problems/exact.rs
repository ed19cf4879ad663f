//! Closed-form solutions with their first and second derivatives.

use std::f64::consts::PI;

use crate::divest::ScalarField;

pub trait Exact: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], out: &mut [f64]);
    /// Row-major `dim x dim` Hessian.
    fn hessian(&self, x: &[f64], out: &mut [f64]);
}

/// An exact solution seen as a [`ScalarField`].
#[derive(Clone, Copy)]
pub struct ExactField<'a>(pub &'a dyn Exact);

impl ScalarField for ExactField<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.0.value(x)
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        self.0.gradient(x, out)
    }
}

/// `s^2 + sin s` with `s = mean(x)`.
#[derive(Debug, Clone, Copy)]
pub struct PoissonExact {
    pub dim: usize,
}

impl PoissonExact {
    fn s(&self, x: &[f64]) -> f64 {
        x.iter().sum::<f64>() / self.dim as f64
    }
}

impl Exact for PoissonExact {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        let s = self.s(x);
        s * s + s.sin()
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let s = self.s(x);
        out.fill((2.0 * s + s.cos()) / self.dim as f64);
    }
    fn hessian(&self, x: &[f64], out: &mut [f64]) {
        let s = self.s(x);
        let d = self.dim as f64;
        out.fill((2.0 - s.sin()) / (d * d));
    }
}

/// `sin(pi x1 / 2) cos(pi x2 / 2)`.
#[derive(Debug, Clone, Copy)]
pub struct LshapeExact;

impl Exact for LshapeExact {
    fn dim(&self) -> usize {
        2
    }
    fn value(&self, x: &[f64]) -> f64 {
        (PI / 2.0 * x[0]).sin() * (PI / 2.0 * x[1]).cos()
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let k = PI / 2.0;
        let (s1, c1) = (k * x[0]).sin_cos();
        let (s2, c2) = (k * x[1]).sin_cos();
        out[0] = k * c1 * c2;
        out[1] = -k * s1 * s2;
    }
    fn hessian(&self, x: &[f64], out: &mut [f64]) {
        let k = PI / 2.0;
        let (s1, c1) = (k * x[0]).sin_cos();
        let (s2, c2) = (k * x[1]).sin_cos();
        out[0] = -k * k * s1 * c2;
        out[1] = -k * k * c1 * s2;
        out[2] = out[1];
        out[3] = -k * k * s1 * c2;
    }
}

/// `sin(pi x1^2 / 2 + x2^2 / 2)` in `d >= 2` dimensions.
#[derive(Debug, Clone, Copy)]
pub struct NonlinearExact {
    pub dim: usize,
}

impl Exact for NonlinearExact {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        (PI * x[0] * x[0] / 2.0 + x[1] * x[1] / 2.0).sin()
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let c = (PI * x[0] * x[0] / 2.0 + x[1] * x[1] / 2.0).cos();
        out.fill(0.0);
        out[0] = PI * x[0] * c;
        out[1] = x[1] * c;
    }
    fn hessian(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        let (s, c) = (PI * x[0] * x[0] / 2.0 + x[1] * x[1] / 2.0).sin_cos();
        let p = [PI * x[0], x[1]];
        out.fill(0.0);
        out[0] = PI * c - p[0] * p[0] * s;
        out[1] = -p[0] * p[1] * s;
        out[d] = out[1];
        out[d + 1] = c - p[1] * p[1] * s;
    }
}

/// `exp(0.21 (T - t)) |x|^2` on points `(x1, x2, t)`.
#[derive(Debug, Clone, Copy)]
pub struct BlackScholesExact {
    pub t_end: f64,
}

const BS_RATE: f64 = 0.05 + 0.4 * 0.4;

impl Exact for BlackScholesExact {
    fn dim(&self) -> usize {
        3
    }
    fn value(&self, x: &[f64]) -> f64 {
        (BS_RATE * (self.t_end - x[2])).exp() * (x[0] * x[0] + x[1] * x[1])
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let e = (BS_RATE * (self.t_end - x[2])).exp();
        out[0] = 2.0 * e * x[0];
        out[1] = 2.0 * e * x[1];
        out[2] = -BS_RATE * e * (x[0] * x[0] + x[1] * x[1]);
    }
    fn hessian(&self, x: &[f64], out: &mut [f64]) {
        let e = (BS_RATE * (self.t_end - x[2])).exp();
        out.fill(0.0);
        out[0] = 2.0 * e;
        out[4] = 2.0 * e;
        out[2] = -2.0 * BS_RATE * e * x[0];
        out[6] = out[2];
        out[5] = -2.0 * BS_RATE * e * x[1];
        out[7] = out[5];
        out[8] = BS_RATE * BS_RATE * e * (x[0] * x[0] + x[1] * x[1]);
    }
}
