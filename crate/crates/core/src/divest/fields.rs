//! Concrete scalar fields: analytic test functions, a network wrapper and an
//! evaluation counter.

use std::cell::Cell;

use super::ScalarField;
use crate::autodiff::input_gradient;
use crate::network::{self, ParamSet};

/// `u(x) = |x|^2`.
#[derive(Debug, Clone, Copy)]
pub struct SumSq(pub usize);

impl ScalarField for SumSq {
    fn dim(&self) -> usize {
        self.0
    }
    fn value(&self, x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(x) {
            *o = 2.0 * v;
        }
    }
}

/// `u(x) = sin(x_1)`.
#[derive(Debug, Clone, Copy)]
pub struct Sin1(pub usize);

impl ScalarField for Sin1 {
    fn dim(&self) -> usize {
        self.0
    }
    fn value(&self, x: &[f64]) -> f64 {
        x[0].sin()
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        out[0] = x[0].cos();
    }
}

/// `u(x) = sin(sum(x) / d)`.
#[derive(Debug, Clone, Copy)]
pub struct SinAvg(pub usize);

impl ScalarField for SinAvg {
    fn dim(&self) -> usize {
        self.0
    }
    fn value(&self, x: &[f64]) -> f64 {
        (x.iter().sum::<f64>() / self.0 as f64).sin()
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let d = self.0 as f64;
        out.fill((x.iter().sum::<f64>() / d).cos() / d);
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Const {
    pub dim: usize,
    pub value: f64,
}

impl ScalarField for Const {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, _: &[f64]) -> f64 {
        self.value
    }
    fn gradient(&self, _: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// `u(x) = w . x + b`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Vec<f64>,
    pub b: f64,
}

impl ScalarField for Linear {
    fn dim(&self) -> usize {
        self.w.len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.b + self.w.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }
    fn gradient(&self, _: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.w);
    }
}

/// Network output as a field; gradients come from the reverse pass.
#[derive(Debug, Clone, Copy)]
pub struct NetField<'a>(pub &'a ParamSet);

impl ScalarField for NetField<'_> {
    fn dim(&self) -> usize {
        self.0.config().input_dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        network::eval(self.0, x).expect("point has the network input dimension")[0]
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let g = input_gradient(self.0, x).expect("point has the network input dimension");
        out.copy_from_slice(&g);
    }
    fn values(&self, xs: &[f64]) -> Vec<f64> {
        network::eval(self.0, xs).expect("points have the network input dimension")
    }
}

/// Counts value and gradient evaluations of the wrapped field.
#[derive(Debug)]
pub struct Counting<F> {
    pub inner: F,
    values: Cell<usize>,
    gradients: Cell<usize>,
}

impl<F> Counting<F> {
    pub fn new(inner: F) -> Self {
        Self {
            inner,
            values: Cell::new(0),
            gradients: Cell::new(0),
        }
    }

    pub fn value_count(&self) -> usize {
        self.values.get()
    }

    pub fn gradient_count(&self) -> usize {
        self.gradients.get()
    }
}

impl<F: ScalarField> ScalarField for Counting<F> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.values.set(self.values.get() + 1);
        self.inner.value(x)
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        self.gradients.set(self.gradients.get() + 1);
        self.inner.gradient(x, out)
    }
}
