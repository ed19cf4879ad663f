//! Fully connected and residual tanh networks `R^d -> R`.
//!
//! Hidden layers apply `tanh`; the output head is affine. The residual
//! variant lifts the input to width `m` with an affine map, applies `depth`
//! blocks `h -> tanh(W2 tanh(W1 h + b1) + b2) + h`, then the affine head.
//!
//! Weights are stored as `(fan_in, fan_out)` row-major matrices so a batch
//! `X: (n, fan_in)` maps to `X W + b`.

mod io;
mod params;

pub use params::{init_params, LayerShape, ParamSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AdError, NodeId, Tape, Tensor};
use crate::linalg::{gemm, tanh_in_place, View};

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("invalid network config: {0}")]
    InvalidConfig(String),
    #[error("input width mismatch: network expects {expected}, got data of length {len}")]
    Dimension { expected: usize, len: usize },
    #[error("expected a {expected:?} network, got {got:?}")]
    Architecture {
        expected: Architecture,
        got: Architecture,
    },
    #[error("parameter vector has length {got}, layout needs {expected}")]
    ParamCount { expected: usize, got: usize },
    #[error("parameter file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Fcnn,
    Resnet,
}

impl std::str::FromStr for Architecture {
    type Err = NetworkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fcnn" => Ok(Self::Fcnn),
            "resnet" => Ok(Self::Resnet),
            other => Err(NetworkError::InvalidConfig(format!(
                "unknown architecture `{other}` (expected fcnn or resnet)"
            ))),
        }
    }
}

/// `depth` counts hidden layers for [`Architecture::Fcnn`] and residual
/// blocks for [`Architecture::Resnet`]. Output dimension is always 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub arch: Architecture,
    pub input_dim: usize,
    pub width: usize,
    pub depth: usize,
}

impl NetworkConfig {
    pub fn fcnn(input_dim: usize, width: usize, depth: usize) -> Self {
        Self {
            arch: Architecture::Fcnn,
            input_dim,
            width,
            depth,
        }
    }

    pub fn resnet(input_dim: usize, width: usize, blocks: usize) -> Self {
        Self {
            arch: Architecture::Resnet,
            input_dim,
            width,
            depth: blocks,
        }
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        if self.input_dim == 0 {
            return Err(NetworkError::InvalidConfig(
                "input_dim must be positive".into(),
            ));
        }
        if self.width == 0 {
            return Err(NetworkError::InvalidConfig("width must be positive".into()));
        }
        if self.depth == 0 {
            return Err(NetworkError::InvalidConfig(
                "depth must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every affine layer, input side first.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let (d, m) = (self.input_dim, self.width);
        let mut dims = vec![(d, m)];
        let hidden = match self.arch {
            Architecture::Fcnn => self.depth - 1,
            Architecture::Resnet => 2 * self.depth,
        };
        dims.extend(std::iter::repeat_n((m, m), hidden));
        dims.push((m, 1));
        dims
    }

    pub fn param_count(&self) -> usize {
        let (d, m, l) = (self.input_dim, self.width, self.depth);
        let hidden = match self.arch {
            Architecture::Fcnn => l - 1,
            Architecture::Resnet => 2 * l,
        };
        (d * m + m) + hidden * (m * m + m) + (m + 1)
    }
}

/// Forward evaluation at a batch of points given as `n * input_dim` row-major values.
pub fn eval(params: &ParamSet, x: &[f64]) -> Result<Vec<f64>, NetworkError> {
    let n = rows(params.config(), x)?;
    let mut u = vec![0.0; n];
    Propagator::new(params).run(x, None, &mut u, None);
    Ok(u)
}

pub fn eval_fcnn(params: &ParamSet, x: &[f64]) -> Result<Vec<f64>, NetworkError> {
    expect_arch(params, Architecture::Fcnn)?;
    eval(params, x)
}

pub fn eval_resnet(params: &ParamSet, x: &[f64]) -> Result<Vec<f64>, NetworkError> {
    expect_arch(params, Architecture::Resnet)?;
    eval(params, x)
}

/// Values and directional derivatives `grad u(x_i) . t_i` for a batch of
/// points `x` and per-row directions `t` of the same layout.
pub fn eval_with_tangent(
    params: &ParamSet,
    x: &[f64],
    t: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), NetworkError> {
    let n = rows(params.config(), x)?;
    if t.len() != x.len() {
        return Err(NetworkError::Dimension {
            expected: params.config().input_dim,
            len: t.len(),
        });
    }
    let mut u = vec![0.0; n];
    let mut du = vec![0.0; n];
    Propagator::new(params).run(x, Some(t), &mut u, Some(&mut du));
    Ok((u, du))
}

fn expect_arch(params: &ParamSet, arch: Architecture) -> Result<(), NetworkError> {
    let got = params.config().arch;
    if got != arch {
        return Err(NetworkError::Architecture {
            expected: arch,
            got,
        });
    }
    Ok(())
}

fn rows(config: &NetworkConfig, x: &[f64]) -> Result<usize, NetworkError> {
    let d = config.input_dim;
    if x.len() % d != 0 {
        return Err(NetworkError::Dimension {
            expected: d,
            len: x.len(),
        });
    }
    Ok(x.len() / d)
}

const EVAL_CHUNK: usize = 512;

/// Tape-free forward pass, optionally carrying a tangent.
struct Propagator<'a> {
    params: &'a ParamSet,
    h: Vec<f64>,
    t: Vec<f64>,
    z: Vec<f64>,
    tz: Vec<f64>,
}

impl<'a> Propagator<'a> {
    fn new(params: &'a ParamSet) -> Self {
        let cap = EVAL_CHUNK * params.config().width;
        Self {
            params,
            h: Vec::with_capacity(cap),
            t: Vec::with_capacity(cap),
            z: Vec::with_capacity(cap),
            tz: Vec::with_capacity(cap),
        }
    }

    fn run(&mut self, x: &[f64], t: Option<&[f64]>, u: &mut [f64], mut du: Option<&mut [f64]>) {
        let d = self.params.config().input_dim;
        for (c, xs) in x.chunks(EVAL_CHUNK * d).enumerate() {
            let n = xs.len() / d;
            let ts = t.map(|t| &t[c * EVAL_CHUNK * d..c * EVAL_CHUNK * d + xs.len()]);
            let range = c * EVAL_CHUNK..c * EVAL_CHUNK + n;
            let du_chunk = du.as_deref_mut().map(|v| &mut v[range.clone()]);
            self.chunk(xs, ts, n, &mut u[range], du_chunk);
        }
    }

    /// `out = inp * W (+ b)` for layer `layer`.
    fn affine(&self, layer: usize, inp: &[f64], n: usize, bias: bool, out: &mut Vec<f64>) {
        let shape = self.params.layers()[layer];
        out.clear();
        out.resize(n * shape.fan_out, 0.0);
        gemm(
            n,
            shape.fan_in,
            shape.fan_out,
            1.0,
            View::rows(inp, shape.fan_in),
            View::rows(self.params.weight(layer), shape.fan_out),
            0.0,
            out,
        );
        if bias {
            let b = self.params.bias(layer);
            for row in out.chunks_exact_mut(shape.fan_out) {
                for (o, bv) in row.iter_mut().zip(b) {
                    *o += bv;
                }
            }
        }
    }

    /// One tanh layer applied to `h` (and `t`) in place via the scratch buffers.
    fn tanh_layer(&mut self, layer: usize, n: usize, tangent: bool) {
        let mut z = std::mem::take(&mut self.z);
        self.affine(layer, &self.h, n, true, &mut z);
        tanh_in_place(&mut z);
        if tangent {
            let mut tz = std::mem::take(&mut self.tz);
            self.affine(layer, &self.t, n, false, &mut tz);
            for (tv, hv) in tz.iter_mut().zip(&z) {
                *tv *= 1.0 - hv * hv;
            }
            self.tz = std::mem::replace(&mut self.t, tz);
        }
        self.z = std::mem::replace(&mut self.h, z);
    }

    fn chunk(
        &mut self,
        x: &[f64],
        t: Option<&[f64]>,
        n: usize,
        u: &mut [f64],
        du: Option<&mut [f64]>,
    ) {
        let config = *self.params.config();
        let tangent = t.is_some();
        let head = self.params.layers().len() - 1;
        self.h.clear();
        self.h.extend_from_slice(x);
        self.t.clear();
        if let Some(t) = t {
            self.t.extend_from_slice(t);
        }

        match config.arch {
            Architecture::Fcnn => {
                for layer in 0..head {
                    self.tanh_layer(layer, n, tangent);
                }
            }
            Architecture::Resnet => {
                let mut lifted = std::mem::take(&mut self.z);
                self.affine(0, &self.h, n, true, &mut lifted);
                self.z = std::mem::replace(&mut self.h, lifted);
                if tangent {
                    let mut lt = std::mem::take(&mut self.tz);
                    self.affine(0, &self.t, n, false, &mut lt);
                    self.tz = std::mem::replace(&mut self.t, lt);
                }
                for block in 0..config.depth {
                    let skip_h = self.h.clone();
                    let skip_t = if tangent { self.t.clone() } else { Vec::new() };
                    self.tanh_layer(1 + 2 * block, n, tangent);
                    self.tanh_layer(2 + 2 * block, n, tangent);
                    for (a, s) in self.h.iter_mut().zip(&skip_h) {
                        *a += s;
                    }
                    if tangent {
                        for (a, s) in self.t.iter_mut().zip(&skip_t) {
                            *a += s;
                        }
                    }
                }
            }
        }

        let mut out = std::mem::take(&mut self.z);
        self.affine(head, &self.h, n, true, &mut out);
        u.copy_from_slice(&out[..n]);
        if let Some(du) = du {
            self.affine(head, &self.t, n, false, &mut out);
            du.copy_from_slice(&out[..n]);
        }
        self.z = out;
    }
}

/// Parameter leaves of one network on a tape.
#[derive(Debug, Clone)]
pub struct ParamNodes {
    pub weights: Vec<NodeId>,
    pub biases: Vec<NodeId>,
}

/// Records every weight and bias as a leaf; `trainable` selects variable vs constant leaves.
pub fn record_params(tape: &mut Tape, params: &ParamSet, trainable: bool) -> ParamNodes {
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for (i, shape) in params.layers().iter().enumerate() {
        let w = Tensor::from_parts(vec![shape.fan_in, shape.fan_out], params.weight(i).to_vec());
        let b = Tensor::from_parts(vec![shape.fan_out], params.bias(i).to_vec());
        if trainable {
            weights.push(tape.variable(w));
            biases.push(tape.variable(b));
        } else {
            weights.push(tape.constant(w));
            biases.push(tape.constant(b));
        }
    }
    ParamNodes { weights, biases }
}

/// Records the network applied to `x: (n, d)`, returning `u: (n, 1)` and,
/// when a tangent `t: (n, d)` is supplied, the directional derivative `(n, 1)`.
pub fn record_forward(
    tape: &mut Tape,
    config: &NetworkConfig,
    nodes: &ParamNodes,
    x: NodeId,
    tangent: Option<NodeId>,
) -> Result<(NodeId, Option<NodeId>), AdError> {
    let head = nodes.weights.len() - 1;
    let tanh_layer = |tape: &mut Tape, layer: usize, h: NodeId, t: Option<NodeId>| {
        let z = tape.matmul(h, nodes.weights[layer])?;
        let z = tape.add_bias(z, nodes.biases[layer])?;
        let a = tape.tanh(z)?;
        let ta = match t {
            Some(t) => {
                let tz = tape.matmul(t, nodes.weights[layer])?;
                Some(tape.tanh_tangent(a, tz)?)
            }
            None => None,
        };
        Ok::<_, AdError>((a, ta))
    };

    let (mut h, mut t) = (x, tangent);
    match config.arch {
        Architecture::Fcnn => {
            for layer in 0..head {
                (h, t) = tanh_layer(tape, layer, h, t)?;
            }
        }
        Architecture::Resnet => {
            let z = tape.matmul(h, nodes.weights[0])?;
            h = tape.add_bias(z, nodes.biases[0])?;
            if let Some(tv) = t {
                t = Some(tape.matmul(tv, nodes.weights[0])?);
            }
            for block in 0..config.depth {
                let (a1, t1) = tanh_layer(tape, 1 + 2 * block, h, t)?;
                let (a2, t2) = tanh_layer(tape, 2 + 2 * block, a1, t1)?;
                h = tape.add(a2, h)?;
                if let (Some(t2), Some(tv)) = (t2, t) {
                    t = Some(tape.add(t2, tv)?);
                }
            }
        }
    }
    let y = tape.matmul(h, nodes.weights[head])?;
    let y = tape.add_bias(y, nodes.biases[head])?;
    let dy = match t {
        Some(t) => Some(tape.matmul(t, nodes.weights[head])?),
        None => None,
    };
    Ok((y, dy))
}

/// Adds the adjoints of `nodes` into a flat vector laid out like `params`.
pub fn accumulate_gradient(
    grads: &mut crate::autodiff::Gradients,
    nodes: &ParamNodes,
    params: &ParamSet,
    out: &mut [f64],
) {
    for (i, shape) in params.layers().iter().enumerate() {
        if let Some(g) = grads.take(nodes.weights[i]) {
            let dst = &mut out[shape.weight_offset..shape.weight_offset + g.len()];
            for (o, v) in dst.iter_mut().zip(g.data()) {
                *o += v;
            }
        }
        if let Some(g) = grads.take(nodes.biases[i]) {
            let dst = &mut out[shape.bias_offset..shape.bias_offset + g.len()];
            for (o, v) in dst.iter_mut().zip(g.data()) {
                *o += v;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng as _;

    fn random_points(n: usize, d: usize, seed: u64) -> Vec<f64> {
        let mut r = rng::rng(seed);
        (0..n * d).map(|_| r.random_range(-1.0..1.0)).collect()
    }

    fn random_params(config: NetworkConfig, seed: u64) -> ParamSet {
        let mut p = init_params(config, seed).unwrap();
        let mut r = rng::rng(seed + 1000);
        // Non-zero biases so they are exercised.
        for i in 0..p.layers().len() {
            for b in p.bias_mut(i) {
                *b = r.random_range(-0.5..0.5);
            }
        }
        p
    }

    #[test]
    fn parameter_count_matches_layout_over_grid() {
        for arch in [Architecture::Fcnn, Architecture::Resnet] {
            for d in [1, 2, 10] {
                for m in [8, 40, 64, 128] {
                    for depth in [1, 3] {
                        let cfg = NetworkConfig {
                            arch,
                            input_dim: d,
                            width: m,
                            depth,
                        };
                        let p = ParamSet::zeros(cfg).unwrap();
                        let from_layout: usize = p
                            .layers()
                            .iter()
                            .map(|l| l.fan_in * l.fan_out + l.fan_out)
                            .sum();
                        assert_eq!(cfg.param_count(), from_layout);
                        assert_eq!(p.len(), from_layout);
                    }
                }
            }
        }
    }

    #[test]
    fn zero_params_give_zero_output() {
        for cfg in [NetworkConfig::fcnn(3, 8, 2), NetworkConfig::resnet(3, 8, 2)] {
            let p = ParamSet::zeros(cfg).unwrap();
            let u = eval(&p, &random_points(5, 3, 1)).unwrap();
            assert!(u.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn single_unit_fcnn_is_tanh_of_first_coordinate() {
        let cfg = NetworkConfig::fcnn(3, 1, 1);
        let mut p = ParamSet::zeros(cfg).unwrap();
        p.weight_mut(0).copy_from_slice(&[1.0, 0.0, 0.0]);
        p.weight_mut(1).copy_from_slice(&[1.0]);
        let x = [0.3, -2.0, 5.0, -0.7, 1.0, 1.0];
        let u = eval_fcnn(&p, &x).unwrap();
        for (got, want) in u.iter().zip([0.3f64.tanh(), (-0.7f64).tanh()]) {
            assert!((got - want).abs() <= 4.0 * f64::EPSILON, "{got} vs {want}");
        }
    }

    #[test]
    fn batched_matches_per_point() {
        for cfg in [
            NetworkConfig::fcnn(4, 16, 3),
            NetworkConfig::resnet(4, 16, 2),
        ] {
            let p = random_params(cfg, 3);
            let x = random_points(1100, 4, 9);
            let batched = eval(&p, &x).unwrap();
            for (i, row) in x.chunks(4).enumerate() {
                let single = eval(&p, row).unwrap()[0];
                assert!(
                    (single - batched[i]).abs() <= 1e-15,
                    "{single} {}",
                    batched[i]
                );
            }
        }
    }

    #[test]
    fn resnet_block_matches_manual_composition() {
        let cfg = NetworkConfig::resnet(2, 5, 1);
        let p = random_params(cfg, 11);
        let x = [0.4, -0.2];
        let affine = |layer: usize, inp: &[f64]| -> Vec<f64> {
            let s = p.layers()[layer];
            (0..s.fan_out)
                .map(|j| {
                    let mut acc = p.bias(layer)[j];
                    for (i, v) in inp.iter().enumerate() {
                        acc += v * p.weight(layer)[i * s.fan_out + j];
                    }
                    acc
                })
                .collect()
        };
        let lifted = affine(0, &x);
        let a1: Vec<f64> = affine(1, &lifted).iter().map(|v| v.tanh()).collect();
        let a2: Vec<f64> = affine(2, &a1).iter().map(|v| v.tanh()).collect();
        let h: Vec<f64> = a2.iter().zip(&lifted).map(|(a, s)| a + s).collect();
        let expected = affine(3, &h)[0];
        let got = eval_resnet(&p, &x).unwrap()[0];
        assert!((got - expected).abs() < 1e-15, "{got} vs {expected}");
    }

    #[test]
    fn resnet_with_zero_blocks_is_head_of_lift() {
        let cfg = NetworkConfig::resnet(3, 6, 3);
        let mut p = random_params(cfg, 5);
        for layer in 1..=6 {
            p.weight_mut(layer).fill(0.0);
            p.bias_mut(layer).fill(0.0);
        }
        let x = random_points(7, 3, 2);
        let u = eval(&p, &x).unwrap();
        for (i, row) in x.chunks(3).enumerate() {
            let mut lifted = p.bias(0).to_vec();
            for (k, v) in row.iter().enumerate() {
                for j in 0..6 {
                    lifted[j] += v * p.weight(0)[k * 6 + j];
                }
            }
            let mut y = p.bias(7)[0];
            for j in 0..6 {
                y += lifted[j] * p.weight(7)[j];
            }
            assert!((u[i] - y).abs() < 1e-14);
        }
    }

    #[test]
    fn wrong_arch_or_width_is_rejected() {
        let p = ParamSet::zeros(NetworkConfig::fcnn(2, 4, 1)).unwrap();
        assert!(matches!(
            eval_resnet(&p, &[0.0, 0.0]),
            Err(NetworkError::Architecture { .. })
        ));
        assert!(matches!(
            eval(&p, &[0.0, 0.0, 0.0]),
            Err(NetworkError::Dimension { .. })
        ));
    }

    #[test]
    fn tape_forward_agrees_with_direct_path() {
        for cfg in [NetworkConfig::fcnn(3, 8, 3), NetworkConfig::resnet(3, 8, 2)] {
            let p = random_params(cfg, 21);
            let x = random_points(13, 3, 4);
            let t = random_points(13, 3, 5);
            let (u, du) = eval_with_tangent(&p, &x, &t).unwrap();
            let mut tape = Tape::new();
            let nodes = record_params(&mut tape, &p, false);
            let xn = tape.constant(Tensor::matrix(13, 3, x.clone()).unwrap());
            let tn = tape.constant(Tensor::matrix(13, 3, t.clone()).unwrap());
            let (un, dun) = record_forward(&mut tape, &cfg, &nodes, xn, Some(tn)).unwrap();
            for i in 0..13 {
                assert!((tape.value(un).data()[i] - u[i]).abs() < 1e-15);
                assert!((tape.value(dun.unwrap()).data()[i] - du[i]).abs() < 1e-15);
            }
        }
    }
}
