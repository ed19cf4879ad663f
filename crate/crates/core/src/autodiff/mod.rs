//! First-order reverse-mode differentiation over dense `f64` tensors.
//!
//! There is no higher-order support. Where second-order quantities are
//! needed, a tangent is pushed forward through the network as ordinary tape
//! nodes (see [`Prim::TanhTangent`]), so a single reverse sweep still yields
//! parameter gradients of losses that depend on input derivatives.

mod tape;
mod tensor;

pub use tape::{Gradients, NodeId, Prim, Tape};
pub use tensor::Tensor;

use thiserror::Error;

use crate::network::{self, NetworkError, ParamSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op} takes {expected} inputs, got {got}")]
    Arity {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("group_sum: leading axis of {shape:?} not divisible by {group}")]
    Group { shape: Vec<usize>, group: usize },
    #[error("shape {shape:?} needs {} values, got {len}", shape.iter().product::<usize>())]
    Length { shape: Vec<usize>, len: usize },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("backward root must be a scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("node {0} is not on this tape")]
    UnknownNode(usize),
}

/// `grad_x u(x)` for each row of `x` (`n * d` values), from one forward and
/// one reverse pass over the summed output.
pub fn input_gradient(params: &ParamSet, x: &[f64]) -> Result<Vec<f64>, NetworkError> {
    let config = *params.config();
    let d = config.input_dim;
    if x.is_empty() || x.len() % d != 0 {
        return Err(NetworkError::Dimension {
            expected: d,
            len: x.len(),
        });
    }
    let n = x.len() / d;
    let mut tape = Tape::new();
    let nodes = network::record_params(&mut tape, params, false);
    let xn = tape.variable(Tensor::from_parts(vec![n, d], x.to_vec()));
    let build = |tape: &mut Tape| -> Result<NodeId, AdError> {
        let (u, _) = network::record_forward(tape, &config, &nodes, xn, None)?;
        tape.sum(u)
    };
    let root = build(&mut tape).expect("network shapes are consistent by construction");
    let grads = tape.backward(root).expect("sum produces a scalar root");
    Ok(grads.wrt(xn).into_data())
}

/// Gradient of `sum_i u(x_i)` with respect to the flat parameter vector.
pub fn param_gradient(params: &ParamSet, x: &[f64]) -> Result<Vec<f64>, NetworkError> {
    let config = *params.config();
    let d = config.input_dim;
    if x.is_empty() || x.len() % d != 0 {
        return Err(NetworkError::Dimension {
            expected: d,
            len: x.len(),
        });
    }
    let mut tape = Tape::new();
    let nodes = network::record_params(&mut tape, params, true);
    let xn = tape.constant(Tensor::from_parts(vec![x.len() / d, d], x.to_vec()));
    let build = |tape: &mut Tape| -> Result<NodeId, AdError> {
        let (u, _) = network::record_forward(tape, &config, &nodes, xn, None)?;
        tape.sum(u)
    };
    let root = build(&mut tape).expect("network shapes are consistent by construction");
    let mut grads = tape.backward(root).expect("sum produces a scalar root");
    let mut out = vec![0.0; params.len()];
    network::accumulate_gradient(&mut grads, &nodes, params, &mut out);
    Ok(out)
}
