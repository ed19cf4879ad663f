use super::{AdError, Tensor};
use crate::linalg::{gemm, tanh_in_place, View};

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Primitive operations understood by the tape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prim {
    /// Matrix product; either operand may be a vector.
    MatMul,
    Add,
    Sub,
    /// Elementwise product.
    Mul,
    /// `(n, m) + (m,)`, bias broadcast over rows.
    AddBias,
    Scale(f64),
    Tanh,
    /// `(1 - h^2) * t`: pushes a tangent `t` through a tanh whose output is `h`.
    TanhTangent,
    Square,
    /// Sum of all entries, producing a scalar.
    Sum,
    /// Sums consecutive blocks of `g` rows along the leading axis.
    GroupSum(usize),
}

impl Prim {
    pub fn name(&self) -> &'static str {
        match self {
            Prim::MatMul => "matmul",
            Prim::Add => "add",
            Prim::Sub => "sub",
            Prim::Mul => "mul",
            Prim::AddBias => "add_bias",
            Prim::Scale(_) => "scale",
            Prim::Tanh => "tanh",
            Prim::TanhTangent => "tanh_tangent",
            Prim::Square => "square",
            Prim::Sum => "sum",
            Prim::GroupSum(_) => "group_sum",
        }
    }

    fn arity(&self) -> usize {
        match self {
            Prim::MatMul
            | Prim::Add
            | Prim::Sub
            | Prim::Mul
            | Prim::AddBias
            | Prim::TanhTangent => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Source {
    Variable,
    Constant,
    Op { prim: Prim, lhs: usize, rhs: usize },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    source: Source,
    requires_grad: bool,
}

/// Append-only record of a forward computation.
///
/// Nodes are stored in creation order, which is also a topological order, so
/// [`Tape::backward`] is a single reverse sweep.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Leaf adjoints produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    leaves: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Adjoint of a variable leaf, if the root depends on it.
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.leaves.get(id.0).and_then(Option::as_ref)
    }

    /// Adjoint of any node, zero-filled when nothing flowed into it.
    pub fn wrt(&self, id: NodeId) -> Tensor {
        match self.get(id) {
            Some(t) => t.clone(),
            None => Tensor::zeros(&self.shapes[id.0]),
        }
    }

    /// Moves the adjoint out, leaving `None` behind.
    pub fn take(&mut self, id: NodeId) -> Option<Tensor> {
        self.leaves.get_mut(id.0).and_then(Option::take)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf whose adjoint is tracked.
    pub fn variable(&mut self, value: Tensor) -> NodeId {
        self.push(value, Source::Variable, true)
    }

    /// Leaf treated as a constant.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Source::Constant, false)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, source: Source, requires_grad: bool) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            value,
            source,
            requires_grad,
        });
        id
    }

    /// Records `prim` applied to `inputs` and computes its value.
    pub fn record(&mut self, prim: Prim, inputs: &[NodeId]) -> Result<NodeId, AdError> {
        if inputs.len() != prim.arity() {
            return Err(AdError::Arity {
                op: prim.name(),
                expected: prim.arity(),
                got: inputs.len(),
            });
        }
        for id in inputs {
            if id.0 >= self.nodes.len() {
                return Err(AdError::UnknownNode(id.0));
            }
        }
        let lhs = inputs[0].0;
        let rhs = inputs.get(1).map_or(lhs, |n| n.0);
        let a = &self.nodes[lhs].value;
        let b = &self.nodes[rhs].value;
        let value = forward(prim, a, b)?;
        let requires_grad =
            self.nodes[lhs].requires_grad || (prim.arity() == 2 && self.nodes[rhs].requires_grad);
        Ok(self.push(value, Source::Op { prim, lhs, rhs }, requires_grad))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AdError> {
        self.record(Prim::MatMul, &[a, b])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AdError> {
        self.record(Prim::Add, &[a, b])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AdError> {
        self.record(Prim::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AdError> {
        self.record(Prim::Mul, &[a, b])
    }

    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId, AdError> {
        self.record(Prim::AddBias, &[a, bias])
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId, AdError> {
        self.record(Prim::Scale(factor), &[a])
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId, AdError> {
        self.record(Prim::Tanh, &[a])
    }

    pub fn tanh_tangent(&mut self, h: NodeId, t: NodeId) -> Result<NodeId, AdError> {
        self.record(Prim::TanhTangent, &[h, t])
    }

    pub fn square(&mut self, a: NodeId) -> Result<NodeId, AdError> {
        self.record(Prim::Square, &[a])
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId, AdError> {
        self.record(Prim::Sum, &[a])
    }

    pub fn group_sum(&mut self, a: NodeId, group: usize) -> Result<NodeId, AdError> {
        self.record(Prim::GroupSum(group), &[a])
    }

    /// Reverse sweep from a scalar `root`, returning adjoints of the variable leaves.
    pub fn backward(&self, root: NodeId) -> Result<Gradients, AdError> {
        let root_node = self.nodes.get(root.0).ok_or(AdError::UnknownNode(root.0))?;
        if !root_node.value.is_scalar() {
            return Err(AdError::NonScalarRoot(root_node.value.shape().to_vec()));
        }
        let mut adjoints: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        if root_node.requires_grad {
            adjoints[root.0] = Some(vec![1.0]);
        }

        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            let Source::Op { prim, lhs, rhs } = node.source else {
                continue;
            };
            if !node.requires_grad {
                continue;
            }
            let Some(grad) = adjoints[i].take() else {
                continue;
            };
            let (lower, _) = adjoints.split_at_mut(i);
            self.propagate(prim, lhs, rhs, &node.value, &grad, lower);
        }

        let mut leaves = Vec::with_capacity(self.nodes.len());
        let mut shapes = Vec::with_capacity(self.nodes.len());
        for (i, node) in self.nodes.iter().enumerate() {
            shapes.push(node.value.shape().to_vec());
            let adj = match node.source {
                Source::Variable => adjoints
                    .get_mut(i)
                    .and_then(Option::take)
                    .map(|d| Tensor::from_parts(node.value.shape().to_vec(), d)),
                _ => None,
            };
            leaves.push(adj);
        }
        Ok(Gradients { leaves, shapes })
    }

    fn propagate(
        &self,
        prim: Prim,
        lhs: usize,
        rhs: usize,
        out: &Tensor,
        grad: &[f64],
        adj: &mut [Option<Vec<f64>>],
    ) {
        let a = &self.nodes[lhs];
        let b = &self.nodes[rhs];
        let need_a = a.requires_grad;
        let need_b = prim.arity() == 2 && b.requires_grad;
        let av = a.value.data();
        let bv = b.value.data();

        match prim {
            Prim::MatMul => {
                let (p, k) = left_dims(a.value.shape());
                let (_, q) = right_dims(b.value.shape());
                if need_a {
                    // dA = G * B^T
                    let da = slot(adj, lhs, av.len());
                    gemm(
                        p,
                        q,
                        k,
                        1.0,
                        View::rows(grad, q),
                        View::transposed(bv, q),
                        1.0,
                        da,
                    );
                }
                if need_b {
                    // dB = A^T * G
                    let db = slot(adj, rhs, bv.len());
                    gemm(
                        k,
                        p,
                        q,
                        1.0,
                        View::transposed(av, k),
                        View::rows(grad, q),
                        1.0,
                        db,
                    );
                }
            }
            Prim::Add | Prim::Sub => {
                if need_a {
                    axpy(slot(adj, lhs, av.len()), 1.0, grad);
                }
                if need_b {
                    let s = if prim == Prim::Add { 1.0 } else { -1.0 };
                    axpy(slot(adj, rhs, bv.len()), s, grad);
                }
            }
            Prim::Mul => {
                if need_a {
                    let da = slot(adj, lhs, av.len());
                    for ((d, g), y) in da.iter_mut().zip(grad).zip(bv) {
                        *d += g * y;
                    }
                }
                if need_b {
                    let db = slot(adj, rhs, bv.len());
                    for ((d, g), x) in db.iter_mut().zip(grad).zip(av) {
                        *d += g * x;
                    }
                }
            }
            Prim::AddBias => {
                if need_a {
                    axpy(slot(adj, lhs, av.len()), 1.0, grad);
                }
                if need_b {
                    let m = bv.len();
                    let db = slot(adj, rhs, m);
                    for row in grad.chunks_exact(m) {
                        for (d, g) in db.iter_mut().zip(row) {
                            *d += g;
                        }
                    }
                }
            }
            Prim::Scale(c) => {
                if need_a {
                    axpy(slot(adj, lhs, av.len()), c, grad);
                }
            }
            Prim::Tanh => {
                if need_a {
                    let da = slot(adj, lhs, av.len());
                    for ((d, g), y) in da.iter_mut().zip(grad).zip(out.data()) {
                        *d += g * (1.0 - y * y);
                    }
                }
            }
            Prim::TanhTangent => {
                // out = (1 - h^2) t
                if need_a {
                    let dh = slot(adj, lhs, av.len());
                    for (((d, g), h), t) in dh.iter_mut().zip(grad).zip(av).zip(bv) {
                        *d -= 2.0 * g * h * t;
                    }
                }
                if need_b {
                    let dt = slot(adj, rhs, bv.len());
                    for ((d, g), h) in dt.iter_mut().zip(grad).zip(av) {
                        *d += g * (1.0 - h * h);
                    }
                }
            }
            Prim::Square => {
                if need_a {
                    let da = slot(adj, lhs, av.len());
                    for ((d, g), x) in da.iter_mut().zip(grad).zip(av) {
                        *d += 2.0 * g * x;
                    }
                }
            }
            Prim::Sum => {
                if need_a {
                    let g = grad[0];
                    for d in slot(adj, lhs, av.len()) {
                        *d += g;
                    }
                }
            }
            Prim::GroupSum(group) => {
                if need_a {
                    let stride = av.len() / a.value.shape()[0];
                    let da = slot(adj, lhs, av.len());
                    for (block, g) in da
                        .chunks_exact_mut(group * stride)
                        .zip(grad.chunks_exact(stride))
                    {
                        for row in block.chunks_exact_mut(stride) {
                            for (d, gv) in row.iter_mut().zip(g) {
                                *d += gv;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn slot(adj: &mut [Option<Vec<f64>>], index: usize, len: usize) -> &mut [f64] {
    adj[index].get_or_insert_with(|| vec![0.0; len])
}

fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (a, b) in y.iter_mut().zip(x) {
        *a += alpha * b;
    }
}

fn left_dims(shape: &[usize]) -> (usize, usize) {
    match shape {
        [k] => (1, *k),
        [p, k] => (*p, *k),
        _ => (0, 0),
    }
}

fn right_dims(shape: &[usize]) -> (usize, usize) {
    match shape {
        [k] => (*k, 1),
        [k, q] => (*k, *q),
        _ => (0, 0),
    }
}

fn mismatch(prim: Prim, a: &Tensor, b: &Tensor) -> AdError {
    AdError::Shape {
        op: prim.name(),
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| f(*x, *y))
        .collect();
    Tensor::from_parts(a.shape().to_vec(), data)
}

fn map(a: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::from_parts(a.shape().to_vec(), a.data().iter().map(|x| f(*x)).collect())
}

fn forward(prim: Prim, a: &Tensor, b: &Tensor) -> Result<Tensor, AdError> {
    let same = || a.shape() == b.shape();
    Ok(match prim {
        Prim::MatMul => {
            if !matches!((a.rank(), b.rank()), (2, 2) | (2, 1) | (1, 2)) {
                return Err(mismatch(prim, a, b));
            }
            let (p, k) = left_dims(a.shape());
            let (k2, q) = right_dims(b.shape());
            if k != k2 {
                return Err(mismatch(prim, a, b));
            }
            let shape = match (a.rank(), b.rank()) {
                (2, 2) => vec![p, q],
                (2, 1) => vec![p],
                _ => vec![q],
            };
            let mut out = vec![0.0; p * q];
            gemm(
                p,
                k,
                q,
                1.0,
                View::rows(a.data(), k),
                View::rows(b.data(), q),
                0.0,
                &mut out,
            );
            Tensor::from_parts(shape, out)
        }
        Prim::Add | Prim::Sub | Prim::Mul | Prim::TanhTangent => {
            if !same() {
                return Err(mismatch(prim, a, b));
            }
            match prim {
                Prim::Add => zip_map(a, b, |x, y| x + y),
                Prim::Sub => zip_map(a, b, |x, y| x - y),
                Prim::Mul => zip_map(a, b, |x, y| x * y),
                _ => zip_map(a, b, |h, t| (1.0 - h * h) * t),
            }
        }
        Prim::AddBias => {
            let ok = a.rank() == 2 && b.rank() == 1 && a.shape()[1] == b.shape()[0];
            if !ok {
                return Err(mismatch(prim, a, b));
            }
            let m = b.len();
            let mut out = a.data().to_vec();
            for row in out.chunks_exact_mut(m) {
                for (o, bias) in row.iter_mut().zip(b.data()) {
                    *o += bias;
                }
            }
            Tensor::from_parts(a.shape().to_vec(), out)
        }
        Prim::Scale(c) => map(a, |x| c * x),
        Prim::Tanh => {
            let mut out = a.data().to_vec();
            tanh_in_place(&mut out);
            Tensor::from_parts(a.shape().to_vec(), out)
        }
        Prim::Square => map(a, |x| x * x),
        Prim::Sum => Tensor::scalar(a.data().iter().sum()),
        Prim::GroupSum(group) => {
            let lead = a.shape().first().copied().unwrap_or(0);
            if group == 0 || a.rank() == 0 || lead % group != 0 {
                return Err(AdError::Group {
                    shape: a.shape().to_vec(),
                    group,
                });
            }
            let stride = a.len() / lead.max(1);
            let mut shape = a.shape().to_vec();
            shape[0] = lead / group;
            let mut out = vec![0.0; shape[0] * stride];
            for (o, block) in out
                .chunks_exact_mut(stride.max(1))
                .zip(a.data().chunks_exact((group * stride).max(1)))
            {
                for row in block.chunks_exact(stride.max(1)) {
                    for (x, y) in o.iter_mut().zip(row) {
                        *x += y;
                    }
                }
            }
            Tensor::from_parts(shape, out)
        }
    })
}
