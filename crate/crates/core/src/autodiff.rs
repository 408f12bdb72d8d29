//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] records every operation in creation order, so the node list is
//! already topologically sorted and [`Tape::backward`] is a single reverse
//! sweep. Nodes are addressed by [`NodeId`] handles into the tape.
//!
//! Gradients accumulate: calling `backward` twice without [`Tape::zero_grad`]
//! leaves exactly twice the gradient in every node.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph;
use crate::matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Nonlinearity applied after each graph convolution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::invalid(format!("unknown activation {other:?}"))),
        }
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Activation(NodeId, Activation),
    SoftmaxRow(NodeId),
    Mse(NodeId, Matrix),
    Sum(NodeId),
    ColumnSums(NodeId),
    Transpose(NodeId),
    VStack(NodeId, NodeId),
    HStack(NodeId, NodeId),
    SliceRows(NodeId, usize),
    GatherRows(NodeId, Vec<usize>),
    NormalizeAdjacency(NodeId, bool),
    CosineEdges(NodeId, NodeId),
}

impl Op {
    fn parents(&self) -> Vec<NodeId> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Mul(a, b)
            | Op::VStack(a, b)
            | Op::HStack(a, b)
            | Op::CosineEdges(a, b) => vec![*a, *b],
            Op::Scale(a, _)
            | Op::Activation(a, _)
            | Op::SoftmaxRow(a)
            | Op::Mse(a, _)
            | Op::Sum(a)
            | Op::ColumnSums(a)
            | Op::Transpose(a)
            | Op::SliceRows(a, _)
            | Op::GatherRows(a, _)
            | Op::NormalizeAdjacency(a, _) => vec![*a],
        }
    }
}

#[derive(Debug)]
pub struct Node {
    value: Matrix,
    grad: Matrix,
    op: Op,
    requires_grad: bool,
}

impl Node {
    pub fn value(&self) -> &Matrix {
        &self.value
    }

    pub fn grad(&self) -> &Matrix {
        &self.grad
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].grad
    }

    /// Parents of `id` as recorded by the producing op.
    pub fn parents(&self, id: NodeId) -> Vec<NodeId> {
        self.nodes[id.0].op.parents()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad.fill(0.0);
        }
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool, name: &'static str) -> Result<NodeId> {
        value.check_finite(name)?;
        let grad = Matrix::zeros(value.rows(), value.cols());
        self.nodes.push(Node {
            value,
            grad,
            op,
            requires_grad,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn rg(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Matrix) -> Result<NodeId> {
        self.push(value, Op::Leaf, true, "param")
    }

    /// Leaf that never receives gradient.
    pub fn constant(&mut self, value: Matrix) -> Result<NodeId> {
        self.push(value, Op::Leaf, false, "constant")
    }

    /// Copies the current value of `a` into a new constant, cutting gradient flow.
    pub fn detach(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).clone();
        self.constant(v)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(&[a, b]);
        self.push(v, Op::MatMul(a, b), rg, "matmul")
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).zip_map(self.value(b), "add", |x, y| x + y)?;
        let rg = self.rg(&[a, b]);
        self.push(v, Op::Add(a, b), rg, "add")
    }

    pub fn elementwise_mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).zip_map(self.value(b), "elementwise_mul", |x, y| x * y)?;
        let rg = self.rg(&[a, b]);
        self.push(v, Op::Mul(a, b), rg, "elementwise_mul")
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        if !c.is_finite() {
            return Err(Error::NonFinite("scale factor"));
        }
        let v = self.value(a).map(|x| x * c);
        let rg = self.rg(&[a]);
        self.push(v, Op::Scale(a, c), rg, "scale")
    }

    pub fn activation(&mut self, a: NodeId, act: Activation) -> Result<NodeId> {
        let v = match act {
            Activation::Relu => self.value(a).map(|x| if x > 0.0 { x } else { 0.0 }),
            Activation::Tanh => self.value(a).map(f64::tanh),
        };
        let rg = self.rg(&[a]);
        self.push(v, Op::Activation(a, act), rg, "activation")
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.activation(a, Activation::Relu)
    }

    /// Softmax over a single row vector, stabilized by max subtraction.
    pub fn softmax_row(&mut self, a: NodeId) -> Result<NodeId> {
        let x = self.value(a);
        if x.rows() != 1 || x.cols() == 0 {
            return Err(Error::invalid(format!(
                "softmax_row expects a non-empty row vector, got {:?}",
                x.shape()
            )));
        }
        let v = Matrix::row_vector(&softmax(x.as_slice()));
        let rg = self.rg(&[a]);
        self.push(v, Op::SoftmaxRow(a), rg, "softmax_row")
    }

    /// Mean of squared differences against a fixed target, as a 1x1 node.
    pub fn mse_loss(&mut self, pred: NodeId, target: &Matrix) -> Result<NodeId> {
        target.check_finite("mse target")?;
        let diff = self.value(pred).zip_map(target, "mse_loss", |p, t| p - t)?;
        let count = diff.len().max(1) as f64;
        let loss = diff.as_slice().iter().map(|d| d * d).sum::<f64>() / count;
        let rg = self.rg(&[pred]);
        self.push(Matrix::filled(1, 1, loss), Op::Mse(pred, target.clone()), rg, "mse_loss")
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let s = self.value(a).sum();
        let rg = self.rg(&[a]);
        self.push(Matrix::filled(1, 1, s), Op::Sum(a), rg, "sum")
    }

    /// Column sums as a `1 x cols` row vector.
    pub fn column_sums(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).column_sums();
        let rg = self.rg(&[a]);
        self.push(v, Op::ColumnSums(a), rg, "column_sums")
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).transpose();
        let rg = self.rg(&[a]);
        self.push(v, Op::Transpose(a), rg, "transpose")
    }

    pub fn vstack(&mut self, top: NodeId, bottom: NodeId) -> Result<NodeId> {
        let v = Matrix::vstack(self.value(top), self.value(bottom))?;
        let rg = self.rg(&[top, bottom]);
        self.push(v, Op::VStack(top, bottom), rg, "vstack")
    }

    pub fn hstack(&mut self, left: NodeId, right: NodeId) -> Result<NodeId> {
        let (l, r) = (self.value(left), self.value(right));
        if l.rows() != r.rows() {
            return Err(Error::shape("hstack", l.shape(), r.shape()));
        }
        let mut v = Matrix::zeros(l.rows(), l.cols() + r.cols());
        for i in 0..l.rows() {
            let row = v.row_mut(i);
            row[..l.cols()].copy_from_slice(l.row(i));
            row[l.cols()..].copy_from_slice(r.row(i));
        }
        let rg = self.rg(&[left, right]);
        self.push(v, Op::HStack(left, right), rg, "hstack")
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, count: usize) -> Result<NodeId> {
        let x = self.value(a);
        if start + count > x.rows() {
            return Err(Error::invalid(format!(
                "row slice {start}..{} out of range for {:?}",
                start + count,
                x.shape()
            )));
        }
        let v = x.slice_rows(start, count);
        let rg = self.rg(&[a]);
        self.push(v, Op::SliceRows(a, start), rg, "slice_rows")
    }

    /// Row lookup: output row `i` is `table[ids[i]]`. Backward scatter-adds.
    pub fn gather_rows(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId> {
        let t = self.value(table);
        if let Some(bad) = ids.iter().find(|&&i| i >= t.rows()) {
            return Err(Error::invalid(format!(
                "row id {bad} out of range for table with {} rows",
                t.rows()
            )));
        }
        let mut v = Matrix::zeros(ids.len(), t.cols());
        for (r, &id) in ids.iter().enumerate() {
            v.row_mut(r).copy_from_slice(t.row(id));
        }
        let rg = self.rg(&[table]);
        self.push(v, Op::GatherRows(table, ids.to_vec()), rg, "gather_rows")
    }

    /// Differentiable `D̃^{-1/2} (A + I) D̃^{-1/2}`; see [`graph::normalize_adjacency`].
    pub fn normalize_adjacency(&mut self, a: NodeId) -> Result<NodeId> {
        self.normalize_adjacency_with(a, true)
    }

    pub fn normalize_adjacency_with(&mut self, a: NodeId, add_identity: bool) -> Result<NodeId> {
        let v = graph::normalize_adjacency_with(self.value(a), add_identity)?;
        let rg = self.rg(&[a]);
        self.push(v, Op::NormalizeAdjacency(a, add_identity), rg, "normalize_adjacency")
    }

    /// Differentiable token-label edge reconstruction; see [`graph::cosine_edges`].
    pub fn cosine_edges(&mut self, tokens: NodeId, labels: NodeId) -> Result<NodeId> {
        let v = graph::cosine_edges(self.value(tokens), self.value(labels))?;
        let rg = self.rg(&[tokens, labels]);
        self.push(v, Op::CosineEdges(tokens, labels), rg, "cosine_edges")
    }

    /// Back-propagates from the scalar `loss`, adding this pass's gradients to
    /// every node that requires them.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::invalid("loss node is not on this tape"));
        }
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(Error::invalid(format!(
                "backward needs a scalar loss, got shape {shape:?}"
            )));
        }
        let mut pass: Vec<Option<Matrix>> = (0..=loss.0).map(|_| None).collect();
        pass[loss.0] = Some(Matrix::ones(1, 1));

        for idx in (0..=loss.0).rev() {
            let Some(g) = pass[idx].take() else { continue };
            if !self.nodes[idx].requires_grad {
                continue;
            }
            for (parent, contrib) in self.local_grads(idx, &g)? {
                if !self.nodes[parent.0].requires_grad {
                    continue;
                }
                match &mut pass[parent.0] {
                    Some(acc) => acc.add_assign(&contrib),
                    slot @ None => *slot = Some(contrib),
                }
            }
            self.nodes[idx].grad.add_assign(&g);
        }
        Ok(())
    }

    /// Vector-Jacobian products of node `idx` for upstream gradient `g`.
    fn local_grads(&self, idx: usize, g: &Matrix) -> Result<Vec<(NodeId, Matrix)>> {
        let node = &self.nodes[idx];
        let out = &node.value;
        Ok(match &node.op {
            Op::Leaf => vec![],
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                vec![(*a, g.matmul_t(bv)?), (*b, av.t_matmul(g)?)]
            }
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                vec![
                    (*a, g.zip_map(bv, "mul_backward", |x, y| x * y)?),
                    (*b, g.zip_map(av, "mul_backward", |x, y| x * y)?),
                ]
            }
            Op::Scale(a, c) => vec![(*a, g.map(|x| x * c))],
            Op::Activation(a, Activation::Relu) => {
                let x = self.value(*a);
                vec![(*a, g.zip_map(x, "relu_backward", |g, x| if x > 0.0 { g } else { 0.0 })?)]
            }
            Op::Activation(a, Activation::Tanh) => {
                vec![(*a, g.zip_map(out, "tanh_backward", |g, y| g * (1.0 - y * y))?)]
            }
            Op::SoftmaxRow(a) => {
                let dot: f64 = g.as_slice().iter().zip(out.as_slice()).map(|(g, y)| g * y).sum();
                vec![(*a, g.zip_map(out, "softmax_backward", |g, y| y * (g - dot))?)]
            }
            Op::Mse(a, target) => {
                let scale = 2.0 * g.get(0, 0) / target.len().max(1) as f64;
                let d = self.value(*a).zip_map(target, "mse_backward", |p, t| scale * (p - t))?;
                vec![(*a, d)]
            }
            Op::Sum(a) => {
                let (r, c) = self.value(*a).shape();
                vec![(*a, Matrix::filled(r, c, g.get(0, 0)))]
            }
            Op::ColumnSums(a) => {
                let rows = self.value(*a).rows();
                let mut d = Matrix::zeros(rows, g.cols());
                for r in 0..rows {
                    d.row_mut(r).copy_from_slice(g.row(0));
                }
                vec![(*a, d)]
            }
            Op::Transpose(a) => vec![(*a, g.transpose())],
            Op::VStack(top, bottom) => {
                let split = self.value(*top).rows();
                vec![
                    (*top, g.slice_rows(0, split)),
                    (*bottom, g.slice_rows(split, g.rows() - split)),
                ]
            }
            Op::HStack(left, right) => {
                let split = self.value(*left).cols();
                let mut dl = Matrix::zeros(g.rows(), split);
                let mut dr = Matrix::zeros(g.rows(), g.cols() - split);
                for r in 0..g.rows() {
                    dl.row_mut(r).copy_from_slice(&g.row(r)[..split]);
                    dr.row_mut(r).copy_from_slice(&g.row(r)[split..]);
                }
                vec![(*left, dl), (*right, dr)]
            }
            Op::SliceRows(a, start) => {
                let (r, c) = self.value(*a).shape();
                let mut d = Matrix::zeros(r, c);
                for i in 0..g.rows() {
                    d.row_mut(start + i).copy_from_slice(g.row(i));
                }
                vec![(*a, d)]
            }
            Op::GatherRows(table, ids) => {
                let (r, c) = self.value(*table).shape();
                let mut d = Matrix::zeros(r, c);
                for (i, &id) in ids.iter().enumerate() {
                    for (acc, v) in d.row_mut(id).iter_mut().zip(g.row(i)) {
                        *acc += v;
                    }
                }
                vec![(*table, d)]
            }
            Op::NormalizeAdjacency(a, add_identity) => {
                vec![(*a, graph::normalize_adjacency_backward(self.value(*a), g, *add_identity))]
            }
            Op::CosineEdges(t, l) => {
                let (dt, dl) = graph::cosine_edges_backward(self.value(*t), self.value(*l), g);
                vec![(*t, dt), (*l, dl)]
            }
        })
    }
}

pub(crate) fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows)
    }

    #[test]
    fn identity_matmul_is_noop() {
        let mut t = Tape::new();
        let i = t.constant(Matrix::identity(2)).unwrap();
        let x = t.constant(m(&[&[1.5, -2.0], &[0.25, 7.0]])).unwrap();
        let y = t.matmul(i, x).unwrap();
        assert_eq!(t.value(y), t.value(x));
    }

    #[test]
    fn matmul_gradient_of_sum() {
        let mut t = Tape::new();
        let a = t.param(Matrix::identity(2)).unwrap();
        let b = t.constant(m(&[&[2.0, 3.0], &[4.0, 5.0]])).unwrap();
        let p = t.matmul(a, b).unwrap();
        let s = t.sum(p).unwrap();
        t.backward(s).unwrap();
        assert_eq!(t.grad(a), &m(&[&[5.0, 9.0], &[5.0, 9.0]]));
    }

    #[test]
    fn elementwise_identities() {
        let mut t = Tape::new();
        let x = t.param(m(&[&[1.0, -2.0], &[3.0, 0.5]])).unwrap();
        let z = t.constant(Matrix::zeros(2, 2)).unwrap();
        let o = t.constant(Matrix::ones(2, 2)).unwrap();
        let added = t.add(x, z).unwrap();
        let multiplied = t.elementwise_mul(x, o).unwrap();
        assert_eq!(t.value(added), t.value(x));
        assert_eq!(t.value(multiplied), t.value(x));

        let scaled = t.scale(x, 0.0).unwrap();
        assert_eq!(t.value(scaled), &Matrix::zeros(2, 2));
        let s = t.sum(scaled).unwrap();
        t.backward(s).unwrap();
        assert_eq!(t.grad(x), &Matrix::zeros(2, 2));
    }

    #[test]
    fn shape_mismatch_errors() {
        let mut t = Tape::new();
        let a = t.constant(Matrix::zeros(2, 3)).unwrap();
        let b = t.constant(Matrix::zeros(3, 2)).unwrap();
        assert!(matches!(t.add(a, b), Err(Error::Shape { .. })));
        assert!(matches!(t.elementwise_mul(a, b), Err(Error::Shape { .. })));
        assert!(matches!(t.mse_loss(a, &Matrix::zeros(3, 2)), Err(Error::Shape { .. })));
        assert!(matches!(t.matmul(a, a), Err(Error::Shape { .. })));
    }

    #[test]
    fn relu_cases() {
        let mut t = Tape::new();
        let x = t.param(m(&[&[-1.0, 2.0, 0.0]])).unwrap();
        let y = t.relu(x).unwrap();
        assert_eq!(t.value(y), &m(&[&[0.0, 2.0, 0.0]]));
        let s = t.sum(y).unwrap();
        t.backward(s).unwrap();
        // subgradient at exactly zero is zero
        assert_eq!(t.grad(x), &m(&[&[0.0, 1.0, 0.0]]));

        let mut t = Tape::new();
        let x = t.param(m(&[&[3.0]])).unwrap();
        let y = t.relu(x).unwrap();
        t.backward(y).unwrap();
        assert_eq!(t.grad(x), &m(&[&[1.0]]));
    }

    #[test]
    fn softmax_values() {
        let mut t = Tape::new();
        let x = t.constant(m(&[&[0.0, 0.0, 0.0]])).unwrap();
        let y = t.softmax_row(x).unwrap();
        for v in t.value(y).as_slice() {
            assert_abs_diff_eq!(*v, 1.0 / 3.0, epsilon = 1e-15);
        }
        let x = t.constant(m(&[&[2f64.ln(), 0.0]])).unwrap();
        let y = t.softmax_row(x).unwrap();
        assert_abs_diff_eq!(t.value(y).get(0, 0), 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t.value(y).get(0, 1), 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn softmax_rejects_empty_and_matrices() {
        let mut t = Tape::new();
        let e = t.constant(Matrix::zeros(1, 0)).unwrap();
        assert!(t.softmax_row(e).is_err());
        let two = t.constant(Matrix::zeros(2, 2)).unwrap();
        assert!(t.softmax_row(two).is_err());
    }

    #[test]
    fn softmax_survives_large_inputs() {
        let mut t = Tape::new();
        let x = t.constant(m(&[&[1000.0, 999.0, -1000.0]])).unwrap();
        let y = t.softmax_row(x).unwrap();
        assert!(t.value(y).is_finite());
        assert_abs_diff_eq!(t.value(y).sum(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn mse_values() {
        let mut t = Tape::new();
        let p = t.param(m(&[&[1.0, 0.0]])).unwrap();
        let l = t.mse_loss(p, &m(&[&[0.0, 0.0]])).unwrap();
        assert_eq!(t.value(l).get(0, 0), 0.5);
        t.backward(l).unwrap();
        assert_eq!(t.grad(p), &m(&[&[1.0, 0.0]]));

        let same = t.mse_loss(p, &m(&[&[1.0, 0.0]])).unwrap();
        assert_eq!(t.value(same).get(0, 0), 0.0);
    }

    #[test]
    fn backward_of_sum_gives_ones_and_accumulates() {
        let mut t = Tape::new();
        let w = t.param(m(&[&[0.3, -0.7], &[1.1, 2.0]])).unwrap();
        let s = t.sum(w).unwrap();
        t.backward(s).unwrap();
        assert_eq!(t.grad(w), &Matrix::ones(2, 2));
        t.backward(s).unwrap();
        assert_eq!(t.grad(w), &Matrix::filled(2, 2, 2.0));
        t.zero_grad();
        assert_eq!(t.grad(w), &Matrix::zeros(2, 2));
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut t = Tape::new();
        let w = t.param(Matrix::ones(2, 2)).unwrap();
        assert!(t.backward(w).is_err());
    }

    #[test]
    fn non_finite_inputs_rejected() {
        let mut t = Tape::new();
        assert!(matches!(
            t.param(m(&[&[f64::NAN]])),
            Err(Error::NonFinite(_))
        ));
        assert!(t.constant(m(&[&[f64::INFINITY]])).is_err());
        let x = t.param(Matrix::ones(1, 1)).unwrap();
        assert!(t.scale(x, f64::NAN).is_err());
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut t = Tape::new();
        let w = t.param(Matrix::ones(2, 2)).unwrap();
        let c = t.constant(Matrix::ones(2, 2)).unwrap();
        let d = t.detach(w).unwrap();
        let p = t.matmul(c, d).unwrap();
        let q = t.matmul(p, w).unwrap();
        let s = t.sum(q).unwrap();
        t.backward(s).unwrap();
        assert!(!t.node(d).requires_grad());
        assert_eq!(t.grad(c), &Matrix::zeros(2, 2));
        assert_eq!(t.grad(d), &Matrix::zeros(2, 2));
        assert!(t.grad(w).sum() > 0.0);
    }

    #[test]
    fn tape_is_topologically_ordered() {
        let mut t = Tape::new();
        let a = t.param(Matrix::ones(2, 2)).unwrap();
        let b = t.matmul(a, a).unwrap();
        let c = t.add(b, a).unwrap();
        let d = t.sum(c).unwrap();
        for id in [a, b, c, d] {
            for p in t.parents(id) {
                assert!(p < id);
            }
        }
    }

    #[test]
    fn gather_rows_scatters_into_used_rows_only() {
        let mut t = Tape::new();
        let table = t.param(Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])).unwrap();
        let g = t.gather_rows(table, &[2, 0, 2]).unwrap();
        assert_eq!(t.value(g).row(0), t.value(g).row(2));
        let s = t.sum(g).unwrap();
        t.backward(s).unwrap();
        assert_eq!(t.grad(table), &Matrix::from_rows(&[[1.0, 1.0], [0.0, 0.0], [2.0, 2.0]]));
        assert!(t.gather_rows(table, &[3]).is_err());
    }
}
