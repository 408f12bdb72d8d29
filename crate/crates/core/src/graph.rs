//! Per-sample heterogeneous graph: token chain, label identity, token-label
//! edges, and the symmetric GCN normalization.
//!
//! Node order in the assembled graph is all `m` token nodes followed by the
//! `n` label nodes.

use crate::autodiff::{NodeId, Tape};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Undirected chain over `m` tokens in reading order, with self-loops.
pub fn build_chain_adjacency(m: usize) -> Result<Matrix> {
    if m == 0 {
        return Err(Error::invalid("chain adjacency needs at least one token"));
    }
    let mut a = Matrix::identity(m);
    for i in 0..m - 1 {
        a.set(i, i + 1, 1.0);
        a.set(i + 1, i, 1.0);
    }
    Ok(a)
}

pub fn build_label_adjacency(n: usize) -> Result<Matrix> {
    if n == 0 {
        return Err(Error::invalid("label adjacency needs at least one label"));
    }
    Ok(Matrix::identity(n))
}

/// The three relation blocks of one sample graph.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjacencyBlocks {
    pub a_token: Matrix,
    pub a_label: Matrix,
    pub a_token_label: Matrix,
}

impl AdjacencyBlocks {
    /// Initial blocks: chain over tokens, identity over labels, no token-label edges.
    pub fn initial(m: usize, n: usize) -> Result<Self> {
        Ok(Self {
            a_token: build_chain_adjacency(m)?,
            a_label: build_label_adjacency(n)?,
            a_token_label: Matrix::zeros(m, n),
        })
    }

    pub fn token_count(&self) -> usize {
        self.a_token.rows()
    }

    pub fn label_count(&self) -> usize {
        self.a_label.rows()
    }
}

/// `[[a_token, a_token_label], [a_token_labelᵀ, a_label]]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockAdjacency {
    pub full: Matrix,
    pub token_count: usize,
}

fn check_blocks(a_token: (usize, usize), a_label: (usize, usize), tl: (usize, usize)) -> Result<()> {
    if a_token.0 != a_token.1 {
        return Err(Error::shape("assemble_block", a_token, a_token));
    }
    if a_label.0 != a_label.1 {
        return Err(Error::shape("assemble_block", a_label, a_label));
    }
    if tl != (a_token.0, a_label.0) {
        return Err(Error::shape("assemble_block", tl, (a_token.0, a_label.0)));
    }
    Ok(())
}

pub fn assemble_block(blocks: &AdjacencyBlocks) -> Result<BlockAdjacency> {
    check_blocks(
        blocks.a_token.shape(),
        blocks.a_label.shape(),
        blocks.a_token_label.shape(),
    )?;
    let (m, n) = blocks.a_token_label.shape();
    let mut full = Matrix::zeros(m + n, m + n);
    for i in 0..m {
        for j in 0..m {
            full.set(i, j, blocks.a_token.get(i, j));
        }
        for j in 0..n {
            let w = blocks.a_token_label.get(i, j);
            full.set(i, m + j, w);
            full.set(m + j, i, w);
        }
    }
    for i in 0..n {
        for j in 0..n {
            full.set(m + i, m + j, blocks.a_label.get(i, j));
        }
    }
    Ok(BlockAdjacency {
        full,
        token_count: m,
    })
}

/// Tape version of [`assemble_block`]: the token-label block stays differentiable.
pub fn assemble_block_node(
    tape: &mut Tape,
    a_token: NodeId,
    a_token_label: NodeId,
    a_label: NodeId,
) -> Result<NodeId> {
    check_blocks(
        tape.value(a_token).shape(),
        tape.value(a_label).shape(),
        tape.value(a_token_label).shape(),
    )?;
    let tl_t = tape.transpose(a_token_label)?;
    let top = tape.hstack(a_token, a_token_label)?;
    let bottom = tape.hstack(tl_t, a_label)?;
    tape.vstack(top, bottom)
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃` the row sums of `A + I`.
///
/// The identity is added even when `a` already carries self-loops.
pub fn normalize_adjacency(a: &Matrix) -> Result<Matrix> {
    normalize_adjacency_with(a, true)
}

/// As [`normalize_adjacency`], optionally skipping the `+ I` step. Rows whose
/// degree is zero stay zero.
pub fn normalize_adjacency_with(a: &Matrix, add_identity: bool) -> Result<Matrix> {
    let s = inv_sqrt_degrees(a, add_identity)?;
    let n = a.rows();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out.set(i, j, s[i] * augmented(a, i, j, add_identity) * s[j]);
        }
    }
    Ok(out)
}

#[inline]
fn augmented(a: &Matrix, i: usize, j: usize, add_identity: bool) -> f64 {
    a.get(i, j) + if add_identity && i == j { 1.0 } else { 0.0 }
}

fn inv_sqrt_degrees(a: &Matrix, add_identity: bool) -> Result<Vec<f64>> {
    if a.rows() != a.cols() {
        return Err(Error::shape("normalize_adjacency", a.shape(), a.shape()));
    }
    if a.as_slice().iter().any(|v| *v < 0.0) {
        return Err(Error::invalid("normalize_adjacency needs non-negative entries"));
    }
    let extra = if add_identity { 1.0 } else { 0.0 };
    Ok((0..a.rows())
        .map(|i| {
            let d = a.row(i).iter().sum::<f64>() + extra;
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect())
}

/// Vector-Jacobian product of [`normalize_adjacency_with`] at `a` for upstream `g`.
pub(crate) fn normalize_adjacency_backward(a: &Matrix, g: &Matrix, add_identity: bool) -> Matrix {
    let n = a.rows();
    let s = inv_sqrt_degrees(a, add_identity).expect("validated in forward");
    let aug = |i: usize, j: usize| augmented(a, i, j, add_identity);
    // ∂L/∂s_i, with s_i appearing as both row and column factor.
    let mut ds = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            let gij = g.get(i, j) * aug(i, j);
            ds[i] += gij * s[j];
            ds[j] += gij * s[i];
        }
    }
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        // s_i = (Σ_k ã_ik)^{-1/2} ⇒ ∂s_i/∂ã_ik = -s_i³/2
        let through_degree = -0.5 * s[i].powi(3) * ds[i];
        for j in 0..n {
            out.set(i, j, g.get(i, j) * s[i] * s[j] + through_degree);
        }
    }
    out
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Token-label edge weights `(cos(token_i, label_j) + 1) / 2`.
///
/// A zero-norm row on either side yields weight 0, not 0.5.
pub fn cosine_edges(tokens: &Matrix, labels: &Matrix) -> Result<Matrix> {
    if tokens.cols() != labels.cols() {
        return Err(Error::shape("cosine_edges", tokens.shape(), labels.shape()));
    }
    let (m, n) = (tokens.rows(), labels.rows());
    let tn: Vec<f64> = (0..m).map(|i| norm(tokens.row(i))).collect();
    let ln: Vec<f64> = (0..n).map(|j| norm(labels.row(j))).collect();
    let mut out = Matrix::zeros(m, n);
    for (i, &ti) in tn.iter().enumerate() {
        for (j, &lj) in ln.iter().enumerate() {
            if ti == 0.0 || lj == 0.0 {
                continue;
            }
            let c = (dot(tokens.row(i), labels.row(j)) / (ti * lj)).clamp(-1.0, 1.0);
            out.set(i, j, 0.5 * (c + 1.0));
        }
    }
    Ok(out)
}

pub(crate) fn cosine_edges_backward(tokens: &Matrix, labels: &Matrix, g: &Matrix) -> (Matrix, Matrix) {
    let (m, n) = (tokens.rows(), labels.rows());
    let tn: Vec<f64> = (0..m).map(|i| norm(tokens.row(i))).collect();
    let ln: Vec<f64> = (0..n).map(|j| norm(labels.row(j))).collect();
    let mut dt = Matrix::zeros(m, tokens.cols());
    let mut dl = Matrix::zeros(n, labels.cols());
    for (i, &ti) in tn.iter().enumerate() {
        for (j, &lj) in ln.iter().enumerate() {
            if ti == 0.0 || lj == 0.0 {
                continue;
            }
            let (u, v) = (tokens.row(i), labels.row(j));
            let c = dot(u, v) / (ti * lj);
            let w = 0.5 * g.get(i, j);
            let inv = 1.0 / (ti * lj);
            let (cu, cv) = (c / (ti * ti), c / (lj * lj));
            for (k, d) in dt.row_mut(i).iter_mut().enumerate() {
                *d += w * (v[k] * inv - cu * u[k]);
            }
            for (k, d) in dl.row_mut(j).iter_mut().enumerate() {
                *d += w * (u[k] * inv - cv * v[k]);
            }
        }
    }
    (dt, dl)
}

/// Rebuilds the token-label block from current node features. With `detach`
/// set, the result is a constant and no gradient reaches the features.
pub fn reconstruct_token_label(
    tape: &mut Tape,
    x_token: NodeId,
    x_label: NodeId,
    detach: bool,
) -> Result<NodeId> {
    let edges = tape.cosine_edges(x_token, x_label)?;
    if detach {
        tape.detach(edges)
    } else {
        Ok(edges)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn chain_small_cases() {
        assert_eq!(build_chain_adjacency(1).unwrap(), Matrix::from_rows(&[[1.0]]));
        assert_eq!(
            build_chain_adjacency(3).unwrap(),
            Matrix::from_rows(&[[1.0, 1.0, 0.0], [1.0, 1.0, 1.0], [0.0, 1.0, 1.0]])
        );
        let a = build_chain_adjacency(4).unwrap();
        assert!(a.is_symmetric(0.0));
        assert_eq!(a.get(0, 2), 0.0);
        assert_eq!(a.get(0, 3), 0.0);
        assert_eq!(a.get(1, 3), 0.0);
        assert!(build_chain_adjacency(0).is_err());
    }

    #[test]
    fn label_identity() {
        assert_eq!(build_label_adjacency(2).unwrap(), Matrix::identity(2));
        assert_eq!(build_label_adjacency(1).unwrap(), Matrix::identity(1));
        let a = build_label_adjacency(11).unwrap();
        let trace: f64 = (0..11).map(|i| a.get(i, i)).sum();
        assert_eq!(trace, 11.0);
        assert_eq!(a.sum() - trace, 0.0);
        assert!(build_label_adjacency(0).is_err());
    }

    #[test]
    fn assemble_placement_and_symmetry() {
        let mut blocks = AdjacencyBlocks::initial(3, 2).unwrap();
        let zero = assemble_block(&blocks).unwrap();
        for i in 0..3 {
            for j in 3..5 {
                assert_eq!(zero.full.get(i, j), 0.0);
                assert_eq!(zero.full.get(j, i), 0.0);
            }
        }
        blocks.a_token_label = Matrix::from_rows(&[[0.1, 0.2], [0.3, 0.4], [0.5, 0.6]]);
        let b = assemble_block(&blocks).unwrap();
        assert!(b.full.is_symmetric(0.0));
        for i in 0..3 {
            for j in 0..2 {
                assert_eq!(b.full.get(i, 3 + j), blocks.a_token_label.get(i, j));
            }
        }
    }

    #[test]
    fn assemble_rejects_mismatch() {
        let mut blocks = AdjacencyBlocks::initial(3, 2).unwrap();
        blocks.a_token_label = Matrix::zeros(2, 2);
        assert!(assemble_block(&blocks).is_err());
    }

    #[test]
    fn assemble_node_matches_plain() {
        let mut blocks = AdjacencyBlocks::initial(2, 3).unwrap();
        blocks.a_token_label = Matrix::from_rows(&[[0.1, 0.2, 0.9], [0.3, 0.4, 0.7]]);
        let mut tape = Tape::new();
        let at = tape.constant(blocks.a_token.clone()).unwrap();
        let tl = tape.constant(blocks.a_token_label.clone()).unwrap();
        let al = tape.constant(blocks.a_label.clone()).unwrap();
        let full = assemble_block_node(&mut tape, at, tl, al).unwrap();
        assert_eq!(tape.value(full), &assemble_block(&blocks).unwrap().full);
    }

    #[test]
    fn normalize_cases() {
        assert_eq!(normalize_adjacency(&Matrix::zeros(2, 2)).unwrap(), Matrix::identity(2));
        let out = normalize_adjacency(&Matrix::ones(2, 2)).unwrap();
        let want = Matrix::from_rows(&[[2.0 / 3.0, 1.0 / 3.0], [1.0 / 3.0, 2.0 / 3.0]]);
        assert!(out.max_abs_diff(&want) < 1e-12);
        assert!(normalize_adjacency(&Matrix::from_rows(&[[-1.0]])).is_err());
    }

    #[test]
    fn cosine_edge_cases() {
        let t = Matrix::from_rows(&[[1.0, 2.0], [1.0, 0.0], [-1.0, -2.0], [0.0, 0.0]]);
        let l = Matrix::from_rows(&[[1.0, 2.0], [0.0, 3.0]]);
        let e = cosine_edges(&t, &l).unwrap();
        assert_abs_diff_eq!(e.get(0, 0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e.get(1, 1), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(e.get(2, 0), 0.0, epsilon = 1e-15);
        // dead feature row gives no edge at all
        assert_eq!(e.get(3, 0), 0.0);
        assert_eq!(e.get(3, 1), 0.0);
        assert!(cosine_edges(&t, &Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn detached_reconstruction_blocks_gradient() {
        let mut tape = Tape::new();
        let t = tape.param(Matrix::from_rows(&[[1.0, 2.0]])).unwrap();
        let l = tape.param(Matrix::from_rows(&[[0.5, -1.0]])).unwrap();
        let e = reconstruct_token_label(&mut tape, t, l, true).unwrap();
        assert!(!tape.node(e).requires_grad());
        let e2 = reconstruct_token_label(&mut tape, t, l, false).unwrap();
        let s = tape.sum(e2).unwrap();
        tape.backward(s).unwrap();
        assert!(tape.grad(t).as_slice().iter().any(|v| *v != 0.0));
    }
}
