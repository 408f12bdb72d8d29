//! Label-pair correlation: Pearson over predicted indicator vectors and
//! cosine over final label-node embeddings.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationReport {
    pub pearson: Matrix,
    pub cosine: Matrix,
}

/// Pearson correlation between the per-label 0/1 indicator vectors of a
/// prediction list. Zero-variance labels correlate 0 with everything else.
pub fn pearson_matrix(pred_sets: &[Vec<usize>], n: usize) -> Result<Matrix> {
    if pred_sets.is_empty() {
        return Err(Error::invalid("pearson_matrix needs at least one prediction"));
    }
    let count = pred_sets.len() as f64;
    let mut ind = Matrix::zeros(n, pred_sets.len());
    for (s, set) in pred_sets.iter().enumerate() {
        for &j in set {
            if j >= n {
                return Err(Error::invalid(format!("label index {j} out of range for {n} labels")));
            }
            ind.set(j, s, 1.0);
        }
    }
    let centered: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mean = ind.row(j).iter().sum::<f64>() / count;
            ind.row(j).iter().map(|v| v - mean).collect()
        })
        .collect();
    Ok(correlation_from_rows(&centered))
}

/// Raw cosine similarity between label rows. Zero-norm rows give 0 off the
/// diagonal; the diagonal is always 1.
pub fn label_cosine_matrix(x_label_last: &Matrix) -> Result<Matrix> {
    if x_label_last.rows() < 2 {
        return Err(Error::invalid("label_cosine_matrix needs at least two labels"));
    }
    let rows: Vec<Vec<f64>> = (0..x_label_last.rows()).map(|j| x_label_last.row(j).to_vec()).collect();
    Ok(correlation_from_rows(&rows))
}

fn correlation_from_rows(rows: &[Vec<f64>]) -> Matrix {
    let n = rows.len();
    let norms: Vec<f64> = rows.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let mut out = Matrix::identity(n);
    for i in 0..n {
        for j in 0..i {
            let c = if norms[i] == 0.0 || norms[j] == 0.0 {
                0.0
            } else {
                let dot: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
                (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0)
            };
            out.set(i, j, c);
            out.set(j, i, c);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_cases() {
        let preds = vec![vec![0, 1], vec![2], vec![0, 1, 3], vec![2, 3]];
        let p = pearson_matrix(&preds, 5).unwrap();
        assert!((p.get(0, 1) - 1.0).abs() < 1e-12);
        // label 2 is predicted exactly when 0 is not
        assert!((p.get(0, 2) + 1.0).abs() < 1e-12);
        // label 4 never predicted
        for j in 0..4 {
            assert_eq!(p.get(4, j), 0.0);
        }
        assert_eq!(p.get(4, 4), 1.0);
        assert!(p.is_symmetric(0.0));
    }

    #[test]
    fn pearson_matches_textbook_formula() {
        let preds = vec![vec![0], vec![0, 1], vec![1], vec![], vec![0, 1], vec![0]];
        let p = pearson_matrix(&preds, 2).unwrap();
        let x = [1.0, 1.0, 0.0, 0.0, 1.0, 1.0];
        let y = [0.0, 1.0, 1.0, 0.0, 1.0, 0.0];
        let n = 6.0;
        let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let sxx: f64 = x.iter().map(|a| a * a).sum();
        let syy: f64 = y.iter().map(|a| a * a).sum();
        let r = (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt());
        assert!((p.get(0, 1) - r).abs() < 1e-12);
    }

    #[test]
    fn pearson_rejects_empty() {
        assert!(pearson_matrix(&[], 3).is_err());
        assert!(pearson_matrix(&[vec![3]], 3).is_err());
    }

    #[test]
    fn cosine_cases() {
        let x = Matrix::from_rows(&[[1.0, 0.0], [2.0, 0.0], [0.0, 3.0], [0.0, 0.0], [-1.0, 0.0]]);
        let c = label_cosine_matrix(&x).unwrap();
        assert!((c.get(0, 1) - 1.0).abs() < 1e-12);
        assert_eq!(c.get(0, 2), 0.0);
        assert_eq!(c.get(3, 0), 0.0);
        assert_eq!(c.get(3, 3), 1.0);
        assert!((c.get(0, 4) + 1.0).abs() < 1e-12);
        assert!(c.is_symmetric(0.0));
        assert!(label_cosine_matrix(&Matrix::ones(1, 3)).is_err());
    }
}
