//! Label scoring from the final token-label edges and the two decoding rules.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::softmax;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Column sums over all token rows: `score[j] = Σ_i a[i][j]`.
pub fn score_labels(a_tl_last: &Matrix) -> Vec<f64> {
    a_tl_last.column_sums().into_vec()
}

pub fn label_probabilities(scores: &[f64]) -> Vec<f64> {
    softmax(scores)
}

/// The `min(k, n)` most probable labels, ties going to the lower index.
/// Returned in ascending index order.
pub fn decode_topk(probs: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::invalid("top-k decoding needs k >= 1"));
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    // stable sort keeps lower indices first among equal probabilities
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]));
    order.truncate(k);
    order.sort_unstable();
    Ok(order)
}

/// Every label with probability `>= t`. May be empty.
pub fn decode_threshold(probs: &[f64], t: f64) -> Result<Vec<usize>> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::invalid(format!("threshold must lie in (0, 1], got {t}")));
    }
    Ok((0..probs.len()).filter(|&j| probs[j] >= t).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "method", content = "value")]
pub enum DecodeMethod {
    TopK(usize),
    Threshold(f64),
}

impl DecodeMethod {
    pub fn decode(&self, probs: &[f64]) -> Result<Vec<usize>> {
        match *self {
            DecodeMethod::TopK(k) => decode_topk(probs, k),
            DecodeMethod::Threshold(t) => decode_threshold(probs, t),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DecodeMethod::TopK(0) => Err(Error::invalid("top-k decoding needs k >= 1")),
            DecodeMethod::Threshold(t) if !(t > 0.0 && t <= 1.0) => {
                Err(Error::invalid(format!("threshold must lie in (0, 1], got {t}")))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for DecodeMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecodeMethod::TopK(k) => write!(f, "topk:{k}"),
            DecodeMethod::Threshold(t) => write!(f, "thr:{t}"),
        }
    }
}

fn parse_number(s: &str) -> Option<f64> {
    match s.split_once('/') {
        Some((a, b)) => {
            let (a, b) = (a.trim().parse::<f64>().ok()?, b.trim().parse::<f64>().ok()?);
            (b != 0.0).then(|| a / b)
        }
        None => s.trim().parse().ok(),
    }
}

/// Parses `topk:K` or `thr:T`, where `T` may be a fraction such as `2/11`.
impl FromStr for DecodeMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("decode method {s:?} is not topk:K or thr:T"));
        let (kind, value) = s.split_once(':').ok_or_else(bad)?;
        let method = match kind {
            "topk" => DecodeMethod::TopK(value.trim().parse().map_err(|_| bad())?),
            "thr" | "threshold" => DecodeMethod::Threshold(parse_number(value).ok_or_else(bad)?),
            _ => return Err(bad()),
        };
        method.validate()?;
        Ok(method)
    }
}

/// Softmax output plus the chosen label set for one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub probs: Vec<f64>,
    pub chosen: Vec<usize>,
}

impl Prediction {
    pub fn from_probs(probs: Vec<f64>, method: DecodeMethod) -> Result<Self> {
        let chosen = method.decode(&probs)?;
        Ok(Self { probs, chosen })
    }
}
