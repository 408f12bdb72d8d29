//! Parameter storage and first-order optimizers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// A trainable matrix with its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: Matrix,
    pub grad: Matrix,
}

impl Param {
    pub fn new(value: Matrix) -> Self {
        let grad = Matrix::zeros(value.rows(), value.cols());
        Self { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::invalid(format!("unknown optimizer {other:?}"))),
        }
    }
}

fn check_lr(lr: f64) -> Result<()> {
    if lr.is_finite() && lr >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("learning rate must be finite and >= 0, got {lr}")))
    }
}

/// `p ← p − lr·grad`, then zero the gradients.
pub fn sgd_step(params: &mut [&mut Param], lr: f64) -> Result<()> {
    check_lr(lr)?;
    for p in params.iter_mut() {
        for (v, g) in p.value.as_mut_slice().iter_mut().zip(p.grad.as_slice()) {
            *v -= lr * g;
        }
        p.zero_grad();
    }
    Ok(())
}

/// Adaptive-moment optimizer with bias correction.
///
/// Defaults: `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    moments: Vec<(Matrix, Matrix)>,
}

impl Adam {
    pub fn new(lr: f64) -> Result<Self> {
        check_lr(lr)?;
        Ok(Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            moments: Vec::new(),
        })
    }

    /// Updates `params` in place and zeroes their gradients. The parameter list
    /// must have the same order and shapes on every call.
    pub fn step(&mut self, params: &mut [&mut Param]) -> Result<()> {
        if self.moments.is_empty() {
            self.moments = params
                .iter()
                .map(|p| {
                    let (r, c) = p.value.shape();
                    (Matrix::zeros(r, c), Matrix::zeros(r, c))
                })
                .collect();
        }
        if self.moments.len() != params.len() {
            return Err(Error::invalid("adam: parameter list changed between steps"));
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (p, (m, v)) in params.iter_mut().zip(self.moments.iter_mut()) {
            if m.shape() != p.value.shape() {
                return Err(Error::shape("adam", m.shape(), p.value.shape()));
            }
            let (ms, vs) = (m.as_mut_slice(), v.as_mut_slice());
            for (k, (x, g)) in p.value.as_mut_slice().iter_mut().zip(p.grad.as_slice()).enumerate() {
                ms[k] = self.beta1 * ms[k] + (1.0 - self.beta1) * g;
                vs[k] = self.beta2 * vs[k] + (1.0 - self.beta2) * g * g;
                let m_hat = ms[k] / bc1;
                let v_hat = vs[k] / bc2;
                *x -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            p.zero_grad();
        }
        Ok(())
    }
}

/// Either optimizer behind one interface.
#[derive(Clone, Debug)]
pub enum Optimizer {
    Sgd { lr: f64 },
    Adam(Adam),
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Result<Self> {
        check_lr(lr)?;
        Ok(match kind {
            OptimizerKind::Sgd => Optimizer::Sgd { lr },
            OptimizerKind::Adam => Optimizer::Adam(Adam::new(lr)?),
        })
    }

    pub fn step(&mut self, params: &mut [&mut Param]) -> Result<()> {
        match self {
            Optimizer::Sgd { lr } => sgd_step(params, *lr),
            Optimizer::Adam(adam) => adam.step(params),
        }
    }
}
