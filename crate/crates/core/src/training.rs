//! Mini-batch training, prediction and evaluation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::autodiff::Tape;
use crate::decode::{DecodeMethod, Prediction};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::metrics::EvalReport;
use crate::model::{build_target, ForwardTrace, GraphSample, Hgcn};
use crate::optim::Optimizer;

/// Loss and per-parameter gradients for one sample, in [`crate::model::ModelParams::named`] order.
pub fn sample_gradients(model: &Hgcn, sample: &GraphSample) -> Result<(f64, Vec<Matrix>)> {
    let mut tape = Tape::new();
    let nodes = model.forward_on_tape(&mut tape, sample)?;
    let target = build_target(&sample.label_vector(model.num_labels()));
    let loss = tape.mse_loss(nodes.probs, &target)?;
    tape.backward(loss)?;
    let grads = nodes.params.iter().map(|&id| tape.grad(id).clone()).collect();
    Ok((tape.value(loss).get(0, 0), grads))
}

#[derive(Clone, Debug)]
pub struct Trainer {
    pub model: Hgcn,
    optimizer: Optimizer,
}

impl Trainer {
    pub fn new(model: Hgcn) -> Result<Self> {
        let optimizer = Optimizer::new(model.cfg.optimizer, model.cfg.lr)?;
        Ok(Self { model, optimizer })
    }

    /// Averages the per-sample MSE over `batch`, applies one optimizer step and
    /// returns the mean loss. Per-sample gradients may be computed in parallel
    /// but are summed in batch order, so results do not depend on scheduling.
    pub fn train_step(&mut self, batch: &[GraphSample]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::invalid("train_step on an empty batch"));
        }
        let model = &self.model;
        let per_sample: Vec<(f64, Vec<Matrix>)> = batch
            .par_iter()
            .map(|s| sample_gradients(model, s))
            .collect::<Result<_>>()?;
        let weight = 1.0 / batch.len() as f64;
        let mut params = self.model.params.all_mut();
        let mut loss = 0.0;
        for (l, grads) in &per_sample {
            loss += l;
            for (p, g) in params.iter_mut().zip(grads) {
                for (acc, v) in p.grad.as_mut_slice().iter_mut().zip(g.as_slice()) {
                    *acc += weight * v;
                }
            }
        }
        self.optimizer.step(&mut params)?;
        Ok(loss * weight)
    }

    /// Runs `opts.epochs` passes over `train`, shuffled per epoch from
    /// `(seed, epoch)`. `on_epoch` sees each log entry as it is produced.
    pub fn fit(
        &mut self,
        train: &[GraphSample],
        dev: Option<(&[GraphSample], &[String])>,
        opts: &TrainOptions,
        mut on_epoch: impl FnMut(&EpochLog),
    ) -> Result<Vec<EpochLog>> {
        if train.is_empty() {
            return Err(Error::invalid("training set is empty"));
        }
        if opts.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        let mut logs = Vec::with_capacity(opts.epochs);
        let mut order: Vec<usize> = (0..train.len()).collect();
        for epoch in 1..=opts.epochs {
            let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed(self.model.cfg.seed, epoch));
            order.sort_unstable();
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for chunk in order.chunks(opts.batch_size) {
                let batch: Vec<GraphSample> = chunk.iter().map(|&i| train[i].clone()).collect();
                total += self.train_step(&batch)? * batch.len() as f64;
            }
            let dev_report = match dev {
                Some((samples, names)) if !samples.is_empty() => Some(evaluate(&self.model, samples, names, opts.decode)?),
                _ => None,
            };
            let log = EpochLog {
                epoch,
                mean_loss: total / train.len() as f64,
                dev: dev_report.map(|r| (r.micro_f1, r.macro_f1, r.jaccard)),
            };
            on_epoch(&log);
            logs.push(log);
        }
        Ok(logs)
    }
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (epoch as u64).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub decode: DecodeMethod,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Dev micro F1, macro F1, Jaccard.
    pub dev: Option<(f64, f64, f64)>,
}

impl EpochLog {
    pub fn line(&self) -> String {
        match self.dev {
            Some((mi, ma, j)) => format!(
                "epoch {} loss {:.8} dev_micro_f1 {:.6} dev_macro_f1 {:.6} dev_jaccard {:.6}",
                self.epoch, self.mean_loss, mi, ma, j
            ),
            None => format!("epoch {} loss {:.8}", self.epoch, self.mean_loss),
        }
    }
}

/// Forward passes over `samples`, fanned out across threads, in sample order.
pub fn forward_all(model: &Hgcn, samples: &[GraphSample]) -> Result<Vec<ForwardTrace>> {
    samples.par_iter().map(|s| model.forward(s)).collect()
}

pub fn predict(model: &Hgcn, samples: &[GraphSample], method: DecodeMethod) -> Result<Vec<Prediction>> {
    forward_all(model, samples)?
        .into_iter()
        .map(|t| Prediction::from_probs(t.probs, method))
        .collect()
}

pub fn evaluate(model: &Hgcn, samples: &[GraphSample], label_names: &[String], method: DecodeMethod) -> Result<EvalReport> {
    let preds: Vec<Vec<usize>> = predict(model, samples, method)?.into_iter().map(|p| p.chosen).collect();
    let golds: Vec<Vec<usize>> = samples.iter().map(|s| s.labels.clone()).collect();
    EvalReport::compute(&preds, &golds, label_names)
}
