//! The heterogeneous graph convolution stack.
//!
//! Each sample becomes one graph with `m` token nodes followed by `n` label
//! nodes. Layer `l` propagates `H(l) = σ(norm(A) · H(l-1) · W(l-1))` where the
//! token-label block of `A` is zero for the first layer and rebuilt from the
//! current features by mapped cosine similarity for every later layer. After
//! the last layer the block is rebuilt once more; its column sums are the label
//! scores and their softmax the predicted distribution.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, NodeId, Tape};
use crate::encoder::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::graph::{self, assemble_block_node, reconstruct_token_label};
use crate::matrix::Matrix;
use crate::optim::{OptimizerKind, Param};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub hidden: usize,
    pub num_labels: usize,
    /// Width `d` of the initial token features.
    pub embed_dim: usize,
    pub activation: Activation,
    /// Cut gradient through the per-layer edge reconstruction. The final
    /// reconstruction used for scoring always stays differentiable.
    pub detach_edges: bool,
    /// Add `I` before normalizing even though the token and label blocks
    /// already carry self-loops.
    pub augment_identity: bool,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            num_layers: 2,
            hidden: 64,
            num_labels: 1,
            embed_dim: 64,
            activation: Activation::Relu,
            detach_edges: false,
            augment_identity: true,
            optimizer: OptimizerKind::Adam,
            lr: 0.01,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.num_layers == 0 {
            errs.push("num_layers must be >= 1".to_string());
        }
        if self.hidden == 0 {
            errs.push("hidden must be >= 1".to_string());
        }
        if self.num_labels == 0 {
            errs.push("num_labels must be >= 1".to_string());
        }
        if self.embed_dim == 0 {
            errs.push("embed_dim must be >= 1".to_string());
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            errs.push(format!("lr must be finite and >= 0, got {}", self.lr));
        }
        errs
    }

    fn check(&self) -> Result<()> {
        let errs = self.validate();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::invalid(errs.join("; ")))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    /// `|V| x d` lookup table; absent when token features are precomputed.
    pub embedding: Option<Param>,
    pub w_token_in: Param,
    pub w_label_in: Param,
    pub w_layer: Vec<Param>,
}

fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let s = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-s..=s)).collect();
    Matrix::from_vec(rows, cols, data).expect("sized")
}

impl ModelParams {
    /// Seeded uniform(−s, s) init with `s = sqrt(6 / (fan_in + fan_out))`.
    pub fn init(cfg: &ModelConfig, vocab_size: Option<usize>) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let embedding = vocab_size.map(|v| Param::new(glorot(&mut rng, v, cfg.embed_dim)));
        let w_token_in = Param::new(glorot(&mut rng, cfg.embed_dim, cfg.hidden));
        let w_label_in = Param::new(glorot(&mut rng, cfg.num_labels, cfg.hidden));
        let w_layer = (0..cfg.num_layers)
            .map(|_| Param::new(glorot(&mut rng, cfg.hidden, cfg.hidden)))
            .collect();
        Self {
            embedding,
            w_token_in,
            w_label_in,
            w_layer,
        }
    }

    /// Stable `(name, param)` listing used by the optimizer and checkpoints.
    pub fn named(&self) -> Vec<(String, &Param)> {
        let mut out = Vec::new();
        if let Some(e) = &self.embedding {
            out.push(("embedding".to_string(), e));
        }
        out.push(("w_token_in".to_string(), &self.w_token_in));
        out.push(("w_label_in".to_string(), &self.w_label_in));
        for (i, w) in self.w_layer.iter().enumerate() {
            out.push((format!("w_layer.{i}"), w));
        }
        out
    }

    pub fn all_mut(&mut self) -> Vec<&mut Param> {
        let mut out: Vec<&mut Param> = Vec::new();
        if let Some(e) = self.embedding.as_mut() {
            out.push(e);
        }
        out.push(&mut self.w_token_in);
        out.push(&mut self.w_label_in);
        out.extend(self.w_layer.iter_mut());
        out
    }

    pub fn zero_grad(&mut self) {
        for p in self.all_mut() {
            p.zero_grad();
        }
    }

    fn check_shapes(&self, cfg: &ModelConfig) -> Result<()> {
        let expect = |name: &str, m: &Matrix, shape: (usize, usize)| {
            if m.shape() == shape {
                Ok(())
            } else {
                Err(Error::invalid(format!(
                    "parameter {name} has shape {:?}, expected {shape:?}",
                    m.shape()
                )))
            }
        };
        if let Some(e) = &self.embedding {
            expect("embedding", &e.value, (e.value.rows(), cfg.embed_dim))?;
        }
        expect("w_token_in", &self.w_token_in.value, (cfg.embed_dim, cfg.hidden))?;
        expect("w_label_in", &self.w_label_in.value, (cfg.num_labels, cfg.hidden))?;
        if self.w_layer.len() != cfg.num_layers {
            return Err(Error::invalid(format!(
                "{} layer weights for {} layers",
                self.w_layer.len(),
                cfg.num_layers
            )));
        }
        for (i, w) in self.w_layer.iter().enumerate() {
            expect(&format!("w_layer.{i}"), &w.value, (cfg.hidden, cfg.hidden))?;
        }
        Ok(())
    }
}

/// One tokenized sample ready for the graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphSample {
    pub id: String,
    pub ids: Vec<usize>,
    /// Sorted, de-duplicated positive label indices.
    pub labels: Vec<usize>,
}

impl GraphSample {
    pub fn label_vector(&self, n: usize) -> Vec<bool> {
        let mut v = vec![false; n];
        for &j in &self.labels {
            if j < n {
                v[j] = true;
            }
        }
        v
    }
}

/// One-hot label inputs: the `n x n` identity.
pub fn init_label_features(n: usize) -> Matrix {
    Matrix::identity(n)
}

/// Ground truth as a distribution: `1/k` on each of `k` positives, uniform
/// `1/n` when there are none.
pub fn build_target(labels: &[bool]) -> Matrix {
    let n = labels.len();
    let k = labels.iter().filter(|&&b| b).count();
    if k == 0 {
        return Matrix::filled(1, n, 1.0 / n.max(1) as f64);
    }
    let w = 1.0 / k as f64;
    Matrix::row_vector(&labels.iter().map(|&b| if b { w } else { 0.0 }).collect::<Vec<_>>())
}

/// Everything one forward pass produced, detached from the tape.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub token_count: usize,
    pub label_count: usize,
    /// `H(0) ..= H(L)`, each `(m + n) x hidden`.
    pub features: Vec<Matrix>,
    /// Token-label block fed to layers `1..=L`, then the final reconstruction
    /// (`L + 1` entries; the first is all zero).
    pub token_label: Vec<Matrix>,
    pub scores: Vec<f64>,
    pub probs: Vec<f64>,
}

impl ForwardTrace {
    pub fn final_token_label(&self) -> &Matrix {
        self.token_label.last().expect("at least one layer")
    }

    pub fn token_features(&self, layer: usize) -> Matrix {
        self.features[layer].slice_rows(0, self.token_count)
    }

    pub fn label_features(&self, layer: usize) -> Matrix {
        self.features[layer].slice_rows(self.token_count, self.label_count)
    }

    pub fn last_label_features(&self) -> Matrix {
        self.label_features(self.features.len() - 1)
    }
}

/// Tape handles produced while building one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardNodes {
    /// Parameter leaves in [`ModelParams::named`] order.
    pub params: Vec<NodeId>,
    pub features: Vec<NodeId>,
    pub token_label: Vec<NodeId>,
    pub scores: NodeId,
    pub probs: NodeId,
}

#[derive(Clone, Debug)]
pub struct Hgcn {
    pub cfg: ModelConfig,
    pub params: ModelParams,
    pub provider: EmbeddingProvider,
}

impl Hgcn {
    /// Fresh model. A trainable-lookup provider needs `vocab_size`.
    pub fn new(cfg: ModelConfig, provider: EmbeddingProvider, vocab_size: usize) -> Result<Self> {
        cfg.check()?;
        if provider.width() != cfg.embed_dim {
            return Err(Error::invalid(format!(
                "embedding width {} does not match embed_dim {}",
                provider.width(),
                cfg.embed_dim
            )));
        }
        let table_rows = (!provider.is_frozen()).then_some(vocab_size);
        let params = ModelParams::init(&cfg, table_rows);
        Ok(Self { cfg, params, provider })
    }

    pub fn from_parts(cfg: ModelConfig, params: ModelParams, provider: EmbeddingProvider) -> Result<Self> {
        cfg.check()?;
        params.check_shapes(&cfg)?;
        if provider.is_frozen() == params.embedding.is_some() {
            return Err(Error::invalid(
                "a lookup table is required exactly when the provider is trainable",
            ));
        }
        Ok(Self { cfg, params, provider })
    }

    pub fn num_labels(&self) -> usize {
        self.cfg.num_labels
    }

    /// Builds the full forward graph for one sample on `tape`.
    pub fn forward_on_tape(&self, tape: &mut Tape, sample: &GraphSample) -> Result<ForwardNodes> {
        let m = sample.ids.len();
        let n = self.cfg.num_labels;
        if m == 0 {
            return Err(Error::invalid(format!("sample {:?} has no token nodes", sample.id)));
        }
        let param_ids = self
            .params
            .named()
            .into_iter()
            .map(|(_, p)| tape.param(p.value.clone()))
            .collect::<Result<Vec<_>>>()?;
        let mut cursor = param_ids.iter().copied();
        let table = if self.params.embedding.is_some() {
            cursor.next()
        } else {
            None
        };
        let w_token_in = cursor.next().expect("w_token_in");
        let w_label_in = cursor.next().expect("w_label_in");
        let w_layer: Vec<NodeId> = cursor.collect();

        let emb = self.provider.embed(tape, table, &sample.id, &sample.ids)?;
        let x_token = tape.matmul(emb, w_token_in)?;
        let one_hot = tape.constant(init_label_features(n))?;
        let x_label = tape.matmul(one_hot, w_label_in)?;
        let mut h = tape.vstack(x_token, x_label)?;

        let a_token = tape.constant(graph::build_chain_adjacency(m)?)?;
        let a_label = tape.constant(graph::build_label_adjacency(n)?)?;
        let mut a_tl = tape.constant(Matrix::zeros(m, n))?;

        let mut features = vec![h];
        let mut token_label = Vec::with_capacity(w_layer.len() + 1);
        for (l, &w) in w_layer.iter().enumerate() {
            if l > 0 {
                let (ht, hl) = split(tape, h, m, n)?;
                a_tl = reconstruct_token_label(tape, ht, hl, self.cfg.detach_edges)?;
            }
            token_label.push(a_tl);
            let full = assemble_block_node(tape, a_token, a_tl, a_label)?;
            let norm = tape.normalize_adjacency_with(full, self.cfg.augment_identity)?;
            let propagated = tape.matmul(norm, h)?;
            let z = tape.matmul(propagated, w)?;
            h = tape.activation(z, self.cfg.activation)?;
            features.push(h);
        }
        let (ht, hl) = split(tape, h, m, n)?;
        let last = reconstruct_token_label(tape, ht, hl, false)?;
        token_label.push(last);

        let scores = tape.column_sums(last)?;
        let probs = tape.softmax_row(scores)?;
        Ok(ForwardNodes {
            params: param_ids,
            features,
            token_label,
            scores,
            probs,
        })
    }

    pub fn trace(&self, tape: &Tape, nodes: &ForwardNodes, token_count: usize) -> ForwardTrace {
        ForwardTrace {
            token_count,
            label_count: self.cfg.num_labels,
            features: nodes.features.iter().map(|&id| tape.value(id).clone()).collect(),
            token_label: nodes.token_label.iter().map(|&id| tape.value(id).clone()).collect(),
            scores: tape.value(nodes.scores).as_slice().to_vec(),
            probs: tape.value(nodes.probs).as_slice().to_vec(),
        }
    }

    pub fn forward(&self, sample: &GraphSample) -> Result<ForwardTrace> {
        let mut tape = Tape::new();
        let nodes = self.forward_on_tape(&mut tape, sample)?;
        Ok(self.trace(&tape, &nodes, sample.ids.len()))
    }

    /// Per-sample MSE against [`build_target`], with gradients added into the
    /// parameter grads scaled by `weight`. Returns the unscaled loss.
    pub fn accumulate_gradients(&mut self, sample: &GraphSample, weight: f64) -> Result<f64> {
        let mut tape = Tape::new();
        let nodes = self.forward_on_tape(&mut tape, sample)?;
        let target = build_target(&sample.label_vector(self.cfg.num_labels));
        let loss = tape.mse_loss(nodes.probs, &target)?;
        let value = tape.value(loss).get(0, 0);
        let scaled = tape.scale(loss, weight)?;
        tape.backward(scaled)?;
        for (p, id) in self.params.all_mut().into_iter().zip(&nodes.params) {
            p.grad.add_assign(tape.grad(*id));
        }
        Ok(value)
    }

    /// Mean per-sample loss without touching gradients.
    pub fn loss(&self, samples: &[GraphSample]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::invalid("loss over an empty sample list"));
        }
        let mut total = 0.0;
        for s in samples {
            let mut tape = Tape::new();
            let nodes = self.forward_on_tape(&mut tape, s)?;
            let target = build_target(&s.label_vector(self.cfg.num_labels));
            let loss = tape.mse_loss(nodes.probs, &target)?;
            total += tape.value(loss).get(0, 0);
        }
        Ok(total / samples.len() as f64)
    }
}

fn split(tape: &mut Tape, h: NodeId, m: usize, n: usize) -> Result<(NodeId, NodeId)> {
    Ok((tape.slice_rows(h, 0, m)?, tape.slice_rows(h, m, n)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(layers: usize) -> Hgcn {
        let cfg = ModelConfig {
            num_layers: layers,
            hidden: 6,
            num_labels: 3,
            embed_dim: 4,
            seed: 7,
            ..Default::default()
        };
        Hgcn::new(cfg, EmbeddingProvider::TrainableLookup { width: 4 }, 10).unwrap()
    }

    fn sample(ids: &[usize], labels: &[usize]) -> GraphSample {
        GraphSample {
            id: "s".into(),
            ids: ids.to_vec(),
            labels: labels.to_vec(),
        }
    }

    #[test]
    fn label_features_are_one_hot() {
        let x = init_label_features(3);
        assert_eq!(x, Matrix::identity(3));
        assert_eq!(x.matmul_t(&x).unwrap(), Matrix::identity(3));
    }

    #[test]
    fn targets() {
        assert_eq!(build_target(&[true, false, true, false]), Matrix::row_vector(&[0.5, 0.0, 0.5, 0.0]));
        assert_eq!(build_target(&[true, false, false]), Matrix::row_vector(&[1.0, 0.0, 0.0]));
        assert_eq!(build_target(&[false, false]), Matrix::row_vector(&[0.5, 0.5]));
    }

    #[test]
    fn minimal_trace_shapes() {
        let cfg = ModelConfig {
            num_layers: 1,
            hidden: 5,
            num_labels: 1,
            embed_dim: 3,
            ..Default::default()
        };
        let model = Hgcn::new(cfg, EmbeddingProvider::TrainableLookup { width: 3 }, 4).unwrap();
        let t = model.forward(&sample(&[2], &[0])).unwrap();
        assert_eq!(t.features[0].shape(), (2, 5));
        assert_eq!(t.final_token_label().shape(), (1, 1));
        assert_eq!(t.token_label.len(), 2);
        assert_eq!(t.label_features(0).shape(), (1, 5));
    }

    #[test]
    fn probabilities_sum_to_one_and_edges_in_unit_interval() {
        let model = tiny(2);
        let t = model.forward(&sample(&[0, 4, 5, 6, 1], &[1])).unwrap();
        assert!((t.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for a in &t.token_label {
            assert!(a.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        }
        assert_eq!(t.token_label[0], Matrix::zeros(5, 3));
    }

    #[test]
    fn first_layer_keeps_tokens_and_labels_apart() {
        // Changing the label input projection must not change token features after
        // layer 1, because the first token-label block is zero.
        let model = tiny(1);
        let mut other = model.clone();
        other.params.w_label_in.value = other.params.w_label_in.value.map(|v| -2.0 * v + 0.3);
        let s = sample(&[0, 4, 5, 1], &[0]);
        let a = model.forward(&s).unwrap();
        let b = other.forward(&s).unwrap();
        assert_eq!(a.token_features(1), b.token_features(1));
        assert_ne!(a.label_features(1), b.label_features(1));
    }

    #[test]
    fn empty_sample_rejected() {
        assert!(tiny(1).forward(&sample(&[], &[])).is_err());
    }

    #[test]
    fn config_validation_lists_everything() {
        let cfg = ModelConfig {
            num_layers: 0,
            hidden: 0,
            lr: -1.0,
            ..Default::default()
        };
        assert_eq!(cfg.validate().len(), 3);
    }

    #[test]
    fn from_parts_checks_shapes() {
        let model = tiny(2);
        let mut params = model.params.clone();
        params.w_layer.pop();
        assert!(Hgcn::from_parts(model.cfg.clone(), params, model.provider.clone()).is_err());
    }
}
