//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use hgcn_core::autodiff::{Activation, NodeId, Tape};
use hgcn_core::dataset::{build_vocabulary, LabelSet, Sample};
use hgcn_core::encoder::Vocabulary;
use hgcn_core::model::{GraphSample, Hgcn, ModelConfig};
use hgcn_core::synth::{generate_synthetic_corpus, SynthConfig, SynthCorpus};
use hgcn_core::training::sample_gradients;
use hgcn_core::{Matrix, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_EPS: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.gen_range(lo..hi)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// Entries smaller than this are compared absolutely: central differences
/// cannot resolve them relatively.
pub const REL_FLOOR: f64 = 1e-5;

/// Largest elementwise relative error `|a - n| / max(|a|, |n|, REL_FLOOR)`.
pub fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR))
        .fold(0.0, f64::max)
}

pub type Build = Box<dyn Fn(&mut Tape, &[NodeId]) -> Result<NodeId>>;

fn scalarize(tape: &mut Tape, out: NodeId) -> Result<NodeId> {
    let (r, c) = tape.value(out).shape();
    let weights = random_matrix(&mut rng(0xfeed), r, c, -1.0, 1.0);
    let w = tape.constant(weights)?;
    let prod = tape.elementwise_mul(out, w)?;
    tape.sum(prod)
}

fn eval(inputs: &[Matrix], build: &Build) -> f64 {
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = inputs.iter().map(|m| tape.param(m.clone()).unwrap()).collect();
    let out = build(&mut tape, &ids).unwrap();
    let loss = scalarize(&mut tape, out).unwrap();
    tape.value(loss).get(0, 0)
}

/// Largest relative error between backprop and central differences over
/// every input of `build`, reduced to a scalar by a fixed random projection.
pub fn grad_check(inputs: &[Matrix], build: &Build) -> f64 {
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = inputs.iter().map(|m| tape.param(m.clone()).unwrap()).collect();
    let out = build(&mut tape, &ids).unwrap();
    let loss = scalarize(&mut tape, out).unwrap();
    tape.backward(loss).unwrap();
    let mut worst: f64 = 0.0;
    for (k, id) in ids.iter().enumerate() {
        let analytic = tape.grad(*id).as_slice().to_vec();
        let mut numeric = vec![0.0; analytic.len()];
        for (e, slot) in numeric.iter_mut().enumerate() {
            let mut plus = inputs.to_vec();
            plus[k].as_mut_slice()[e] += FD_EPS;
            let mut minus = inputs.to_vec();
            minus[k].as_mut_slice()[e] -= FD_EPS;
            *slot = (eval(&plus, build) - eval(&minus, build)) / (2.0 * FD_EPS);
        }
        worst = worst.max(rel_err(&analytic, &numeric));
    }
    worst
}

/// One randomized instance of every differentiable op, plus a shared-input
/// graph and the graph-convolution / edge / scoring / loss chain.
pub fn op_cases(rng: &mut impl Rng) -> Vec<(&'static str, Vec<Matrix>, Build)> {
    let (r, c, k) = (rng.gen_range(1..5), rng.gen_range(1..5), rng.gen_range(1..5));
    let mut m = |rows, cols| random_matrix(rng, rows, cols, -1.0, 1.0);
    let a = m(r, c);
    let b = m(c, k);
    let same = m(r, c);
    let same2 = m(r, c);
    let row = m(1, c);
    let other_rows = m(k, c);
    let other_cols = m(r, k);
    let big = m(r + 2, c);
    let tok = m(r + 1, c);
    let lab = m(k + 1, c);
    let mut cases: Vec<(&'static str, Vec<Matrix>, Build)> = vec![
        ("matmul", vec![a.clone(), b.clone()], Box::new(|t, x| t.matmul(x[0], x[1]))),
        ("add", vec![same.clone(), same2.clone()], Box::new(|t, x| t.add(x[0], x[1]))),
        ("elementwise_mul", vec![same.clone(), same2.clone()], Box::new(|t, x| t.elementwise_mul(x[0], x[1]))),
        ("scale", vec![a.clone()], Box::new(|t, x| t.scale(x[0], -2.5))),
        ("relu", vec![a.clone()], Box::new(|t, x| t.activation(x[0], Activation::Relu))),
        ("tanh", vec![a.clone()], Box::new(|t, x| t.activation(x[0], Activation::Tanh))),
        ("softmax_row", vec![row.clone()], Box::new(|t, x| t.softmax_row(x[0]))),
        ("sum", vec![a.clone()], Box::new(|t, x| t.sum(x[0]))),
        ("column_sums", vec![a.clone()], Box::new(|t, x| t.column_sums(x[0]))),
        ("transpose", vec![a.clone()], Box::new(|t, x| t.transpose(x[0]))),
        ("vstack", vec![a.clone(), other_rows], Box::new(|t, x| t.vstack(x[0], x[1]))),
        ("hstack", vec![a.clone(), other_cols], Box::new(|t, x| t.hstack(x[0], x[1]))),
        ("slice_rows", vec![big.clone()], Box::new(|t, x| t.slice_rows(x[0], 1, 2))),
        ("cosine_edges", vec![tok.clone(), lab.clone()], Box::new(|t, x| t.cosine_edges(x[0], x[1]))),
        (
            "shared_input",
            vec![same.clone()],
            Box::new(|t, x| {
                let sq = t.elementwise_mul(x[0], x[0])?;
                let tr = t.transpose(x[0])?;
                let gram = t.matmul(x[0], tr)?;
                let s = t.sum(gram)?;
                let s2 = t.sum(sq)?;
                t.add(s, s2)
            }),
        ),
    ];
    let target = {
        let mut v = vec![0.0; c];
        v[0] = 1.0;
        Matrix::from_vec(1, c, v).unwrap()
    };
    cases.push((
        "mse_loss",
        vec![row.clone()],
        Box::new(move |t, x| t.mse_loss(x[0], &target)),
    ));
    let ids: Vec<usize> = (0..r + 1).map(|_| rng.gen_range(0..r + 2)).collect();
    cases.push(("gather_rows", vec![big], Box::new(move |t, x| t.gather_rows(x[0], &ids))));
    let n = rng.gen_range(1..6);
    let adj = random_matrix(rng, n, n, 0.05, 1.0);
    let sym = adj.zip_map(&adj.transpose(), "sym", |p, q| 0.5 * (p + q)).unwrap();
    cases.push(("normalize_adjacency", vec![sym.clone()], Box::new(|t, x| t.normalize_adjacency(x[0]))));
    cases.push((
        "normalize_adjacency_plain",
        vec![sym],
        Box::new(|t, x| t.normalize_adjacency_with(x[0], false)),
    ));
    // H' = tanh(norm(A) H W); edges = (cos + 1) / 2; probs = softmax(colsums); mse
    let nodes = rng.gen_range(2..6);
    let labels = c.max(2);
    let adj = random_matrix(rng, nodes, nodes, 0.05, 1.0);
    let adj = adj.zip_map(&adj.transpose(), "sym", |p, q| 0.5 * (p + q)).unwrap();
    let h = random_matrix(rng, nodes, 3, -1.0, 1.0);
    let w = random_matrix(rng, 3, 4, -1.0, 1.0);
    let lf = random_matrix(rng, labels, 4, -1.0, 1.0);
    let mut tgt = vec![0.0; labels];
    tgt[labels - 1] = 1.0;
    let tgt = Matrix::from_vec(1, labels, tgt).unwrap();
    cases.push((
        "conv_edges_softmax_mse",
        vec![adj, h, w, lf],
        Box::new(move |t, x| {
            let norm = t.normalize_adjacency(x[0])?;
            let ah = t.matmul(norm, x[1])?;
            let ahw = t.matmul(ah, x[2])?;
            let act = t.activation(ahw, Activation::Tanh)?;
            let edges = t.cosine_edges(act, x[3])?;
            let scores = t.column_sums(edges)?;
            let probs = t.softmax_row(scores)?;
            t.mse_loss(probs, &tgt)
        }),
    ));
    cases
}

/// A small random model and sample for whole-model gradient checks. Edge
/// detaching stays off: it deliberately departs from the true derivative.
pub fn tiny_model(rng: &mut impl Rng, trial: u64) -> (Hgcn, GraphSample) {
    let vocab = 9;
    let cfg = ModelConfig {
        num_layers: rng.gen_range(1..4),
        hidden: rng.gen_range(3..6),
        num_labels: rng.gen_range(2..5),
        embed_dim: rng.gen_range(2..5),
        activation: if trial.is_multiple_of(2) { Activation::Tanh } else { Activation::Relu },
        augment_identity: trial % 4 != 3,
        seed: trial,
        ..Default::default()
    };
    let width = cfg.embed_dim;
    let n = cfg.num_labels;
    let model = Hgcn::new(cfg, hgcn_core::encoder::EmbeddingProvider::TrainableLookup { width }, vocab).unwrap();
    let len = rng.gen_range(1..6);
    let mut ids = vec![0];
    ids.extend((0..len).map(|_| rng.gen_range(4..vocab)));
    ids.push(1);
    let labels: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.5)).collect();
    let sample = GraphSample {
        id: format!("t{trial}"),
        ids,
        labels,
    };
    (model, sample)
}

/// Relative error of the whole-model parameter gradient against central
/// differences of the per-sample loss.
pub fn model_grad_check(model: &Hgcn, sample: &GraphSample) -> f64 {
    let (_, grads) = sample_gradients(model, sample).unwrap();
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for (k, g) in grads.iter().enumerate() {
        analytic.extend_from_slice(g.as_slice());
        for e in 0..g.len() {
            let shifted = |delta: f64| {
                let mut m = model.clone();
                m.params.all_mut()[k].value.as_mut_slice()[e] += delta;
                m.loss(std::slice::from_ref(sample)).unwrap()
            };
            numeric.push((shifted(FD_EPS) - shifted(-FD_EPS)) / (2.0 * FD_EPS));
        }
    }
    rel_err(&analytic, &numeric)
}

pub struct Fixture {
    pub corpus: SynthCorpus,
    pub labels: LabelSet,
    pub vocab: Vocabulary,
    pub train: Vec<GraphSample>,
    pub dev: Vec<GraphSample>,
    pub test: Vec<GraphSample>,
    pub max_len: usize,
}

pub fn fixture(cfg: &SynthConfig, max_len: usize) -> Fixture {
    let corpus = generate_synthetic_corpus(cfg).unwrap();
    let labels = LabelSet::new(corpus.labels.clone()).unwrap();
    let vocab = build_vocabulary(&corpus.train);
    let enc = |s: &[Sample]| -> Vec<GraphSample> {
        s.iter().map(|x| x.to_graph_sample(&vocab, &labels, max_len).unwrap()).collect()
    };
    let (train, dev, test) = (enc(&corpus.train), enc(&corpus.dev), enc(&corpus.test));
    Fixture {
        corpus,
        labels,
        vocab,
        train,
        dev,
        test,
        max_len,
    }
}
