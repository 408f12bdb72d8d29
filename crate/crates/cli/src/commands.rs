//! Subcommand bodies. Each takes a validated configuration.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use hgcn_core::checkpoint::{Checkpoint, EncoderSpec};
use hgcn_core::correlate::{label_cosine_matrix, pearson_matrix};
use hgcn_core::dataset::{build_vocabulary, load_dataset, LabelSet, Sample};
use hgcn_core::encoder::{EmbeddingProvider, Vocabulary};
use hgcn_core::explain::{build_attribution, mean_attribution_mse, render_heatmap};
use hgcn_core::model::{GraphSample, Hgcn, ModelParams};
use hgcn_core::synth::generate_synthetic_corpus;
use hgcn_core::training::{forward_all, predict, TrainOptions, Trainer};
use hgcn_core::Matrix;
use log::info;

use crate::config::{EncoderChoice, Resolved};

fn encode(samples: &[Sample], vocab: &Vocabulary, labels: &LabelSet, max_len: usize) -> Result<Vec<GraphSample>> {
    samples
        .iter()
        .map(|s| s.to_graph_sample(vocab, labels, max_len).map_err(Into::into))
        .collect()
}

fn load_optional(path: Option<&Path>, labels: &LabelSet) -> Result<Vec<Sample>> {
    match path {
        Some(p) => load_dataset(p, labels).with_context(|| format!("loading {}", p.display())),
        None => Ok(Vec::new()),
    }
}

pub fn train(r: &Resolved) -> Result<()> {
    let cfg = &r.cfg;
    let labels = LabelSet::load(cfg.labels.as_deref().expect("validated"))?;
    let train_raw = load_optional(cfg.train.as_deref(), &labels)?;
    let dev_raw = load_optional(cfg.dev.as_deref(), &labels)?;
    let vocab = build_vocabulary(&train_raw);
    let train = encode(&train_raw, &vocab, &labels, cfg.max_len)?;
    let dev = encode(&dev_raw, &vocab, &labels, cfg.max_len)?;
    info!(
        "{} training and {} dev samples, {} labels, vocabulary of {}",
        train.len(),
        dev.len(),
        labels.len(),
        vocab.len()
    );
    fs::create_dir_all(&cfg.out_dir)?;

    let mut model_cfg = cfg.model.clone();
    model_cfg.num_labels = labels.len();
    let (provider, spec) = match &r.encoder {
        EncoderChoice::Lookup if !cfg.freeze => (
            EmbeddingProvider::TrainableLookup {
                width: model_cfg.embed_dim,
            },
            EncoderSpec::Lookup,
        ),
        EncoderChoice::Lookup => {
            // Frozen random lookup: snapshot the initial table for every sample
            // this run knows about, then keep it on disk beside the checkpoint.
            let test_raw = load_optional(cfg.test.as_deref(), &labels)?;
            let test = encode(&test_raw, &vocab, &labels, cfg.max_len)?;
            let table = ModelParams::init(&model_cfg, Some(vocab.len()))
                .embedding
                .expect("lookup init has a table")
                .value;
            let all = train.iter().chain(&dev).chain(&test);
            let provider = EmbeddingProvider::precompute_from_table(&table, all.map(|g| (g.id.as_str(), g.ids.as_slice())));
            let path = cfg.out_dir.join("embeddings.hgcn");
            provider.save_precomputed(&path)?;
            (provider, EncoderSpec::File { path })
        }
        EncoderChoice::File(path) => {
            let provider = EmbeddingProvider::load_precomputed(path)?;
            if provider.width() != model_cfg.embed_dim {
                info!("embed_dim set to {} to match {}", provider.width(), path.display());
                model_cfg.embed_dim = provider.width();
            }
            (provider, EncoderSpec::File { path: path.clone() })
        }
    };
    let model = Hgcn::new(model_cfg, provider, vocab.len())?;
    let mut trainer = Trainer::new(model)?;
    let opts = TrainOptions {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        decode: cfg.decode,
    };
    let log_path = cfg.out_dir.join("train.log");
    let mut log_file = fs::File::create(&log_path)?;
    let mut write_err = None;
    let names = labels.names().to_vec();
    let dev_arg = (!dev.is_empty()).then_some((dev.as_slice(), names.as_slice()));
    trainer.fit(&train, dev_arg, &opts, |entry| {
        let line = entry.line();
        info!("{line}");
        println!("{line}");
        if let Err(e) = writeln!(log_file, "{line}") {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(e).context(format!("writing {}", log_path.display()));
    }
    let ck = Checkpoint {
        model: trainer.model,
        encoder: spec,
        vocab,
        labels: names,
        max_len: cfg.max_len,
    };
    let ck_path = r.checkpoint.clone();
    if let Some(dir) = ck_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    ck.save(&ck_path)?;
    println!("checkpoint written to {}", ck_path.display());
    Ok(())
}

struct Loaded {
    ck: Checkpoint,
    labels: LabelSet,
    raw: Vec<Sample>,
    samples: Vec<GraphSample>,
}

fn load_for_inference(r: &Resolved) -> Result<Loaded> {
    let provider = match &r.encoder {
        EncoderChoice::File(p) => Some(EmbeddingProvider::load_precomputed(p)?),
        EncoderChoice::Lookup => None,
    };
    let ck = Checkpoint::load(&r.checkpoint, provider).with_context(|| format!("loading {}", r.checkpoint.display()))?;
    let labels = LabelSet::new(ck.labels.clone())?;
    let raw = load_optional(r.cfg.test.as_deref(), &labels)?;
    if raw.is_empty() {
        anyhow::bail!("no samples in {}", r.cfg.test.as_deref().expect("validated").display());
    }
    let samples = encode(&raw, &ck.vocab, &labels, ck.max_len)?;
    Ok(Loaded { ck, labels, raw, samples })
}

pub fn eval(r: &Resolved) -> Result<()> {
    let l = load_for_inference(r)?;
    let report = hgcn_core::training::evaluate(&l.ck.model, &l.samples, l.labels.names(), r.cfg.decode)?;
    fs::create_dir_all(&r.cfg.out_dir)?;
    let text = report.to_text();
    fs::write(r.cfg.out_dir.join("eval.txt"), &text)?;
    fs::write(r.cfg.out_dir.join("eval.json"), report.to_json()?)?;
    print!("{text}");
    Ok(())
}

/// A file-name-safe stem for a sample id.
fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

pub fn explain(r: &Resolved) -> Result<()> {
    let l = load_for_inference(r)?;
    let dir = r.cfg.out_dir.join("explain");
    fs::create_dir_all(&dir)?;
    let traces = forward_all(&l.ck.model, &l.samples)?;
    let mut pairs = Vec::new();
    for (sample, trace) in l.raw.iter().zip(&traces) {
        let tokens = sample.graph_tokens(&l.ck.vocab, l.ck.max_len)?;
        let attr = build_attribution(trace, &tokens, l.labels.names())?;
        render_heatmap(&attr.values, &attr.tokens, &attr.labels, &dir.join(file_stem(&sample.id)))?;
        if let Some(g) = sample.golden(&l.labels, l.ck.max_len)? {
            pairs.push((attr, g));
        }
    }
    println!("wrote {} attribution matrices to {}", traces.len(), dir.display());
    if !pairs.is_empty() {
        let mse = mean_attribution_mse(&pairs)?;
        let summary = format!("annotated_samples {}\nattribution_mse {mse}\n", pairs.len());
        fs::write(dir.join("summary.txt"), &summary)?;
        print!("{summary}");
    }
    Ok(())
}

pub fn correlate(r: &Resolved) -> Result<()> {
    let l = load_for_inference(r)?;
    let n = l.labels.len();
    let preds: Vec<Vec<usize>> = predict(&l.ck.model, &l.samples, r.cfg.decode)?
        .into_iter()
        .map(|p| p.chosen)
        .collect();
    let pearson = pearson_matrix(&preds, n)?;
    // final label features averaged over the evaluated samples
    let traces = forward_all(&l.ck.model, &l.samples)?;
    let mut mean: Option<Matrix> = None;
    for t in &traces {
        let x = t.last_label_features();
        match &mut mean {
            None => mean = Some(x),
            Some(m) => m.add_assign(&x),
        }
    }
    let mean = mean.expect("non-empty").map(|v| v / traces.len() as f64);
    let cosine = label_cosine_matrix(&mean)?;
    let dir = r.cfg.out_dir.join("correlate");
    fs::create_dir_all(&dir)?;
    let names = l.labels.names();
    render_heatmap(&pearson, names, names, &dir.join("pearson"))?;
    render_heatmap(&cosine, names, names, &dir.join("cosine"))?;
    println!("pearson and cosine matrices written to {}", dir.display());
    Ok(())
}

pub fn synth(r: &Resolved) -> Result<()> {
    let corpus = generate_synthetic_corpus(&r.cfg.synth)?;
    corpus.write(&r.cfg.out_dir)?;
    let triggers: PathBuf = r.cfg.out_dir.join("triggers.json");
    fs::write(&triggers, serde_json::to_string_pretty(&corpus.triggers)?)?;
    println!(
        "wrote {} train, {} dev, {} test samples to {}",
        corpus.train.len(),
        corpus.dev.len(),
        corpus.test.len(),
        r.cfg.out_dir.display()
    );
    Ok(())
}
