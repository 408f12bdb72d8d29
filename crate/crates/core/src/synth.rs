//! Synthetic trigger-word corpora.
//!
//! Every label owns one or more exclusive trigger tokens. A sample is a run of
//! filler tokens with one trigger per positive label planted at a random
//! position, and carries golden annotations pointing at those triggers.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{write_dataset, Annotation, Sample};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_labels: usize,
    /// Total distinct tokens: triggers plus fillers.
    pub vocab_size: usize,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub seed: u64,
    /// Relative frequency of samples with 1, 2 and 3 labels.
    pub label_count_weights: [f64; 3],
    /// When set, each sample's label set is drawn uniformly from this list
    /// instead of by `label_count_weights`.
    pub label_sets: Option<Vec<Vec<usize>>>,
    pub min_filler: usize,
    pub max_filler: usize,
    /// Trigger tokens per label; defaults to `trig{j}`.
    pub triggers: Option<Vec<Vec<String>>>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_labels: 5,
            vocab_size: 60,
            train: 500,
            dev: 100,
            test: 100,
            seed: 0,
            label_count_weights: [1.0, 1.0, 1.0],
            label_sets: None,
            min_filler: 4,
            max_filler: 10,
            triggers: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthCorpus {
    pub labels: Vec<String>,
    pub triggers: Vec<Vec<String>>,
    pub fillers: Vec<String>,
    pub train: Vec<Sample>,
    pub dev: Vec<Sample>,
    pub test: Vec<Sample>,
}

pub fn label_names(n: usize) -> Vec<String> {
    (1..=n).map(|j| format!("L{j}")).collect()
}

pub fn generate_synthetic_corpus(cfg: &SynthConfig) -> Result<SynthCorpus> {
    if cfg.n_labels == 0 {
        return Err(Error::invalid("synthetic corpus needs at least one label"));
    }
    let triggers = cfg
        .triggers
        .clone()
        .unwrap_or_else(|| (0..cfg.n_labels).map(|j| vec![format!("trig{j}")]).collect());
    if triggers.len() != cfg.n_labels || triggers.iter().any(Vec::is_empty) {
        return Err(Error::invalid("every label needs at least one trigger token"));
    }
    let mut seen = HashSet::new();
    for t in triggers.iter().flatten() {
        if !seen.insert(t.as_str()) {
            return Err(Error::invalid(format!("trigger {t:?} is shared between labels")));
        }
    }
    let trigger_count = seen.len();
    if cfg.vocab_size <= trigger_count {
        return Err(Error::invalid(format!(
            "vocab_size {} leaves no room for filler beside {trigger_count} triggers",
            cfg.vocab_size
        )));
    }
    let fillers: Vec<String> = (0..cfg.vocab_size - trigger_count).map(|k| format!("w{k}")).collect();
    if let Some(t) = fillers.iter().find(|f| seen.contains(f.as_str())) {
        return Err(Error::invalid(format!("filler token {t:?} overlaps a trigger")));
    }
    if cfg.min_filler > cfg.max_filler {
        return Err(Error::invalid("min_filler exceeds max_filler"));
    }
    if let Some(sets) = &cfg.label_sets {
        if sets.is_empty() || sets.iter().any(|s| s.is_empty() || s.iter().any(|&j| j >= cfg.n_labels)) {
            return Err(Error::invalid("label_sets must be non-empty sets of valid label indices"));
        }
    }
    let count_dist = WeightedIndex::new(cfg.label_count_weights)
        .map_err(|e| Error::invalid(format!("label_count_weights: {e}")))?;

    let labels = label_names(cfg.n_labels);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut make = |split: &str, count: usize| -> Vec<Sample> {
        (0..count)
            .map(|i| {
                let mut chosen: Vec<usize> = match &cfg.label_sets {
                    Some(sets) => sets.choose(&mut rng).expect("non-empty").clone(),
                    None => {
                        let k = (count_dist.sample(&mut rng) + 1).min(cfg.n_labels);
                        rand::seq::index::sample(&mut rng, cfg.n_labels, k).into_vec()
                    }
                };
                chosen.sort_unstable();
                chosen.dedup();
                let len = rng.gen_range(cfg.min_filler..=cfg.max_filler);
                let mut tokens: Vec<String> = (0..len).map(|_| fillers.choose(&mut rng).unwrap().clone()).collect();
                let mut planted = Vec::with_capacity(chosen.len());
                for &j in &chosen {
                    let t = triggers[j].choose(&mut rng).unwrap().clone();
                    let pos = rng.gen_range(0..=tokens.len());
                    tokens.insert(pos, t.clone());
                    planted.push((t, j));
                }
                let annotations = planted
                    .into_iter()
                    .map(|(t, j)| Annotation {
                        token: tokens.iter().position(|x| *x == t).expect("planted"),
                        label: labels[j].clone(),
                        intensity: 1.0,
                    })
                    .collect();
                Sample {
                    id: format!("{split}-{i:05}"),
                    tokens,
                    labels: chosen.iter().map(|&j| labels[j].clone()).collect(),
                    annotations,
                }
            })
            .collect()
    };
    let train = make("train", cfg.train);
    let dev = make("dev", cfg.dev);
    let test = make("test", cfg.test);
    Ok(SynthCorpus {
        labels,
        triggers,
        fillers,
        train,
        dev,
        test,
    })
}

impl SynthCorpus {
    /// Writes `train.jsonl`, `dev.jsonl`, `test.jsonl` and `labels.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_dataset(&dir.join("train.jsonl"), &self.train)?;
        write_dataset(&dir.join("dev.jsonl"), &self.dev)?;
        write_dataset(&dir.join("test.jsonl"), &self.test)?;
        fs::write(dir.join("labels.json"), serde_json::to_string(&self.labels)?)?;
        Ok(())
    }

    pub fn is_trigger_for(&self, token: &str, label: usize) -> bool {
        self.triggers[label].iter().any(|t| t == token)
    }
}
