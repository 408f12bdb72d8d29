//! JSON-lines datasets.
//!
//! One object per line:
//!
//! ```text
//! {"id":"s1","tokens":["a","b"],"labels":["joy"],"annotations":[{"token":0,"label":"joy","intensity":0.6}]}
//! ```
//!
//! `text` may replace `tokens`; it is split on whitespace.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::{tokenize, whitespace_tokens, Vocabulary};
use crate::error::{Error, Result};
use crate::explain::GoldenAttribution;
use crate::model::GraphSample;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    /// Index into `Sample::tokens`.
    pub token: usize,
    pub label: String,
    pub intensity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub tokens: Vec<String>,
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub annotations: Vec<Annotation>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSample {
    id: String,
    #[serde(default)]
    tokens: Option<Vec<String>>,
    #[serde(default)]
    text: Option<String>,
    labels: Vec<String>,
    #[serde(default)]
    annotations: Vec<Annotation>,
}

/// Declared label names and their indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelSet {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelSet {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::invalid("label set is empty"));
        }
        let mut index = HashMap::new();
        for (i, n) in names.iter().enumerate() {
            if index.insert(n.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate label {n:?}")));
            }
        }
        Ok(Self { names, index })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Reads either a JSON array of names or one name per line.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let names: Vec<String> = if text.trim_start().starts_with('[') {
            serde_json::from_str(&text)?
        } else {
            text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect()
        };
        Self::new(names)
    }
}

impl Sample {
    fn validate(&self, labels: &LabelSet) -> std::result::Result<(), String> {
        for l in &self.labels {
            if labels.index(l).is_none() {
                return Err(format!("unknown label {l:?}"));
            }
        }
        for a in &self.annotations {
            if labels.index(&a.label).is_none() {
                return Err(format!("unknown label {:?} in annotation", a.label));
            }
            if a.token >= self.tokens.len() {
                return Err(format!(
                    "annotation token index {} out of range for {} tokens",
                    a.token,
                    self.tokens.len()
                ));
            }
            if !(0.0..=1.0).contains(&a.intensity) {
                return Err(format!("annotation intensity {} outside [0, 1]", a.intensity));
            }
        }
        Ok(())
    }

    pub fn label_indices(&self, labels: &LabelSet) -> Vec<usize> {
        let mut out: Vec<usize> = self.labels.iter().filter_map(|l| labels.index(l)).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn to_graph_sample(&self, vocab: &Vocabulary, labels: &LabelSet, max_len: usize) -> Result<GraphSample> {
        Ok(GraphSample {
            id: self.id.clone(),
            ids: tokenize(&self.tokens, vocab, max_len)?,
            labels: self.label_indices(labels),
        })
    }

    /// Token strings for each graph row, including the boundary tokens and
    /// respecting truncation.
    pub fn graph_tokens(&self, vocab: &Vocabulary, max_len: usize) -> Result<Vec<String>> {
        let ids = tokenize(&self.tokens, vocab, max_len)?;
        let content = ids.len() - 2;
        let mut out = Vec::with_capacity(ids.len());
        out.push(crate::encoder::SEQ_START.to_string());
        out.extend(self.tokens.iter().take(content).cloned());
        out.push(crate::encoder::SEQ_END.to_string());
        Ok(out)
    }

    /// Golden token-label matrix in graph-row coordinates (content token `i`
    /// sits at row `i + 1`). `None` when the sample has no annotations.
    /// Annotations on truncated tokens are dropped.
    pub fn golden(&self, labels: &LabelSet, max_len: usize) -> Result<Option<GoldenAttribution>> {
        if self.annotations.is_empty() {
            return Ok(None);
        }
        let content = self.tokens.len().min(max_len.saturating_sub(2));
        let entries: Vec<(usize, usize, f64)> = self
            .annotations
            .iter()
            .filter(|a| a.token < content)
            .filter_map(|a| labels.index(&a.label).map(|j| (a.token + 1, j, a.intensity)))
            .collect();
        GoldenAttribution::from_entries(content + 2, labels.len(), &entries).map(Some)
    }
}

/// Loads and validates a JSON-lines dataset. Blank lines are skipped.
pub fn load_dataset(path: &Path, labels: &LabelSet) -> Result<Vec<Sample>> {
    let file = fs::File::open(path)?;
    let display = path.display().to_string();
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::Dataset {
            path: display.clone(),
            line: lineno,
            msg,
        };
        let raw: RawSample = serde_json::from_str(&line).map_err(|e| err(format!("malformed sample: {e}")))?;
        let tokens = match (raw.tokens, raw.text) {
            (Some(t), None) => t,
            (None, Some(text)) => whitespace_tokens(&text),
            (Some(_), Some(_)) => return Err(err("both \"tokens\" and \"text\" given".into())),
            (None, None) => return Err(err("missing \"tokens\" or \"text\"".into())),
        };
        let sample = Sample {
            id: raw.id,
            tokens,
            labels: raw.labels,
            annotations: raw.annotations,
        };
        sample.validate(labels).map_err(err)?;
        out.push(sample);
    }
    Ok(out)
}

pub fn write_dataset(path: &Path, samples: &[Sample]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for s in samples {
        serde_json::to_writer(&mut f, s)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

/// Vocabulary over every token in `samples`, in first-appearance order.
pub fn build_vocabulary(samples: &[Sample]) -> Vocabulary {
    Vocabulary::from_tokens(samples.iter().flat_map(|s| s.tokens.iter()))
}
