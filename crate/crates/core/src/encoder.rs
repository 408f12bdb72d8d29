//! Token vocabulary and initial token-node features.
//!
//! Two providers exist: a trainable lookup table, and frozen per-sample
//! vectors loaded from a container file.

use std::collections::HashMap;
use std::path::Path;

use crate::autodiff::{NodeId, Tape};
use crate::container::{self, Container};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const SEQ_START: &str = "<s>";
pub const SEQ_END: &str = "</s>";
pub const UNKNOWN: &str = "<unk>";
pub const PAD: &str = "<pad>";

pub const SEQ_START_ID: usize = 0;
pub const SEQ_END_ID: usize = 1;
pub const UNKNOWN_ID: usize = 2;
pub const PAD_ID: usize = 3;

const RESERVED: [&str; 4] = [SEQ_START, SEQ_END, UNKNOWN, PAD];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::from_tokens(std::iter::empty::<&str>())
    }
}

impl Vocabulary {
    /// Reserved ids first, then tokens in order of first appearance.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut vocab = Vocabulary {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for t in RESERVED {
            vocab.insert(t);
        }
        for t in tokens {
            vocab.insert(t.as_ref());
        }
        vocab
    }

    fn insert(&mut self, token: &str) {
        if !self.index.contains_key(token) {
            self.index.insert(token.to_string(), self.tokens.len());
            self.tokens.push(token.to_string());
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNKNOWN_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Rebuilds a vocabulary from its id-ordered token list, e.g. from a checkpoint.
    pub fn from_ordered(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < RESERVED.len() || tokens[..RESERVED.len()] != RESERVED {
            return Err(Error::invalid("vocabulary must start with the reserved tokens"));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Self { tokens, index })
    }
}

/// `[SEQ_START] + ids (truncated to max_len − 2) + [SEQ_END]`.
pub fn tokenize<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary, max_len: usize) -> Result<Vec<usize>> {
    if max_len < 3 {
        return Err(Error::invalid(format!("max_len must be at least 3, got {max_len}")));
    }
    let mut ids = Vec::with_capacity(tokens.len().min(max_len - 2) + 2);
    ids.push(SEQ_START_ID);
    ids.extend(tokens.iter().take(max_len - 2).map(|t| vocab.id(t.as_ref())));
    ids.push(SEQ_END_ID);
    Ok(ids)
}

/// Splits raw text on whitespace.
pub fn whitespace_tokens(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_string).collect()
}

/// Source of initial token features.
#[derive(Clone, Debug, PartialEq)]
pub enum EmbeddingProvider {
    /// Row `id` of a trainable `|V| x d` table (the table lives in the model params).
    TrainableLookup { width: usize },
    /// Frozen per-sample `m x d` matrices keyed by sample id.
    Precomputed { width: usize, vectors: HashMap<String, Matrix> },
}

impl EmbeddingProvider {
    pub fn width(&self) -> usize {
        match self {
            EmbeddingProvider::TrainableLookup { width } | EmbeddingProvider::Precomputed { width, .. } => *width,
        }
    }

    pub fn is_frozen(&self) -> bool {
        matches!(self, EmbeddingProvider::Precomputed { .. })
    }

    /// Puts the `m x d` token features for one sample on the tape.
    ///
    /// `table` must be the lookup-table node for the trainable variant and is
    /// ignored otherwise.
    pub fn embed(&self, tape: &mut Tape, table: Option<NodeId>, sample_id: &str, ids: &[usize]) -> Result<NodeId> {
        match self {
            EmbeddingProvider::TrainableLookup { .. } => {
                let table = table.ok_or_else(|| Error::invalid("trainable lookup needs an embedding table"))?;
                tape.gather_rows(table, ids)
            }
            EmbeddingProvider::Precomputed { width, vectors } => {
                let v = vectors
                    .get(sample_id)
                    .ok_or_else(|| Error::MissingEmbedding(sample_id.to_string()))?;
                if v.shape() != (ids.len(), *width) {
                    return Err(Error::shape("embed", v.shape(), (ids.len(), *width)));
                }
                tape.constant(v.clone())
            }
        }
    }

    /// Freezes a lookup table into per-sample vectors.
    pub fn precompute_from_table<'a, I>(table: &Matrix, samples: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, &'a [usize])>,
    {
        let mut vectors = HashMap::new();
        for (id, ids) in samples {
            let mut m = Matrix::zeros(ids.len(), table.cols());
            for (r, &tok) in ids.iter().enumerate() {
                m.row_mut(r).copy_from_slice(table.row(tok));
            }
            vectors.insert(id.to_string(), m);
        }
        EmbeddingProvider::Precomputed {
            width: table.cols(),
            vectors,
        }
    }

    pub fn load_precomputed(path: &Path) -> Result<Self> {
        let c = Container::read(path)?;
        if c.kind != container::KIND_EMBEDDINGS {
            return Err(Error::Checkpoint(format!(
                "{} holds {:?}, not precomputed embeddings",
                path.display(),
                c.kind
            )));
        }
        let mut width = None;
        let mut vectors = HashMap::new();
        for (name, m) in c.tensors {
            match width {
                None => width = Some(m.cols()),
                Some(w) if w != m.cols() => {
                    return Err(Error::Checkpoint(format!(
                        "embedding for {name:?} has width {}, expected {w}",
                        m.cols()
                    )))
                }
                _ => {}
            }
            vectors.insert(name, m);
        }
        Ok(EmbeddingProvider::Precomputed {
            width: width.unwrap_or(0),
            vectors,
        })
    }

    pub fn save_precomputed(&self, path: &Path) -> Result<()> {
        let EmbeddingProvider::Precomputed { vectors, .. } = self else {
            return Err(Error::invalid("only precomputed embeddings can be saved"));
        };
        let mut names: Vec<&String> = vectors.keys().collect();
        names.sort();
        let tensors = names.into_iter().map(|n| (n.clone(), vectors[n].clone())).collect();
        Container {
            kind: container::KIND_EMBEDDINGS.to_string(),
            meta: serde_json::Value::Null,
            tensors,
        }
        .write(path)
    }
}
