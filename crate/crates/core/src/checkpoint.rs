//! Model checkpoints on top of the tensor [`Container`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::container::{Container, KIND_CHECKPOINT};
use crate::encoder::{EmbeddingProvider, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{Hgcn, ModelConfig, ModelParams};
use crate::optim::Param;

/// Where token features come from, as recorded in a checkpoint.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum EncoderSpec {
    Lookup,
    File { path: PathBuf },
}

#[derive(Serialize, Deserialize)]
struct Meta {
    config: ModelConfig,
    encoder: EncoderSpec,
    vocabulary: Vec<String>,
    labels: Vec<String>,
    max_len: usize,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: Hgcn,
    pub encoder: EncoderSpec,
    pub vocab: Vocabulary,
    pub labels: Vec<String>,
    pub max_len: usize,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = Meta {
            config: self.model.cfg.clone(),
            encoder: self.encoder.clone(),
            vocabulary: self.vocab.tokens().to_vec(),
            labels: self.labels.clone(),
            max_len: self.max_len,
        };
        let tensors = self
            .model
            .params
            .named()
            .into_iter()
            .map(|(name, p)| (name, p.value.clone()))
            .collect();
        Container {
            kind: KIND_CHECKPOINT.to_string(),
            meta: serde_json::to_value(meta)?,
            tensors,
        }
        .write(path)
    }

    /// Loads a checkpoint. A file-backed encoder is re-read from the recorded
    /// path unless `provider` is supplied.
    pub fn load(path: &Path, provider: Option<EmbeddingProvider>) -> Result<Self> {
        let mut c = Container::read(path)?;
        if c.kind != KIND_CHECKPOINT {
            return Err(Error::Checkpoint(format!("{} is a {:?} container", path.display(), c.kind)));
        }
        let meta: Meta = serde_json::from_value(std::mem::take(&mut c.meta))
            .map_err(|e| Error::Checkpoint(format!("bad metadata: {e}")))?;
        let cfg = meta.config;
        let provider = match (&meta.encoder, provider) {
            (_, Some(p)) => p,
            (EncoderSpec::Lookup, None) => EmbeddingProvider::TrainableLookup { width: cfg.embed_dim },
            (EncoderSpec::File { path }, None) => EmbeddingProvider::load_precomputed(path)?,
        };
        let embedding = match meta.encoder {
            EncoderSpec::Lookup => Some(Param::new(c.take("embedding")?)),
            EncoderSpec::File { .. } => None,
        };
        let w_token_in = Param::new(c.take("w_token_in")?);
        let w_label_in = Param::new(c.take("w_label_in")?);
        let w_layer = (0..cfg.num_layers)
            .map(|i| c.take(&format!("w_layer.{i}")).map(Param::new))
            .collect::<Result<Vec<_>>>()?;
        if let Some((extra, _)) = c.tensors.first() {
            return Err(Error::Checkpoint(format!("unexpected tensor {extra:?}")));
        }
        let params = ModelParams {
            embedding,
            w_token_in,
            w_label_in,
            w_layer,
        };
        let model = Hgcn::from_parts(cfg, params, provider).map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(Self {
            model,
            encoder: meta.encoder,
            vocab: Vocabulary::from_ordered(meta.vocabulary)?,
            labels: meta.labels,
            max_len: meta.max_len,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::container::MAGIC;
    use crate::model::GraphSample;

    fn checkpoint() -> Checkpoint {
        let cfg = ModelConfig {
            hidden: 5,
            embed_dim: 3,
            num_labels: 2,
            seed: 3,
            ..Default::default()
        };
        let vocab = Vocabulary::from_tokens(["a", "b"]);
        let model = Hgcn::new(cfg, EmbeddingProvider::TrainableLookup { width: 3 }, vocab.len()).unwrap();
        Checkpoint {
            model,
            encoder: EncoderSpec::Lookup,
            vocab,
            labels: vec!["x".into(), "y".into()],
            max_len: 17,
        }
    }

    #[test]
    fn forward_is_bitwise_identical_after_reload() {
        let ck = checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path, None).unwrap();
        let s = GraphSample {
            id: "s".into(),
            ids: vec![0, 4, 5, 4, 1],
            labels: vec![1],
        };
        let a = ck.model.forward(&s).unwrap();
        let b = back.model.forward(&s).unwrap();
        assert_eq!(a, b);
        assert_eq!(back.vocab, ck.vocab);
        assert_eq!(back.labels, ck.labels);
    }

    #[test]
    fn missing_tensor_is_named() {
        let ck = checkpoint();
        let mut c = Container::read(&{
            let dir = tempfile::tempdir().unwrap().keep();
            let p = dir.join("m.ckpt");
            ck.save(&p).unwrap();
            p
        })
        .unwrap();
        c.tensors.retain(|(n, _)| n != "w_layer.1");
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("broken.ckpt");
        c.write(&p).unwrap();
        let err = Checkpoint::load(&p, None).unwrap_err();
        assert!(err.to_string().contains("w_layer.1"), "{err}");
    }

    #[test]
    fn corrupt_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.ckpt");
        let mut bytes = MAGIC.to_vec();
        bytes.extend_from_slice(&[1, 0, 0, 0, b'{']);
        std::fs::write(&p, bytes).unwrap();
        assert!(matches!(Checkpoint::load(&p, None), Err(Error::Checkpoint(_))));
    }
}
