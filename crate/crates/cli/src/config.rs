//! Run configuration: a JSON file, then command-line overrides on top.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use hgcn_core::autodiff::Activation;
use hgcn_core::decode::DecodeMethod;
use hgcn_core::model::ModelConfig;
use hgcn_core::synth::SynthConfig;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Label names: a JSON array or one name per line.
    pub labels: Option<PathBuf>,
    /// `num_labels` and `seed` are filled in from the label file and `seed`.
    pub model: ModelConfig,
    pub decode: DecodeMethod,
    /// `lookup` or `file:PATH`.
    pub encoder: String,
    /// Freeze a lookup encoder at its random initialization.
    pub freeze: bool,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub max_len: usize,
    /// Defaults to `<out_dir>/model.ckpt`.
    pub checkpoint: Option<PathBuf>,
    /// Corpus shape for `synth`; its seed is replaced by `seed`.
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: None,
            dev: None,
            test: None,
            labels: None,
            model: ModelConfig::default(),
            decode: DecodeMethod::TopK(1),
            encoder: "lookup".into(),
            freeze: false,
            out_dir: PathBuf::from("out"),
            seed: 0,
            epochs: 10,
            batch_size: 8,
            max_len: 128,
            checkpoint: None,
            synth: SynthConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EncoderChoice {
    Lookup,
    File(PathBuf),
}

impl FromStr for EncoderChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            None if s == "lookup" => Ok(EncoderChoice::Lookup),
            Some(("file", p)) if !p.is_empty() => Ok(EncoderChoice::File(PathBuf::from(p))),
            _ => Err(format!("encoder {s:?} is not lookup or file:PATH")),
        }
    }
}

/// Flags shared by every subcommand. Anything given here wins over the config file.
#[derive(Args, Clone, Debug, Default)]
pub struct Overrides {
    /// JSON run configuration.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of graph convolution layers.
    #[arg(long)]
    pub layers: Option<usize>,
    /// Hidden width of every layer.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// topk:K or thr:T (T may be a fraction such as 2/11).
    #[arg(long, value_name = "METHOD")]
    pub decode: Option<String>,
    /// lookup or file:PATH.
    #[arg(long, value_name = "ENCODER")]
    pub encoder: Option<String>,
    /// Keep a lookup encoder frozen at its random initialization.
    #[arg(long)]
    pub freeze: bool,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub train: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub dev: Option<PathBuf>,
    /// Evaluation data for eval, explain and correlate.
    #[arg(long, value_name = "PATH")]
    pub test: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub labels: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// relu or tanh.
    #[arg(long)]
    pub activation: Option<String>,
}

/// Which inputs a subcommand needs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Need {
    Train,
    Checkpoint,
    Nothing,
}

/// A validated configuration with its derived pieces.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub cfg: RunConfig,
    pub encoder: EncoderChoice,
    pub checkpoint: PathBuf,
}

/// Reads the config file, applies overrides and checks everything, returning
/// every problem found rather than the first.
pub fn resolve(o: &Overrides, need: Need) -> Result<Resolved, Vec<String>> {
    let mut errs = Vec::new();
    let mut cfg = match &o.config {
        Some(path) => match load(path) {
            Ok(c) => c,
            Err(e) => return Err(vec![e]),
        },
        None => RunConfig::default(),
    };
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(l) = o.layers {
        cfg.model.num_layers = l;
    }
    if let Some(h) = o.hidden {
        cfg.model.hidden = h;
    }
    if let Some(d) = &o.decode {
        match d.parse() {
            Ok(m) => cfg.decode = m,
            Err(e) => errs.push(format!("--decode: {e}")),
        }
    }
    if let Some(e) = &o.encoder {
        cfg.encoder = e.clone();
    }
    cfg.freeze |= o.freeze;
    if let Some(d) = &o.out {
        cfg.out_dir = d.clone();
    }
    for (slot, v) in [
        (&mut cfg.train, &o.train),
        (&mut cfg.dev, &o.dev),
        (&mut cfg.test, &o.test),
        (&mut cfg.labels, &o.labels),
        (&mut cfg.checkpoint, &o.checkpoint),
    ] {
        if v.is_some() {
            slot.clone_from(v);
        }
    }
    if let Some(e) = o.epochs {
        cfg.epochs = e;
    }
    if let Some(b) = o.batch_size {
        cfg.batch_size = b;
    }
    if let Some(lr) = o.lr {
        cfg.model.lr = lr;
    }
    if let Some(a) = &o.activation {
        match a.parse::<Activation>() {
            Ok(a) => cfg.model.activation = a,
            Err(e) => errs.push(format!("--activation: {e}")),
        }
    }
    cfg.model.seed = cfg.seed;
    cfg.synth.seed = cfg.seed;

    if let Err(e) = cfg.decode.validate() {
        errs.push(format!("decode: {e}"));
    }
    let encoder = match cfg.encoder.parse::<EncoderChoice>() {
        Ok(e) => e,
        Err(e) => {
            errs.push(e);
            EncoderChoice::Lookup
        }
    };
    if cfg.max_len < 3 {
        errs.push(format!("max_len must be >= 3, got {}", cfg.max_len));
    }
    let checkpoint = cfg.checkpoint.clone().unwrap_or_else(|| cfg.out_dir.join("model.ckpt"));
    match need {
        Need::Train => {
            let mut model = cfg.model.clone();
            // filled in from the label file later
            model.num_labels = model.num_labels.max(1);
            errs.extend(model.validate().into_iter().map(|e| format!("model: {e}")));
            if cfg.epochs == 0 {
                errs.push("epochs must be >= 1".into());
            }
            if cfg.batch_size == 0 {
                errs.push("batch_size must be >= 1".into());
            }
            require(&mut errs, "train", cfg.train.as_deref());
            require(&mut errs, "labels", cfg.labels.as_deref());
            optional(&mut errs, "dev", cfg.dev.as_deref());
            optional(&mut errs, "test", cfg.test.as_deref());
            if let EncoderChoice::File(p) = &encoder {
                optional(&mut errs, "encoder file", Some(p));
                if cfg.freeze {
                    errs.push("--freeze only applies to the lookup encoder".into());
                }
            }
        }
        Need::Checkpoint => {
            require(&mut errs, "test", cfg.test.as_deref());
            optional(&mut errs, "checkpoint", Some(&checkpoint));
            if let EncoderChoice::File(p) = &encoder {
                optional(&mut errs, "encoder file", Some(p));
            }
        }
        Need::Nothing => {}
    }
    if errs.is_empty() {
        Ok(Resolved { cfg, encoder, checkpoint })
    } else {
        Err(errs)
    }
}

fn load(path: &Path) -> Result<RunConfig, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("config {}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("config {}: {e}", path.display()))
}

fn require(errs: &mut Vec<String>, what: &str, path: Option<&Path>) {
    match path {
        None => errs.push(format!("{what} path is required")),
        Some(p) => optional(errs, what, Some(p)),
    }
}

fn optional(errs: &mut Vec<String>, what: &str, path: Option<&Path>) {
    if let Some(p) = path {
        if !p.is_file() {
            errs.push(format!("{what} file {} does not exist", p.display()));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encoder_choices() {
        assert_eq!("lookup".parse(), Ok(EncoderChoice::Lookup));
        assert_eq!("file:a/b.emb".parse(), Ok(EncoderChoice::File("a/b.emb".into())));
        assert!("file:".parse::<EncoderChoice>().is_err());
        assert!("bert".parse::<EncoderChoice>().is_err());
    }

    #[test]
    fn every_problem_is_reported() {
        let o = Overrides {
            layers: Some(0),
            decode: Some("thr:3".into()),
            encoder: Some("bert".into()),
            epochs: Some(0),
            ..Default::default()
        };
        let errs = resolve(&o, Need::Train).unwrap_err();
        let all = errs.join("\n");
        for needle in ["num_layers", "--decode", "bert", "epochs", "train path", "labels path"] {
            assert!(all.contains(needle), "{needle} missing from {all}");
        }
    }

    #[test]
    fn flags_override_file_and_seed_propagates() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, r#"{"seed": 3, "model": {"hidden": 7}, "decode": {"method": "threshold", "value": 0.25}}"#).unwrap();
        let o = Overrides {
            config: Some(p),
            seed: Some(9),
            ..Default::default()
        };
        let r = resolve(&o, Need::Nothing).unwrap();
        assert_eq!(r.cfg.model.hidden, 7);
        assert_eq!(r.cfg.seed, 9);
        assert_eq!(r.cfg.model.seed, 9);
        assert_eq!(r.cfg.synth.seed, 9);
        assert_eq!(r.cfg.decode, DecodeMethod::Threshold(0.25));
        assert_eq!(r.checkpoint, PathBuf::from("out/model.ckpt"));
    }

    #[test]
    fn unknown_config_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, r#"{"epoch": 3}"#).unwrap();
        let o = Overrides {
            config: Some(p),
            ..Default::default()
        };
        assert!(resolve(&o, Need::Nothing).unwrap_err()[0].contains("epoch"));
    }
}
