//! Binary tensor container shared by checkpoints and precomputed embeddings.
//!
//! Layout:
//!
//! ```text
//! magic      8 bytes   "HGCNTNSR"
//! hdr_len    u32 LE    length of the header document
//! header     JSON      {"format_version", "kind", "meta", "tensors": [{"name", "rows", "cols"}]}
//! payload    f64 LE    tensors back to back, row-major, in header order
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const MAGIC: &[u8; 8] = b"HGCNTNSR";
pub const FORMAT_VERSION: u32 = 1;
pub const KIND_CHECKPOINT: &str = "checkpoint";
pub const KIND_EMBEDDINGS: &str = "embeddings";

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    kind: String,
    #[serde(default)]
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub kind: String,
    pub meta: serde_json::Value,
    pub tensors: Vec<(String, Matrix)>,
}

impl Container {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            format_version: FORMAT_VERSION,
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|(name, m)| TensorEntry {
                    name: name.clone(),
                    rows: m.rows(),
                    cols: m.cols(),
                })
                .collect(),
        };
        let header = serde_json::to_vec(&header)?;
        let payload: usize = self.tensors.iter().map(|(_, m)| m.len() * 8).sum();
        let mut out = Vec::with_capacity(12 + header.len() + payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, m) in &self.tensors {
            for v in m.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |msg: &str| Error::Checkpoint(msg.to_string());
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(corrupt("bad magic; not a tensor container"));
        }
        let hdr_len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let body = &bytes[12..];
        if body.len() < hdr_len {
            return Err(corrupt("truncated header"));
        }
        let header: Header = serde_json::from_slice(&body[..hdr_len])
            .map_err(|e| Error::Checkpoint(format!("unreadable header: {e}")))?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "format version {} is not supported (expected {FORMAT_VERSION})",
                header.format_version
            )));
        }
        let payload = &body[hdr_len..];
        let expected: usize = header
            .tensors
            .iter()
            .map(|t| t.rows.checked_mul(t.cols).and_then(|n| n.checked_mul(8)))
            .try_fold(0usize, |acc, n| n.and_then(|n| acc.checked_add(n)))
            .ok_or_else(|| corrupt("tensor shapes overflow"))?;
        if expected != payload.len() {
            return Err(Error::Checkpoint(format!(
                "shape header describes {expected} payload bytes but {} are present",
                payload.len()
            )));
        }
        let mut tensors = Vec::with_capacity(header.tensors.len());
        let mut offset = 0;
        for t in header.tensors {
            let n = t.rows * t.cols;
            let data: Vec<f64> = payload[offset..offset + n * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            offset += n * 8;
            let m = Matrix::from_vec(t.rows, t.cols, data)?;
            if !m.is_finite() {
                return Err(Error::Checkpoint(format!("tensor {:?} holds non-finite values", t.name)));
            }
            tensors.push((t.name, m));
        }
        Ok(Container {
            kind: header.kind,
            meta: header.meta,
            tensors,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Removes and returns the tensor called `name`.
    pub fn take(&mut self, name: &str) -> Result<Matrix> {
        let pos = self
            .tensors
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name:?}")))?;
        Ok(self.tensors.remove(pos).1)
    }
}
