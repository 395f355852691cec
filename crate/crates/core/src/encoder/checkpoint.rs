//! Checkpoint file: `SEMEDIT1`, a little-endian `u32` header length, a JSON
//! header, then every tensor as raw little-endian `f32` in header order.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{BatchNorm, Dense, Encoder, EncoderWeights};
use crate::error::{Error, Result};
use crate::templates::{ClassId, Template};

pub const MAGIC: &[u8; 8] = b"SEMEDIT1";
pub const CHECKPOINT_VERSION: u32 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub class: ClassId,
    pub spec_hash: String,
    pub step: u64,
    pub tensors: Vec<TensorInfo>,
}

fn tensors(w: &EncoderWeights<f32>) -> Vec<(String, Vec<usize>, &[f32])> {
    let mut out = Vec::new();
    for (k, l) in w.dense.iter().enumerate() {
        out.push((format!("dense{k}.w"), l.w.shape().to_vec(), l.w.as_slice().expect("standard layout")));
        out.push((format!("dense{k}.b"), l.b.shape().to_vec(), l.b.as_slice().expect("standard layout")));
    }
    for (k, b) in w.bn.iter().enumerate() {
        for (name, t) in [
            ("gamma", &b.gamma),
            ("beta", &b.beta),
            ("running_mean", &b.running_mean),
            ("running_var", &b.running_var),
        ] {
            out.push((format!("bn{k}.{name}"), t.shape().to_vec(), t.as_slice().expect("standard layout")));
        }
    }
    out
}

pub fn write_checkpoint(encoder: &Encoder) -> Vec<u8> {
    let list = tensors(&encoder.weights);
    let header = CheckpointHeader {
        version: CHECKPOINT_VERSION,
        class: encoder.template.class(),
        spec_hash: encoder.template.spec_hash().to_string(),
        step: encoder.step,
        tensors: list
            .iter()
            .map(|(name, shape, _)| TensorInfo {
                name: name.clone(),
                shape: shape.clone(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(12 + json.len() + 4 * encoder.weights.parameter_count() * 2);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, _, data) in &list {
        for x in data.iter() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

fn bad(message: impl Into<String>) -> Error {
    Error::Checkpoint(message.into())
}

/// Parses a checkpoint for `template`; nothing is returned unless the whole
/// file is consistent.
pub fn read_checkpoint(bytes: &[u8], template: &Template) -> Result<Encoder> {
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file (bad magic)"));
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = bytes
        .get(12..12 + len)
        .ok_or_else(|| bad("truncated checkpoint header"))?;
    let header: CheckpointHeader =
        serde_json::from_slice(body).map_err(|e| bad(format!("malformed header: {e}")))?;
    if header.version != CHECKPOINT_VERSION {
        return Err(bad(format!(
            "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
            header.version
        )));
    }
    if header.class != template.class() || header.spec_hash != template.spec_hash() {
        return Err(bad(format!(
            "checkpoint is for a {} template with spec hash {}, but the {} template has spec hash {}",
            header.class,
            header.spec_hash,
            template.class(),
            template.spec_hash()
        )));
    }
    let mut weights = EncoderWeights::<f32>::init(template, 0);
    let expected: Vec<TensorInfo> = tensors(&weights)
        .into_iter()
        .map(|(name, shape, _)| TensorInfo { name, shape })
        .collect();
    if header.tensors != expected {
        return Err(bad("tensor table does not match the encoder architecture"));
    }
    let data = &bytes[12 + len..];
    let total: usize = expected.iter().map(|t| t.shape.iter().product::<usize>()).sum();
    if data.len() != 4 * total {
        return Err(bad(format!(
            "expected {} bytes of tensor data, found {}",
            4 * total,
            data.len()
        )));
    }
    let mut values = data
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")));
    let mut take1 = |n: usize| Array1::from_iter(values.by_ref().take(n));
    let mut dense = Vec::with_capacity(weights.dense.len());
    let mut bn = Vec::with_capacity(weights.bn.len());
    for l in &weights.dense {
        let (r, c) = l.w.dim();
        let w = Array2::from_shape_vec((r, c), take1(r * c).to_vec()).expect("shape checked");
        let b = take1(c);
        dense.push(Dense { w, b });
    }
    for b in &weights.bn {
        let n = b.gamma.len();
        bn.push(BatchNorm {
            gamma: take1(n),
            beta: take1(n),
            running_mean: take1(n),
            running_var: take1(n),
        });
    }
    weights.dense = dense;
    weights.bn = bn;
    if weights.bn.iter().any(|b| b.running_var.iter().any(|&v| !(v >= 0.0))) {
        return Err(bad("negative or NaN running variance"));
    }
    Ok(Encoder {
        weights,
        template: template.clone(),
        step: header.step,
    })
}

pub fn save_checkpoint(encoder: &Encoder, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_checkpoint(encoder)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>, template: &Template) -> Result<Encoder> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&bytes, template)
}

/// Reads only the header, e.g. to find which template a file belongs to.
pub fn peek_header(bytes: &[u8]) -> Result<CheckpointHeader> {
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file (bad magic)"));
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = bytes
        .get(12..12 + len)
        .ok_or_else(|| bad("truncated checkpoint header"))?;
    serde_json::from_slice(body).map_err(|e| bad(format!("malformed header: {e}")))
}
