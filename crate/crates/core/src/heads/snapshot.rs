//! Binary model files: one JSON header line, then every parameter as
//! little-endian `f64` in the order global head (W, b), shared queries, local
//! heads by ascending group id (W, b).

use serde::{Deserialize, Serialize};

use super::{Model, ModelShape, TrainConfig};
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "alice-model/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub format: String,
    pub shape: ModelShape,
    pub hyperparameters: TrainConfig,
    pub arch_hash: String,
    pub parameter_count: usize,
}

fn blocks(model: &Model) -> Vec<&[f64]> {
    let mut out = vec![
        model.global.weights.as_slice().expect("standard layout"),
        model.global.biases.as_slice().expect("standard layout"),
        model.attention.queries.as_slice().expect("standard layout"),
    ];
    for l in &model.locals {
        out.push(l.head.weights.as_slice().expect("standard layout"));
        out.push(l.head.biases.as_slice().expect("standard layout"));
    }
    out
}

fn blocks_mut(model: &mut Model) -> Vec<&mut [f64]> {
    let mut out = vec![
        model.global.weights.as_slice_mut().expect("standard layout"),
        model.global.biases.as_slice_mut().expect("standard layout"),
        model.attention.queries.as_slice_mut().expect("standard layout"),
    ];
    for l in &mut model.locals {
        out.push(l.head.weights.as_slice_mut().expect("standard layout"));
        out.push(l.head.biases.as_slice_mut().expect("standard layout"));
    }
    out
}

pub fn encode_model(model: &Model, hyperparameters: &TrainConfig, arch_hash: &str) -> Vec<u8> {
    let parts = blocks(model);
    let header = ModelHeader {
        format: MODEL_FORMAT.to_string(),
        shape: model.shape(),
        hyperparameters: hyperparameters.clone(),
        arch_hash: arch_hash.to_string(),
        parameter_count: parts.iter().map(|b| b.len()).sum(),
    };
    let mut out = serde_json::to_vec(&header).expect("header serializes");
    out.push(b'\n');
    for block in parts {
        for v in block {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_model(bytes: &[u8]) -> Result<(ModelHeader, Model)> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::MalformedSnapshot("model header line missing".into()))?;
    let header: ModelHeader = serde_json::from_slice(&bytes[..newline])
        .map_err(|e| Error::MalformedSnapshot(format!("model header: {e}")))?;
    if header.format != MODEL_FORMAT {
        return Err(Error::MalformedSnapshot(format!("unknown model format {:?}", header.format)));
    }
    let mut model = Model::zeros(&header.shape);
    let payload = &bytes[newline + 1..];
    let expected: usize = blocks(&model).iter().map(|b| b.len()).sum();
    if expected != header.parameter_count || payload.len() != expected * 8 {
        return Err(Error::MalformedSnapshot(format!(
            "model payload holds {} bytes, shape needs {}",
            payload.len(),
            expected * 8
        )));
    }
    let mut chunks = payload.chunks_exact(8);
    for block in blocks_mut(&mut model) {
        for (v, raw) in block.iter_mut().zip(chunks.by_ref()) {
            let x = f64::from_le_bytes(raw.try_into().expect("8-byte chunk"));
            if !x.is_finite() {
                return Err(Error::MalformedSnapshot("non-finite parameter".into()));
            }
            *v = x;
        }
    }
    Ok((header, model))
}
