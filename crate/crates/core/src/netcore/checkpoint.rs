//! `NNCK` v1 checkpoint files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "NNCK" | version: u32 | header_len: u64 | header: JSON (header_len bytes) | f64 blobs
//! ```
//!
//! The header lists every tensor with its byte offset (relative to the start
//! of the blob section) and float count, in layer order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{LayerParams, Network, BN_EPS, INIT_SCHEME};
use super::spec::{ArchitectureSpec, LayerSpec};
use crate::error::{CheckpointError, Result};

pub const MAGIC: &[u8; 4] = b"NNCK";
pub const VERSION: u32 = 1;
const PREAMBLE: usize = 4 + 4 + 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub offset: u64,
    pub count: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub dtype: String,
    pub bn_eps: f64,
    pub spec: ArchitectureSpec,
    pub layer_names: Vec<String>,
    pub tensors: Vec<TensorEntry>,
    #[serde(default)]
    pub metadata: serde_json::Map<String, serde_json::Value>,
}

fn layer_name(l: usize, spec: &LayerSpec) -> String {
    let kind = match spec {
        LayerSpec::Linear { .. } => "linear",
        LayerSpec::Conv2d { .. } => "conv2d",
        LayerSpec::Batchnorm { .. } => "batchnorm",
    };
    format!("layers.{l}.{kind}")
}

fn header_for(net: &Network) -> CheckpointHeader {
    let mut tensors = Vec::new();
    let mut offset = 0u64;
    for (l, lp) in net.layers().iter().enumerate() {
        for (name, t) in lp.tensors() {
            tensors.push(TensorEntry {
                name: format!("layers.{l}.{name}"),
                offset,
                count: t.len() as u64,
            });
            offset += 8 * t.len() as u64;
        }
    }
    let mut metadata = serde_json::Map::new();
    metadata.insert("init_scheme".into(), INIT_SCHEME.into());
    CheckpointHeader {
        dtype: "f64".into(),
        bn_eps: BN_EPS,
        spec: net.spec().clone(),
        layer_names: net.spec().layers.iter().enumerate().map(|(l, s)| layer_name(l, s)).collect(),
        tensors,
        metadata,
    }
}

pub fn to_bytes(net: &Network) -> Vec<u8> {
    let header = serde_json::to_vec(&header_for(net)).expect("header serializes");
    let floats = net.flat_params();
    let mut out = Vec::with_capacity(PREAMBLE + header.len() + 8 * floats.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for v in floats {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Reads only the header; enough to reconstruct the architecture.
pub fn read_header(bytes: &[u8]) -> Result<(CheckpointHeader, usize)> {
    if bytes.len() < PREAMBLE {
        return Err(CheckpointError::Truncated {
            expected: PREAMBLE as u64,
            actual: bytes.len() as u64,
        }
        .into());
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic(magic).into());
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version).into());
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let blob_start = (PREAMBLE as u64).checked_add(header_len).filter(|&e| e <= bytes.len() as u64).ok_or(
        CheckpointError::Truncated {
            expected: PREAMBLE as u64 + header_len,
            actual: bytes.len() as u64,
        },
    )? as usize;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[PREAMBLE..blob_start])
        .map_err(|e| CheckpointError::CorruptHeader(e.to_string()))?;
    if header.dtype != "f64" {
        return Err(CheckpointError::CorruptHeader(format!("unsupported dtype {:?}", header.dtype)).into());
    }
    if header.bn_eps != BN_EPS {
        return Err(CheckpointError::CorruptHeader(format!("bn_eps {} differs from {BN_EPS}", header.bn_eps)).into());
    }
    header
        .spec
        .validate()
        .map_err(|e| CheckpointError::CorruptHeader(e.to_string()))?;
    Ok((header, blob_start))
}

pub fn from_bytes(bytes: &[u8]) -> Result<Network> {
    let (header, blob_start) = read_header(bytes)?;
    let spec = header.spec;
    // Expected tensor list, from the spec alone.
    let mut expected: Vec<(usize, &'static str, usize)> = Vec::new();
    for (l, ls) in spec.layers.iter().enumerate() {
        match ls {
            LayerSpec::Batchnorm { features } => {
                for name in ["weight", "bias", "running_mean", "running_var"] {
                    expected.push((l, name, *features));
                }
            }
            _ => {
                expected.push((l, "weight", ls.weight_len()));
                if ls.has_bias() {
                    expected.push((l, "bias", ls.out_units()));
                }
            }
        }
    }
    if expected.len() != header.tensors.len() {
        return Err(CheckpointError::CorruptOffsets(format!(
            "header lists {} tensors, architecture needs {}",
            header.tensors.len(),
            expected.len()
        ))
        .into());
    }
    let mut offset = 0u64;
    for ((l, name, count), entry) in expected.iter().zip(&header.tensors) {
        let want = format!("layers.{l}.{name}");
        if entry.name != want || entry.count != *count as u64 || entry.offset != offset {
            return Err(CheckpointError::CorruptOffsets(format!(
                "tensor {:?} (offset {}, count {}) does not match expected {want:?} (offset {offset}, count {count})",
                entry.name, entry.offset, entry.count
            ))
            .into());
        }
        offset += 8 * entry.count;
    }
    let blob = &bytes[blob_start..];
    if (blob.len() as u64) < offset {
        return Err(CheckpointError::Truncated {
            expected: offset,
            actual: blob.len() as u64,
        }
        .into());
    }
    if blob.len() as u64 > offset {
        return Err(CheckpointError::CorruptOffsets(format!(
            "{} trailing bytes after the last tensor",
            blob.len() as u64 - offset
        ))
        .into());
    }
    let mut cursor = blob.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut take = |n: usize| -> Vec<f64> { cursor.by_ref().take(n).collect() };
    let layers = spec
        .layers
        .iter()
        .map(|ls| match ls {
            LayerSpec::Batchnorm { features } => LayerParams::BatchNorm {
                gamma: take(*features),
                beta: take(*features),
                running_mean: take(*features),
                running_var: take(*features),
            },
            _ => LayerParams::Weighted {
                weight: take(ls.weight_len()),
                bias: ls.has_bias().then(|| take(ls.out_units())),
            },
        })
        .collect();
    Network::from_parts(spec, layers)
}

pub fn save_checkpoint(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_bytes(net))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Network> {
    from_bytes(&fs::read(path)?)
}
