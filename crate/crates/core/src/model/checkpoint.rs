//! Binary model checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic   [u8; 4] = "EDAS"
//! version u32     = 1
//! hlen    u64     length of the JSON header in bytes
//! header  [u8]    JSON: dims, frozen flag, vocabulary, tensor names+shapes
//! blobs   [u8]    raw f32 data per tensor, in header order
//! ```
//!
//! Loading verifies the magic, version, header consistency (names, shapes,
//! counts against the dimensions), exact blob length, and the absence of
//! trailing bytes; round trips are bitwise exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{ModelDims, ModelParams};
use super::vocab::Vocab;
use super::ModelError;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"EDAS";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ParamMeta {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    dims: ModelDims,
    frozen_embed: bool,
    vocab: Vec<String>,
    params: Vec<ParamMeta>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ModelError + '_ {
    move |source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn corrupt(path: &Path, message: impl Into<String>) -> ModelError {
    ModelError::CorruptCheckpoint {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Serializes parameters and vocabulary to `path`.
pub fn save_checkpoint(
    path: &Path,
    params: &ModelParams<f32>,
    vocab: &Vocab,
) -> Result<(), ModelError> {
    if vocab.len() != params.dims.vocab {
        return Err(ModelError::Config {
            message: format!(
                "vocabulary has {} entries but the model was sized for {}",
                vocab.len(),
                params.dims.vocab
            ),
        });
    }
    let named = params.named();
    let header = Header {
        dims: params.dims,
        frozen_embed: params.frozen_embed,
        vocab: vocab.tokens().to_vec(),
        params: named
            .iter()
            .map(|(name, t)| ParamMeta {
                name: (*name).to_string(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let header_bytes = serde_json::to_vec(&header).expect("header serializes");

    let blob_len: usize = named.iter().map(|(_, t)| t.len() * 4).sum();
    let mut out = Vec::with_capacity(16 + header_bytes.len() + blob_len);
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    for (_, t) in &named {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, out).map_err(io_err(path))
}

/// Reads a checkpoint back into parameters and vocabulary.
pub fn load_checkpoint(path: &Path) -> Result<(ModelParams<f32>, Vocab), ModelError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.len() < 16 {
        return Err(corrupt(path, "file shorter than the fixed prelude"));
    }
    if bytes[0..4] != CHECKPOINT_MAGIC {
        return Err(ModelError::BadMagic {
            path: path.to_path_buf(),
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(ModelError::VersionMismatch {
            path: path.to_path_buf(),
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let blob_start = 16usize.checked_add(hlen).filter(|&e| e <= bytes.len());
    let Some(blob_start) = blob_start else {
        return Err(corrupt(path, "header extends past end of file"));
    };
    let header: Header = serde_json::from_slice(&bytes[16..blob_start])
        .map_err(|e| corrupt(path, format!("unreadable header: {e}")))?;

    let vocab = Vocab::from_tokens(header.vocab)?;
    header.dims.validate()?;
    if vocab.len() != header.dims.vocab {
        return Err(corrupt(
            path,
            format!(
                "header lists {} vocabulary entries but dims.vocab is {}",
                vocab.len(),
                header.dims.vocab
            ),
        ));
    }

    let mut params = ModelParams::<f32>::zeros(header.dims, header.frozen_embed)?;
    let named = params.named_mut();
    if named.len() != header.params.len() {
        return Err(corrupt(
            path,
            format!(
                "header lists {} tensors but the model has {}",
                header.params.len(),
                named.len()
            ),
        ));
    }
    let mut offset = blob_start;
    for ((name, tensor), meta) in named.into_iter().zip(&header.params) {
        if meta.name != name {
            return Err(corrupt(
                path,
                format!("tensor order mismatch: expected {name}, found {}", meta.name),
            ));
        }
        if meta.shape != tensor.shape() {
            return Err(corrupt(
                path,
                format!(
                    "tensor {name} has shape {:?} in the header but {:?} per the dimensions",
                    meta.shape,
                    tensor.shape()
                ),
            ));
        }
        let need = tensor.len() * 4;
        let Some(chunk) = bytes.get(offset..offset + need) else {
            return Err(corrupt(path, format!("file truncated inside tensor {name}")));
        };
        for (dst, src) in tensor.data_mut().iter_mut().zip(chunk.chunks_exact(4)) {
            *dst = f32::from_le_bytes(src.try_into().unwrap());
        }
        offset += need;
    }
    if offset != bytes.len() {
        return Err(corrupt(
            path,
            format!("{} trailing bytes after the last tensor", bytes.len() - offset),
        ));
    }
    Ok((params, vocab))
}
