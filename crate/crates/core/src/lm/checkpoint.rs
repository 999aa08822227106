//! Versioned checkpoint container.
//!
//! Layout: 8-byte magic, `u32` format version, `u64` header length, a JSON
//! header, then little-endian `f32` tensors in header order (parameters, and
//! optionally the two Adam moment buffers).

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ModelConfig;
use super::model::{tensor_specs, Model, TensorSpec};
use super::optim::AdamW;
use super::LmError;

pub const MAGIC: &[u8; 8] = b"NGCKPT\0\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub step: u64,
    pub vocab_hash: String,
    pub params: Vec<f32>,
    pub optimizer: Option<AdamW>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    step: u64,
    vocab_hash: String,
    tensors: Vec<TensorSpec>,
    optimizer_t: Option<u64>,
    payload_bytes: u64,
    payload_sha256: String,
}

impl Checkpoint {
    pub fn new(model: &Model<f32>, step: u64, vocab_hash: impl Into<String>, optimizer: Option<AdamW>) -> Self {
        Checkpoint {
            config: model.config.clone(),
            step,
            vocab_hash: vocab_hash.into(),
            params: model.params.clone(),
            optimizer,
        }
    }

    pub fn model(&self) -> Result<Model<f32>, LmError> {
        Model::from_params(self.config.clone(), self.params.clone())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, LmError> {
        let mut payload = Vec::with_capacity(4 * self.params.len() * if self.optimizer.is_some() { 3 } else { 1 });
        let mut put = |xs: &[f32]| xs.iter().for_each(|x| payload.extend_from_slice(&x.to_le_bytes()));
        put(&self.params);
        if let Some(opt) = &self.optimizer {
            if opt.m.len() != self.params.len() || opt.v.len() != self.params.len() {
                return Err(LmError::Shape("optimizer state does not match parameters".into()));
            }
            put(&opt.m);
            put(&opt.v);
        }
        let header = Header {
            config: self.config.clone(),
            step: self.step,
            vocab_hash: self.vocab_hash.clone(),
            tensors: tensor_specs(&self.config),
            optimizer_t: self.optimizer.as_ref().map(|o| o.t),
            payload_bytes: payload.len() as u64,
            payload_sha256: hex::encode(Sha256::digest(&payload)),
        };
        let json = serde_json::to_vec(&header).map_err(|e| LmError::Integrity(e.to_string()))?;
        let mut out = Vec::with_capacity(20 + json.len() + payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, LmError> {
        let trunc = || LmError::Integrity("file is truncated".into());
        if bytes.len() < 8 {
            return Err(trunc());
        }
        if &bytes[..8] != MAGIC {
            return Err(LmError::Integrity("not a checkpoint file (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes.get(8..12).ok_or_else(trunc)?.try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(LmError::Version { found: version, expected: FORMAT_VERSION });
        }
        let hlen = u64::from_le_bytes(bytes.get(12..20).ok_or_else(trunc)?.try_into().expect("8 bytes")) as usize;
        let hend = 20usize.checked_add(hlen).ok_or_else(trunc)?;
        let header: Header = serde_json::from_slice(bytes.get(20..hend).ok_or_else(trunc)?)
            .map_err(|e| LmError::Integrity(format!("bad header: {e}")))?;
        header.config.validate()?;
        let payload = &bytes[hend..];
        if (payload.len() as u64) < header.payload_bytes {
            return Err(trunc());
        }
        if payload.len() as u64 != header.payload_bytes {
            return Err(LmError::Integrity("trailing bytes after payload".into()));
        }
        if hex::encode(Sha256::digest(payload)) != header.payload_sha256 {
            return Err(LmError::Integrity("payload checksum mismatch".into()));
        }
        if header.tensors != tensor_specs(&header.config) {
            return Err(LmError::Integrity("tensor list does not match the configuration".into()));
        }
        let n = header.config.n_params();
        let buffers = if header.optimizer_t.is_some() { 3 } else { 1 };
        if payload.len() != 4 * n * buffers {
            return Err(LmError::Integrity(format!("payload holds {} bytes, expected {}", payload.len(), 4 * n * buffers)));
        }
        let floats: Vec<f32> =
            payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        let params = floats[..n].to_vec();
        let optimizer = header
            .optimizer_t
            .map(|t| AdamW { m: floats[n..2 * n].to_vec(), v: floats[2 * n..3 * n].to_vec(), t });
        Ok(Checkpoint { config: header.config, step: header.step, vocab_hash: header.vocab_hash, params, optimizer })
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<(), LmError> {
    let bytes = ckpt.to_bytes()?;
    let path = path.as_ref();
    let tmp = path.with_extension("tmp");
    let mut f = std::fs::File::create(&tmp)?;
    f.write_all(&bytes)?;
    f.sync_all()?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Loads a checkpoint, refusing it when its vocabulary hash differs from
/// `expected_vocab_hash`.
pub fn load_checkpoint(path: impl AsRef<Path>, expected_vocab_hash: &str) -> Result<Checkpoint, LmError> {
    let ckpt = load_checkpoint_forced(path)?;
    if ckpt.vocab_hash != expected_vocab_hash {
        return Err(LmError::VocabMismatch { expected: expected_vocab_hash.to_string(), found: ckpt.vocab_hash });
    }
    Ok(ckpt)
}

/// Loads a checkpoint without checking its vocabulary hash.
pub fn load_checkpoint_forced(path: impl AsRef<Path>) -> Result<Checkpoint, LmError> {
    Checkpoint::from_bytes(&std::fs::read(path)?)
}
