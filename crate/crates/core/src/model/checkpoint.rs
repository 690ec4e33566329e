//! Versioned binary checkpoint format: magic header, JSON-encoded
//! architecture spec, little-endian IEEE-754 weights, and a SHA-256
//! integrity trailer.

use std::path::Path;

use sha2::{Digest, Sha256};

use super::net::{ModelError, ModelSpec};
use super::Model;

const MAGIC: &[u8; 8] = b"LTRNCKPT";
const VERSION: u32 = 1;

pub fn encode_checkpoint(model: &Model<f32>) -> Vec<u8> {
    let spec_json = serde_json::to_vec(&model.spec).expect("spec serializes");
    let mut out = Vec::with_capacity(64 + spec_json.len() + model.params.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(spec_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&spec_json);
    out.extend_from_slice(&(model.params.len() as u64).to_le_bytes());
    for p in &model.params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Model<f32>, ModelError> {
    let err = |m: &str| ModelError::Checkpoint(m.to_string());
    if bytes.len() < 8 + 4 + 4 + 8 + 32 {
        return Err(err("truncated"));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 32);
    let digest = Sha256::digest(body);
    if digest.as_slice() != trailer {
        return Err(err("integrity check failed"));
    }
    if &body[..8] != MAGIC {
        return Err(err("bad magic"));
    }
    let version = u32::from_le_bytes(body[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(ModelError::Checkpoint(format!("unsupported version {version}")));
    }
    let spec_len = u32::from_le_bytes(body[12..16].try_into().unwrap()) as usize;
    if spec_len > 1 << 16 || 16 + spec_len + 8 > body.len() {
        return Err(err("bad spec length"));
    }
    let spec: ModelSpec = serde_json::from_slice(&body[16..16 + spec_len])
        .map_err(|e| ModelError::Checkpoint(format!("bad spec: {e}")))?;
    spec.validate()?;
    let at = 16 + spec_len;
    let count = u64::from_le_bytes(body[at..at + 8].try_into().unwrap()) as usize;
    if count != spec.param_count() {
        return Err(ModelError::Checkpoint(format!(
            "weight count {count} does not match spec ({})",
            spec.param_count()
        )));
    }
    let payload = &body[at + 8..];
    if payload.len() != count * 4 {
        return Err(err("weight payload size mismatch"));
    }
    let params: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if params.iter().any(|p| !p.is_finite()) {
        return Err(err("non-finite weight"));
    }
    Ok(Model { spec, params })
}

pub fn save_checkpoint(path: &Path, model: &Model<f32>) -> Result<(), ModelError> {
    std::fs::write(path, encode_checkpoint(model))
        .map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))
}

pub fn load_checkpoint(path: &Path) -> Result<Model<f32>, ModelError> {
    let bytes =
        std::fs::read(path).map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))?;
    decode_checkpoint(&bytes)
}
