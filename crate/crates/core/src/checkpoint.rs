//! Binary parameter checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! | bytes | content                                                   |
//! |-------|-----------------------------------------------------------|
//! | 8     | magic `PRSLPOL1`                                          |
//! | 4     | `u32` feature dimension F                                 |
//! | 16    | four `u32` category counts: structure, emotion, speed, tone |
//! | 8·N   | `f64` parameters: the four head matrices row-major in the same order, then the F articulation weights |
//!
//! Floats are stored by bit pattern, so a save/load round trip is exact.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::labels::Dimension;
use crate::policy::PolicyParams;

pub const MAGIC: &[u8; 8] = b"PRSLPOL1";
const HEADER_LEN: usize = 8 + 4 + 16;

pub fn encode(params: &PolicyParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * params.num_params());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(params.feature_dim() as u32).to_le_bytes());
    for d in Dimension::ALL {
        out.extend_from_slice(&(d.size() as u32).to_le_bytes());
    }
    for v in params.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<PolicyParams> {
    if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
        return Err(Error::Checkpoint("missing checkpoint header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
    let feature_dim = word(8);
    if feature_dim < 2 {
        return Err(Error::Checkpoint(format!("feature dimension {feature_dim} is below 2")));
    }
    for (k, d) in Dimension::ALL.iter().enumerate() {
        let stored = word(12 + 4 * k);
        if stored != d.size() {
            return Err(Error::ShapeMismatch(format!(
                "checkpoint has {stored} {} categories, expected {}",
                d.name(),
                d.size()
            )));
        }
    }
    let mut params = PolicyParams::zeros(feature_dim);
    let body = &bytes[HEADER_LEN..];
    if body.len() != 8 * params.num_params() {
        return Err(Error::Checkpoint(format!(
            "expected {} parameter bytes for F={feature_dim}, found {}",
            8 * params.num_params(),
            body.len()
        )));
    }
    for (dst, chunk) in params.iter_mut().zip(body.chunks_exact(8)) {
        *dst = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
    }
    Ok(params)
}

pub fn save(path: &Path, params: &PolicyParams) -> Result<()> {
    fs::write(path, encode(params))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<PolicyParams> {
    decode(&fs::read(path)?)
}
