//! Flat binary checkpoints: `FEDETF01`, little-endian `u64` count, then
//! little-endian `f64` values in canonical parameter order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"FEDETF01";

pub fn encode(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err(Error::format(0, "missing FEDETF01 magic"));
    }
    if bytes.len() < 16 {
        return Err(Error::format(8, "truncated parameter count"));
    }
    let count = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let body = &bytes[16..];
    let expected = count.checked_mul(8).ok_or_else(|| Error::format(8, "parameter count overflows"))?;
    if body.len() as u64 != expected {
        return Err(Error::format(
            16 + body.len().min(expected as usize) as u64,
            format!("expected {count} values ({expected} bytes), found {} bytes", body.len()),
        ));
    }
    Ok(body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}

pub fn write_checkpoint(path: &Path, values: &[f64]) -> Result<()> {
    fs::write(path, encode(values)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
