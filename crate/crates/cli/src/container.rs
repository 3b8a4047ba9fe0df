//! Binary container: a JSON header plus a block of little-endian `f64`.
//!
//! ```text
//! magic        8 bytes
//! version      u32 LE
//! header_len   u64 LE
//! header       header_len bytes of UTF-8 JSON
//! payload_len  u64 LE, number of f64 values
//! sha256       32 bytes over header || payload bytes
//! payload      payload_len * 8 bytes
//! ```

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"ISTKCKPT";

#[derive(Debug, thiserror::Error)]
pub enum ContainerError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a container of the expected kind (magic {found:?})")]
    Magic { found: Vec<u8> },
    #[error("format version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("file is truncated: need {needed} bytes, have {got}")]
    Truncated { needed: u64, got: u64 },
    #[error("{0} trailing bytes after the payload")]
    Trailing(u64),
    #[error("content hash mismatch: stored {stored}, computed {computed}")]
    Hash { stored: String, computed: String },
    #[error("malformed header: {0}")]
    Header(#[from] serde_json::Error),
}

fn digest(header: &[u8], payload: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(header);
    h.update(payload);
    h.finalize().into()
}

pub fn f64_bytes(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn bytes_f64(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect()
}

pub fn encode<H: Serialize>(
    magic: [u8; 8],
    version: u32,
    header: &H,
    payload: &[f64],
) -> Result<Vec<u8>, ContainerError> {
    let head = serde_json::to_vec(header)?;
    let body = f64_bytes(payload);
    let mut out = Vec::with_capacity(60 + head.len() + body.len());
    out.extend_from_slice(&magic);
    out.extend_from_slice(&version.to_le_bytes());
    out.extend_from_slice(&(head.len() as u64).to_le_bytes());
    out.extend_from_slice(&head);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&digest(&head, &body));
    out.extend_from_slice(&body);
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: u64) -> Result<&'a [u8], ContainerError> {
        let have = (self.buf.len() - self.pos) as u64;
        if n > have {
            return Err(ContainerError::Truncated {
                needed: (self.pos as u64).saturating_add(n),
                got: self.buf.len() as u64,
            });
        }
        let s = &self.buf[self.pos..self.pos + n as usize];
        self.pos += n as usize;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64, ContainerError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode<H: DeserializeOwned>(
    magic: [u8; 8],
    version: u32,
    bytes: &[u8],
) -> Result<(H, Vec<f64>), ContainerError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let m = r.take(8)?;
    if m != magic {
        return Err(ContainerError::Magic { found: m.to_vec() });
    }
    let found = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
    if found != version {
        return Err(ContainerError::Version {
            found,
            expected: version,
        });
    }
    let head_len = r.u64()?;
    let head = r.take(head_len)?;
    let n = r.u64()?;
    let stored = r.take(32)?;
    let body = r.take(n.saturating_mul(8))?;
    if r.pos < bytes.len() {
        return Err(ContainerError::Trailing((bytes.len() - r.pos) as u64));
    }
    let computed = digest(head, body);
    if stored != computed {
        return Err(ContainerError::Hash {
            stored: hex::encode(stored),
            computed: hex::encode(computed),
        });
    }
    Ok((serde_json::from_slice(head)?, bytes_f64(body)))
}

pub fn write<H: Serialize>(
    path: &Path,
    magic: [u8; 8],
    version: u32,
    header: &H,
    payload: &[f64],
) -> Result<(), ContainerError> {
    fs::write(path, encode(magic, version, header, payload)?)?;
    Ok(())
}

pub fn read<H: DeserializeOwned>(path: &Path, magic: [u8; 8], version: u32) -> Result<(H, Vec<f64>), ContainerError> {
    decode(magic, version, &fs::read(path)?)
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::{json, Value};

    fn sample() -> Vec<u8> {
        encode(
            CHECKPOINT_MAGIC,
            3,
            &json!({"a": 1}),
            &[1.5, -0.0, f64::MIN_POSITIVE, 1e300],
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (h, p): (Value, Vec<f64>) = decode(CHECKPOINT_MAGIC, 3, &sample()).unwrap();
        assert_eq!(h, json!({"a": 1}));
        let bits: Vec<u64> = p.iter().map(|v| v.to_bits()).collect();
        let want: Vec<u64> = [1.5, -0.0, f64::MIN_POSITIVE, 1e300]
            .iter()
            .map(|v: &f64| v.to_bits())
            .collect();
        assert_eq!(bits, want);
    }

    #[test]
    fn each_failure_is_distinct() {
        let good = sample();
        let r = |b: &[u8]| decode::<Value>(CHECKPOINT_MAGIC, 3, b).unwrap_err();
        assert!(matches!(
            decode::<Value>(CHECKPOINT_MAGIC, 4, &good).unwrap_err(),
            ContainerError::Version { found: 3, expected: 4 }
        ));
        assert!(matches!(r(&good[..good.len() - 1]), ContainerError::Truncated { .. }));
        assert!(matches!(r(&good[..5]), ContainerError::Truncated { .. }));
        let mut flipped = good.clone();
        let last = flipped.len() - 3;
        flipped[last] ^= 0x10;
        assert!(matches!(r(&flipped), ContainerError::Hash { .. }));
        let mut bad_head = good.clone();
        bad_head[21] ^= 0x01;
        assert!(matches!(r(&bad_head), ContainerError::Hash { .. }));
        let mut magic = good.clone();
        magic[0] = b'X';
        assert!(matches!(r(&magic), ContainerError::Magic { .. }));
        let mut long = good;
        long.push(0);
        assert!(matches!(r(&long), ContainerError::Trailing(1)));
    }
}
