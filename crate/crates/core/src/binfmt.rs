//! Flat little-endian `f64` files with a 16-byte header.
//!
//! ```text
//! bytes 0..4    magic "DPFW"
//! bytes 4..6    version (u16 LE) = 1
//! bytes 6..8    kind (u16 LE): 0 = model parameters, 1 = projection
//! bytes 8..16   kind 0: parameter count (u64 LE)
//!               kind 1: d (u32 LE), k (u32 LE)
//! bytes 16..    payload, f64 LE
//! ```
//!
//! A projection payload is the `d x k` basis in row-major order, then the
//! `k` eigenvalues, then epsilon (`+inf` for a non-private projection).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"DPFW";
pub const VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Header {
    Params { count: u64 },
    Projection { d: u32, k: u32 },
}

impl Header {
    fn payload_len(self) -> usize {
        match self {
            Header::Params { count } => count as usize,
            Header::Projection { d, k } => d as usize * k as usize + k as usize + 1,
        }
    }

    fn encode(self) -> [u8; 16] {
        let mut out = [0u8; 16];
        out[..4].copy_from_slice(&MAGIC);
        out[4..6].copy_from_slice(&VERSION.to_le_bytes());
        match self {
            Header::Params { count } => {
                out[6..8].copy_from_slice(&0u16.to_le_bytes());
                out[8..16].copy_from_slice(&count.to_le_bytes());
            }
            Header::Projection { d, k } => {
                out[6..8].copy_from_slice(&1u16.to_le_bytes());
                out[8..12].copy_from_slice(&d.to_le_bytes());
                out[12..16].copy_from_slice(&k.to_le_bytes());
            }
        }
        out
    }
}

pub fn encode(header: Header, payload: &[f64]) -> Result<Vec<u8>> {
    if payload.len() != header.payload_len() {
        return Err(Error::arg(format!(
            "payload has {} values, header requires {}",
            payload.len(),
            header.payload_len()
        )));
    }
    let mut out = Vec::with_capacity(16 + 8 * payload.len());
    out.extend_from_slice(&header.encode());
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<(Header, Vec<f64>)> {
    if bytes.len() < 16 || bytes[..4] != MAGIC {
        return Err(Error::arg("not a parameter file (bad magic)"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::arg(format!("unsupported format version {version}")));
    }
    let kind = u16::from_le_bytes([bytes[6], bytes[7]]);
    let header = match kind {
        0 => Header::Params {
            count: u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")),
        },
        1 => Header::Projection {
            d: u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")),
            k: u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")),
        },
        other => return Err(Error::arg(format!("unknown payload kind {other}"))),
    };
    let body = &bytes[16..];
    if body.len() != 8 * header.payload_len() {
        return Err(Error::arg(format!(
            "payload is {} bytes, header requires {}",
            body.len(),
            8 * header.payload_len()
        )));
    }
    let payload = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((header, payload))
}

pub fn write_file(path: &Path, header: Header, payload: &[f64]) -> Result<()> {
    let bytes = encode(header, payload)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: &Path) -> Result<(Header, Vec<f64>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let bytes = encode(Header::Params { count: 2 }, &[1.0, -2.5]).unwrap();
        assert_eq!(bytes.len(), 32);
        assert_eq!(&bytes[..4], b"DPFW");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[8..16], &2u64.to_le_bytes());
        assert_eq!(&bytes[16..24], &1.0f64.to_le_bytes());
    }

    #[test]
    fn rejects_truncated() {
        let bytes = encode(Header::Projection { d: 2, k: 1 }, &[1.0, 0.0, 3.0, 1.0]).unwrap();
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode(b"XXXX").is_err());
    }
}
