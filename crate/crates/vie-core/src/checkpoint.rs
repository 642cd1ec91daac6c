//! Flat binary checkpoint of named tensors.
//!
//! Layout: magic `VIECHKPT`, version byte, parameter count (u32 LE), then
//! per parameter: name length (u32 LE), name bytes, rank (u32 LE), shape
//! entries (u32 LE each), values (f64 LE each). Round-trips bit-exactly.

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::bytes::{ByteError, ByteReader};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"VIECHKPT";
pub const CHECKPOINT_VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint: bad magic at offset {offset}")]
    BadMagic { offset: usize },
    #[error("checkpoint: unsupported version {version} at offset {offset}")]
    BadVersion { version: u8, offset: usize },
    #[error("checkpoint: truncated at offset {offset} (needed {needed} bytes, {available} left)")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("checkpoint: invalid utf-8 name at offset {offset}")]
    BadName { offset: usize },
    #[error("checkpoint: {name}: non-finite value at offset {offset}")]
    NonFinite { name: String, offset: usize },
}

impl From<ByteError> for CheckpointError {
    fn from(e: ByteError) -> Self {
        CheckpointError::Truncated {
            offset: e.offset,
            needed: e.needed,
            available: e.available,
        }
    }
}

/// Named tensors in serialization order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub entries: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn new(entries: Vec<(String, Tensor)>) -> Self {
        Self { entries }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.push(CHECKPOINT_VERSION);
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, tensor) in &self.entries {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(tensor.rank() as u32).to_le_bytes());
            for &dim in tensor.shape() {
                out.extend_from_slice(&(dim as u32).to_le_bytes());
            }
            for &v in tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = ByteReader::new(buf);
        let magic_offset = r.offset();
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(CheckpointError::BadMagic {
                offset: magic_offset,
            });
        }
        let version_offset = r.offset();
        let version = r.u8()?;
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::BadVersion {
                version,
                offset: version_offset,
            });
        }
        let count = r.u32()? as usize;
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name_offset = r.offset();
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| CheckpointError::BadName {
                    offset: name_offset,
                })?
                .to_string();
            let rank = r.u32()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32()? as usize);
            }
            let numel: usize = shape.iter().product();
            let mut data = Vec::with_capacity(numel);
            for _ in 0..numel {
                data.push(r.f64()?);
            }
            let tensor = Tensor::new(shape, data).expect("numel matches by construction");
            entries.push((name, tensor));
        }
        Ok(Self { entries })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        let mut file = fs::File::create(path)?;
        file.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        let buf = fs::read(path)?;
        Self::from_bytes(&buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        Checkpoint::new(vec![
            (
                "enc.fc1.w".to_string(),
                Tensor::matrix(2, 3, vec![0.1, -0.25, 3.5, 4.125, -5.0, 1e-300]).unwrap(),
            ),
            ("enc.fc1.b".to_string(), Tensor::vector(vec![0.0, -0.0, 7.0])),
            ("step".to_string(), Tensor::scalar(42.0)),
        ])
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let ck = sample();
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(ck.entries.len(), back.entries.len());
        for ((n1, t1), (n2, t2)) in ck.entries.iter().zip(&back.entries) {
            assert_eq!(n1, n2);
            assert_eq!(t1.shape(), t2.shape());
            for (a, b) in t1.data().iter().zip(t2.data()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn bad_magic_reports_offset() {
        let mut bytes = sample().to_bytes();
        bytes[0] = b'X';
        match Checkpoint::from_bytes(&bytes) {
            Err(CheckpointError::BadMagic { offset }) => assert_eq!(offset, 0),
            other => panic!("expected BadMagic, got {other:?}"),
        }
    }

    #[test]
    fn bad_version_reports_offset() {
        let mut bytes = sample().to_bytes();
        bytes[8] = 99;
        match Checkpoint::from_bytes(&bytes) {
            Err(CheckpointError::BadVersion { version, offset }) => {
                assert_eq!(version, 99);
                assert_eq!(offset, 8);
            }
            other => panic!("expected BadVersion, got {other:?}"),
        }
    }

    #[test]
    fn truncation_is_a_clean_error() {
        let bytes = sample().to_bytes();
        for cut in [bytes.len() - 1, bytes.len() / 2, 10, 5] {
            assert!(
                matches!(
                    Checkpoint::from_bytes(&bytes[..cut]),
                    Err(CheckpointError::Truncated { .. })
                ),
                "cut at {cut} should be a truncation error"
            );
        }
    }
}
