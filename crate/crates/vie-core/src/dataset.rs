//! Binary dataset file format.
//!
//! Layout: magic `VIEDATA\0`, version byte, class count (u32 LE), video
//! count (u32 LE), then per video a header — id, label, frame count,
//! height, width, channels (u32 LE each), frames per second (f64 LE),
//! split tag byte — followed by the pixel data as f32 LE. Pixels are
//! stored and held in memory as f32, so round-trips are lossless.

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::bytes::{ByteError, ByteReader};
use crate::sampling::Video;
use crate::synth::{LabeledDataset, Split};

pub const DATASET_MAGIC: &[u8; 8] = b"VIEDATA\0";
pub const DATASET_VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("dataset io: {0}")]
    Io(#[from] std::io::Error),
    #[error("dataset: bad magic at offset {offset}")]
    BadMagic { offset: usize },
    #[error("dataset: unsupported version {version} at offset {offset}")]
    BadVersion { version: u8, offset: usize },
    #[error("dataset: truncated at offset {offset} (needed {needed} bytes, {available} left)")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("dataset: inconsistent contents at offset {offset}: {detail}")]
    Inconsistent { offset: usize, detail: String },
}

impl From<ByteError> for DataError {
    fn from(e: ByteError) -> Self {
        DataError::Truncated {
            offset: e.offset,
            needed: e.needed,
            available: e.available,
        }
    }
}

pub fn dataset_to_bytes(dataset: &LabeledDataset) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(DATASET_MAGIC);
    out.push(DATASET_VERSION);
    out.extend_from_slice(&(dataset.class_count as u32).to_le_bytes());
    out.extend_from_slice(&(dataset.len() as u32).to_le_bytes());
    for (i, video) in dataset.videos.iter().enumerate() {
        out.extend_from_slice(&(video.index as u32).to_le_bytes());
        out.extend_from_slice(&(dataset.labels[i] as u32).to_le_bytes());
        out.extend_from_slice(&(video.frame_count() as u32).to_le_bytes());
        out.extend_from_slice(&(video.height() as u32).to_le_bytes());
        out.extend_from_slice(&(video.width() as u32).to_le_bytes());
        out.extend_from_slice(&(video.channels() as u32).to_le_bytes());
        out.extend_from_slice(&video.frames_per_second.to_le_bytes());
        out.push(match dataset.splits[i] {
            Split::Train => 0,
            Split::Val => 1,
        });
        for &p in video.pixels() {
            out.extend_from_slice(&p.to_le_bytes());
        }
    }
    out
}

pub fn dataset_from_bytes(buf: &[u8]) -> Result<LabeledDataset, DataError> {
    let mut r = ByteReader::new(buf);
    if r.take(8)? != DATASET_MAGIC {
        return Err(DataError::BadMagic { offset: 0 });
    }
    let version_offset = r.offset();
    let version = r.u8()?;
    if version != DATASET_VERSION {
        return Err(DataError::BadVersion {
            version,
            offset: version_offset,
        });
    }
    let class_count = r.u32()? as usize;
    let count = r.u32()? as usize;
    let mut videos = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    let mut splits = Vec::with_capacity(count);
    for _ in 0..count {
        let header_offset = r.offset();
        let id = r.u32()? as usize;
        let label = r.u32()? as usize;
        let frames = r.u32()? as usize;
        let height = r.u32()? as usize;
        let width = r.u32()? as usize;
        let channels = r.u32()? as usize;
        let fps = r.f64()?;
        let split = match r.u8()? {
            0 => Split::Train,
            1 => Split::Val,
            other => {
                return Err(DataError::Inconsistent {
                    offset: r.offset() - 1,
                    detail: format!("unknown split tag {other}"),
                })
            }
        };
        if label >= class_count {
            return Err(DataError::Inconsistent {
                offset: header_offset,
                detail: format!("label {label} >= class count {class_count}"),
            });
        }
        let numel = frames * height * width * channels;
        let mut pixels = Vec::with_capacity(numel);
        for _ in 0..numel {
            pixels.push(r.f32()?);
        }
        let video = Video::new(id, frames, height, width, channels, fps, pixels).map_err(|e| {
            DataError::Inconsistent {
                offset: header_offset,
                detail: e.to_string(),
            }
        })?;
        videos.push(video);
        labels.push(label);
        splits.push(split);
    }
    Ok(LabeledDataset {
        videos,
        labels,
        splits,
        class_count,
    })
}

pub fn save_dataset(dataset: &LabeledDataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let mut file = fs::File::create(path)?;
    file.write_all(&dataset_to_bytes(dataset))?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<LabeledDataset, DataError> {
    let buf = fs::read(path)?;
    dataset_from_bytes(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, LabelMode, SynthSpec};

    fn sample_dataset() -> LabeledDataset {
        generate(&SynthSpec {
            class_count: 3,
            videos_per_class: 4,
            val_per_class: 2,
            frame_count: 5,
            height: 6,
            width: 7,
            channels: 1,
            label_mode: LabelMode::Mixed,
            noise_level: 0.05,
            seed: 21,
        })
        .unwrap()
    }

    #[test]
    fn roundtrip_is_lossless() {
        let ds = sample_dataset();
        let bytes = dataset_to_bytes(&ds);
        let back = dataset_from_bytes(&bytes).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn file_size_matches_arithmetic() {
        let ds = sample_dataset();
        let bytes = dataset_to_bytes(&ds);
        let header = 8 + 1 + 4 + 4;
        let per_video: usize = ds
            .videos
            .iter()
            .map(|v| {
                6 * 4 + 8 + 1 + v.frame_count() * v.height() * v.width() * v.channels() * 4
            })
            .sum();
        assert_eq!(bytes.len(), header + per_video);
    }

    #[test]
    fn corrupt_magic_and_version_report_offsets() {
        let ds = sample_dataset();
        let mut bytes = dataset_to_bytes(&ds);
        bytes[3] = b'?';
        assert!(matches!(
            dataset_from_bytes(&bytes),
            Err(DataError::BadMagic { offset: 0 })
        ));
        let mut bytes = dataset_to_bytes(&ds);
        bytes[8] = 7;
        assert!(matches!(
            dataset_from_bytes(&bytes),
            Err(DataError::BadVersion {
                version: 7,
                offset: 8
            })
        ));
    }

    #[test]
    fn truncation_never_yields_a_partial_dataset() {
        let ds = sample_dataset();
        let bytes = dataset_to_bytes(&ds);
        for cut in [bytes.len() - 1, bytes.len() - 100, 40, 12, 9] {
            match dataset_from_bytes(&bytes[..cut]) {
                Err(DataError::Truncated { .. }) => {}
                other => panic!("cut {cut}: expected truncation, got {other:?}"),
            }
        }
    }
}
