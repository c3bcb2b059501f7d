//! IDX files (the MNIST distribution format): big-endian headers, `u8`
//! payloads. Images are scaled to `[0, 1]`.

use std::fs;
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format {
            offset: offset as u64,
            msg: "truncated header".into(),
        })
}

fn expect_magic(bytes: &[u8], magic: u32) -> Result<()> {
    let found = read_u32(bytes, 0)?;
    if found != magic {
        return Err(Error::Format {
            offset: 0,
            msg: format!("bad magic number {found:#010x}, expected {magic:#010x}"),
        });
    }
    Ok(())
}

/// Parses an image file. Returns `(count, rows * cols, pixels)`.
pub fn read_idx_images(bytes: &[u8]) -> Result<(usize, usize, Vec<f32>)> {
    expect_magic(bytes, IMAGES_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let dims = rows * cols;
    if dims == 0 {
        return Err(Error::Format {
            offset: 8,
            msg: "zero image dimension".into(),
        });
    }
    let payload = &bytes[16..];
    if payload.len() != count * dims {
        return Err(Error::Format {
            offset: 16 + payload.len().min(count * dims) as u64,
            msg: format!(
                "expected {} pixel bytes for {count} images of {rows}x{cols}, found {}",
                count * dims,
                payload.len()
            ),
        });
    }
    let pixels = payload.iter().map(|&b| b as f32 / 255.0).collect();
    Ok((count, dims, pixels))
}

pub fn read_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    expect_magic(bytes, LABELS_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    let payload = &bytes[8..];
    if payload.len() != count {
        return Err(Error::Format {
            offset: 8 + payload.len().min(count) as u64,
            msg: format!("expected {count} label bytes, found {}", payload.len()),
        });
    }
    Ok(payload.iter().map(|&b| b as usize).collect())
}

/// Loads an image/label IDX pair. The class count is one more than the
/// largest label.
pub fn load_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Dataset> {
    let (count, dims, pixels) = read_idx_images(&fs::read(images)?)?;
    let labels = read_idx_labels(&fs::read(labels)?)?;
    if labels.len() != count {
        return Err(Error::Format {
            offset: 4,
            msg: format!("{count} images but {} labels", labels.len()),
        });
    }
    let num_classes = labels.iter().max().map_or(1, |m| m + 1);
    Dataset::new(pixels, dims, labels, num_classes)
}
