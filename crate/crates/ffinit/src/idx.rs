//! IDX image files (the MNIST distribution format).
//!
//! Layout: big-endian `u32` magic `0x00000803`, then `u32` counts for items,
//! rows and columns, then `items * rows * cols` unsigned pixel bytes.

use std::fs;
use std::path::Path;

use ffinit_core::{DataSource, Dataset};

use crate::error::{Error, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Standard file name of the MNIST training images.
pub const MNIST_TRAIN_IMAGES: &str = "train-images-idx3-ubyte";

/// Loads an IDX image file, scaling pixels by `1/255` into `[0, 1]`.
pub fn load_idx_images(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_idx_images(&bytes, path)
}

pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<Dataset> {
    let format = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    if bytes.len() < 16 {
        return Err(format(format!(
            "truncated IDX header: {} bytes, need 16",
            bytes.len()
        )));
    }
    let word = |i: usize| u32::from_be_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
    let magic = word(0);
    if magic != IMAGE_MAGIC {
        return Err(format(format!(
            "bad IDX magic {magic:#010x}, expected {IMAGE_MAGIC:#010x} (image file)"
        )));
    }
    let (n, rows, cols) = (word(1) as usize, word(2) as usize, word(3) as usize);
    let dim = rows * cols;
    let expected = n
        .checked_mul(dim)
        .and_then(|p| p.checked_add(16))
        .ok_or_else(|| format("IDX dimensions overflow".into()))?;
    if bytes.len() < expected {
        return Err(format(format!(
            "truncated IDX payload: {} bytes, header promises {expected}",
            bytes.len()
        )));
    }
    let items = bytes[16..expected]
        .chunks_exact(dim.max(1))
        .take(n)
        .map(|px| px.iter().map(|&b| f64::from(b) / 255.0).collect())
        .collect();
    let name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "idx".into());
    Ok(Dataset::new(name, DataSource::IdxFile, dim, items)?)
}

/// Encodes images as IDX bytes, rounding each value to the nearest byte.
pub fn encode_idx_images(items: &[Vec<f64>], rows: usize, cols: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + items.len() * rows * cols);
    for w in [IMAGE_MAGIC, items.len() as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&w.to_be_bytes());
    }
    for item in items {
        out.extend(item.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    }
    out
}
