//! IDX file ingestion (the MNIST container format).
//!
//! Big-endian magic (`0x00000803` for image tensors, `0x00000801` for label
//! vectors), big-endian dimension sizes, then raw bytes. Gzip-compressed
//! files are detected by their `1f 8b` prefix. Pixel bytes scale to [0, 1].

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use thiserror::Error;

use super::Dataset;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum IdxError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{path}: bad magic: expected 0x{expected:08x}, found 0x{found:08x}")]
    WrongMagic {
        path: String,
        expected: u32,
        found: u32,
    },
    #[error("{path}: truncated: need {needed} bytes, have {have}")]
    Truncated {
        path: String,
        needed: usize,
        have: usize,
    },
    #[error("count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },
}

fn read_maybe_gzip(path: &Path) -> Result<Vec<u8>, IdxError> {
    let raw = fs::read(path)?;
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..]).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], offset: usize, path: &str) -> Result<u32, IdxError> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(IdxError::Truncated {
            path: path.to_string(),
            needed: end,
            have: bytes.len(),
        });
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

fn parse_images(bytes: &[u8], path: &str) -> Result<(Vec<f64>, usize, usize), IdxError> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != IMAGES_MAGIC {
        return Err(IdxError::WrongMagic {
            path: path.to_string(),
            expected: IMAGES_MAGIC,
            found: magic,
        });
    }
    let n = be_u32(bytes, 4, path)? as usize;
    let rows = be_u32(bytes, 8, path)? as usize;
    let cols = be_u32(bytes, 12, path)? as usize;
    let pixels = n * rows * cols;
    let needed = 16 + pixels;
    if bytes.len() < needed {
        return Err(IdxError::Truncated {
            path: path.to_string(),
            needed,
            have: bytes.len(),
        });
    }
    let features = bytes[16..needed]
        .iter()
        .map(|&b| b as f64 / 255.0)
        .collect();
    Ok((features, n, rows * cols))
}

fn parse_labels(bytes: &[u8], path: &str) -> Result<Vec<u8>, IdxError> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != LABELS_MAGIC {
        return Err(IdxError::WrongMagic {
            path: path.to_string(),
            expected: LABELS_MAGIC,
            found: magic,
        });
    }
    let n = be_u32(bytes, 4, path)? as usize;
    let needed = 8 + n;
    if bytes.len() < needed {
        return Err(IdxError::Truncated {
            path: path.to_string(),
            needed,
            have: bytes.len(),
        });
    }
    Ok(bytes[8..needed].to_vec())
}

/// Reads an image/label IDX pair into a dataset of `[0, 1]` features.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset, IdxError> {
    let (features, n, p) = parse_images(
        &read_maybe_gzip(images_path)?,
        &images_path.display().to_string(),
    )?;
    let labels = parse_labels(
        &read_maybe_gzip(labels_path)?,
        &labels_path.display().to_string(),
    )?;
    if labels.len() != n {
        return Err(IdxError::CountMismatch {
            images: n,
            labels: labels.len(),
        });
    }
    Ok(Dataset::new(features, p, labels).expect("sizes just validated"))
}

fn write_maybe_gzip(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if path.extension().is_some_and(|e| e == "gz") {
        let file = fs::File::create(path)?;
        let mut enc = flate2::write::GzEncoder::new(file, flate2::Compression::default());
        enc.write_all(bytes)?;
        enc.finish()?;
        Ok(())
    } else {
        fs::write(path, bytes)
    }
}

/// Writes raw `n x rows x cols` pixel bytes as an IDX image file
/// (gzip-compressed when the path ends in `.gz`).
pub fn write_idx_images(
    path: &Path,
    n: usize,
    rows: usize,
    cols: usize,
    pixels: &[u8],
) -> std::io::Result<()> {
    assert_eq!(pixels.len(), n * rows * cols, "pixel buffer size mismatch");
    let mut bytes = Vec::with_capacity(16 + pixels.len());
    bytes.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    bytes.extend_from_slice(&(n as u32).to_be_bytes());
    bytes.extend_from_slice(&(rows as u32).to_be_bytes());
    bytes.extend_from_slice(&(cols as u32).to_be_bytes());
    bytes.extend_from_slice(pixels);
    write_maybe_gzip(path, &bytes)
}

/// Writes labels as an IDX label file (gzip when the path ends in `.gz`).
pub fn write_idx_labels(path: &Path, labels: &[u8]) -> std::io::Result<()> {
    let mut bytes = Vec::with_capacity(8 + labels.len());
    bytes.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    bytes.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    bytes.extend_from_slice(labels);
    write_maybe_gzip(path, &bytes)
}
