//! IDX container parsing (the standard MNIST distribution format).
//!
//! Big-endian: a 4-byte magic (0x00000803 for u8 images with 3 dims,
//! 0x00000801 for u8 labels with 1 dim), one u32 per dimension, then raw
//! bytes. Pixels are scaled to [0, 1] by division by 255.

use std::fs;
use std::path::Path;

use rdprobe_core::{Error, Result, Tensor};

const MAGIC_IMAGES: u32 = 0x0000_0803;
const MAGIC_LABELS: u32 = 0x0000_0801;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdxKind {
    Images,
    Labels,
}

#[derive(Debug, Clone)]
pub enum IdxData {
    /// (n, rows*cols) pixels in [0, 1].
    Images(Tensor<f32>),
    Labels(Vec<usize>),
}

pub fn load_idx(path: &Path, kind: IdxKind) -> Result<IdxData> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    match kind {
        IdxKind::Images => Ok(IdxData::Images(parse_images(path, &bytes)?)),
        IdxKind::Labels => Ok(IdxData::Labels(parse_labels(path, &bytes)?)),
    }
}

pub fn load_idx_images(path: &Path) -> Result<Tensor<f32>> {
    match load_idx(path, IdxKind::Images)? {
        IdxData::Images(t) => Ok(t),
        IdxData::Labels(_) => unreachable!(),
    }
}

pub fn load_idx_labels(path: &Path) -> Result<Vec<usize>> {
    match load_idx(path, IdxKind::Labels)? {
        IdxData::Labels(l) => Ok(l),
        IdxData::Images(_) => unreachable!(),
    }
}

fn read_u32(path: &Path, bytes: &[u8], offset: usize) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::parse(path, format!("truncated header at byte {offset}")));
    }
    Ok(u32::from_be_bytes([bytes[offset], bytes[offset + 1], bytes[offset + 2], bytes[offset + 3]]))
}

fn parse_images(path: &Path, bytes: &[u8]) -> Result<Tensor<f32>> {
    let magic = read_u32(path, bytes, 0)?;
    if magic != MAGIC_IMAGES {
        return Err(Error::parse(path, format!("unrecognized IDX magic 0x{magic:08x} (expected images 0x{MAGIC_IMAGES:08x})")));
    }
    let n = read_u32(path, bytes, 4)? as usize;
    let rows = read_u32(path, bytes, 8)? as usize;
    let cols = read_u32(path, bytes, 12)? as usize;
    let d = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::parse(path, "image dimensions overflow".to_string()))?;
    if d == 0 {
        return Err(Error::parse(path, format!("degenerate image dims {rows}x{cols}")));
    }
    let expect = 16 + n * d;
    if bytes.len() != expect {
        return Err(Error::parse(
            path,
            format!("expected {expect} bytes for {n} images of {rows}x{cols}, found {}", bytes.len()),
        ));
    }
    if n == 0 {
        return Err(Error::parse(path, "image file declares zero examples".to_string()));
    }
    let data = bytes[16..].iter().map(|&b| b as f32 / 255.0).collect();
    Tensor::new(vec![n, d], data)
}

fn parse_labels(path: &Path, bytes: &[u8]) -> Result<Vec<usize>> {
    let magic = read_u32(path, bytes, 0)?;
    if magic != MAGIC_LABELS {
        return Err(Error::parse(path, format!("unrecognized IDX magic 0x{magic:08x} (expected labels 0x{MAGIC_LABELS:08x})")));
    }
    let n = read_u32(path, bytes, 4)? as usize;
    let expect = 8 + n;
    if bytes.len() != expect {
        return Err(Error::parse(path, format!("expected {expect} bytes for {n} labels, found {}", bytes.len())));
    }
    Ok(bytes[8..].iter().map(|&b| b as usize).collect())
}

/// Writers used by tests and data preparation round-trips.
pub fn write_idx_images(path: &Path, images: &Tensor<f32>, rows: usize, cols: usize) -> Result<()> {
    let n = images.rows();
    if rows * cols != images.cols() {
        return Err(Error::InvalidArg(format!("{rows}x{cols} does not match width {}", images.cols())));
    }
    let mut bytes = Vec::with_capacity(16 + n * rows * cols);
    bytes.extend_from_slice(&MAGIC_IMAGES.to_be_bytes());
    bytes.extend_from_slice(&(n as u32).to_be_bytes());
    bytes.extend_from_slice(&(rows as u32).to_be_bytes());
    bytes.extend_from_slice(&(cols as u32).to_be_bytes());
    bytes.extend(images.data().iter().map(|&v| (v * 255.0).round() as u8));
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_idx_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 + labels.len());
    bytes.extend_from_slice(&MAGIC_LABELS.to_be_bytes());
    bytes.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    for &l in labels {
        if l > u8::MAX as usize {
            return Err(Error::InvalidArg(format!("label {l} does not fit in a byte")));
        }
        bytes.push(l as u8);
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
