//! IDX (MNIST-style) reader and writer. Headers are big-endian; only
//! unsigned-byte payloads are supported.

use std::fs;
use std::path::Path;

use super::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::nn::Tensor2;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::format(offset as u64, "truncated header"))
}

/// Parses an image file; returns `(count, item_dim, pixels)`.
pub fn parse_images(bytes: &[u8]) -> Result<(usize, usize, &[u8])> {
    let magic = read_u32(bytes, 0)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::format(0, format!("image magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}")));
    }
    let count = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let dim = rows * cols;
    let body = &bytes[16..];
    let want = count * dim;
    if body.len() < want {
        return Err(Error::format(
            (16 + body.len()) as u64,
            format!("expected {want} pixel bytes, found {}", body.len()),
        ));
    }
    if body.len() > want {
        return Err(Error::format((16 + want) as u64, "trailing bytes after pixel data"));
    }
    Ok((count, dim, body))
}

pub fn parse_labels(bytes: &[u8]) -> Result<&[u8]> {
    let magic = read_u32(bytes, 0)?;
    if magic != LABELS_MAGIC {
        return Err(Error::format(0, format!("label magic {magic:#010x}, expected {LABELS_MAGIC:#010x}")));
    }
    let count = read_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() != count {
        return Err(Error::format(
            (8 + body.len().min(count)) as u64,
            format!("expected {count} labels, found {}", body.len()),
        ));
    }
    Ok(body)
}

/// Image dimension from the header alone.
pub fn idx_item_dim(images_path: &Path) -> Result<usize> {
    let bytes = fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    if bytes.len() < 16 {
        return Err(Error::format(bytes.len() as u64, "truncated header"));
    }
    Ok(read_u32(&bytes, 8)? as usize * read_u32(&bytes, 12)? as usize)
}

/// Decodes an image/label pair; pixels are scaled to `[0, 1]`. `classes`
/// defaults to `max label + 1`.
pub fn decode_idx(images: &[u8], labels: &[u8], classes: Option<usize>) -> Result<LabeledDataset> {
    let (count, dim, pixels) = parse_images(images)?;
    let raw_labels = parse_labels(labels)?;
    if raw_labels.len() != count {
        return Err(Error::format(4, format!("{count} images but {} labels", raw_labels.len())));
    }
    if count == 0 {
        return Err(Error::format(4, "no items"));
    }
    let labels: Vec<usize> = raw_labels.iter().map(|&l| l as usize).collect();
    let max = *labels.iter().max().expect("nonempty");
    let classes = classes.unwrap_or(max + 1);
    if max >= classes {
        return Err(Error::format(8, format!("label {max} exceeds class count {classes}")));
    }
    let data = pixels.iter().map(|&p| p as f64 / 255.0).collect();
    LabeledDataset::new(Tensor2::from_vec(count, dim, data)?, labels, classes)
}

pub fn load_idx(images_path: &Path, labels_path: &Path, classes: Option<usize>) -> Result<LabeledDataset> {
    let images = fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let labels = fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    decode_idx(&images, &labels, classes)
}

/// Encodes features (quantized to bytes via `round(255·x)`) and labels.
/// `rows × cols` must equal the feature dimension.
pub fn encode_idx(data: &LabeledDataset, rows: usize, cols: usize) -> Result<(Vec<u8>, Vec<u8>)> {
    if rows * cols != data.dim() {
        return Err(Error::Dimension(format!("{rows}x{cols} images for dim {}", data.dim())));
    }
    if data.classes() > 256 {
        return Err(Error::Dimension("IDX labels are single bytes".into()));
    }
    let n = data.len() as u32;
    let mut images = Vec::with_capacity(16 + data.len() * data.dim());
    images.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    images.extend_from_slice(&n.to_be_bytes());
    images.extend_from_slice(&(rows as u32).to_be_bytes());
    images.extend_from_slice(&(cols as u32).to_be_bytes());
    images.extend(data.features().data().iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    let mut labels = Vec::with_capacity(8 + data.len());
    labels.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    labels.extend_from_slice(&n.to_be_bytes());
    labels.extend(data.labels().iter().map(|&l| l as u8));
    Ok((images, labels))
}

pub fn write_idx(
    data: &LabeledDataset,
    rows: usize,
    cols: usize,
    images_path: &Path,
    labels_path: &Path,
) -> Result<()> {
    let (images, labels) = encode_idx(data, rows, cols)?;
    fs::write(images_path, images).map_err(|e| Error::io(images_path, e))?;
    fs::write(labels_path, labels).map_err(|e| Error::io(labels_path, e))
}
