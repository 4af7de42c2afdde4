//! IDX image/label container (big-endian header, unsigned-byte payload).

use alloc::string::ToString;
use alloc::vec::Vec;

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;
const IDX_CLASSES: usize = 10;

fn fmt_err(offset: usize, reason: &str) -> Error {
    Error::Format {
        offset,
        reason: reason.to_string(),
    }
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    let b = bytes
        .get(offset..offset + 4)
        .ok_or_else(|| fmt_err(offset, "truncated header"))?;
    Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    /// Pixels scaled to [0, 1], one image per row.
    pub pixels: Matrix,
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let magic = read_u32(bytes, 0)?;
    if magic != IMAGES_MAGIC {
        return Err(fmt_err(0, "bad image magic number"));
    }
    let count = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let per = rows * cols;
    let need = 16 + count * per;
    if bytes.len() < need {
        return Err(fmt_err(
            bytes.len(),
            "image payload shorter than header count",
        ));
    }
    if bytes.len() > need {
        return Err(fmt_err(need, "trailing bytes after image payload"));
    }
    let data: Vec<f64> = bytes[16..need].iter().map(|&b| b as f64 / 255.0).collect();
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: Matrix::from_vec(count, per, data)?,
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = read_u32(bytes, 0)?;
    if magic != LABELS_MAGIC {
        return Err(fmt_err(0, "bad label magic number"));
    }
    let count = read_u32(bytes, 4)? as usize;
    let need = 8 + count;
    if bytes.len() < need {
        return Err(fmt_err(
            bytes.len(),
            "label payload shorter than header count",
        ));
    }
    if bytes.len() > need {
        return Err(fmt_err(need, "trailing bytes after label payload"));
    }
    Ok(bytes[8..need].to_vec())
}

/// Pair an image file with a label file; both counts must agree and labels
/// must be < 10.
pub fn dataset_from_idx(images: &[u8], labels: &[u8], split: Split) -> Result<Dataset> {
    let img = parse_idx_images(images)?;
    let lab = parse_idx_labels(labels)?;
    if img.count != lab.len() {
        return Err(fmt_err(4, "image and label counts differ"));
    }
    if let Some(pos) = lab.iter().position(|&y| y as usize >= IDX_CLASSES) {
        return Err(fmt_err(8 + pos, "label outside 0..10"));
    }
    Dataset::new(
        img.pixels,
        lab.into_iter().map(usize::from).collect(),
        IDX_CLASSES,
        split,
    )
}
