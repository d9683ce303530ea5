//! MNIST IDX ingestion: big-endian IDX parsing (image magic 2051, label
//! magic 2049), bilinear 28 -> 56 upscaling, binarization at 0.5, and
//! foreground labels of digit + 1 (11 classes with background).

use std::path::Path;

use super::{bilinear_resize, SegSample};
use crate::error::{Result, WaveError};
use crate::field::{Field, Real};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Raw images as parsed from an IDX file.
#[derive(Debug, Clone)]
pub struct MnistRaw {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    /// count * rows * cols bytes, row-major per image.
    pub pixels: Vec<u8>,
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| WaveError::Format("IDX: truncated header".into()))
}

/// Parse an IDX image file (magic 0x00000803, dims count x rows x cols).
pub fn read_idx_images(path: &Path) -> Result<MnistRaw> {
    let bytes = std::fs::read(path)?;
    let magic = be_u32(&bytes, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(WaveError::Format(format!(
            "IDX images: bad magic 0x{magic:08x} (expected 0x{IDX_IMAGES_MAGIC:08x})"
        )));
    }
    let count = be_u32(&bytes, 4)? as usize;
    let rows = be_u32(&bytes, 8)? as usize;
    let cols = be_u32(&bytes, 12)? as usize;
    let need = 16 + count * rows * cols;
    if bytes.len() < need {
        return Err(WaveError::Format(format!(
            "IDX images: payload truncated ({} < {} bytes)",
            bytes.len(),
            need
        )));
    }
    Ok(MnistRaw {
        count,
        rows,
        cols,
        pixels: bytes[16..need].to_vec(),
    })
}

/// Parse an IDX label file (magic 0x00000801).
pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = std::fs::read(path)?;
    let magic = be_u32(&bytes, 0)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(WaveError::Format(format!(
            "IDX labels: bad magic 0x{magic:08x} (expected 0x{IDX_LABELS_MAGIC:08x})"
        )));
    }
    let count = be_u32(&bytes, 4)? as usize;
    let need = 8 + count;
    if bytes.len() < need {
        return Err(WaveError::Format(format!(
            "IDX labels: payload truncated ({} < {} bytes)",
            bytes.len(),
            need
        )));
    }
    Ok(bytes[8..need].to_vec())
}

/// Digits at native resolution: (28x28 bytes, label) pairs. Source for the
/// multi-MNIST compositor.
pub fn load_mnist_native(images: &Path, labels: &Path) -> Result<Vec<(Vec<u8>, u8)>> {
    let raw = read_idx_images(images)?;
    let labels = read_idx_labels(labels)?;
    if raw.count != labels.len() {
        return Err(WaveError::Format(format!(
            "IDX: {} images but {} labels",
            raw.count,
            labels.len()
        )));
    }
    let per = raw.rows * raw.cols;
    Ok((0..raw.count)
        .map(|i| (raw.pixels[i * per..(i + 1) * per].to_vec(), labels[i]))
        .collect())
}

/// Segmentation samples: bilinear upscale 28 -> 56, binarize at 0.5, mask =
/// digit + 1 on foreground.
pub fn load_mnist_idx(images: &Path, labels: &Path) -> Result<Vec<SegSample>> {
    let native = load_mnist_native(images, labels)?;
    Ok(native
        .into_iter()
        .map(|(img, label)| upscaled_sample(&img, 28, 28, 56, label))
        .collect())
}

pub(crate) fn upscaled_sample(
    img: &[u8],
    sh: usize,
    sw: usize,
    target: usize,
    label: u8,
) -> SegSample {
    let scaled = bilinear_resize(img, sh, sw, target, target);
    let mut image = Field::zeros(1, target, target);
    let mut mask = vec![0u8; target * target];
    for (p, &v) in scaled.iter().enumerate() {
        if v >= 0.5 {
            image.data_mut()[p] = 1.0 as Real;
            mask[p] = label + 1;
        }
    }
    SegSample {
        image,
        mask,
        class_count: 11,
    }
}
