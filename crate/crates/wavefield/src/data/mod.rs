//! Dataset synthesis (polygons, tetrominoes, multi-MNIST), MNIST IDX
//! ingestion, deterministic splits, and on-disk serialization.
//!
//! Generation is seeded-sequential: one ChaCha stream per dataset, consumed
//! sample by sample, so a fixed seed fixes every byte of the dataset
//! regardless of thread counts.

mod mnist;
mod multimnist;
mod polygons;
mod store;
mod tetrominoes;

pub use mnist::{load_mnist_idx, load_mnist_native, read_idx_images, read_idx_labels, MnistRaw};
pub use multimnist::{compose_multimnist, MultiMnistSpec};
pub use polygons::{gen_polygons, PolygonsSpec};
pub use store::{load_dataset, save_dataset, DatasetManifest};
pub use tetrominoes::{gen_tetrominoes, TetrominoesSpec};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, WaveError};
use crate::field::Field;

/// A paired input image and integer class mask. Mask value 0 is background;
/// 1..class_count-1 are object classes.
#[derive(Debug, Clone, PartialEq)]
pub struct SegSample {
    pub image: Field,
    pub mask: Vec<u8>,
    pub class_count: usize,
}

impl SegSample {
    pub fn validate(&self) -> Result<()> {
        if self.mask.len() != self.image.pixels() {
            return Err(WaveError::ShapeMismatch(format!(
                "mask of {} pixels vs image {:?}",
                self.mask.len(),
                self.image.shape()
            )));
        }
        if let Some(&bad) = self.mask.iter().find(|&&m| m as usize >= self.class_count) {
            return Err(WaveError::InvalidArgument(format!(
                "mask value {bad} >= class count {}",
                self.class_count
            )));
        }
        Ok(())
    }

    pub fn labels_u32(&self) -> Vec<u32> {
        self.mask.iter().map(|&m| m as u32).collect()
    }
}

/// Train/val/test partition.
#[derive(Debug, Clone)]
pub struct DatasetSplits {
    pub train: Vec<SegSample>,
    pub val: Vec<SegSample>,
    pub test: Vec<SegSample>,
}

/// Deterministic split: a seeded shuffle followed by contiguous slices of the
/// requested sizes.
pub fn split(
    samples: Vec<SegSample>,
    sizes: (usize, usize, usize),
    seed: u64,
) -> Result<DatasetSplits> {
    let (ntr, nva, nte) = sizes;
    if ntr + nva + nte > samples.len() {
        return Err(WaveError::InvalidArgument(format!(
            "split sizes {}+{}+{} exceed {} samples",
            ntr,
            nva,
            nte,
            samples.len()
        )));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut samples: Vec<Option<SegSample>> = samples.into_iter().map(Some).collect();
    let mut take = |idx: &[usize]| -> Vec<SegSample> {
        idx.iter().map(|&i| samples[i].take().unwrap()).collect()
    };
    let train = take(&order[..ntr]);
    let val = take(&order[ntr..ntr + nva]);
    let test = take(&order[ntr + nva..ntr + nva + nte]);
    Ok(DatasetSplits { train, val, test })
}

/// Per-class pixel counts across a sample set (index = class).
pub fn class_histogram(samples: &[SegSample], class_count: usize) -> Vec<usize> {
    let mut hist = vec![0usize; class_count];
    for s in samples {
        for &m in &s.mask {
            hist[m as usize] += 1;
        }
    }
    hist
}

/// Bilinear resize of a single-channel byte image (0..255 -> 0..1 floats),
/// half-pixel-center convention.
pub(crate) fn bilinear_resize(src: &[u8], sh: usize, sw: usize, dh: usize, dw: usize) -> Vec<f64> {
    let mut out = vec![0.0; dh * dw];
    let sy = sh as f64 / dh as f64;
    let sx = sw as f64 / dw as f64;
    for y in 0..dh {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, sh as f64 - 1.0);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(sh - 1);
        let wy = fy - y0 as f64;
        for x in 0..dw {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, sw as f64 - 1.0);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(sw - 1);
            let wx = fx - x0 as f64;
            let v00 = src[y0 * sw + x0] as f64;
            let v01 = src[y0 * sw + x1] as f64;
            let v10 = src[y1 * sw + x0] as f64;
            let v11 = src[y1 * sw + x1] as f64;
            let top = v00 * (1.0 - wx) + v01 * wx;
            let bot = v10 * (1.0 - wx) + v11 * wx;
            out[y * dw + x] = (top * (1.0 - wy) + bot * wy) / 255.0;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dummy_samples(n: usize) -> Vec<SegSample> {
        (0..n)
            .map(|i| SegSample {
                image: Field::filled(1, 2, 2, i as crate::field::Real),
                mask: vec![0, 0, 0, 0],
                class_count: 2,
            })
            .collect()
    }

    #[test]
    fn split_partitions_without_overlap() {
        let splits = split(dummy_samples(10), (8, 1, 1), 3).unwrap();
        assert_eq!(splits.train.len(), 8);
        assert_eq!(splits.val.len(), 1);
        assert_eq!(splits.test.len(), 1);
        let mut seen: Vec<crate::field::Real> = splits
            .train
            .iter()
            .chain(&splits.val)
            .chain(&splits.test)
            .map(|s| s.image.data()[0])
            .collect();
        seen.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expect: Vec<crate::field::Real> = (0..10).map(|i| i as crate::field::Real).collect();
        assert_eq!(seen, expect);
    }

    #[test]
    fn split_is_seed_deterministic() {
        let a = split(dummy_samples(20), (10, 5, 5), 7).unwrap();
        let b = split(dummy_samples(20), (10, 5, 5), 7).unwrap();
        for (x, y) in a.train.iter().zip(&b.train) {
            assert_eq!(x.image.data(), y.image.data());
        }
        let c = split(dummy_samples(20), (10, 5, 5), 8).unwrap();
        let differs = a
            .train
            .iter()
            .zip(&c.train)
            .any(|(x, y)| x.image.data() != y.image.data());
        assert!(differs);
    }

    #[test]
    fn split_rejects_oversized_request() {
        assert!(split(dummy_samples(5), (4, 1, 1), 0).is_err());
    }

    #[test]
    fn bilinear_identity_when_same_size() {
        let src: Vec<u8> = (0..16).map(|i| (i * 16) as u8).collect();
        let out = bilinear_resize(&src, 4, 4, 4, 4);
        for (o, &s) in out.iter().zip(&src) {
            assert!((o - s as f64 / 255.0).abs() < 1e-12);
        }
    }
}
