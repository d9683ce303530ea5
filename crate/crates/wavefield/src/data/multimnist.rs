//! Multi-MNIST composition: 1..4 digits upscaled 28 -> 42, binarized at 0.5,
//! placed at random non-overlapping bounding boxes on a 128x128 canvas.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{bilinear_resize, SegSample};
use crate::error::{Result, WaveError};
use crate::field::{Field, Real};

#[derive(Debug, Clone)]
pub struct MultiMnistSpec {
    pub count: usize,
    pub canvas: usize,
    pub digit_size: usize,
    pub digits_min: usize,
    pub digits_max: usize,
    pub seed: u64,
}

impl Default for MultiMnistSpec {
    fn default() -> Self {
        MultiMnistSpec {
            count: 100,
            canvas: 128,
            digit_size: 42,
            digits_min: 1,
            digits_max: 4,
            seed: 0,
        }
    }
}

/// Compose samples from native 28x28 digits. Bounding boxes are rejected on
/// overlap (pairwise disjoint); placement gives up after 1000 tries.
pub fn compose_multimnist(
    spec: &MultiMnistSpec,
    digits: &[(Vec<u8>, u8)],
) -> Result<Vec<SegSample>> {
    if digits.is_empty() {
        return Err(WaveError::InvalidArgument("no source digits".into()));
    }
    if spec.digits_min < 1 || spec.digits_max < spec.digits_min {
        return Err(WaveError::Config("digit-count range invalid".into()));
    }
    if spec.canvas < spec.digit_size {
        return Err(WaveError::Config("canvas smaller than a digit".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.count)
        .map(|_| compose_one(spec, digits, &mut rng))
        .collect()
}

fn boxes_overlap(a: (usize, usize, usize), b: (usize, usize, usize)) -> bool {
    // (top, left, size)
    let (at, al, asz) = a;
    let (bt, bl, bsz) = b;
    at < bt + bsz && bt < at + asz && al < bl + bsz && bl < al + bsz
}

fn compose_one(
    spec: &MultiMnistSpec,
    digits: &[(Vec<u8>, u8)],
    rng: &mut ChaCha8Rng,
) -> Result<SegSample> {
    let n = spec.canvas;
    let d = spec.digit_size;
    let mut image = Field::zeros(1, n, n);
    let mut mask = vec![0u8; n * n];
    let k = rng.random_range(spec.digits_min..=spec.digits_max);
    let mut boxes: Vec<(usize, usize, usize)> = Vec::with_capacity(k);
    for _ in 0..k {
        let mut placed = false;
        for _attempt in 0..1000 {
            let (img, label) = &digits[rng.random_range(0..digits.len())];
            let top = rng.random_range(0..=(n - d));
            let left = rng.random_range(0..=(n - d));
            if boxes.iter().any(|&b| boxes_overlap(b, (top, left, d))) {
                continue;
            }
            let scaled = bilinear_resize(img, 28, 28, d, d);
            for y in 0..d {
                for x in 0..d {
                    if scaled[y * d + x] >= 0.5 {
                        let p = (top + y) * n + (left + x);
                        image.data_mut()[p] = 1.0 as Real;
                        mask[p] = label + 1;
                    }
                }
            }
            boxes.push((top, left, d));
            placed = true;
            break;
        }
        if !placed {
            return Err(WaveError::Generation(
                "multi-MNIST placement failed after 1000 rejections".into(),
            ));
        }
    }
    let sample = SegSample {
        image,
        mask,
        class_count: 11,
    };
    sample.validate()?;
    Ok(sample)
}
