//! Segmentation metrics: pixel-wise cross-entropy, accuracy, per-pixel IoU,
//! and their foreground-restricted variants.
//!
//! Per-pixel IoU uses Union = 1 on a match and 2 on a mismatch, so each
//! pixel contributes 1 or 1/2; an image's IoU is the mean contribution.
//! Foreground variants divide by the foreground pixel count; images with no
//! foreground have undefined FG metrics and are excluded from aggregates
//! (the excluded count is reported).

use crate::error::{Result, WaveError};
use crate::field::{Field, Real};

/// Metrics of a single image. FG values are `None` when the image has no
/// foreground pixels.
#[derive(Debug, Clone)]
pub struct SampleMetrics {
    pub loss: Real,
    pub acc: Real,
    pub iou: Real,
    pub fg_loss: Option<Real>,
    pub fg_acc: Option<Real>,
    pub fg_iou: Option<Real>,
    pub pixels: usize,
    pub fg_pixels: usize,
}

/// Aggregate over an evaluation split: mean of per-image metrics.
#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
pub struct MetricReport {
    pub loss: Real,
    pub acc: Real,
    pub iou: Real,
    pub fg_loss: Real,
    pub fg_acc: Real,
    pub fg_iou: Real,
    pub images: usize,
    pub pixels: usize,
    pub fg_pixels: usize,
    /// Images without foreground, excluded from the FG means.
    pub fg_excluded_images: usize,
}

/// Mean over all pixels of -log softmax probability of the true class.
pub fn xent_loss(logits: &Field, mask: &[u8]) -> Result<Real> {
    per_pixel_nll(logits, mask).map(|nll| {
        let n = nll.len();
        (nll.iter().map(|&v| v as f64).sum::<f64>() / n as f64) as Real
    })
}

/// -log p(true class) per pixel, numerically stable.
fn per_pixel_nll(logits: &Field, mask: &[u8]) -> Result<Vec<Real>> {
    let (classes, h, w) = logits.shape();
    let n = h * w;
    if mask.len() != n {
        return Err(WaveError::ShapeMismatch(format!(
            "{} mask entries for {} pixels",
            mask.len(),
            n
        )));
    }
    if let Some(&bad) = mask.iter().find(|&&m| m as usize >= classes) {
        return Err(WaveError::InvalidArgument(format!(
            "class index {bad} out of range (classes = {classes})"
        )));
    }
    let mut out = Vec::with_capacity(n);
    for p in 0..n {
        let mut mx = Real::NEG_INFINITY;
        for c in 0..classes {
            mx = mx.max(logits.data()[c * n + p]);
        }
        let mut s = 0.0;
        for c in 0..classes {
            s += (logits.data()[c * n + p] - mx).exp();
        }
        let lse = mx + s.ln();
        out.push(lse - logits.data()[mask[p] as usize * n + p]);
    }
    Ok(out)
}

/// Argmax class per pixel; ties break to the lowest class index.
pub fn predictions(logits: &Field) -> Vec<u8> {
    let (classes, h, w) = logits.shape();
    let n = h * w;
    (0..n)
        .map(|p| {
            let mut best = 0usize;
            let mut best_v = logits.data()[p];
            for c in 1..classes {
                let v = logits.data()[c * n + p];
                if v > best_v {
                    best_v = v;
                    best = c;
                }
            }
            best as u8
        })
        .collect()
}

/// Evaluate one image's logits against its ground-truth mask.
pub fn eval_sample(logits: &Field, mask: &[u8]) -> Result<SampleMetrics> {
    let nll = per_pixel_nll(logits, mask)?;
    let pred = predictions(logits);
    let n = mask.len();
    let mut correct = 0usize;
    let mut iou_sum = 0.0f64;
    let mut fg_count = 0usize;
    let mut fg_correct = 0usize;
    let mut fg_iou_sum = 0.0f64;
    let mut fg_nll_sum = 0.0f64;
    let mut nll_sum = 0.0f64;
    for p in 0..n {
        let hit = pred[p] == mask[p];
        let iou_pixel = if hit { 1.0 } else { 0.5 };
        nll_sum += nll[p] as f64;
        if hit {
            correct += 1;
        }
        iou_sum += iou_pixel;
        if mask[p] != 0 {
            fg_count += 1;
            if hit {
                fg_correct += 1;
            }
            fg_iou_sum += iou_pixel;
            fg_nll_sum += nll[p] as f64;
        }
    }
    let fg = fg_count > 0;
    Ok(SampleMetrics {
        loss: (nll_sum / n as f64) as Real,
        acc: correct as Real / n as Real,
        iou: (iou_sum / n as f64) as Real,
        fg_loss: fg.then(|| (fg_nll_sum / fg_count as f64) as Real),
        fg_acc: fg.then(|| fg_correct as Real / fg_count as Real),
        fg_iou: fg.then(|| (fg_iou_sum / fg_count as f64) as Real),
        pixels: n,
        fg_pixels: fg_count,
    })
}

/// Mean per-image metrics across a split.
pub fn aggregate(samples: &[SampleMetrics]) -> MetricReport {
    let mut rep = MetricReport {
        images: samples.len(),
        ..MetricReport::default()
    };
    if samples.is_empty() {
        return rep;
    }
    let mut fg_images = 0usize;
    for m in samples {
        rep.loss += m.loss;
        rep.acc += m.acc;
        rep.iou += m.iou;
        rep.pixels += m.pixels;
        rep.fg_pixels += m.fg_pixels;
        if let (Some(fl), Some(fa), Some(fi)) = (m.fg_loss, m.fg_acc, m.fg_iou) {
            rep.fg_loss += fl;
            rep.fg_acc += fa;
            rep.fg_iou += fi;
            fg_images += 1;
        }
    }
    let n = samples.len() as Real;
    rep.loss /= n;
    rep.acc /= n;
    rep.iou /= n;
    if fg_images > 0 {
        rep.fg_loss /= fg_images as Real;
        rep.fg_acc /= fg_images as Real;
        rep.fg_iou /= fg_images as Real;
    }
    rep.fg_excluded_images = samples.len() - fg_images;
    rep
}
