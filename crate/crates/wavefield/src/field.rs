//! Dense multi-channel 2D fields and the 3x3 stencil convolution everything
//! else builds on.
//!
//! Layout is row-major with the channel outermost (`[c][y][x]`, `x`
//! contiguous) so the stencil inner loop walks contiguous memory.
//!
//! `conv2d` uses the cross-correlation convention (no kernel flip). The
//! Laplacian stencil is symmetric so the wave-equation updates are unaffected;
//! gradient formulas elsewhere in the crate assume this convention.

use crate::error::{Result, WaveError};

/// Engine-wide scalar. f64 by default; the `single-precision` feature switches
/// the whole engine to f32 (training-oriented). The drum experiment and
/// gradient checking require the f64 grade.
#[cfg(not(feature = "single-precision"))]
pub type Real = f64;
#[cfg(feature = "single-precision")]
pub type Real = f32;

/// Bytes per scalar at the active precision grade (the WFT1 precision tag).
pub const PRECISION_BYTES: usize = std::mem::size_of::<Real>();

/// Padding behaviour at the field border.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PadMode {
    /// Wrap around (torus). Used by all recurrent-model convolutions.
    Circular,
    /// Out-of-bounds taps read zero.
    Zero,
}

/// Dense `channels x height x width` grid of scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<Real>,
}

impl Field {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Field {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: Real) -> Self {
        Field {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    /// 1x1x1 field holding a single scalar.
    pub fn scalar(value: Real) -> Self {
        Field::filled(1, 1, 1, value)
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<Real>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(WaveError::ShapeMismatch(format!(
                "field data length {} != {}x{}x{}",
                data.len(),
                channels,
                height,
                width
            )));
        }
        Ok(Field {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn pixels(&self) -> usize {
        self.height * self.width
    }
    pub fn len(&self) -> usize {
        self.data.len()
    }
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[Real] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [Real] {
        &mut self.data
    }
    pub fn into_vec(self) -> Vec<Real> {
        self.data
    }

    #[inline]
    pub fn idx(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> Real {
        self.data[self.idx(c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: Real) {
        let i = self.idx(c, y, x);
        self.data[i] = v;
    }

    /// Contiguous slice of one channel plane.
    pub fn channel(&self, c: usize) -> &[Real] {
        let n = self.pixels();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [Real] {
        let n = self.pixels();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn same_shape(&self, other: &Field) -> bool {
        self.shape() == other.shape()
    }

    pub fn map(&self, f: impl Fn(Real) -> Real) -> Field {
        Field {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(Real, Real) -> Real) -> Result<Field> {
        if !self.same_shape(other) {
            return Err(WaveError::ShapeMismatch(format!(
                "zip of {:?} with {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(Field {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// `self += scale * other`, shapes must match.
    pub fn add_scaled(&mut self, other: &Field, scale: Real) {
        debug_assert!(self.same_shape(other));
        for (a, &b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += scale * b;
        }
    }

    pub fn scale_in_place(&mut self, s: Real) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn max_abs(&self) -> Real {
        self.data.iter().fold(0.0, |m, &v| m.max(v.abs()))
    }

    pub fn sum(&self) -> Real {
        self.data.iter().sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// 3x3 convolution kernel with per-output-channel bias.
///
/// Weights are stored `[out][in][ky][kx]`, bias `[out]`. The spatial extent is
/// fixed at 3x3; 1x1 channel mixes are a separate operation.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel3x3 {
    out_ch: usize,
    in_ch: usize,
    weights: Vec<Real>,
    bias: Vec<Real>,
}

impl Kernel3x3 {
    pub fn zeros(out_ch: usize, in_ch: usize) -> Self {
        Kernel3x3 {
            out_ch,
            in_ch,
            weights: vec![0.0; out_ch * in_ch * 9],
            bias: vec![0.0; out_ch],
        }
    }

    pub fn from_parts(out_ch: usize, in_ch: usize, weights: Vec<Real>, bias: Vec<Real>) -> Result<Self> {
        if weights.len() != out_ch * in_ch * 9 {
            return Err(WaveError::ShapeMismatch(format!(
                "kernel weights length {} != {}x{}x9",
                weights.len(),
                out_ch,
                in_ch
            )));
        }
        if bias.len() != out_ch {
            return Err(WaveError::ShapeMismatch(format!(
                "kernel bias length {} != {}",
                bias.len(),
                out_ch
            )));
        }
        Ok(Kernel3x3 {
            out_ch,
            in_ch,
            weights,
            bias,
        })
    }

    /// Five-point discrete Laplacian stencil, one per (out, in) diagonal pair;
    /// off-diagonal channel coupling and bias are zero.
    pub fn laplacian(channels: usize) -> Self {
        let mut k = Kernel3x3::zeros(channels, channels);
        for c in 0..channels {
            let base = (c * channels + c) * 9;
            k.weights[base + 1] = 1.0; // up
            k.weights[base + 3] = 1.0; // left
            k.weights[base + 4] = -4.0; // center
            k.weights[base + 5] = 1.0; // right
            k.weights[base + 7] = 1.0; // down
        }
        k
    }

    /// Dirac (identity) kernel: center tap `1/in_ch` for every (out, in) pair,
    /// zero bias. Composing these averages channels and preserves the spatial
    /// pattern.
    pub fn dirac_mean(out_ch: usize, in_ch: usize) -> Self {
        let mut k = Kernel3x3::zeros(out_ch, in_ch);
        let v = 1.0 / in_ch as Real;
        for o in 0..out_ch {
            for i in 0..in_ch {
                k.weights[(o * in_ch + i) * 9 + 4] = v;
            }
        }
        k
    }

    pub fn out_ch(&self) -> usize {
        self.out_ch
    }
    pub fn in_ch(&self) -> usize {
        self.in_ch
    }
    pub fn weights(&self) -> &[Real] {
        &self.weights
    }
    pub fn weights_mut(&mut self) -> &mut [Real] {
        &mut self.weights
    }
    pub fn bias(&self) -> &[Real] {
        &self.bias
    }
    pub fn bias_mut(&mut self) -> &mut [Real] {
        &mut self.bias
    }

    #[inline]
    pub fn weight(&self, o: usize, i: usize, ky: usize, kx: usize) -> Real {
        self.weights[((o * self.in_ch + i) * 3 + ky) * 3 + kx]
    }

    /// Weights as a `(out*in, 3, 3)` field plus bias as `(out, 1, 1)`; the
    /// shape the autodiff tape stores kernel parameters in.
    pub fn to_fields(&self) -> (Field, Field) {
        let w = Field::from_vec(self.out_ch * self.in_ch, 3, 3, self.weights.clone()).unwrap();
        let b = Field::from_vec(self.out_ch, 1, 1, self.bias.clone()).unwrap();
        (w, b)
    }

    pub fn from_fields(w: &Field, b: &Field) -> Result<Self> {
        if w.height() != 3 || w.width() != 3 {
            return Err(WaveError::ShapeMismatch(format!(
                "kernel weight field must be (out*in, 3, 3), got {:?}",
                w.shape()
            )));
        }
        let out_ch = b.channels();
        if out_ch == 0 || w.channels() % out_ch != 0 {
            return Err(WaveError::ShapeMismatch(format!(
                "kernel weight channels {} not divisible by bias channels {}",
                w.channels(),
                out_ch
            )));
        }
        let in_ch = w.channels() / out_ch;
        Kernel3x3::from_parts(out_ch, in_ch, w.data().to_vec(), b.data().to_vec())
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Adjoint kernel: channels transposed, taps point-reflected, zero bias.
    /// Cross-correlating a gradient with this kernel (same pad mode) is the
    /// exact input-gradient of cross-correlation with `self`.
    pub fn adjoint(&self) -> Kernel3x3 {
        let mut adj = Kernel3x3::zeros(self.in_ch, self.out_ch);
        for o in 0..self.out_ch {
            for i in 0..self.in_ch {
                for ky in 0..3 {
                    for kx in 0..3 {
                        adj.weights[((i * self.out_ch + o) * 3 + (2 - ky)) * 3 + (2 - kx)] =
                            self.weights[((o * self.in_ch + i) * 3 + ky) * 3 + kx];
                    }
                }
            }
        }
        adj
    }
}

/// 3x3 cross-correlation of `input` with `kernel`.
///
/// Output has `kernel.out_ch` channels and the same spatial extent. The
/// per-pixel accumulation order is fixed (input channel, then tap scan order)
/// so results are bitwise reproducible.
pub fn conv2d(input: &Field, kernel: &Kernel3x3, pad: PadMode) -> Result<Field> {
    if kernel.in_ch != input.channels() {
        return Err(WaveError::ChannelMismatch {
            expected: kernel.in_ch,
            got: input.channels(),
        });
    }
    let (h, w) = (input.height(), input.width());
    let mut out = Field::zeros(kernel.out_ch, h, w);

    for o in 0..kernel.out_ch {
        let b = kernel.bias[o];
        let plane = out.channel_mut(o);
        for v in plane.iter_mut() {
            *v = b;
        }
    }

    if h >= 3 && w >= 3 {
        conv2d_fast(input, kernel, pad, &mut out);
    } else {
        conv2d_general(input, kernel, pad, &mut out);
    }
    Ok(out)
}

/// Interior fast path with explicit border handling; requires h, w >= 3.
fn conv2d_fast(input: &Field, kernel: &Kernel3x3, pad: PadMode, out: &mut Field) {
    let (h, w) = (input.height(), input.width());
    for o in 0..kernel.out_ch {
        for i in 0..kernel.in_ch {
            let kbase = (o * kernel.in_ch + i) * 9;
            let k = &kernel.weights[kbase..kbase + 9];
            let src = input.channel(i);
            let dst = out.channel_mut(o);
            // Interior rows: contiguous 9-tap accumulation.
            for y in 1..h - 1 {
                let r0 = &src[(y - 1) * w..y * w];
                let r1 = &src[y * w..(y + 1) * w];
                let r2 = &src[(y + 1) * w..(y + 2) * w];
                let drow = &mut dst[y * w..(y + 1) * w];
                for x in 1..w - 1 {
                    drow[x] += k[0] * r0[x - 1]
                        + k[1] * r0[x]
                        + k[2] * r0[x + 1]
                        + k[3] * r1[x - 1]
                        + k[4] * r1[x]
                        + k[5] * r1[x + 1]
                        + k[6] * r2[x - 1]
                        + k[7] * r2[x]
                        + k[8] * r2[x + 1];
                }
            }
            // Border pixels.
            for y in 0..h {
                let border_row = y == 0 || y == h - 1;
                for x in 0..w {
                    if !border_row && x != 0 && x != w - 1 {
                        continue;
                    }
                    dst[y * w + x] += gather_one(src, h, w, y, x, k, pad);
                }
            }
        }
    }
}

fn conv2d_general(input: &Field, kernel: &Kernel3x3, pad: PadMode, out: &mut Field) {
    let (h, w) = (input.height(), input.width());
    for o in 0..kernel.out_ch {
        for i in 0..kernel.in_ch {
            let kbase = (o * kernel.in_ch + i) * 9;
            let k = &kernel.weights[kbase..kbase + 9];
            let src = input.channel(i);
            let dst = out.channel_mut(o);
            for y in 0..h {
                for x in 0..w {
                    dst[y * w + x] += gather_one(src, h, w, y, x, k, pad);
                }
            }
        }
    }
}

#[inline]
fn gather_one(src: &[Real], h: usize, w: usize, y: usize, x: usize, k: &[Real], pad: PadMode) -> Real {
    let mut acc = 0.0;
    for ky in 0..3usize {
        for kx in 0..3usize {
            let iy = y as isize + ky as isize - 1;
            let ix = x as isize + kx as isize - 1;
            let v = match pad {
                PadMode::Circular => {
                    let iy = iy.rem_euclid(h as isize) as usize;
                    let ix = ix.rem_euclid(w as isize) as usize;
                    src[iy * w + ix]
                }
                PadMode::Zero => {
                    if iy < 0 || iy >= h as isize || ix < 0 || ix >= w as isize {
                        0.0
                    } else {
                        src[iy as usize * w + ix as usize]
                    }
                }
            };
            acc += k[ky * 3 + kx] * v;
        }
    }
    acc
}

/// Gradient of `conv2d` with respect to its input: cross-correlation of the
/// output gradient with the adjoint kernel under the same padding.
pub fn conv2d_input_grad(grad_out: &Field, kernel: &Kernel3x3, pad: PadMode) -> Field {
    conv2d(grad_out, &kernel.adjoint(), pad).expect("adjoint shapes agree by construction")
}

/// Gradient of `conv2d` with respect to the kernel weights (as a
/// `(out*in, 3, 3)` field) and bias (as `(out, 1, 1)`):
/// `dw[o,i,ky,kx] = sum_pixels g[o, p] * x[i, p + (ky-1, kx-1)]`.
///
/// Row-dot structure: for each tap row offset the interior is a contiguous
/// dot product; border columns (and, for zero padding, missing rows) are
/// handled separately.
pub fn conv2d_weight_grad(grad_out: &Field, input: &Field, pad: PadMode) -> (Field, Field) {
    let (h, w) = (input.height(), input.width());
    let out_ch = grad_out.channels();
    let in_ch = input.channels();
    let mut dw = Field::zeros(out_ch * in_ch, 3, 3);
    let mut db = Field::zeros(out_ch, 1, 1);
    for o in 0..out_ch {
        let g = grad_out.channel(o);
        db.data_mut()[o] = g.iter().sum();
        for i in 0..in_ch {
            let src = input.channel(i);
            let mut acc = [0.0 as Real; 9];
            for y in 0..h {
                let grow = &g[y * w..(y + 1) * w];
                for ky in 0..3usize {
                    let iy = y as isize + ky as isize - 1;
                    let srow: &[Real] = match pad {
                        PadMode::Circular => {
                            let iy = iy.rem_euclid(h as isize) as usize;
                            &src[iy * w..(iy + 1) * w]
                        }
                        PadMode::Zero => {
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let iy = iy as usize;
                            &src[iy * w..(iy + 1) * w]
                        }
                    };
                    // kx = 1 (no shift): straight dot.
                    let mut mid = 0.0;
                    for x in 0..w {
                        mid += grow[x] * srow[x];
                    }
                    acc[ky * 3 + 1] += mid;
                    // kx = 0 (shift -1) and kx = 2 (shift +1).
                    let mut left = 0.0;
                    let mut right = 0.0;
                    for x in 1..w {
                        left += grow[x] * srow[x - 1];
                    }
                    for x in 0..w - 1 {
                        right += grow[x] * srow[x + 1];
                    }
                    if pad == PadMode::Circular && w > 0 {
                        left += grow[0] * srow[w - 1];
                        right += grow[w - 1] * srow[0];
                    }
                    acc[ky * 3] += left;
                    acc[ky * 3 + 2] += right;
                }
            }
            let base = (o * in_ch + i) * 9;
            dw.data_mut()[base..base + 9].copy_from_slice(&acc);
        }
    }
    (dw, db)
}

/// Multiply every channel of `field` by a binary 1-channel mask.
pub fn masked_clamp(field: &Field, mask: &Field) -> Result<Field> {
    check_mask(field, mask)?;
    let mut out = field.clone();
    masked_clamp_in_place(&mut out, mask);
    Ok(out)
}

pub(crate) fn check_mask(field: &Field, mask: &Field) -> Result<()> {
    if mask.channels() != 1 {
        return Err(WaveError::ChannelMismatch {
            expected: 1,
            got: mask.channels(),
        });
    }
    if mask.height() != field.height() || mask.width() != field.width() {
        return Err(WaveError::ShapeMismatch(format!(
            "mask {:?} vs field {:?}",
            mask.shape(),
            field.shape()
        )));
    }
    if mask.data().iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(WaveError::InvalidArgument(
            "mask entries must be 0 or 1".into(),
        ));
    }
    Ok(())
}

pub(crate) fn masked_clamp_in_place(field: &mut Field, mask: &Field) {
    let n = field.pixels();
    let m = mask.data();
    for c in 0..field.channels() {
        let plane = field.channel_mut(c);
        for p in 0..n {
            plane[p] *= m[p];
        }
    }
}
