//! Model zoo: shallow CNN encoders, the locally coupled oscillator network,
//! conv-LSTM, feed-forward CNN stack, U-Net, and the time-series readouts.
//!
//! All trainable parameters are stored as [`Field`]s in shapes the autodiff
//! tape accepts directly: 3x3 conv weights as `(out*in, 3, 3)` with bias
//! `(out, 1, 1)`, channel mixes as `(1, out, in)`, time projections as
//! `(1, rows, T)`. Binding a model onto a tape creates one leaf per parameter
//! in exactly `named_params()` order.

mod cnn;
mod convlstm;
mod nwm;
mod readout;
mod segmenter;
mod unet;

pub use cnn::{cnn_forward, CnnParams};
pub use convlstm::{convlstm_rollout, init_convlstm, ConvLstmBound, ConvLstmConfig, ConvLstmParams};
pub use nwm::{
    constant_encoder, init_nwm, nwm_rollout, Coupling, GammaInit, NwmBound, NwmConfig, NwmParams,
    NwmTrajectory,
};
pub use readout::{init_readout, Readout, ReadoutBound, ReadoutKind};
pub use segmenter::Segmenter;
pub use unet::{init_unet, unet_forward, UNetParams};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, VarId};
use crate::error::{Result, WaveError};
use crate::field::{Field, PadMode, Real};

/// Per-layer activation tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Act {
    Linear,
    Relu,
}

/// One 3x3 convolution layer with bias and activation.
#[derive(Debug, Clone)]
pub struct ConvLayer {
    /// `(out*in, 3, 3)`
    pub weight: Field,
    /// `(out, 1, 1)`
    pub bias: Field,
    pub act: Act,
}

impl ConvLayer {
    pub fn out_ch(&self) -> usize {
        self.bias.channels()
    }
    pub fn in_ch(&self) -> usize {
        self.weight.channels() / self.out_ch()
    }

    /// Dirac (identity-function) layer: center tap 1/in_ch, zero bias.
    pub fn dirac_mean(out_ch: usize, in_ch: usize, act: Act) -> ConvLayer {
        let (weight, bias) = crate::field::Kernel3x3::dirac_mean(out_ch, in_ch).to_fields();
        ConvLayer { weight, bias, act }
    }
}

pub(crate) struct BoundConv {
    pub w: VarId,
    pub b: VarId,
    pub act: Act,
}

impl BoundConv {
    pub fn forward(&self, tape: &mut Tape, x: VarId, pad: PadMode) -> Result<VarId> {
        let c = tape.conv2d(x, self.w, Some(self.b), pad)?;
        Ok(match self.act {
            Act::Relu => tape.relu(c),
            Act::Linear => c,
        })
    }
}

/// Stack of 3x3 conv layers; a depth-d stack has Chebyshev receptive-field
/// radius d.
#[derive(Debug, Clone)]
pub struct EncoderStack {
    pub layers: Vec<ConvLayer>,
    pub pad: PadMode,
}

pub(crate) struct BoundEncoder {
    layers: Vec<BoundConv>,
    pad: PadMode,
}

impl EncoderStack {
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn out_channels(&self) -> usize {
        self.layers.last().map(|l| l.out_ch()).unwrap_or(0)
    }

    pub fn in_channels(&self) -> usize {
        self.layers.first().map(|l| l.in_ch()).unwrap_or(0)
    }

    pub(crate) fn bind(&self, tape: &mut Tape, ids: &mut Vec<VarId>) -> BoundEncoder {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let w = tape.leaf(l.weight.clone(), true);
                let b = tape.leaf(l.bias.clone(), true);
                ids.push(w);
                ids.push(b);
                BoundConv { w, b, act: l.act }
            })
            .collect();
        BoundEncoder {
            layers,
            pad: self.pad,
        }
    }

    pub(crate) fn named<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Field)>) {
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("{prefix}.{i}.weight"), &l.weight));
            out.push((format!("{prefix}.{i}.bias"), &l.bias));
        }
    }

    pub(crate) fn named_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Field)>) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            out.push((format!("{prefix}.{i}.weight"), &mut l.weight));
            out.push((format!("{prefix}.{i}.bias"), &mut l.bias));
        }
    }
}

impl BoundEncoder {
    /// Apply the stack: conv2d + activation per layer.
    pub fn forward(&self, tape: &mut Tape, x: VarId) -> Result<VarId> {
        let mut cur = x;
        for layer in &self.layers {
            cur = layer.forward(tape, cur, self.pad)?;
        }
        Ok(cur)
    }
}

/// Convenience: run an encoder stack on a plain field (binds onto a scratch
/// tape). The spec-level `encode` operation.
pub fn encode(enc: &EncoderStack, x: &Field) -> Result<Field> {
    if enc.in_channels() != x.channels() {
        return Err(WaveError::ChannelMismatch {
            expected: enc.in_channels(),
            got: x.channels(),
        });
    }
    let mut tape = Tape::new();
    let mut ids = Vec::new();
    let bound = enc.bind(&mut tape, &mut ids);
    let xid = tape.constant(x.clone());
    let out = bound.forward(&mut tape, xid)?;
    Ok(tape.value(out).clone())
}

/// One dense layer of the per-pixel readout MLP (a 1x1 channel mix).
#[derive(Debug, Clone)]
pub struct LinearLayer {
    /// `(1, out, in)`
    pub weight: Field,
    /// `(out, 1, 1)`
    pub bias: Field,
    pub act: Act,
}

/// Per-pixel MLP shared across pixels; ReLU between layers, raw logits out.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<LinearLayer>,
}

pub(crate) struct BoundMlp {
    layers: Vec<(VarId, VarId, Act)>,
}

impl Mlp {
    pub fn input_width(&self) -> usize {
        self.layers.first().map(|l| l.weight.width()).unwrap_or(0)
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map(|l| l.weight.height()).unwrap_or(0)
    }

    pub(crate) fn bind(&self, tape: &mut Tape, ids: &mut Vec<VarId>) -> BoundMlp {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let w = tape.leaf(l.weight.clone(), true);
                let b = tape.leaf(l.bias.clone(), true);
                ids.push(w);
                ids.push(b);
                (w, b, l.act)
            })
            .collect();
        BoundMlp { layers }
    }

    pub(crate) fn named<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Field)>) {
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("{prefix}.{i}.weight"), &l.weight));
            out.push((format!("{prefix}.{i}.bias"), &l.bias));
        }
    }

    pub(crate) fn named_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Field)>) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            out.push((format!("{prefix}.{i}.weight"), &mut l.weight));
            out.push((format!("{prefix}.{i}.bias"), &mut l.bias));
        }
    }
}

impl BoundMlp {
    pub fn forward(&self, tape: &mut Tape, x: VarId) -> Result<VarId> {
        let mut cur = x;
        for &(w, b, act) in &self.layers {
            cur = tape.channel_linear(cur, w, b)?;
            if act == Act::Relu {
                cur = tape.relu(cur);
            }
        }
        Ok(cur)
    }
}

/// Time-major stack of hidden states from a recurrent run.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub frames: Vec<Field>,
}

impl Rollout {
    /// (T, C, H, W)
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        let (c, h, w) = self.frames[0].shape();
        (self.frames.len(), c, h, w)
    }

    /// Time series of one (channel, pixel).
    pub fn series(&self, channel: usize, pixel: usize) -> Vec<Real> {
        self.frames
            .iter()
            .map(|f| f.data()[channel * f.pixels() + pixel])
            .collect()
    }

    /// Flattened T x C x H x W payload for WFT1 dumps.
    pub fn to_flat(&self) -> (Vec<u32>, Vec<Real>) {
        let (t, c, h, w) = self.dims();
        let mut data = Vec::with_capacity(t * c * h * w);
        for f in &self.frames {
            data.extend_from_slice(f.data());
        }
        (vec![t as u32, c as u32, h as u32, w as u32], data)
    }
}

// ---- initialization helpers ----

/// Fan-in-scaled uniform field: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
pub(crate) fn uniform_field(
    rng: &mut ChaCha8Rng,
    c: usize,
    h: usize,
    w: usize,
    fan_in: usize,
) -> Field {
    let bound = 1.0 / (fan_in as Real).sqrt();
    let data = (0..c * h * w)
        .map(|_| rng.random_range(-bound..bound))
        .collect();
    Field::from_vec(c, h, w, data).unwrap()
}

/// Conv layer with fan-in uniform weights and bias (fan_in = in_ch * 9).
pub(crate) fn conv_layer_uniform(
    rng: &mut ChaCha8Rng,
    out_ch: usize,
    in_ch: usize,
    act: Act,
) -> ConvLayer {
    let fan = in_ch * 9;
    ConvLayer {
        weight: uniform_field(rng, out_ch * in_ch, 3, 3, fan),
        bias: uniform_field(rng, out_ch, 1, 1, fan),
        act,
    }
}

pub(crate) fn conv_layer_dirac(out_ch: usize, in_ch: usize, act: Act) -> ConvLayer {
    ConvLayer::dirac_mean(out_ch, in_ch, act)
}

/// Dense layer with fan-in uniform init.
pub(crate) fn linear_layer_uniform(
    rng: &mut ChaCha8Rng,
    out: usize,
    input: usize,
    act: Act,
) -> LinearLayer {
    LinearLayer {
        weight: uniform_field(rng, 1, out, input, input),
        bias: uniform_field(rng, out, 1, 1, input),
        act,
    }
}

/// Readout MLP over per-pixel features: `widths` lists every layer width
/// including input and output, e.g. `[100, 256, 256, 256, 11]`.
pub(crate) fn mlp_uniform(rng: &mut ChaCha8Rng, widths: &[usize]) -> Mlp {
    let n = widths.len() - 1;
    let layers = (0..n)
        .map(|i| {
            let act = if i + 1 == n { Act::Linear } else { Act::Relu };
            linear_layer_uniform(rng, widths[i + 1], widths[i], act)
        })
        .collect();
    Mlp { layers }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn encoder_locality_bitwise() {
        // Depth-4 stack: flipping an input pixel at Chebyshev distance 5
        // leaves the probe output pixel unchanged, bitwise.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let layers = vec![
            conv_layer_uniform(&mut rng, 6, 1, Act::Relu),
            conv_layer_uniform(&mut rng, 6, 6, Act::Relu),
            conv_layer_uniform(&mut rng, 6, 6, Act::Relu),
            conv_layer_uniform(&mut rng, 2, 6, Act::Linear),
        ];
        let enc = EncoderStack {
            layers,
            pad: PadMode::Circular,
        };
        let mut x = uniform_field(&mut rng, 1, 16, 16, 1);
        let base = encode(&enc, &x).unwrap();
        let probe = (8usize, 8usize);
        // distance 5 > depth 4: no influence
        x.set(0, probe.0 + 5, probe.1, 9.0);
        let out = encode(&enc, &x).unwrap();
        for c in 0..2 {
            assert_eq!(
                out.get(c, probe.0, probe.1).to_bits(),
                base.get(c, probe.0, probe.1).to_bits()
            );
        }
        // distance 4 does influence it
        x.set(0, probe.0 + 5, probe.1, 0.0);
        x.set(0, probe.0 + 4, probe.1, 9.0);
        let out = encode(&enc, &x).unwrap();
        assert!(out.get(0, probe.0, probe.1) != base.get(0, probe.0, probe.1));
    }

    #[test]
    fn dirac_encoder_is_channel_mean() {
        // Identity-initialized 3-layer encoder with ReLU tail maps nonneg
        // input to its channel mean.
        let enc = EncoderStack {
            layers: vec![
                conv_layer_dirac(4, 2, Act::Relu),
                conv_layer_dirac(4, 4, Act::Relu),
                conv_layer_dirac(3, 4, Act::Relu),
            ],
            pad: PadMode::Circular,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = uniform_field(&mut rng, 2, 5, 5, 1).map(|v| v.abs());
        let out = encode(&enc, &x).unwrap();
        for p in 0..25 {
            let mean = (x.data()[p] + x.data()[25 + p]) / 2.0;
            for c in 0..3 {
                assert!((out.data()[c * 25 + p] - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_input_zero_bias_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut layers = vec![
            conv_layer_uniform(&mut rng, 4, 1, Act::Relu),
            conv_layer_uniform(&mut rng, 2, 4, Act::Linear),
        ];
        for l in &mut layers {
            for b in l.bias.data_mut() {
                *b = 0.0;
            }
        }
        let enc = EncoderStack {
            layers,
            pad: PadMode::Zero,
        };
        let out = encode(&enc, &Field::zeros(1, 6, 6)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn encode_rejects_channel_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let enc = EncoderStack {
            layers: vec![conv_layer_uniform(&mut rng, 4, 2, Act::Relu)],
            pad: PadMode::Zero,
        };
        assert!(encode(&enc, &Field::zeros(3, 4, 4)).is_err());
    }
}
