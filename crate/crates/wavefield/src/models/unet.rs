//! U-Net: a stem double-conv, four maxpool+double-conv encoder stages with
//! channel doubling, four nearest-upsample+concat+double-conv decoder stages,
//! and a 1x1 projection head. Output logits directly; no readout MLP.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{conv_layer_uniform, linear_layer_uniform, Act, BoundConv, ConvLayer, LinearLayer};
use crate::autodiff::{Tape, VarId};
use crate::error::{Result, WaveError};
use crate::field::{Field, PadMode};

#[derive(Debug, Clone)]
pub struct UNetParams {
    pub stem: [ConvLayer; 2],
    pub down: Vec<[ConvLayer; 2]>,
    pub up: Vec<[ConvLayer; 2]>,
    /// 1x1 logits head.
    pub head: LinearLayer,
    pub base_maps: usize,
}

pub struct UNetBound {
    stem: [BoundConv; 2],
    down: Vec<[BoundConv; 2]>,
    up: Vec<[BoundConv; 2]>,
    head: (VarId, VarId),
}

/// Channel plan for base map count c: stem in->c->c, four encoder stages
/// doubling to 16c at 1/16 resolution, decoder stages halving back to c.
pub fn init_unet(base_maps: usize, in_channels: usize, classes: usize, seed: u64) -> UNetParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = base_maps;
    let bind2 = |rng: &mut ChaCha8Rng, a: usize, b: usize| {
        [
            conv_layer_uniform(rng, b, a, Act::Relu),
            conv_layer_uniform(rng, b, b, Act::Relu),
        ]
    };
    let stem = bind2(&mut rng, in_channels, c);
    let mut down = Vec::with_capacity(4);
    for s in 0..4 {
        let a = c << s;
        down.push(bind2(&mut rng, a, 2 * a));
    }
    let mut up = Vec::with_capacity(4);
    for s in (0..4).rev() {
        // state at 2^(s+1) c concatenated with a 2^s c skip -> 3 * 2^s c in
        let skip = c << s;
        up.push(bind2(&mut rng, 2 * skip + skip, skip));
    }
    let head = linear_layer_uniform(&mut rng, classes, c, Act::Linear);
    UNetParams {
        stem,
        down,
        up,
        head,
        base_maps,
    }
}

impl UNetParams {
    pub fn bind(&self, tape: &mut Tape) -> (UNetBound, Vec<VarId>) {
        let mut ids = Vec::new();
        let bc = |tape: &mut Tape, ids: &mut Vec<VarId>, l: &ConvLayer| {
            let w = tape.leaf(l.weight.clone(), true);
            let b = tape.leaf(l.bias.clone(), true);
            ids.push(w);
            ids.push(b);
            BoundConv { w, b, act: l.act }
        };
        let stem = [
            bc(tape, &mut ids, &self.stem[0]),
            bc(tape, &mut ids, &self.stem[1]),
        ];
        let down = self
            .down
            .iter()
            .map(|pair| [bc(tape, &mut ids, &pair[0]), bc(tape, &mut ids, &pair[1])])
            .collect();
        let up = self
            .up
            .iter()
            .map(|pair| [bc(tape, &mut ids, &pair[0]), bc(tape, &mut ids, &pair[1])])
            .collect();
        let hw = tape.leaf(self.head.weight.clone(), true);
        let hb = tape.leaf(self.head.bias.clone(), true);
        ids.push(hw);
        ids.push(hb);
        (
            UNetBound {
                stem,
                down,
                up,
                head: (hw, hb),
            },
            ids,
        )
    }

    pub fn named_params(&self) -> Vec<(String, &Field)> {
        let mut out = Vec::new();
        for (i, l) in self.stem.iter().enumerate() {
            out.push((format!("stem.{i}.weight"), &l.weight));
            out.push((format!("stem.{i}.bias"), &l.bias));
        }
        for (s, pair) in self.down.iter().enumerate() {
            for (i, l) in pair.iter().enumerate() {
                out.push((format!("down.{s}.{i}.weight"), &l.weight));
                out.push((format!("down.{s}.{i}.bias"), &l.bias));
            }
        }
        for (s, pair) in self.up.iter().enumerate() {
            for (i, l) in pair.iter().enumerate() {
                out.push((format!("up.{s}.{i}.weight"), &l.weight));
                out.push((format!("up.{s}.{i}.bias"), &l.bias));
            }
        }
        out.push(("head.weight".to_string(), &self.head.weight));
        out.push(("head.bias".to_string(), &self.head.bias));
        out
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Field)> {
        let mut out = Vec::new();
        for (i, l) in self.stem.iter_mut().enumerate() {
            out.push((format!("stem.{i}.weight"), &mut l.weight));
            out.push((format!("stem.{i}.bias"), &mut l.bias));
        }
        for (s, pair) in self.down.iter_mut().enumerate() {
            for (i, l) in pair.iter_mut().enumerate() {
                out.push((format!("down.{s}.{i}.weight"), &mut l.weight));
                out.push((format!("down.{s}.{i}.bias"), &mut l.bias));
            }
        }
        for (s, pair) in self.up.iter_mut().enumerate() {
            for (i, l) in pair.iter_mut().enumerate() {
                out.push((format!("up.{s}.{i}.weight"), &mut l.weight));
                out.push((format!("up.{s}.{i}.bias"), &mut l.bias));
            }
        }
        out.push(("head.weight".to_string(), &mut self.head.weight));
        out.push(("head.bias".to_string(), &mut self.head.bias));
        out
    }

    /// Bottleneck channel count (base * 2^4).
    pub fn bottleneck_channels(&self) -> usize {
        self.base_maps << 4
    }
}

/// Forward pass; spatial dims must be divisible by 16.
pub fn unet_forward(tape: &mut Tape, bound: &UNetBound, x: VarId) -> Result<VarId> {
    let (_, h, w) = tape.value(x).shape();
    if h % 16 != 0 || w % 16 != 0 {
        return Err(WaveError::ShapeMismatch(format!(
            "U-Net needs spatial dims divisible by 16, got {h}x{w}"
        )));
    }
    let pad = PadMode::Zero;
    let mut cur = bound.stem[0].forward(tape, x, pad)?;
    cur = bound.stem[1].forward(tape, cur, pad)?;
    let mut skips = vec![cur];
    for stage in &bound.down {
        cur = tape.maxpool2(cur)?;
        cur = stage[0].forward(tape, cur, pad)?;
        cur = stage[1].forward(tape, cur, pad)?;
        skips.push(cur);
    }
    skips.pop(); // bottleneck is `cur` itself
    for stage in &bound.up {
        let up = tape.upsample_nearest2(cur);
        let skip = skips.pop().expect("skip stack underrun");
        cur = tape.concat_channels(&[up, skip])?;
        cur = stage[0].forward(tape, cur, pad)?;
        cur = stage[1].forward(tape, cur, pad)?;
    }
    tape.channel_linear(cur, bound.head.0, bound.head.1)
}
