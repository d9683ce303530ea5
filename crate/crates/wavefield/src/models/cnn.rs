//! Feed-forward CNN baseline: L conv+ReLU layers at a fixed channel width,
//! a channelwise linear layer to 100 features (mirroring the time-projected
//! output of the recurrent models), then the per-pixel readout MLP.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{conv_layer_uniform, linear_layer_uniform, mlp_uniform, Act, BoundMlp, ConvLayer, LinearLayer, Mlp};
use crate::autodiff::{Tape, VarId};
use crate::error::Result;
use crate::field::{Field, PadMode};

#[derive(Debug, Clone)]
pub struct CnnParams {
    pub convs: Vec<ConvLayer>,
    /// Channelwise mix to the 100-feature space: weight `(1, 100, width)`.
    pub mix: LinearLayer,
    pub mlp: Mlp,
}

pub struct CnnBound {
    convs: Vec<super::BoundConv>,
    mix: (VarId, VarId),
    mlp: BoundMlp,
}

impl CnnParams {
    /// `depth` conv+ReLU layers of `width` channels; feature head of
    /// `features` channels; MLP widths appended after the feature head.
    pub fn init(
        depth: usize,
        in_channels: usize,
        width: usize,
        features: usize,
        mlp_hidden: &[usize],
        classes: usize,
        seed: u64,
    ) -> CnnParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut convs = Vec::with_capacity(depth);
        for l in 0..depth {
            let in_ch = if l == 0 { in_channels } else { width };
            convs.push(conv_layer_uniform(&mut rng, width, in_ch, Act::Relu));
        }
        let mix = linear_layer_uniform(&mut rng, features, width, Act::Linear);
        let mut widths = vec![features];
        widths.extend_from_slice(mlp_hidden);
        widths.push(classes);
        let mlp = mlp_uniform(&mut rng, &widths);
        CnnParams { convs, mix, mlp }
    }

    pub fn depth(&self) -> usize {
        self.convs.len()
    }

    pub fn bind(&self, tape: &mut Tape) -> (CnnBound, Vec<VarId>) {
        let mut ids = Vec::new();
        let convs = self
            .convs
            .iter()
            .map(|l| {
                let w = tape.leaf(l.weight.clone(), true);
                let b = tape.leaf(l.bias.clone(), true);
                ids.push(w);
                ids.push(b);
                super::BoundConv { w, b, act: l.act }
            })
            .collect();
        let mw = tape.leaf(self.mix.weight.clone(), true);
        let mb = tape.leaf(self.mix.bias.clone(), true);
        ids.push(mw);
        ids.push(mb);
        let mlp = self.mlp.bind(tape, &mut ids);
        (
            CnnBound {
                convs,
                mix: (mw, mb),
                mlp,
            },
            ids,
        )
    }

    pub fn named_params(&self) -> Vec<(String, &Field)> {
        let mut out = Vec::new();
        for (i, l) in self.convs.iter().enumerate() {
            out.push((format!("conv.{i}.weight"), &l.weight));
            out.push((format!("conv.{i}.bias"), &l.bias));
        }
        out.push(("mix.weight".to_string(), &self.mix.weight));
        out.push(("mix.bias".to_string(), &self.mix.bias));
        self.mlp.named("mlp", &mut out);
        out
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Field)> {
        let mut out = Vec::new();
        for (i, l) in self.convs.iter_mut().enumerate() {
            out.push((format!("conv.{i}.weight"), &mut l.weight));
            out.push((format!("conv.{i}.bias"), &mut l.bias));
        }
        out.push(("mix.weight".to_string(), &mut self.mix.weight));
        out.push(("mix.bias".to_string(), &mut self.mix.bias));
        self.mlp.named_mut("mlp", &mut out);
        out
    }
}

/// Forward pass: conv stack (zero padding), channelwise mix, readout MLP.
pub fn cnn_forward(tape: &mut Tape, bound: &CnnBound, x: VarId) -> Result<VarId> {
    let mut cur = x;
    for layer in &bound.convs {
        cur = layer.forward(tape, cur, PadMode::Zero)?;
    }
    let features = tape.channel_linear(cur, bound.mix.0, bound.mix.1)?;
    bound.mlp.forward(tape, features)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn forward(p: &CnnParams, x: &Field) -> Field {
        let mut tape = Tape::new();
        let (bound, _) = p.bind(&mut tape);
        let xid = tape.constant(x.clone());
        let out = cnn_forward(&mut tape, &bound, xid).unwrap();
        tape.value(out).clone()
    }

    #[test]
    fn depth2_receptive_field_is_radius_2() {
        let p = CnnParams::init(2, 1, 8, 10, &[16], 3, 5);
        let mut x = Field::zeros(1, 12, 12);
        for (i, v) in x.data_mut().iter_mut().enumerate() {
            *v = ((i * 7) % 11) as crate::field::Real * 0.1;
        }
        let base = forward(&p, &x);
        let probe = (6usize, 6usize);
        // Chebyshev distance 3 > radius 2: bitwise unchanged
        x.set(0, probe.0 + 3, probe.1 - 3, 5.0);
        let out = forward(&p, &x);
        for c in 0..3 {
            assert_eq!(
                out.get(c, probe.0, probe.1).to_bits(),
                base.get(c, probe.0, probe.1).to_bits()
            );
        }
        // distance 2 influences it
        x.set(0, probe.0 + 2, probe.1, 5.0);
        let out = forward(&p, &x);
        assert!(out.get(0, probe.0, probe.1) != base.get(0, probe.0, probe.1));
    }

    #[test]
    fn zero_weights_logits_equal_final_bias() {
        let mut p = CnnParams::init(2, 1, 4, 6, &[8], 3, 1);
        for (_, f) in p.named_params_mut() {
            for v in f.data_mut() {
                *v = 0.0;
            }
        }
        let last_bias = vec![0.3, -0.7, 1.1];
        for (i, b) in p.mlp.layers.last_mut().unwrap().bias.data_mut().iter_mut().enumerate() {
            *b = last_bias[i];
        }
        let out = forward(&p, &Field::filled(1, 4, 4, 0.9));
        for c in 0..3 {
            for pix in 0..16 {
                assert_eq!(out.data()[c * 16 + pix], last_bias[c]);
            }
        }
    }
}
