//! Time-series readouts: project the per-pixel hidden-state time series to a
//! feature vector (Last / Max / Mean / FFT amplitudes / learned Linear
//! projection), then classify each pixel with a shared MLP.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{mlp_uniform, uniform_field, BoundMlp, Mlp};
use crate::autodiff::{Tape, VarId};
use crate::error::{Result, WaveError};
use crate::field::Field;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadoutKind {
    Last,
    Max,
    Mean,
    Fft,
    Linear,
}

impl ReadoutKind {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "last" => ReadoutKind::Last,
            "max" => ReadoutKind::Max,
            "mean" => ReadoutKind::Mean,
            "fft" => ReadoutKind::Fft,
            "linear" => ReadoutKind::Linear,
            other => {
                return Err(WaveError::Config(format!("unknown readout kind '{other}'")))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ReadoutKind::Last => "last",
            ReadoutKind::Max => "max",
            ReadoutKind::Mean => "mean",
            ReadoutKind::Fft => "fft",
            ReadoutKind::Linear => "linear",
        }
    }

    /// Features per hidden channel for a T-step rollout.
    pub fn features_per_channel(&self, steps: usize) -> usize {
        match self {
            ReadoutKind::Last | ReadoutKind::Max | ReadoutKind::Mean => 1,
            ReadoutKind::Fft | ReadoutKind::Linear => steps / 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Readout {
    pub kind: ReadoutKind,
    /// Linear kind only: `(1, B, T)` projection shared across channels and
    /// pixels.
    pub proj: Option<Field>,
    pub mlp: Mlp,
    pub steps: usize,
}

pub struct ReadoutBound {
    proj: Option<VarId>,
    mlp: BoundMlp,
}

impl Readout {
    pub fn bind(&self, tape: &mut Tape) -> (ReadoutBound, Vec<VarId>) {
        let mut ids = Vec::new();
        let proj = self.proj.as_ref().map(|p| {
            let id = tape.leaf(p.clone(), true);
            ids.push(id);
            id
        });
        let mlp = self.mlp.bind(tape, &mut ids);
        (ReadoutBound { proj, mlp }, ids)
    }

    pub fn named_params(&self) -> Vec<(String, &Field)> {
        let mut out = Vec::new();
        if let Some(p) = &self.proj {
            out.push(("readout.proj".to_string(), p));
        }
        self.mlp.named("readout.mlp", &mut out);
        out
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Field)> {
        let mut out = Vec::new();
        if let Some(p) = &mut self.proj {
            out.push(("readout.proj".to_string(), p));
        }
        self.mlp.named_mut("readout.mlp", &mut out);
        out
    }

    /// Time-project the rollout frames and classify per pixel.
    pub fn apply(
        &self,
        tape: &mut Tape,
        bound: &ReadoutBound,
        frames: &[VarId],
    ) -> Result<VarId> {
        if frames.is_empty() {
            return Err(WaveError::InvalidArgument("readout of empty rollout".into()));
        }
        let t = frames.len();
        let stack = tape.time_stack(frames)?;
        let features = match self.kind {
            ReadoutKind::Last => tape.time_slice_last(stack, t)?,
            ReadoutKind::Max => tape.time_max(stack, t)?,
            ReadoutKind::Mean => tape.time_mean(stack, t)?,
            ReadoutKind::Fft => tape.dft_amplitude(stack, t)?,
            ReadoutKind::Linear => {
                let proj = bound
                    .proj
                    .ok_or_else(|| WaveError::Config("linear readout without projection".into()))?;
                tape.time_linear(stack, t, proj)?
            }
        };
        let got = tape.value(features).channels();
        let want = self.mlp.input_width();
        if got != want {
            return Err(WaveError::ShapeMismatch(format!(
                "readout features {got} vs MLP input width {want}"
            )));
        }
        bound.mlp.forward(tape, features)
    }
}

/// Build a readout: Linear gets a `(1, T/2, T)` fan-in-uniform projection;
/// the MLP widths are `[features, hidden..., classes]` where features =
/// channels x features_per_channel(kind).
pub fn init_readout(
    kind: ReadoutKind,
    hidden_channels: usize,
    steps: usize,
    mlp_hidden: &[usize],
    classes: usize,
    seed: u64,
) -> Readout {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let proj = match kind {
        ReadoutKind::Linear => Some(uniform_field(&mut rng, 1, steps / 2, steps, steps)),
        _ => None,
    };
    let features = hidden_channels * kind.features_per_channel(steps);
    let mut widths = vec![features];
    widths.extend_from_slice(mlp_hidden);
    widths.push(classes);
    let mlp = mlp_uniform(&mut rng, &widths);
    Readout {
        kind,
        proj,
        mlp,
        steps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Real;

    fn apply_readout(r: &Readout, frames: &[Field]) -> Field {
        let mut tape = Tape::new();
        let (bound, _) = r.bind(&mut tape);
        let ids: Vec<VarId> = frames.iter().map(|f| tape.constant(f.clone())).collect();
        let out = r.apply(&mut tape, &bound, &ids).unwrap();
        tape.value(out).clone()
    }

    /// Identity-MLP readout exposing raw features for inspection.
    fn feature_probe(kind: ReadoutKind, channels: usize, steps: usize) -> Readout {
        let features = channels * kind.features_per_channel(steps);
        let mut r = init_readout(kind, channels, steps, &[], features, 0);
        // last (only) layer: identity weight, zero bias
        let l = &mut r.mlp.layers[0];
        for v in l.weight.data_mut() {
            *v = 0.0;
        }
        for i in 0..features {
            l.weight.data_mut()[i * features + i] = 1.0;
        }
        for v in l.bias.data_mut() {
            *v = 0.0;
        }
        r
    }

    #[test]
    fn mean_of_constant_rollout_is_constant() {
        let r = feature_probe(ReadoutKind::Mean, 2, 6);
        let frames: Vec<Field> = (0..6).map(|_| Field::filled(2, 3, 3, 0.4)).collect();
        let out = apply_readout(&r, &frames);
        assert!(out.data().iter().all(|&v| (v - 0.4).abs() < 1e-12));
    }

    #[test]
    fn max_of_increasing_rollout_equals_last() {
        let rmax = feature_probe(ReadoutKind::Max, 1, 5);
        let rlast = feature_probe(ReadoutKind::Last, 1, 5);
        let frames: Vec<Field> = (0..5)
            .map(|t| Field::filled(1, 2, 2, t as Real * 0.3 - 0.2))
            .collect();
        let a = apply_readout(&rmax, &frames);
        let b = apply_readout(&rlast, &frames);
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn fft_of_exact_bin_cosine_is_one_hot() {
        let t = 16;
        let k = 3;
        let r = feature_probe(ReadoutKind::Fft, 1, t);
        let frames: Vec<Field> = (0..t)
            .map(|tt| {
                Field::filled(
                    1,
                    1,
                    1,
                    (2.0 * std::f64::consts::PI * k as f64 * tt as f64 / t as f64).cos() as Real,
                )
            })
            .collect();
        let out = apply_readout(&r, &frames);
        for (i, &v) in out.data().iter().enumerate() {
            if i + 1 == k {
                assert!((v - t as Real / 2.0).abs() < 1e-9);
            } else {
                assert!(v.abs() < 1e-9, "bin {}: {}", i + 1, v);
            }
        }
    }

    #[test]
    fn linear_with_dft_rows_matches_fft_amplitudes() {
        // A Linear readout whose projection holds the DFT cosine and sine
        // rows reproduces the FFT readout features after magnitude pairing:
        // FFT is a special case of Linear expressivity.
        use crate::autodiff::dft_tables;
        let t = 12;
        let bins = t / 2;
        let channels = 1;
        // projection with 2*bins rows: cos_k then sin_k
        let (cos_t, sin_t) = dft_tables(t, bins);
        let mut proj = Field::zeros(1, 2 * bins, t);
        for k in 0..bins {
            for tt in 0..t {
                proj.data_mut()[k * t + tt] = cos_t[k * t + tt];
                proj.data_mut()[(bins + k) * t + tt] = sin_t[k * t + tt];
            }
        }
        let features = 2 * bins * channels;
        let mut identity = Field::zeros(1, features, features);
        for i in 0..features {
            identity.data_mut()[i * features + i] = 1.0;
        }
        let rlin = Readout {
            kind: ReadoutKind::Linear,
            proj: Some(proj),
            mlp: crate::models::Mlp {
                layers: vec![crate::models::LinearLayer {
                    weight: identity,
                    bias: Field::zeros(features, 1, 1),
                    act: crate::models::Act::Linear,
                }],
            },
            steps: t,
        };

        let rfft = feature_probe(ReadoutKind::Fft, channels, t);
        let frames: Vec<Field> = (0..t)
            .map(|tt| {
                Field::filled(
                    1,
                    2,
                    2,
                    ((tt as f64 * 0.83).sin() + 0.3 * (tt as f64 * 2.2).cos()) as Real,
                )
            })
            .collect();
        let lin = apply_readout(&rlin, &frames);
        let fft = apply_readout(&rfft, &frames);
        let n = 4; // pixels
        for p in 0..n {
            for k in 0..bins {
                let re = lin.data()[k * n + p];
                let im = lin.data()[(bins + k) * n + p];
                let mag = (re * re + im * im).sqrt();
                let want = fft.data()[k * n + p];
                assert!((mag - want).abs() < 1e-6, "bin {k} pixel {p}");
            }
        }
    }

    #[test]
    fn mlp_width_mismatch_is_an_error() {
        let r = init_readout(ReadoutKind::Mean, 2, 6, &[8], 3, 0);
        let frames: Vec<Field> = (0..6).map(|_| Field::filled(3, 2, 2, 0.1)).collect();
        let mut tape = Tape::new();
        let (bound, _) = r.bind(&mut tape);
        let ids: Vec<VarId> = frames.iter().map(|f| tape.constant(f.clone())).collect();
        assert!(r.apply(&mut tape, &bound, &ids).is_err());
    }
}
