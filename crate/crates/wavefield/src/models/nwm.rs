//! Locally coupled oscillator network: hidden state h and velocity v evolve
//! under a learned 3x3 coupling kernel, input-conditioned natural frequencies
//! gamma(x) and damping alpha(x), integrated with an implicit-explicit step:
//!
//! ```text
//! v <- (v + dt * (tanh(w_h ★ h) - gamma ⊙ h)) / (1 + dt * alpha)
//! h <- h + dt * v
//! ```
//!
//! Damping sits in the implicit denominator, so any alpha >= 0 is
//! unconditionally stable.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{conv_layer_dirac, conv_layer_uniform, Act, EncoderStack};
use crate::autodiff::{Tape, VarId};
use crate::error::{Result, WaveError};
use crate::field::{Field, Kernel3x3, PadMode, Real};
use crate::models::BoundEncoder;

/// Coupling nonlinearity. `Identity` is a test hook that reduces the model to
/// the linear wave equation for comparison against the Verlet oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coupling {
    Tanh,
    Identity,
}

/// How the natural-frequency encoder starts out: as the identity function of
/// the input (Dirac kernels) or as the constant 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GammaInit {
    #[default]
    IdentityFn,
    Ones,
}

#[derive(Debug, Clone)]
pub struct NwmConfig {
    pub in_channels: usize,
    pub hidden_channels: usize,
    pub encoder_width: usize,
    pub steps: usize,
    pub dt: Real,
    pub gamma_init: GammaInit,
}

impl Default for NwmConfig {
    fn default() -> Self {
        NwmConfig {
            in_channels: 1,
            hidden_channels: 2,
            encoder_width: 16,
            steps: 100,
            dt: 0.1,
            gamma_init: GammaInit::IdentityFn,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NwmParams {
    /// Recurrent coupling kernel `(C*C, 3, 3)`, no bias.
    pub w_h: Field,
    /// 4-layer initial-state encoder (linear final layer).
    pub enc_h0: EncoderStack,
    /// 3-layer natural-frequency encoder, ReLU tail (gamma >= 0).
    pub enc_gamma: EncoderStack,
    /// 3-layer damping encoder, ReLU tail (alpha >= 0).
    pub enc_alpha: EncoderStack,
    pub dt: Real,
    pub steps: usize,
    pub hidden_channels: usize,
    pub coupling: Coupling,
}

pub struct NwmBound {
    pub w_h: VarId,
    pub(crate) enc_h0: BoundEncoder,
    pub(crate) enc_gamma: BoundEncoder,
    pub(crate) enc_alpha: BoundEncoder,
}

impl NwmParams {
    pub fn bind(&self, tape: &mut Tape) -> (NwmBound, Vec<VarId>) {
        let mut ids = Vec::new();
        let w_h = tape.leaf(self.w_h.clone(), true);
        ids.push(w_h);
        let enc_h0 = self.enc_h0.bind(tape, &mut ids);
        let enc_gamma = self.enc_gamma.bind(tape, &mut ids);
        let enc_alpha = self.enc_alpha.bind(tape, &mut ids);
        (
            NwmBound {
                w_h,
                enc_h0,
                enc_gamma,
                enc_alpha,
            },
            ids,
        )
    }

    pub fn named_params(&self) -> Vec<(String, &Field)> {
        let mut out = vec![("w_h".to_string(), &self.w_h)];
        self.enc_h0.named("enc_h0", &mut out);
        self.enc_gamma.named("enc_gamma", &mut out);
        self.enc_alpha.named("enc_alpha", &mut out);
        out
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Field)> {
        let mut out = Vec::new();
        out.push(("w_h".to_string(), &mut self.w_h));
        self.enc_h0.named_mut("enc_h0", &mut out);
        self.enc_gamma.named_mut("enc_gamma", &mut out);
        self.enc_alpha.named_mut("enc_alpha", &mut out);
        out
    }
}

/// Hidden and velocity trajectories of one rollout, as tape vars.
pub struct NwmTrajectory {
    pub h: Vec<VarId>,
    pub v: Vec<VarId>,
}

/// Unroll the oscillator dynamics for `p.steps` steps from `x`.
pub fn nwm_rollout(
    tape: &mut Tape,
    p: &NwmParams,
    bound: &NwmBound,
    x: VarId,
) -> Result<NwmTrajectory> {
    let h0 = bound.enc_h0.forward(tape, x)?;
    let gamma = bound.enc_gamma.forward(tape, x)?;
    let alpha = bound.enc_alpha.forward(tape, x)?;

    let shape = tape.value(alpha).shape();
    let one = tape.constant(Field::filled(shape.0, shape.1, shape.2, 1.0));
    let dt_alpha = tape.scalar_mul(alpha, p.dt);
    let denom = tape.add(one, dt_alpha)?;
    let damp = tape.recip(denom);

    let mut h = h0;
    let mut v: Option<VarId> = None;
    let mut hs = Vec::with_capacity(p.steps);
    let mut vs = Vec::with_capacity(p.steps);
    for step in 0..p.steps {
        let coupled = tape.conv2d(h, bound.w_h, None, PadMode::Circular)?;
        let force = match p.coupling {
            Coupling::Tanh => tape.tanh(coupled),
            Coupling::Identity => coupled,
        };
        let pull = tape.hadamard(gamma, h)?;
        let net = tape.sub(force, pull)?;
        let kick = tape.scalar_mul(net, p.dt);
        let v_explicit = match v {
            Some(prev) => tape.add(prev, kick)?,
            None => kick,
        };
        let v_new = tape.hadamard(v_explicit, damp)?;
        let dh = tape.scalar_mul(v_new, p.dt);
        h = tape.add(h, dh)?;
        v = Some(v_new);
        let max_abs = tape.value(h).max_abs();
        if !(max_abs <= 1e6) {
            return Err(WaveError::Diverged {
                step: step + 1,
                max_abs: max_abs as f64,
            });
        }
        hs.push(h);
        vs.push(v_new);
    }
    Ok(NwmTrajectory { h: hs, v: vs })
}

/// Build NWM parameters: `w_h` starts as the Laplacian stencil per channel,
/// the gamma encoder as the identity function (Dirac kernels, zero bias), and
/// everything else from fan-in-scaled uniform draws. Deterministic per seed;
/// draw order is enc_h0 layers then enc_alpha layers.
pub fn init_nwm(cfg: &NwmConfig, seed: u64) -> NwmParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = cfg.hidden_channels;
    let wd = cfg.encoder_width;

    let (w_h, _) = Kernel3x3::laplacian(c).to_fields();

    let enc_h0 = EncoderStack {
        layers: vec![
            conv_layer_uniform(&mut rng, wd, cfg.in_channels, Act::Relu),
            conv_layer_uniform(&mut rng, wd, wd, Act::Relu),
            conv_layer_uniform(&mut rng, wd, wd, Act::Relu),
            conv_layer_uniform(&mut rng, c, wd, Act::Linear),
        ],
        pad: PadMode::Circular,
    };

    let enc_gamma = match cfg.gamma_init {
        GammaInit::IdentityFn => EncoderStack {
            layers: vec![
                conv_layer_dirac(wd, cfg.in_channels, Act::Relu),
                conv_layer_dirac(wd, wd, Act::Relu),
                conv_layer_dirac(c, wd, Act::Relu),
            ],
            pad: PadMode::Circular,
        },
        GammaInit::Ones => {
            // Zero weights with bias 1 in the last layer: gamma(x) = 1.
            let mut layers = vec![
                conv_layer_dirac(wd, cfg.in_channels, Act::Relu),
                conv_layer_dirac(wd, wd, Act::Relu),
                conv_layer_dirac(c, wd, Act::Relu),
            ];
            let last = layers.last_mut().unwrap();
            for w in last.weight.data_mut() {
                *w = 0.0;
            }
            for b in last.bias.data_mut() {
                *b = 1.0;
            }
            EncoderStack {
                layers,
                pad: PadMode::Circular,
            }
        }
    };

    let enc_alpha = EncoderStack {
        layers: vec![
            conv_layer_uniform(&mut rng, wd, cfg.in_channels, Act::Relu),
            conv_layer_uniform(&mut rng, wd, wd, Act::Relu),
            conv_layer_uniform(&mut rng, c, wd, Act::Relu),
        ],
        pad: PadMode::Circular,
    };

    NwmParams {
        w_h,
        enc_h0,
        enc_gamma,
        enc_alpha,
        dt: cfg.dt,
        steps: cfg.steps,
        hidden_channels: c,
        coupling: Coupling::Tanh,
    }
}

/// Constant-output single-layer encoder (zero weights, fixed bias): pins
/// gamma or alpha to a constant for controlled experiments.
pub fn constant_encoder(in_ch: usize, out_ch: usize, value: Real) -> EncoderStack {
    let mut layer = conv_layer_dirac(out_ch, in_ch, Act::Relu);
    for w in layer.weight.data_mut() {
        *w = 0.0;
    }
    for b in layer.bias.data_mut() {
        *b = value;
    }
    EncoderStack {
        layers: vec![layer],
        pad: PadMode::Circular,
    }
}
