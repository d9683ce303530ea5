//! Convolutional LSTM with local 3x3 gates and an input-feedback path:
//!
//! ```text
//! i_t = sigmoid(w_xi ★ x_{t-1} + w_hi ★ h_{t-1} + b_i)
//! f_t = sigmoid(w_xf ★ x_{t-1} + w_hf ★ h_{t-1} + b_f)
//! c~  = tanh   (w_xc ★ x_{t-1} + w_hc ★ h_{t-1} + b_c)
//! C_t = f_t ⊙ C_{t-1} + i_t ⊙ c~
//! o_t = sigmoid(w_xo ★ x_{t-1} + w_ho ★ h_{t-1} + b_o)
//! h_t = o_t ⊙ tanh(C_t)
//! x_t = w_o2 ★ sigmoid(w_o1 ★ h_t)
//! ```
//!
//! x_0, h_0 and C_0 come from shallow CNN encoders of the input image.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{conv_layer_uniform, uniform_field, Act, BoundEncoder, EncoderStack};
use crate::autodiff::{Tape, VarId};
use crate::error::{Result, WaveError};
use crate::field::{Field, PadMode};

#[derive(Debug, Clone)]
pub struct ConvLstmConfig {
    pub in_channels: usize,
    pub hidden_channels: usize,
    /// Channel count of the recurrent input-feedback stream x_t.
    pub x_channels: usize,
    pub encoder_width: usize,
    pub steps: usize,
}

impl Default for ConvLstmConfig {
    fn default() -> Self {
        ConvLstmConfig {
            in_channels: 1,
            hidden_channels: 2,
            x_channels: 16,
            encoder_width: 16,
            steps: 20,
        }
    }
}

/// One gate's kernels: the x-path carries the gate bias, the h-path is
/// bias-free.
#[derive(Debug, Clone)]
pub struct GateKernels {
    /// `(C*Xc, 3, 3)`
    pub w_x: Field,
    /// `(C, 1, 1)` gate bias
    pub b: Field,
    /// `(C*C, 3, 3)`
    pub w_h: Field,
}

#[derive(Debug, Clone)]
pub struct ConvLstmParams {
    pub enc_x0: EncoderStack,
    pub enc_h0: EncoderStack,
    pub enc_c0: EncoderStack,
    pub input_gate: GateKernels,
    pub forget_gate: GateKernels,
    pub cell_gate: GateKernels,
    pub output_gate: GateKernels,
    /// `(16*C, 3, 3)`, no bias
    pub w_o1: Field,
    /// `(Xc*16, 3, 3)`, no bias
    pub w_o2: Field,
    pub steps: usize,
    pub hidden_channels: usize,
}

pub struct ConvLstmBound {
    enc_x0: BoundEncoder,
    enc_h0: BoundEncoder,
    enc_c0: BoundEncoder,
    gates: [(VarId, VarId, VarId); 4], // (w_x, b, w_h) for i, f, c, o
    w_o1: VarId,
    w_o2: VarId,
}

impl ConvLstmParams {
    pub fn bind(&self, tape: &mut Tape) -> (ConvLstmBound, Vec<VarId>) {
        let mut ids = Vec::new();
        let enc_x0 = self.enc_x0.bind(tape, &mut ids);
        let enc_h0 = self.enc_h0.bind(tape, &mut ids);
        let enc_c0 = self.enc_c0.bind(tape, &mut ids);
        let bind_gate = |tape: &mut Tape, ids: &mut Vec<VarId>, g: &GateKernels| {
            let wx = tape.leaf(g.w_x.clone(), true);
            let b = tape.leaf(g.b.clone(), true);
            let wh = tape.leaf(g.w_h.clone(), true);
            ids.push(wx);
            ids.push(b);
            ids.push(wh);
            (wx, b, wh)
        };
        let gates = [
            bind_gate(tape, &mut ids, &self.input_gate),
            bind_gate(tape, &mut ids, &self.forget_gate),
            bind_gate(tape, &mut ids, &self.cell_gate),
            bind_gate(tape, &mut ids, &self.output_gate),
        ];
        let w_o1 = tape.leaf(self.w_o1.clone(), true);
        let w_o2 = tape.leaf(self.w_o2.clone(), true);
        ids.push(w_o1);
        ids.push(w_o2);
        (
            ConvLstmBound {
                enc_x0,
                enc_h0,
                enc_c0,
                gates,
                w_o1,
                w_o2,
            },
            ids,
        )
    }

    pub fn named_params(&self) -> Vec<(String, &Field)> {
        let mut out = Vec::new();
        self.enc_x0.named("enc_x0", &mut out);
        self.enc_h0.named("enc_h0", &mut out);
        self.enc_c0.named("enc_c0", &mut out);
        for (name, g) in [
            ("gate_i", &self.input_gate),
            ("gate_f", &self.forget_gate),
            ("gate_c", &self.cell_gate),
            ("gate_o", &self.output_gate),
        ] {
            out.push((format!("{name}.w_x"), &g.w_x));
            out.push((format!("{name}.b"), &g.b));
            out.push((format!("{name}.w_h"), &g.w_h));
        }
        out.push(("w_o1".to_string(), &self.w_o1));
        out.push(("w_o2".to_string(), &self.w_o2));
        out
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Field)> {
        let mut out = Vec::new();
        self.enc_x0.named_mut("enc_x0", &mut out);
        self.enc_h0.named_mut("enc_h0", &mut out);
        self.enc_c0.named_mut("enc_c0", &mut out);
        for (name, g) in [
            ("gate_i", &mut self.input_gate),
            ("gate_f", &mut self.forget_gate),
            ("gate_c", &mut self.cell_gate),
            ("gate_o", &mut self.output_gate),
        ] {
            out.push((format!("{name}.w_x"), &mut g.w_x));
            out.push((format!("{name}.b"), &mut g.b));
            out.push((format!("{name}.w_h"), &mut g.w_h));
        }
        out.push(("w_o1".to_string(), &mut self.w_o1));
        out.push(("w_o2".to_string(), &mut self.w_o2));
        out
    }
}

/// Unroll the conv-LSTM; returns h_1..h_T.
pub fn convlstm_rollout(
    tape: &mut Tape,
    p: &ConvLstmParams,
    bound: &ConvLstmBound,
    x_img: VarId,
) -> Result<Vec<VarId>> {
    let mut x = bound.enc_x0.forward(tape, x_img)?;
    let mut h = bound.enc_h0.forward(tape, x_img)?;
    let mut cell = bound.enc_c0.forward(tape, x_img)?;
    let mut frames = Vec::with_capacity(p.steps);
    for step in 0..p.steps {
        let gate = |tape: &mut Tape, idx: usize, x: VarId, h: VarId| -> Result<VarId> {
            let (wx, b, wh) = bound.gates[idx];
            let gx = tape.conv2d(x, wx, Some(b), PadMode::Circular)?;
            let gh = tape.conv2d(h, wh, None, PadMode::Circular)?;
            tape.add(gx, gh)
        };
        let i_t = {
            let s = gate(tape, 0, x, h)?;
            tape.sigmoid(s)
        };
        let f_t = {
            let s = gate(tape, 1, x, h)?;
            tape.sigmoid(s)
        };
        let c_tilde = {
            let s = gate(tape, 2, x, h)?;
            tape.tanh(s)
        };
        let o_t = {
            let s = gate(tape, 3, x, h)?;
            tape.sigmoid(s)
        };
        let keep = tape.hadamard(f_t, cell)?;
        let write = tape.hadamard(i_t, c_tilde)?;
        cell = tape.add(keep, write)?;
        let cell_act = tape.tanh(cell);
        h = tape.hadamard(o_t, cell_act)?;
        let mid = tape.conv2d(h, bound.w_o1, None, PadMode::Circular)?;
        let mid = tape.sigmoid(mid);
        x = tape.conv2d(mid, bound.w_o2, None, PadMode::Circular)?;

        let max_abs = tape.value(h).max_abs();
        if !(max_abs <= 1e6) {
            return Err(WaveError::Diverged {
                step: step + 1,
                max_abs: max_abs as f64,
            });
        }
        frames.push(h);
    }
    Ok(frames)
}

/// Fan-in uniform init for every kernel; draw order is the `named_params`
/// order. Deterministic per seed.
pub fn init_convlstm(cfg: &ConvLstmConfig, seed: u64) -> ConvLstmParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = cfg.hidden_channels;
    let xc = cfg.x_channels;
    let wd = cfg.encoder_width;

    let enc_x0 = EncoderStack {
        layers: vec![
            conv_layer_uniform(&mut rng, wd, cfg.in_channels, Act::Relu),
            conv_layer_uniform(&mut rng, wd, wd, Act::Relu),
            conv_layer_uniform(&mut rng, wd, wd, Act::Relu),
            conv_layer_uniform(&mut rng, xc, wd, Act::Linear),
        ],
        pad: PadMode::Circular,
    };
    let enc_h0 = EncoderStack {
        layers: vec![
            conv_layer_uniform(&mut rng, wd, cfg.in_channels, Act::Relu),
            conv_layer_uniform(&mut rng, wd, wd, Act::Relu),
            conv_layer_uniform(&mut rng, c, wd, Act::Linear),
        ],
        pad: PadMode::Circular,
    };
    let enc_c0 = EncoderStack {
        layers: vec![
            conv_layer_uniform(&mut rng, wd, cfg.in_channels, Act::Relu),
            conv_layer_uniform(&mut rng, wd, wd, Act::Relu),
            conv_layer_uniform(&mut rng, c, wd, Act::Linear),
        ],
        pad: PadMode::Circular,
    };
    let gate = |rng: &mut ChaCha8Rng| GateKernels {
        w_x: uniform_field(rng, c * xc, 3, 3, xc * 9),
        b: uniform_field(rng, c, 1, 1, xc * 9),
        w_h: uniform_field(rng, c * c, 3, 3, c * 9),
    };
    let input_gate = gate(&mut rng);
    let forget_gate = gate(&mut rng);
    let cell_gate = gate(&mut rng);
    let output_gate = gate(&mut rng);
    let w_o1 = uniform_field(&mut rng, 16 * c, 3, 3, c * 9);
    let w_o2 = uniform_field(&mut rng, xc * 16, 3, 3, 16 * 9);

    ConvLstmParams {
        enc_x0,
        enc_h0,
        enc_c0,
        input_gate,
        forget_gate,
        cell_gate,
        output_gate,
        w_o1,
        w_o2,
        steps: cfg.steps,
        hidden_channels: c,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Real;

    fn zeroed(cfg: &ConvLstmConfig) -> ConvLstmParams {
        let mut p = init_convlstm(cfg, 0);
        for (_, f) in p.named_params_mut() {
            for v in f.data_mut() {
                *v = 0.0;
            }
        }
        p
    }

    fn run(p: &ConvLstmParams, x: &Field) -> (Vec<Field>, Tape) {
        let mut tape = Tape::new();
        let (bound, _) = p.bind(&mut tape);
        let xid = tape.constant(x.clone());
        let frames = convlstm_rollout(&mut tape, p, &bound, xid).unwrap();
        let fields = frames.iter().map(|&id| tape.value(id).clone()).collect();
        (fields, tape)
    }

    #[test]
    fn zero_params_zero_cell_stays_zero() {
        let cfg = ConvLstmConfig {
            steps: 5,
            ..ConvLstmConfig::default()
        };
        let p = zeroed(&cfg);
        let (frames, _) = run(&p, &Field::filled(1, 4, 4, 0.7));
        for f in frames {
            assert!(f.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn zero_params_unit_cell_hand_values() {
        // All parameters zero, C0 = 1: gates are 0.5, so
        // C1 = 0.5 and h1 = 0.5 * tanh(0.5) ~= 0.23106.
        let cfg = ConvLstmConfig {
            steps: 2,
            ..ConvLstmConfig::default()
        };
        let mut p = zeroed(&cfg);
        // enc_c0 last layer bias 1 makes C0 = 1 everywhere
        let last = p.enc_c0.layers.last_mut().unwrap();
        for b in last.bias.data_mut() {
            *b = 1.0;
        }
        let (frames, _) = run(&p, &Field::filled(1, 4, 4, 0.3));
        let h1 = frames[0].data()[0];
        assert!((h1 - 0.5 * (0.5 as Real).tanh()).abs() < 1e-6, "h1 = {h1}");
        assert!((h1 - 0.23106).abs() < 1e-5);
        // C2 = 0.5 * C1 + 0.5 * 0 = 0.25; h2 = 0.5 * tanh(0.25)
        let h2 = frames[1].data()[0];
        assert!((h2 - 0.5 * (0.25 as Real).tanh()).abs() < 1e-6);
    }

    #[test]
    fn gates_stay_in_unit_interval() {
        // Implied by sigmoid; checked indirectly: |h| <= 1 since
        // h = sigmoid(.) * tanh(.)
        let cfg = ConvLstmConfig {
            steps: 8,
            ..ConvLstmConfig::default()
        };
        let p = init_convlstm(&cfg, 3);
        let mut x = Field::zeros(1, 6, 6);
        for (i, v) in x.data_mut().iter_mut().enumerate() {
            *v = ((i as Real) * 0.13).sin();
        }
        let (frames, _) = run(&p, &x);
        for f in frames {
            assert!(f.data().iter().all(|&v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn bind_order_matches_named_params() {
        let p = init_convlstm(&ConvLstmConfig::default(), 11);
        let mut tape = Tape::new();
        let (_, ids) = p.bind(&mut tape);
        let named = p.named_params();
        assert_eq!(ids.len(), named.len());
        for (&id, (_, f)) in ids.iter().zip(named.iter()) {
            assert_eq!(tape.value(id).data(), f.data());
        }
    }
}
