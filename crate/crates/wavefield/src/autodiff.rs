//! Tape-based reverse-mode differentiation over exactly the operator set the
//! models require.
//!
//! Forward values are computed eagerly as ops are recorded; `backward` walks
//! the tape in reverse creation order. A tape is single-owner: model replicas
//! that run in parallel each record on their own tape and gradients are merged
//! by the caller in a fixed order.
//!
//! All ops are deterministic; identical tapes produce bitwise-identical
//! gradients.

use crate::error::{Result, WaveError};
use crate::field::{
    conv2d, conv2d_input_grad, conv2d_weight_grad, Field, Kernel3x3, PadMode, Real,
    PRECISION_BYTES,
};

/// Index of a recorded value on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(usize);

impl VarId {
    pub fn index(&self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    Conv2d { pad: PadMode },
    Add,
    Sub,
    Hadamard,
    ScalarMul { c: Real },
    Tanh,
    Sigmoid,
    Relu,
    Recip,
    ChannelLinear,
    TimeStack { time: usize },
    TimeMax { time: usize, argmax: Vec<u32> },
    TimeMean { time: usize },
    TimeSliceLast { time: usize },
    TimeLinear { time: usize, rows: usize },
    DftAmplitude { time: usize },
    MaxPool2 { argmax: Vec<u32> },
    UpsampleNearest2,
    ConcatChannels,
    SoftmaxXent { labels: Vec<u32> },
    ReduceSum,
}

struct Node {
    op: Op,
    inputs: Vec<VarId>,
    value: Field,
    requires_grad: bool,
}

/// Reverse-mode tape. Records op nodes in creation order; `backward` visits
/// them strictly in reverse.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Per-node gradient accumulators produced by [`Tape::backward`].
pub struct Grads {
    grads: Vec<Option<Field>>,
}

impl Grads {
    pub fn get(&self, id: VarId) -> Option<&Field> {
        self.grads[id.0].as_ref()
    }

    /// Gradient for `id`, or zeros of the given shape if the node was not
    /// reached by backward (e.g. a parameter the loss does not depend on).
    pub fn get_or_zeros(&self, id: VarId, shape: (usize, usize, usize)) -> Field {
        match &self.grads[id.0] {
            Some(g) => g.clone(),
            None => Field::zeros(shape.0, shape.1, shape.2),
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: VarId) -> &Field {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, inputs: Vec<VarId>, value: Field) -> VarId {
        let requires_grad = match op {
            Op::Leaf => false, // set by leaf()
            _ => inputs.iter().any(|&i| self.nodes[i.0].requires_grad),
        };
        self.nodes.push(Node {
            op,
            inputs,
            value,
            requires_grad,
        });
        VarId(self.nodes.len() - 1)
    }

    /// Record an input value. `requires_grad` marks trainable parameters.
    pub fn leaf(&mut self, value: Field, requires_grad: bool) -> VarId {
        let id = self.push(Op::Leaf, vec![], value);
        self.nodes[id.0].requires_grad = requires_grad;
        id
    }

    /// Non-trainable constant input.
    pub fn constant(&mut self, value: Field) -> VarId {
        self.leaf(value, false)
    }

    fn binary_shape_check(&self, a: VarId, b: VarId, what: &str) -> Result<()> {
        if !self.value(a).same_shape(self.value(b)) {
            return Err(WaveError::ShapeMismatch(format!(
                "{what}: {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        Ok(())
    }

    /// 3x3 convolution. `weights` is a `(out*in, 3, 3)` leaf, `bias` an
    /// optional `(out, 1, 1)` leaf.
    pub fn conv2d(
        &mut self,
        x: VarId,
        weights: VarId,
        bias: Option<VarId>,
        pad: PadMode,
    ) -> Result<VarId> {
        let kernel = self.kernel_view(x, weights, bias)?;
        let out = conv2d(self.value(x), &kernel, pad)?;
        let mut inputs = vec![x, weights];
        if let Some(b) = bias {
            inputs.push(b);
        }
        Ok(self.push(Op::Conv2d { pad }, inputs, out))
    }

    fn kernel_view(&self, x: VarId, weights: VarId, bias: Option<VarId>) -> Result<Kernel3x3> {
        let w = self.value(weights);
        let in_ch = self.value(x).channels();
        if w.height() != 3 || w.width() != 3 || w.channels() % in_ch != 0 {
            return Err(WaveError::ShapeMismatch(format!(
                "conv2d weights {:?} incompatible with {} input channels",
                w.shape(),
                in_ch
            )));
        }
        let out_ch = w.channels() / in_ch;
        let b = match bias {
            Some(bid) => {
                let bf = self.value(bid);
                if bf.channels() != out_ch || bf.pixels() != 1 {
                    return Err(WaveError::ShapeMismatch(format!(
                        "conv2d bias {:?} for {} output channels",
                        bf.shape(),
                        out_ch
                    )));
                }
                bf.data().to_vec()
            }
            None => vec![0.0; out_ch],
        };
        Kernel3x3::from_parts(out_ch, in_ch, w.data().to_vec(), b)
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        self.binary_shape_check(a, b, "add")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        Ok(self.push(Op::Add, vec![a, b], v))
    }

    pub fn sub(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        self.binary_shape_check(a, b, "sub")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        Ok(self.push(Op::Sub, vec![a, b], v))
    }

    pub fn hadamard(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        self.binary_shape_check(a, b, "hadamard")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        Ok(self.push(Op::Hadamard, vec![a, b], v))
    }

    pub fn scalar_mul(&mut self, x: VarId, c: Real) -> VarId {
        let v = self.value(x).map(|u| c * u);
        self.push(Op::ScalarMul { c }, vec![x], v)
    }

    pub fn tanh(&mut self, x: VarId) -> VarId {
        let v = self.value(x).map(Real::tanh);
        self.push(Op::Tanh, vec![x], v)
    }

    pub fn sigmoid(&mut self, x: VarId) -> VarId {
        let v = self.value(x).map(|u| 1.0 / (1.0 + (-u).exp()));
        self.push(Op::Sigmoid, vec![x], v)
    }

    pub fn relu(&mut self, x: VarId) -> VarId {
        let v = self.value(x).map(|u| if u > 0.0 { u } else { 0.0 });
        self.push(Op::Relu, vec![x], v)
    }

    /// Elementwise reciprocal. Used for the implicit damping denominator
    /// `1 / (1 + dt*alpha)` where the denominator is >= 1 by construction.
    pub fn recip(&mut self, x: VarId) -> VarId {
        let v = self.value(x).map(|u| 1.0 / u);
        self.push(Op::Recip, vec![x], v)
    }

    /// 1x1 channel mix: `out[o, p] = bias[o] + sum_i w[o, i] * x[i, p]`.
    /// `weights` is a `(1, out, in)` leaf, `bias` a `(out, 1, 1)` leaf.
    pub fn channel_linear(&mut self, x: VarId, weights: VarId, bias: VarId) -> Result<VarId> {
        let (xf, wf, bf) = (self.value(x), self.value(weights), self.value(bias));
        let in_ch = xf.channels();
        if wf.channels() != 1 || wf.width() != in_ch {
            return Err(WaveError::ShapeMismatch(format!(
                "channel_linear weights {:?} vs {} input channels",
                wf.shape(),
                in_ch
            )));
        }
        let out_ch = wf.height();
        if bf.channels() != out_ch || bf.pixels() != 1 {
            return Err(WaveError::ShapeMismatch(format!(
                "channel_linear bias {:?} for {} outputs",
                bf.shape(),
                out_ch
            )));
        }
        let n = xf.pixels();
        let mut out = Field::zeros(out_ch, xf.height(), xf.width());
        for o in 0..out_ch {
            let b = bf.data()[o];
            let row = &mut out.data_mut()[o * n..(o + 1) * n];
            for v in row.iter_mut() {
                *v = b;
            }
            for i in 0..in_ch {
                let w = wf.data()[o * in_ch + i];
                let src = &xf.data()[i * n..(i + 1) * n];
                let row = &mut out.data_mut()[o * n..(o + 1) * n];
                for (r, &s) in row.iter_mut().zip(src.iter()) {
                    *r += w * s;
                }
            }
        }
        Ok(self.push(Op::ChannelLinear, vec![x, weights, bias], out))
    }

    /// Stack `frames` (each `C x H x W`) into a time-major `(T*C) x H x W`
    /// rollout field; channel index `t*C + c`.
    pub fn time_stack(&mut self, frames: &[VarId]) -> Result<VarId> {
        if frames.is_empty() {
            return Err(WaveError::InvalidArgument("time_stack of no frames".into()));
        }
        let shape = self.value(frames[0]).shape();
        for &f in frames {
            if self.value(f).shape() != shape {
                return Err(WaveError::ShapeMismatch(
                    "time_stack frames differ in shape".into(),
                ));
            }
        }
        let (c, h, w) = shape;
        let t = frames.len();
        let mut data = Vec::with_capacity(t * c * h * w);
        for &f in frames {
            data.extend_from_slice(self.value(f).data());
        }
        let v = Field::from_vec(t * c, h, w, data)?;
        Ok(self.push(Op::TimeStack { time: t }, frames.to_vec(), v))
    }

    fn stack_channels(&self, stack: VarId, time: usize, what: &str) -> Result<usize> {
        let ch = self.value(stack).channels();
        if time == 0 || ch % time != 0 {
            return Err(WaveError::ShapeMismatch(format!(
                "{what}: stack with {ch} channels is not divisible into {time} timesteps"
            )));
        }
        Ok(ch / time)
    }

    /// Per-(channel, pixel) maximum over time. Ties break to the earliest
    /// timestep.
    pub fn time_max(&mut self, stack: VarId, time: usize) -> Result<VarId> {
        let c = self.stack_channels(stack, time, "time_max")?;
        let sf = self.value(stack);
        let (h, w) = (sf.height(), sf.width());
        let n = h * w;
        let mut out = Field::zeros(c, h, w);
        let mut argmax = vec![0u32; c * n];
        for ch in 0..c {
            for p in 0..n {
                let mut best = sf.data()[ch * n + p];
                let mut best_t = 0u32;
                for t in 1..time {
                    let v = sf.data()[(t * c + ch) * n + p];
                    if v > best {
                        best = v;
                        best_t = t as u32;
                    }
                }
                out.data_mut()[ch * n + p] = best;
                argmax[ch * n + p] = best_t;
            }
        }
        Ok(self.push(Op::TimeMax { time, argmax }, vec![stack], out))
    }

    pub fn time_mean(&mut self, stack: VarId, time: usize) -> Result<VarId> {
        let c = self.stack_channels(stack, time, "time_mean")?;
        let sf = self.value(stack);
        let (h, w) = (sf.height(), sf.width());
        let n = h * w;
        let mut out = Field::zeros(c, h, w);
        let inv = 1.0 / time as Real;
        for t in 0..time {
            for ch in 0..c {
                let src = &sf.data()[(t * c + ch) * n..(t * c + ch + 1) * n];
                let dst = &mut out.data_mut()[ch * n..(ch + 1) * n];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += s * inv;
                }
            }
        }
        Ok(self.push(Op::TimeMean { time }, vec![stack], out))
    }

    pub fn time_slice_last(&mut self, stack: VarId, time: usize) -> Result<VarId> {
        let c = self.stack_channels(stack, time, "time_slice_last")?;
        let sf = self.value(stack);
        let (h, w) = (sf.height(), sf.width());
        let n = h * w;
        let start = (time - 1) * c * n;
        let data = sf.data()[start..start + c * n].to_vec();
        let v = Field::from_vec(c, h, w, data)?;
        Ok(self.push(Op::TimeSliceLast { time }, vec![stack], v))
    }

    /// Learned time projection shared across channels and pixels:
    /// `out[(r, c), p] = sum_t proj[r, t] * stack[(t, c), p]`. `proj` is a
    /// `(1, rows, T)` leaf.
    pub fn time_linear(&mut self, stack: VarId, time: usize, proj: VarId) -> Result<VarId> {
        let c = self.stack_channels(stack, time, "time_linear")?;
        let pf = self.value(proj);
        if pf.channels() != 1 || pf.width() != time {
            return Err(WaveError::ShapeMismatch(format!(
                "time_linear projection {:?} vs {} timesteps",
                pf.shape(),
                time
            )));
        }
        let rows = pf.height();
        let sf = self.value(stack);
        let (h, w) = (sf.height(), sf.width());
        let n = h * w;
        let mut out = Field::zeros(rows * c, h, w);
        for r in 0..rows {
            for t in 0..time {
                let coef = pf.data()[r * time + t];
                for ch in 0..c {
                    let src = &sf.data()[(t * c + ch) * n..(t * c + ch + 1) * n];
                    let dst = &mut out.data_mut()[(r * c + ch) * n..(r * c + ch + 1) * n];
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d += coef * s;
                    }
                }
            }
        }
        Ok(self.push(Op::TimeLinear { time, rows }, vec![stack, proj], out))
    }

    /// One-sided DFT amplitudes along time, DC dropped: bins `k = 1..=T/2`,
    /// `out[((k-1), c), p] = sqrt(Re^2 + Im^2)` of the unnormalized DFT.
    /// The amplitude at exactly zero is non-differentiable; backward uses
    /// subgradient 0 there (a 1e-12 floor inside the square root guards the
    /// division).
    pub fn dft_amplitude(&mut self, stack: VarId, time: usize) -> Result<VarId> {
        if time < 2 || time % 2 != 0 {
            return Err(WaveError::InvalidArgument(format!(
                "dft_amplitude needs an even timestep count >= 2, got {time}"
            )));
        }
        let c = self.stack_channels(stack, time, "dft_amplitude")?;
        let sf = self.value(stack);
        let (h, w) = (sf.height(), sf.width());
        let n = h * w;
        let bins = time / 2;
        let (cos_t, sin_t) = dft_tables(time, bins);
        let mut out = Field::zeros(bins * c, h, w);
        for ch in 0..c {
            for p in 0..n {
                for k in 1..=bins {
                    let mut re = 0.0;
                    let mut im = 0.0;
                    for t in 0..time {
                        let v = sf.data()[(t * c + ch) * n + p];
                        re += v * cos_t[(k - 1) * time + t];
                        im += v * sin_t[(k - 1) * time + t];
                    }
                    out.data_mut()[((k - 1) * c + ch) * n + p] = (re * re + im * im).sqrt();
                }
            }
        }
        Ok(self.push(Op::DftAmplitude { time }, vec![stack], out))
    }

    /// 2x2 max pooling, stride 2. Ties break to the first element in scan
    /// order.
    pub fn maxpool2(&mut self, x: VarId) -> Result<VarId> {
        let xf = self.value(x);
        let (c, h, w) = xf.shape();
        if h % 2 != 0 || w % 2 != 0 {
            return Err(WaveError::ShapeMismatch(format!(
                "maxpool2 needs even spatial dims, got {h}x{w}"
            )));
        }
        let (oh, ow) = (h / 2, w / 2);
        let mut out = Field::zeros(c, oh, ow);
        let mut argmax = vec![0u32; c * oh * ow];
        for ch in 0..c {
            let src = xf.channel(ch);
            for y in 0..oh {
                for x2 in 0..ow {
                    let mut best_i = (2 * y) * w + 2 * x2;
                    let mut best = src[best_i];
                    for (dy, dx) in [(0usize, 1usize), (1, 0), (1, 1)] {
                        let i = (2 * y + dy) * w + 2 * x2 + dx;
                        if src[i] > best {
                            best = src[i];
                            best_i = i;
                        }
                    }
                    out.data_mut()[(ch * oh + y) * ow + x2] = best;
                    argmax[(ch * oh + y) * ow + x2] = (ch * h * w + best_i) as u32;
                }
            }
        }
        Ok(self.push(Op::MaxPool2 { argmax }, vec![x], out))
    }

    /// Nearest-neighbour 2x upsampling.
    pub fn upsample_nearest2(&mut self, x: VarId) -> VarId {
        let xf = self.value(x);
        let (c, h, w) = xf.shape();
        let mut out = Field::zeros(c, 2 * h, 2 * w);
        for ch in 0..c {
            let src = xf.channel(ch);
            let dst = out.channel_mut(ch);
            for y in 0..h {
                for x2 in 0..w {
                    let v = src[y * w + x2];
                    dst[(2 * y) * 2 * w + 2 * x2] = v;
                    dst[(2 * y) * 2 * w + 2 * x2 + 1] = v;
                    dst[(2 * y + 1) * 2 * w + 2 * x2] = v;
                    dst[(2 * y + 1) * 2 * w + 2 * x2 + 1] = v;
                }
            }
        }
        self.push(Op::UpsampleNearest2, vec![x], out)
    }

    pub fn concat_channels(&mut self, parts: &[VarId]) -> Result<VarId> {
        if parts.is_empty() {
            return Err(WaveError::InvalidArgument("concat of nothing".into()));
        }
        let (h, w) = (self.value(parts[0]).height(), self.value(parts[0]).width());
        let mut data = Vec::new();
        let mut channels = 0;
        for &p in parts {
            let f = self.value(p);
            if f.height() != h || f.width() != w {
                return Err(WaveError::ShapeMismatch(
                    "concat_channels spatial dims differ".into(),
                ));
            }
            channels += f.channels();
            data.extend_from_slice(f.data());
        }
        let v = Field::from_vec(channels, h, w, data)?;
        Ok(self.push(Op::ConcatChannels, parts.to_vec(), v))
    }

    /// Mean over pixels of `-log softmax(logits)[label]`; the scalar training
    /// loss. `labels` has one class index per pixel, row-major.
    pub fn softmax_xent(&mut self, logits: VarId, labels: &[u32]) -> Result<VarId> {
        let lf = self.value(logits);
        let (classes, h, w) = lf.shape();
        let n = h * w;
        if labels.len() != n {
            return Err(WaveError::ShapeMismatch(format!(
                "{} labels for {} pixels",
                labels.len(),
                n
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= classes) {
            return Err(WaveError::InvalidArgument(format!(
                "class index {bad} out of range (classes = {classes})"
            )));
        }
        let mut total = 0.0;
        for p in 0..n {
            let (lse, _max) = logsumexp_pixel(lf, p);
            total += lse - lf.data()[labels[p] as usize * n + p];
        }
        let v = Field::scalar(total / n as Real);
        Ok(self.push(
            Op::SoftmaxXent {
                labels: labels.to_vec(),
            },
            vec![logits],
            v,
        ))
    }

    pub fn reduce_sum(&mut self, x: VarId) -> VarId {
        let v = Field::scalar(self.value(x).sum());
        self.push(Op::ReduceSum, vec![x], v)
    }

    /// Reverse pass from a scalar loss. Parameters not reachable from the
    /// loss simply stay absent from the result; use
    /// [`Grads::get_or_zeros`] for them.
    pub fn backward(&self, loss: VarId) -> Result<Grads> {
        let lf = self.value(loss);
        if lf.shape() != (1, 1, 1) {
            return Err(WaveError::ShapeMismatch(format!(
                "backward needs a scalar loss, got {:?}",
                lf.shape()
            )));
        }
        let mut grads: Vec<Option<Field>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Field::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            if grads[idx].is_none() || !self.nodes[idx].requires_grad {
                continue;
            }
            let g = grads[idx].take().unwrap();
            self.backprop_node(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Grads { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Field>], id: VarId, delta: Field) {
        if !self.nodes[id.0].requires_grad {
            return;
        }
        match &mut grads[id.0] {
            Some(g) => g.add_scaled(&delta, 1.0),
            slot @ None => *slot = Some(delta),
        }
    }

    fn backprop_node(&self, idx: usize, g: &Field, grads: &mut [Option<Field>]) -> Result<()> {
        let node = &self.nodes[idx];
        let ins = &node.inputs;
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { pad } => {
                let x = ins[0];
                let wid = ins[1];
                let kernel = self.kernel_view(x, wid, ins.get(2).copied())?;
                if self.nodes[x.0].requires_grad {
                    self.accumulate(grads, x, conv2d_input_grad(g, &kernel, *pad));
                }
                let need_w = self.nodes[wid.0].requires_grad;
                let need_b = ins.get(2).map(|b| self.nodes[b.0].requires_grad) == Some(true);
                if need_w || need_b {
                    let (dw, db) = conv2d_weight_grad(g, self.value(x), *pad);
                    if need_w {
                        self.accumulate(grads, wid, dw);
                    }
                    if need_b {
                        self.accumulate(grads, ins[2], db);
                    }
                }
            }
            Op::Add => {
                self.accumulate(grads, ins[0], g.clone());
                self.accumulate(grads, ins[1], g.clone());
            }
            Op::Sub => {
                self.accumulate(grads, ins[0], g.clone());
                self.accumulate(grads, ins[1], g.map(|v| -v));
            }
            Op::Hadamard => {
                if self.nodes[ins[0].0].requires_grad {
                    self.accumulate(grads, ins[0], g.zip_map(self.value(ins[1]), |a, b| a * b)?);
                }
                if self.nodes[ins[1].0].requires_grad {
                    self.accumulate(grads, ins[1], g.zip_map(self.value(ins[0]), |a, b| a * b)?);
                }
            }
            Op::ScalarMul { c } => {
                let c = *c;
                self.accumulate(grads, ins[0], g.map(|v| c * v));
            }
            Op::Tanh => {
                let y = &node.value;
                self.accumulate(grads, ins[0], g.zip_map(y, |gv, yv| gv * (1.0 - yv * yv))?);
            }
            Op::Sigmoid => {
                let y = &node.value;
                self.accumulate(grads, ins[0], g.zip_map(y, |gv, yv| gv * yv * (1.0 - yv))?);
            }
            Op::Relu => {
                let x = self.value(ins[0]);
                self.accumulate(
                    grads,
                    ins[0],
                    g.zip_map(x, |gv, xv| if xv > 0.0 { gv } else { 0.0 })?,
                );
            }
            Op::Recip => {
                let y = &node.value;
                self.accumulate(grads, ins[0], g.zip_map(y, |gv, yv| -gv * yv * yv)?);
            }
            Op::ChannelLinear => {
                let (x, wid, bid) = (ins[0], ins[1], ins[2]);
                let xf = self.value(x);
                let wf = self.value(wid);
                let in_ch = xf.channels();
                let out_ch = wf.height();
                let n = xf.pixels();
                if self.nodes[x.0].requires_grad {
                    let mut dx = Field::zeros(in_ch, xf.height(), xf.width());
                    for i in 0..in_ch {
                        let dst = &mut dx.data_mut()[i * n..(i + 1) * n];
                        for o in 0..out_ch {
                            let w = wf.data()[o * in_ch + i];
                            let gr = &g.data()[o * n..(o + 1) * n];
                            for (d, &gv) in dst.iter_mut().zip(gr) {
                                *d += w * gv;
                            }
                        }
                    }
                    self.accumulate(grads, x, dx);
                }
                if self.nodes[wid.0].requires_grad {
                    let mut dw = Field::zeros(1, out_ch, in_ch);
                    for o in 0..out_ch {
                        let gr = &g.data()[o * n..(o + 1) * n];
                        for i in 0..in_ch {
                            let xr = &xf.data()[i * n..(i + 1) * n];
                            let mut acc = 0.0;
                            for (gv, xv) in gr.iter().zip(xr) {
                                acc += gv * xv;
                            }
                            dw.data_mut()[o * in_ch + i] = acc;
                        }
                    }
                    self.accumulate(grads, wid, dw);
                }
                if self.nodes[bid.0].requires_grad {
                    let mut db = Field::zeros(out_ch, 1, 1);
                    for o in 0..out_ch {
                        db.data_mut()[o] = g.data()[o * n..(o + 1) * n].iter().sum();
                    }
                    self.accumulate(grads, bid, db);
                }
            }
            Op::TimeStack { time } => {
                let c = node.value.channels() / time;
                let n = node.value.pixels();
                for (t, &frame) in ins.iter().enumerate() {
                    if !self.nodes[frame.0].requires_grad {
                        continue;
                    }
                    let fshape = self.value(frame).shape();
                    let start = t * c * n;
                    let data = g.data()[start..start + c * n].to_vec();
                    self.accumulate(grads, frame, Field::from_vec(fshape.0, fshape.1, fshape.2, data)?);
                }
            }
            Op::TimeMax { time, argmax } => {
                let sf = self.value(ins[0]);
                let c = sf.channels() / time;
                let n = sf.pixels();
                let mut dx = Field::zeros(sf.channels(), sf.height(), sf.width());
                for ch in 0..c {
                    for p in 0..n {
                        let t = argmax[ch * n + p] as usize;
                        dx.data_mut()[(t * c + ch) * n + p] = g.data()[ch * n + p];
                    }
                }
                self.accumulate(grads, ins[0], dx);
            }
            Op::TimeMean { time } => {
                let sf = self.value(ins[0]);
                let c = sf.channels() / time;
                let n = sf.pixels();
                let inv = 1.0 / *time as Real;
                let mut dx = Field::zeros(sf.channels(), sf.height(), sf.width());
                for t in 0..*time {
                    for ch in 0..c {
                        let dst = &mut dx.data_mut()[(t * c + ch) * n..(t * c + ch + 1) * n];
                        let gr = &g.data()[ch * n..(ch + 1) * n];
                        for (d, &gv) in dst.iter_mut().zip(gr) {
                            *d = gv * inv;
                        }
                    }
                }
                self.accumulate(grads, ins[0], dx);
            }
            Op::TimeSliceLast { time } => {
                let sf = self.value(ins[0]);
                let c = sf.channels() / time;
                let n = sf.pixels();
                let mut dx = Field::zeros(sf.channels(), sf.height(), sf.width());
                let start = (time - 1) * c * n;
                dx.data_mut()[start..start + c * n].copy_from_slice(g.data());
                self.accumulate(grads, ins[0], dx);
            }
            Op::TimeLinear { time, rows } => {
                let (stack, proj) = (ins[0], ins[1]);
                let sf = self.value(stack);
                let pf = self.value(proj);
                let c = sf.channels() / time;
                let n = sf.pixels();
                if self.nodes[stack.0].requires_grad {
                    let mut dx = Field::zeros(sf.channels(), sf.height(), sf.width());
                    for t in 0..*time {
                        for r in 0..*rows {
                            let coef = pf.data()[r * time + t];
                            for ch in 0..c {
                                let dst =
                                    &mut dx.data_mut()[(t * c + ch) * n..(t * c + ch + 1) * n];
                                let gr = &g.data()[(r * c + ch) * n..(r * c + ch + 1) * n];
                                for (d, &gv) in dst.iter_mut().zip(gr) {
                                    *d += coef * gv;
                                }
                            }
                        }
                    }
                    self.accumulate(grads, stack, dx);
                }
                if self.nodes[proj.0].requires_grad {
                    let mut dp = Field::zeros(1, *rows, *time);
                    for r in 0..*rows {
                        for t in 0..*time {
                            let mut acc = 0.0;
                            for ch in 0..c {
                                let sr = &sf.data()[(t * c + ch) * n..(t * c + ch + 1) * n];
                                let gr = &g.data()[(r * c + ch) * n..(r * c + ch + 1) * n];
                                for (sv, gv) in sr.iter().zip(gr) {
                                    acc += sv * gv;
                                }
                            }
                            dp.data_mut()[r * time + t] = acc;
                        }
                    }
                    self.accumulate(grads, proj, dp);
                }
            }
            Op::DftAmplitude { time } => {
                let sf = self.value(ins[0]);
                let c = sf.channels() / time;
                let n = sf.pixels();
                let bins = time / 2;
                let (cos_t, sin_t) = dft_tables(*time, bins);
                let mut dx = Field::zeros(sf.channels(), sf.height(), sf.width());
                for ch in 0..c {
                    for p in 0..n {
                        for k in 1..=bins {
                            let mut re = 0.0;
                            let mut im = 0.0;
                            for t in 0..*time {
                                let v = sf.data()[(t * c + ch) * n + p];
                                re += v * cos_t[(k - 1) * time + t];
                                im += v * sin_t[(k - 1) * time + t];
                            }
                            let sq = re * re + im * im;
                            if sq == 0.0 {
                                continue; // subgradient 0 at the cone point
                            }
                            let denom = (sq.max(1e-12)).sqrt();
                            let gv = g.data()[((k - 1) * c + ch) * n + p];
                            let cr = gv * re / denom;
                            let ci = gv * im / denom;
                            for t in 0..*time {
                                dx.data_mut()[(t * c + ch) * n + p] +=
                                    cr * cos_t[(k - 1) * time + t] + ci * sin_t[(k - 1) * time + t];
                            }
                        }
                    }
                }
                self.accumulate(grads, ins[0], dx);
            }
            Op::MaxPool2 { argmax } => {
                let sf = self.value(ins[0]);
                let mut dx = Field::zeros(sf.channels(), sf.height(), sf.width());
                for (o, &src_i) in argmax.iter().enumerate() {
                    dx.data_mut()[src_i as usize] += g.data()[o];
                }
                self.accumulate(grads, ins[0], dx);
            }
            Op::UpsampleNearest2 => {
                let sf = self.value(ins[0]);
                let (c, h, w) = sf.shape();
                let mut dx = Field::zeros(c, h, w);
                for ch in 0..c {
                    let gr = g.channel(ch);
                    let dst = dx.channel_mut(ch);
                    for y in 0..h {
                        for x in 0..w {
                            dst[y * w + x] = gr[(2 * y) * 2 * w + 2 * x]
                                + gr[(2 * y) * 2 * w + 2 * x + 1]
                                + gr[(2 * y + 1) * 2 * w + 2 * x]
                                + gr[(2 * y + 1) * 2 * w + 2 * x + 1];
                        }
                    }
                }
                self.accumulate(grads, ins[0], dx);
            }
            Op::ConcatChannels => {
                let n = node.value.pixels();
                let mut offset = 0;
                for &part in ins {
                    let pf = self.value(part);
                    let pc = pf.channels();
                    if self.nodes[part.0].requires_grad {
                        let data = g.data()[offset * n..(offset + pc) * n].to_vec();
                        self.accumulate(
                            grads,
                            part,
                            Field::from_vec(pc, pf.height(), pf.width(), data)?,
                        );
                    }
                    offset += pc;
                }
            }
            Op::SoftmaxXent { labels } => {
                let lf = self.value(ins[0]);
                let (classes, h, w) = lf.shape();
                let n = h * w;
                let scale = g.data()[0] / n as Real;
                let mut dx = Field::zeros(classes, h, w);
                for p in 0..n {
                    let (lse, _max) = logsumexp_pixel(lf, p);
                    for cl in 0..classes {
                        let prob = (lf.data()[cl * n + p] - lse).exp();
                        let onehot = if labels[p] as usize == cl { 1.0 } else { 0.0 };
                        dx.data_mut()[cl * n + p] = scale * (prob - onehot);
                    }
                }
                self.accumulate(grads, ins[0], dx);
            }
            Op::ReduceSum => {
                let gv = g.data()[0];
                let sf = self.value(ins[0]);
                self.accumulate(grads, ins[0], sf.map(|_| gv));
            }
        }
        Ok(())
    }
}

/// log(sum(exp(logits[:, p]))) with max subtraction; returns (lse, max).
fn logsumexp_pixel(logits: &Field, p: usize) -> (Real, Real) {
    let n = logits.pixels();
    let classes = logits.channels();
    let mut m = Real::NEG_INFINITY;
    for cl in 0..classes {
        m = m.max(logits.data()[cl * n + p]);
    }
    let mut s = 0.0;
    for cl in 0..classes {
        s += (logits.data()[cl * n + p] - m).exp();
    }
    (m + s.ln(), m)
}

/// Cosine/sine projection tables for bins 1..=B: row k-1 holds
/// cos(2*pi*k*t/T) and sin(2*pi*k*t/T) for t = 0..T.
pub fn dft_tables(time: usize, bins: usize) -> (Vec<Real>, Vec<Real>) {
    let mut cos_t = vec![0.0; bins * time];
    let mut sin_t = vec![0.0; bins * time];
    for k in 1..=bins {
        for t in 0..time {
            let theta = 2.0 * std::f64::consts::PI * (k as f64) * (t as f64) / time as f64;
            cos_t[(k - 1) * time + t] = theta.cos() as Real;
            sin_t[(k - 1) * time + t] = theta.sin() as Real;
        }
    }
    (cos_t, sin_t)
}

/// Central-finite-difference check of a scalar function built on a tape.
///
/// `f` receives leaf ids for `params` (in order, all trainable) and returns
/// the scalar loss id. Returns the maximum over sampled coordinates of
/// `|analytic - numeric| / (|analytic| + |numeric| + 1e-12)`.
///
/// Requires the 64-bit precision grade and `eps > 0`.
pub fn grad_check<F>(
    f: F,
    params: &[Field],
    eps: Real,
    max_coords_per_param: usize,
    seed: u64,
) -> Result<Real>
where
    F: Fn(&mut Tape, &[VarId]) -> Result<VarId>,
{
    if PRECISION_BYTES != 8 {
        return Err(WaveError::InvalidArgument(
            "grad_check requires the 64-bit precision grade".into(),
        ));
    }
    if !(eps > 0.0) {
        return Err(WaveError::InvalidArgument("grad_check needs eps > 0".into()));
    }

    let analytic: Vec<Field> = {
        let mut tape = Tape::new();
        let ids: Vec<VarId> = params.iter().map(|p| tape.leaf(p.clone(), true)).collect();
        let loss = f(&mut tape, &ids)?;
        if !tape.value(loss).data()[0].is_finite() {
            return Err(WaveError::NonFinite("grad_check loss".into()));
        }
        let grads = tape.backward(loss)?;
        ids.iter()
            .zip(params)
            .map(|(&id, p)| grads.get_or_zeros(id, p.shape()))
            .collect()
    };

    // Deterministic coordinate sampling.
    let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
    let mut next_u64 = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        state
    };

    let mut max_rel = 0.0;
    let mut work: Vec<Field> = params.to_vec();
    for (pi, p) in params.iter().enumerate() {
        let len = p.len();
        let coords: Vec<usize> = if len <= max_coords_per_param {
            (0..len).collect()
        } else {
            (0..max_coords_per_param).map(|_| (next_u64() % len as u64) as usize).collect()
        };
        for &ci in &coords {
            let orig = p.data()[ci];
            work[pi].data_mut()[ci] = orig + eps;
            let plus = {
                let mut tape = Tape::new();
                let ids: Vec<VarId> = work.iter().map(|q| tape.leaf(q.clone(), false)).collect();
                let loss = f(&mut tape, &ids)?;
                tape.value(loss).data()[0]
            };
            work[pi].data_mut()[ci] = orig - eps;
            let minus = {
                let mut tape = Tape::new();
                let ids: Vec<VarId> = work.iter().map(|q| tape.leaf(q.clone(), false)).collect();
                let loss = f(&mut tape, &ids)?;
                tape.value(loss).data()[0]
            };
            work[pi].data_mut()[ci] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(WaveError::NonFinite("grad_check finite difference".into()));
            }
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[pi].data()[ci];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs() + 1e-12);
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    Ok(max_rel)
}
