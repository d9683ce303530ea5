//! One enum over every trainable architecture, with a uniform
//! forward/parameter surface for the trainer, checkpoints, and the CLI.

use super::{
    cnn_forward, convlstm_rollout, nwm_rollout, unet_forward, CnnParams, ConvLstmParams,
    NwmParams, Readout, Rollout, UNetParams,
};
use crate::autodiff::{Tape, VarId};
use crate::error::Result;
use crate::field::Field;

#[derive(Clone)]
pub enum Segmenter {
    Nwm {
        params: NwmParams,
        readout: Readout,
    },
    ConvLstm {
        params: ConvLstmParams,
        readout: Readout,
    },
    Cnn(CnnParams),
    UNet(UNetParams),
}

impl Segmenter {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Segmenter::Nwm { .. } => "nwm",
            Segmenter::ConvLstm { .. } => "convlstm",
            Segmenter::Cnn(_) => "cnn",
            Segmenter::UNet(_) => "unet",
        }
    }

    /// Bind parameters and run the forward pass; returns per-pixel class
    /// logits plus the bound parameter ids in `named_params()` order.
    pub fn forward(&self, tape: &mut Tape, image: &Field) -> Result<(VarId, Vec<VarId>)> {
        let x = tape.constant(image.clone());
        match self {
            Segmenter::Nwm { params, readout } => {
                let (bound, mut ids) = params.bind(tape);
                let (rbound, rids) = readout.bind(tape);
                ids.extend(rids);
                let traj = nwm_rollout(tape, params, &bound, x)?;
                let logits = readout.apply(tape, &rbound, &traj.h)?;
                Ok((logits, ids))
            }
            Segmenter::ConvLstm { params, readout } => {
                let (bound, mut ids) = params.bind(tape);
                let (rbound, rids) = readout.bind(tape);
                ids.extend(rids);
                let frames = convlstm_rollout(tape, params, &bound, x)?;
                let logits = readout.apply(tape, &rbound, &frames)?;
                Ok((logits, ids))
            }
            Segmenter::Cnn(params) => {
                let (bound, ids) = params.bind(tape);
                let logits = cnn_forward(tape, &bound, x)?;
                Ok((logits, ids))
            }
            Segmenter::UNet(params) => {
                let (bound, ids) = params.bind(tape);
                let logits = unet_forward(tape, &bound, x)?;
                Ok((logits, ids))
            }
        }
    }

    /// Hidden-state rollout for analysis; None for feed-forward models.
    pub fn rollout(&self, image: &Field) -> Result<Option<Rollout>> {
        let mut tape = Tape::new();
        let x = tape.constant(image.clone());
        match self {
            Segmenter::Nwm { params, .. } => {
                let (bound, _) = params.bind(&mut tape);
                let traj = nwm_rollout(&mut tape, params, &bound, x)?;
                let frames = traj.h.iter().map(|&id| tape.value(id).clone()).collect();
                Ok(Some(Rollout { frames }))
            }
            Segmenter::ConvLstm { params, .. } => {
                let (bound, _) = params.bind(&mut tape);
                let ids = convlstm_rollout(&mut tape, params, &bound, x)?;
                let frames = ids.iter().map(|&id| tape.value(id).clone()).collect();
                Ok(Some(Rollout { frames }))
            }
            Segmenter::Cnn(_) | Segmenter::UNet(_) => Ok(None),
        }
    }

    pub fn named_params(&self) -> Vec<(String, &Field)> {
        match self {
            Segmenter::Nwm { params, readout } => {
                let mut out = params.named_params();
                out.extend(readout.named_params());
                out
            }
            Segmenter::ConvLstm { params, readout } => {
                let mut out = params.named_params();
                out.extend(readout.named_params());
                out
            }
            Segmenter::Cnn(params) => params.named_params(),
            Segmenter::UNet(params) => params.named_params(),
        }
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Field)> {
        match self {
            Segmenter::Nwm { params, readout } => {
                let mut out = params.named_params_mut();
                out.extend(readout.named_params_mut());
                out
            }
            Segmenter::ConvLstm { params, readout } => {
                let mut out = params.named_params_mut();
                out.extend(readout.named_params_mut());
                out
            }
            Segmenter::Cnn(params) => params.named_params_mut(),
            Segmenter::UNet(params) => params.named_params_mut(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, f)| f.len()).sum()
    }
}
