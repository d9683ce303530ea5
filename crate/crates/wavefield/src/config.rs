//! Experiment configuration: TOML with flat sections per subsystem, strict
//! (unknown keys rejected), dotted-key overrides, and builders that turn a
//! config into a model and dataset splits.

use serde::{Deserialize, Serialize};

use crate::data::{
    compose_multimnist, gen_polygons, gen_tetrominoes, load_dataset, load_mnist_idx,
    load_mnist_native, split, DatasetSplits, MultiMnistSpec, PolygonsSpec, TetrominoesSpec,
};
use crate::error::{Result, WaveError};
use crate::field::Real;
use crate::models::{
    init_convlstm, init_nwm, init_readout, init_unet, CnnParams, ConvLstmConfig, GammaInit,
    NwmConfig, ReadoutKind, Segmenter,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run: RunSection,
    pub model: ModelSection,
    pub data: DataSection,
    #[serde(default)]
    pub spectral: SpectralSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default)]
    pub seed: u64,
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr: Real,
    /// Validation cadence in epochs.
    #[serde(default = "default_one")]
    pub eval_every: usize,
    #[serde(default)]
    pub out_dir: Option<String>,
}

fn default_batch() -> usize {
    64
}
fn default_lr() -> Real {
    0.001
}
fn default_one() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// nwm | convlstm | cnn | unet
    pub kind: String,
    #[serde(default = "default_readout")]
    pub readout: String,
    #[serde(default = "default_hidden")]
    pub hidden_channels: usize,
    /// Rollout steps; defaults to 100 (nwm) or 20 (convlstm).
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default = "default_dt")]
    pub dt: Real,
    #[serde(default = "default_width")]
    pub encoder_width: usize,
    /// Hidden widths of the readout MLP.
    #[serde(default = "default_mlp")]
    pub mlp_hidden: Vec<usize>,
    #[serde(default = "default_cnn_depth")]
    pub cnn_depth: usize,
    #[serde(default = "default_cnn_features")]
    pub cnn_features: usize,
    #[serde(default = "default_unet_base")]
    pub unet_base: usize,
    /// identity | ones
    #[serde(default = "default_gamma")]
    pub gamma_init: String,
    /// conv-LSTM input-feedback channel count.
    #[serde(default = "default_width")]
    pub x_channels: usize,
}

fn default_readout() -> String {
    "linear".into()
}
fn default_hidden() -> usize {
    2
}
fn default_dt() -> Real {
    0.1
}
fn default_width() -> usize {
    16
}
fn default_mlp() -> Vec<usize> {
    vec![256, 256, 256]
}
fn default_cnn_depth() -> usize {
    2
}
fn default_cnn_features() -> usize {
    100
}
fn default_unet_base() -> usize {
    2
}
fn default_gamma() -> String {
    "identity".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// polygons | tetrominoes | mnist | multimnist
    pub dataset: String,
    /// Load a directory written by `gen-data` instead of synthesizing.
    #[serde(default)]
    pub dir: Option<String>,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_canvas")]
    pub canvas: usize,
    /// Polygons: number of shape classes starting at triangles.
    #[serde(default = "default_shape_classes")]
    pub shape_classes: usize,
    #[serde(default = "default_radius_min")]
    pub radius_min: f64,
    #[serde(default = "default_radius_max")]
    pub radius_max: f64,
    #[serde(default = "default_one")]
    pub shapes_min: usize,
    #[serde(default = "default_shapes_max")]
    pub shapes_max: usize,
    #[serde(default = "default_one")]
    pub blocks_min: usize,
    #[serde(default = "default_blocks_max")]
    pub blocks_max: usize,
    #[serde(default = "default_len_min")]
    pub len_min: usize,
    #[serde(default = "default_len_max")]
    pub len_max: usize,
    #[serde(default)]
    pub mnist_images: Option<String>,
    #[serde(default)]
    pub mnist_labels: Option<String>,
    #[serde(default = "default_one")]
    pub digits_min: usize,
    #[serde(default = "default_digits_max")]
    pub digits_max: usize,
}

fn default_canvas() -> usize {
    32
}
fn default_shape_classes() -> usize {
    2
}
fn default_radius_min() -> f64 {
    5.0
}
fn default_radius_max() -> f64 {
    8.0
}
fn default_shapes_max() -> usize {
    2
}
fn default_blocks_max() -> usize {
    5
}
fn default_len_min() -> usize {
    14
}
fn default_len_max() -> usize {
    28
}
fn default_digits_max() -> usize {
    4
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralSection {
    /// Emit wavelength/loss rows every N epochs (0 disables).
    pub hook_every: usize,
    pub probe_samples: usize,
    pub threshold: Real,
    /// Timestep for wavelength statistics; default mid-rollout (T/2).
    pub timestep: Option<usize>,
    pub channel: usize,
}

impl Default for SpectralSection {
    fn default() -> Self {
        SpectralSection {
            hook_every: 1,
            probe_samples: 8,
            threshold: 1.5,
            timestep: None,
            channel: 0,
        }
    }
}

impl ExperimentConfig {
    /// Strict parse: any unknown key anywhere is an error.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| WaveError::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| WaveError::Config(e.to_string()))
    }

    /// Parse with dotted-key overrides (`run.seed=3`, `model.kind=cnn`).
    /// Overrides are applied to the raw TOML value before strict
    /// deserialization, so misspelled override keys fail too.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut value: toml::Value =
            toml::from_str(text).map_err(|e| WaveError::Config(e.to_string()))?;
        for ov in overrides {
            let (key, raw) = ov.split_once('=').ok_or_else(|| {
                WaveError::Config(format!("override '{ov}' is not of the form key=value"))
            })?;
            apply_override(&mut value, key.trim(), raw.trim())?;
        }
        value
            .try_into()
            .map_err(|e| WaveError::Config(e.to_string()))
    }

    /// Rollout steps resolved per model kind.
    pub fn steps(&self) -> usize {
        self.model.steps.unwrap_or(match self.model.kind.as_str() {
            "convlstm" => 20,
            _ => 100,
        })
    }

    pub fn class_count(&self) -> usize {
        match self.data.dataset.as_str() {
            "polygons" => self.data.shape_classes + 1,
            "tetrominoes" => 7,
            _ => 11,
        }
    }

    pub fn image_channels(&self) -> usize {
        match self.data.dataset.as_str() {
            "tetrominoes" => 3,
            _ => 1,
        }
    }

    /// Deterministic model construction for a run seed.
    pub fn build_model(&self, seed: u64) -> Result<Segmenter> {
        let classes = self.class_count();
        let in_ch = self.image_channels();
        let steps = self.steps();
        let readout_kind = ReadoutKind::parse(&self.model.readout)?;
        // independent init streams for the body and the readout
        let body_seed = seed;
        let readout_seed = seed ^ 0x5eed_4ead_0000_0001;
        match self.model.kind.as_str() {
            "nwm" => {
                let gamma_init = match self.model.gamma_init.as_str() {
                    "identity" => GammaInit::IdentityFn,
                    "ones" => GammaInit::Ones,
                    other => {
                        return Err(WaveError::Config(format!(
                            "unknown gamma_init '{other}' (identity | ones)"
                        )))
                    }
                };
                let cfg = NwmConfig {
                    in_channels: in_ch,
                    hidden_channels: self.model.hidden_channels,
                    encoder_width: self.model.encoder_width,
                    steps,
                    dt: self.model.dt,
                    gamma_init,
                };
                let params = init_nwm(&cfg, body_seed);
                let readout = init_readout(
                    readout_kind,
                    cfg.hidden_channels,
                    steps,
                    &self.model.mlp_hidden,
                    classes,
                    readout_seed,
                );
                Ok(Segmenter::Nwm { params, readout })
            }
            "convlstm" => {
                let cfg = ConvLstmConfig {
                    in_channels: in_ch,
                    hidden_channels: self.model.hidden_channels,
                    x_channels: self.model.x_channels,
                    encoder_width: self.model.encoder_width,
                    steps,
                };
                let params = init_convlstm(&cfg, body_seed);
                let readout = init_readout(
                    readout_kind,
                    cfg.hidden_channels,
                    steps,
                    &self.model.mlp_hidden,
                    classes,
                    readout_seed,
                );
                Ok(Segmenter::ConvLstm { params, readout })
            }
            "cnn" => Ok(Segmenter::Cnn(CnnParams::init(
                self.model.cnn_depth,
                in_ch,
                self.model.encoder_width,
                self.model.cnn_features,
                &self.model.mlp_hidden,
                classes,
                body_seed,
            ))),
            "unet" => Ok(Segmenter::UNet(init_unet(
                self.model.unet_base,
                in_ch,
                classes,
                body_seed,
            ))),
            other => Err(WaveError::Config(format!(
                "unknown model kind '{other}' (nwm | convlstm | cnn | unet)"
            ))),
        }
    }

    /// Synthesize (or load) the dataset and split it.
    pub fn build_splits(&self) -> Result<DatasetSplits> {
        let d = &self.data;
        let samples = if let Some(dir) = &d.dir {
            load_dataset(std::path::Path::new(dir))?.0
        } else {
            let total = d.train + d.val + d.test;
            match d.dataset.as_str() {
                "polygons" => gen_polygons(&PolygonsSpec {
                    count: total,
                    canvas: d.canvas,
                    shapes_min: d.shapes_min,
                    shapes_max: d.shapes_max,
                    edges_min: 3,
                    edges_max: 3 + d.shape_classes - 1,
                    radius_min: d.radius_min,
                    radius_max: d.radius_max,
                    seed: d.seed,
                })?,
                "tetrominoes" => gen_tetrominoes(&TetrominoesSpec {
                    count: total,
                    canvas: d.canvas,
                    blocks_min: d.blocks_min,
                    blocks_max: d.blocks_max,
                    len_min: d.len_min,
                    len_max: d.len_max,
                    seed: d.seed,
                })?,
                "mnist" => {
                    let (imgs, labs) = self.mnist_paths()?;
                    load_mnist_idx(&imgs, &labs)?
                }
                "multimnist" => {
                    let (imgs, labs) = self.mnist_paths()?;
                    let native = load_mnist_native(&imgs, &labs)?;
                    compose_multimnist(
                        &MultiMnistSpec {
                            count: total,
                            canvas: d.canvas.max(128),
                            digit_size: 42,
                            digits_min: d.digits_min,
                            digits_max: d.digits_max,
                            seed: d.seed,
                        },
                        &native,
                    )?
                }
                other => {
                    return Err(WaveError::Config(format!(
                        "unknown dataset '{other}' (polygons | tetrominoes | mnist | multimnist)"
                    )))
                }
            }
        };
        split(samples, (d.train, d.val, d.test), d.seed)
    }

    fn mnist_paths(&self) -> Result<(std::path::PathBuf, std::path::PathBuf)> {
        match (&self.data.mnist_images, &self.data.mnist_labels) {
            (Some(i), Some(l)) => Ok((i.into(), l.into())),
            _ => Err(WaveError::Config(
                "mnist datasets need data.mnist_images and data.mnist_labels".into(),
            )),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !matches!(
            self.model.kind.as_str(),
            "nwm" | "convlstm" | "cnn" | "unet"
        ) {
            problems.push(format!("model.kind '{}' unknown", self.model.kind));
        }
        if ReadoutKind::parse(&self.model.readout).is_err() {
            problems.push(format!("model.readout '{}' unknown", self.model.readout));
        }
        if self.steps() % 2 != 0 {
            problems.push("model.steps must be even (FFT/Linear readouts use T/2 bins)".into());
        }
        if self.run.batch_size == 0 {
            problems.push("run.batch_size must be > 0".into());
        }
        if self.data.train == 0 {
            problems.push("data.train must be > 0".into());
        }
        if !matches!(
            self.data.dataset.as_str(),
            "polygons" | "tetrominoes" | "mnist" | "multimnist"
        ) {
            problems.push(format!("data.dataset '{}' unknown", self.data.dataset));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(WaveError::Config(problems.join("; ")))
        }
    }
}

fn apply_override(value: &mut toml::Value, key: &str, raw: &str) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.is_empty() {
        return Err(WaveError::Config(format!("empty override key '{key}'")));
    }
    let mut cur = value;
    for part in &parts[..parts.len() - 1] {
        cur = cur
            .as_table_mut()
            .ok_or_else(|| WaveError::Config(format!("override '{key}': not a table")))?
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    let leaf = parts.last().unwrap();
    let parsed: toml::Value = if let Ok(b) = raw.parse::<bool>() {
        toml::Value::Boolean(b)
    } else if let Ok(i) = raw.parse::<i64>() {
        toml::Value::Integer(i)
    } else if let Ok(f) = raw.parse::<f64>() {
        toml::Value::Float(f)
    } else {
        toml::Value::String(raw.to_string())
    };
    cur.as_table_mut()
        .ok_or_else(|| WaveError::Config(format!("override '{key}': not a table")))?
        .insert(leaf.to_string(), parsed);
    Ok(())
}

/// Desk-scale default experiment: 32x32 polygons (triangles vs squares),
/// NWM-Linear with T = 64 and 2 hidden channels.
pub fn desk_polygons_config() -> ExperimentConfig {
    ExperimentConfig {
        run: RunSection {
            seed: 0,
            epochs: 16,
            batch_size: 16,
            lr: 0.001,
            eval_every: 1,
            out_dir: None,
        },
        model: ModelSection {
            kind: "nwm".into(),
            readout: "linear".into(),
            hidden_channels: 2,
            steps: Some(64),
            dt: 0.1,
            encoder_width: 16,
            mlp_hidden: vec![32, 32, 32, 32, 32],
            cnn_depth: 2,
            cnn_features: 100,
            unet_base: 2,
            gamma_init: "identity".into(),
            x_channels: 16,
        },
        data: DataSection {
            dataset: "polygons".into(),
            dir: None,
            train: 192,
            val: 48,
            test: 64,
            seed: 1,
            canvas: 32,
            shape_classes: 2,
            radius_min: 5.0,
            radius_max: 8.0,
            shapes_min: 1,
            shapes_max: 2,
            blocks_min: 1,
            blocks_max: 5,
            len_min: 14,
            len_max: 28,
            mnist_images: None,
            mnist_labels: None,
            digits_min: 1,
            digits_max: 4,
        },
        spectral: SpectralSection::default(),
    }
}
