//! Checkpoints: named tensors packed as WFT1 records in one blob, plus a
//! JSON manifest mapping name -> (shape, precision, byte offset, file). The
//! manifest also carries the experiment config and seed so the model can be
//! reconstructed and the tensors poured back in.

use std::io::Cursor;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Result, WaveError};
use crate::field::PRECISION_BYTES;
use crate::models::Segmenter;
use crate::wft::{read_wft1, write_wft1};

pub const BLOB_FILE: &str = "params.bin";
pub const MANIFEST_FILE: &str = "checkpoint.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<u32>,
    pub precision: u8,
    pub offset: u64,
    pub len_bytes: u64,
    pub file: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub epoch: usize,
    pub val_loss: f64,
    pub tensors: Vec<TensorEntry>,
}

pub fn save_checkpoint(
    dir: &Path,
    model: &Segmenter,
    config: &ExperimentConfig,
    seed: u64,
    epoch: usize,
    val_loss: f64,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut blob: Vec<u8> = Vec::new();
    let mut tensors = Vec::new();
    for (name, field) in model.named_params() {
        let offset = blob.len() as u64;
        let (c, h, w) = field.shape();
        let dims = [c as u32, h as u32, w as u32];
        write_wft1(&mut blob, &dims, field.data())?;
        tensors.push(TensorEntry {
            name,
            shape: dims.to_vec(),
            precision: PRECISION_BYTES as u8,
            offset,
            len_bytes: blob.len() as u64 - offset,
            file: BLOB_FILE.to_string(),
        });
    }
    std::fs::write(dir.join(BLOB_FILE), &blob)?;
    let manifest = CheckpointManifest {
        config: config.clone(),
        seed,
        epoch,
        val_loss,
        tensors,
    };
    std::fs::write(
        dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<(Segmenter, CheckpointManifest)> {
    let manifest: CheckpointManifest =
        serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
    let blob = std::fs::read(dir.join(BLOB_FILE))?;
    let mut model = manifest.config.build_model(manifest.seed)?;
    {
        let mut params = model.named_params_mut();
        if params.len() != manifest.tensors.len() {
            return Err(WaveError::Format(format!(
                "checkpoint has {} tensors, model expects {}",
                manifest.tensors.len(),
                params.len()
            )));
        }
        for (entry, (name, field)) in manifest.tensors.iter().zip(params.iter_mut()) {
            if &entry.name != name {
                return Err(WaveError::Format(format!(
                    "checkpoint tensor '{}' does not match parameter '{}'",
                    entry.name, name
                )));
            }
            let start = entry.offset as usize;
            let end = start + entry.len_bytes as usize;
            let slice = blob.get(start..end).ok_or_else(|| {
                WaveError::Format(format!("checkpoint blob truncated at '{}'", entry.name))
            })?;
            let (dims, data) = read_wft1(Cursor::new(slice))?;
            if dims != entry.shape {
                return Err(WaveError::Format(format!(
                    "tensor '{}' dims {:?} != manifest {:?}",
                    entry.name, dims, entry.shape
                )));
            }
            if data.len() != field.len() {
                return Err(WaveError::Format(format!(
                    "tensor '{}' has {} values, parameter wants {}",
                    entry.name,
                    data.len(),
                    field.len()
                )));
            }
            field.data_mut().copy_from_slice(&data);
        }
    }
    Ok((model, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::desk_polygons_config;

    #[test]
    fn save_load_round_trip_is_bitwise() {
        let mut cfg = desk_polygons_config();
        cfg.model.steps = Some(8);
        cfg.model.mlp_hidden = vec![8];
        let model = cfg.build_model(3).unwrap();
        let dir = std::env::temp_dir().join("wavefield-ckpt-test");
        let _ = std::fs::remove_dir_all(&dir);
        save_checkpoint(&dir, &model, &cfg, 3, 5, 0.25).unwrap();
        let (loaded, manifest) = load_checkpoint(&dir).unwrap();
        assert_eq!(manifest.epoch, 5);
        assert_eq!(manifest.seed, 3);
        let a = model.named_params();
        let b = loaded.named_params();
        assert_eq!(a.len(), b.len());
        for ((na, fa), (nb, fb)) in a.iter().zip(b.iter()) {
            assert_eq!(na, nb);
            assert_eq!(
                fa.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                fb.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                "tensor {na} differs"
            );
        }
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn modified_tensor_changes_loaded_model() {
        let mut cfg = desk_polygons_config();
        cfg.model.steps = Some(8);
        cfg.model.mlp_hidden = vec![8];
        let mut model = cfg.build_model(3).unwrap();
        // mutate one parameter post-init, checkpoint must carry it
        model.named_params_mut()[0].1.data_mut()[0] = 123.5;
        let dir = std::env::temp_dir().join("wavefield-ckpt-test2");
        let _ = std::fs::remove_dir_all(&dir);
        save_checkpoint(&dir, &model, &cfg, 3, 0, 1.0).unwrap();
        let (loaded, _) = load_checkpoint(&dir).unwrap();
        assert_eq!(loaded.named_params()[0].1.data()[0], 123.5);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
