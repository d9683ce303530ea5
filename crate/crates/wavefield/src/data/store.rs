//! On-disk dataset layout: one WFT1 dump per tensor (image rank 3, mask rank
//! 2) plus a JSON manifest recording the generator provenance.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SegSample;
use crate::error::{Result, WaveError};
use crate::field::{Field, Real};
use crate::wft::{read_wft1_file, write_wft1_file};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub sample_count: usize,
    pub class_count: usize,
    pub seed: u64,
    /// Generator parameters, free-form but stable for a given generator.
    pub params: serde_json::Value,
}

pub fn save_dataset(dir: &Path, samples: &[SegSample], manifest: &DatasetManifest) -> Result<()> {
    if manifest.sample_count != samples.len() {
        return Err(WaveError::InvalidArgument(format!(
            "manifest says {} samples, got {}",
            manifest.sample_count,
            samples.len()
        )));
    }
    std::fs::create_dir_all(dir)?;
    for (i, s) in samples.iter().enumerate() {
        let (c, h, w) = s.image.shape();
        write_wft1_file(
            &dir.join(format!("sample_{i:05}.image.wft1")),
            &[c as u32, h as u32, w as u32],
            s.image.data(),
        )?;
        let mask_real: Vec<Real> = s.mask.iter().map(|&m| m as Real).collect();
        write_wft1_file(
            &dir.join(format!("sample_{i:05}.mask.wft1")),
            &[h as u32, w as u32],
            &mask_real,
        )?;
    }
    let json = serde_json::to_string_pretty(manifest)?;
    std::fs::write(dir.join("manifest.json"), json)?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<(Vec<SegSample>, DatasetManifest)> {
    let manifest: DatasetManifest =
        serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?;
    let mut samples = Vec::with_capacity(manifest.sample_count);
    for i in 0..manifest.sample_count {
        let (idims, idata) = read_wft1_file(&dir.join(format!("sample_{i:05}.image.wft1")))?;
        if idims.len() != 3 {
            return Err(WaveError::Format(format!(
                "sample {i}: image rank {} != 3",
                idims.len()
            )));
        }
        let image = Field::from_vec(
            idims[0] as usize,
            idims[1] as usize,
            idims[2] as usize,
            idata,
        )?;
        let (mdims, mdata) = read_wft1_file(&dir.join(format!("sample_{i:05}.mask.wft1")))?;
        if mdims.len() != 2
            || mdims[0] as usize != image.height()
            || mdims[1] as usize != image.width()
        {
            return Err(WaveError::Format(format!("sample {i}: mask dims mismatch")));
        }
        let mask = mdata
            .iter()
            .map(|&v| {
                let m = v as i64;
                if (0..256).contains(&m) && v == m as Real {
                    Ok(m as u8)
                } else {
                    Err(WaveError::Format(format!(
                        "sample {i}: non-integer mask value {v}"
                    )))
                }
            })
            .collect::<Result<Vec<u8>>>()?;
        let sample = SegSample {
            image,
            mask,
            class_count: manifest.class_count,
        };
        sample.validate()?;
        samples.push(sample);
    }
    Ok((samples, manifest))
}
