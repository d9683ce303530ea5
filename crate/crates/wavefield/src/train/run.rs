//! The training loop: shuffled mini-batches, Adam, per-epoch validation,
//! best-by-validation-loss checkpointing, and per-epoch wave-statistics
//! hooks for the spectral analysis.
//!
//! Determinism contract: for a fixed (config, seed) the metric history is
//! byte-identical across runs and worker counts. Per-sample gradients are
//! computed independently (possibly in parallel) and folded in sample order.

use rayon::prelude::*;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{aggregate, eval_sample, AdamState, MetricReport};
use crate::autodiff::Tape;
use crate::checkpoint::save_checkpoint;
use crate::config::ExperimentConfig;
use crate::data::{DatasetSplits, SegSample};
use crate::error::{Result, WaveError};
use crate::field::{Field, Real};
use crate::models::Segmenter;
use crate::spectral::{hilbert_phase, long_wavelength_fraction};

#[derive(Debug, Clone)]
pub struct HistoryRow {
    pub iteration: usize,
    pub epoch: usize,
    pub split: &'static str,
    pub loss: Real,
    pub acc: Real,
    pub iou: Real,
    pub fg_loss: Real,
    pub fg_acc: Real,
    pub fg_iou: Real,
}

#[derive(Debug, Clone)]
pub struct WaveRow {
    pub iteration: usize,
    pub long_wave_fraction: Real,
    pub loss: Real,
}

pub struct TrainOutcome {
    /// Best-by-validation-loss model.
    pub model: Segmenter,
    pub best_val_loss: Real,
    pub best_epoch: usize,
    pub history: Vec<HistoryRow>,
    pub wave_history: Vec<WaveRow>,
    pub test_report: MetricReport,
    pub iterations: usize,
}

/// Forward every sample, compute per-image metrics, mean per image.
pub fn evaluate(model: &Segmenter, samples: &[SegSample]) -> Result<MetricReport> {
    let per: Result<Vec<_>> = samples
        .par_iter()
        .map(|s| {
            let mut tape = Tape::new();
            let (logits, _) = model.forward(&mut tape, &s.image)?;
            eval_sample(tape.value(logits), &s.mask)
        })
        .collect();
    Ok(aggregate(&per?))
}

/// One optimizer step over a batch: mean loss and mean gradients, folded in
/// sample order. Returns the batch loss.
pub fn batch_step(
    model: &mut Segmenter,
    adam: &mut AdamState,
    batch: &[&SegSample],
) -> Result<Real> {
    let shapes: Vec<(usize, usize, usize)> = model
        .named_params()
        .iter()
        .map(|(_, f)| f.shape())
        .collect();
    let frozen: &Segmenter = model;
    let results: Result<Vec<(Real, Vec<Field>)>> = batch
        .par_iter()
        .map(|s| {
            let mut tape = Tape::new();
            let (logits, ids) = frozen.forward(&mut tape, &s.image)?;
            let loss = tape.softmax_xent(logits, &s.labels_u32())?;
            let loss_val = tape.value(loss).data()[0];
            let grads = tape.backward(loss)?;
            let gs: Vec<Field> = ids
                .iter()
                .zip(&shapes)
                .map(|(&id, &shape)| grads.get_or_zeros(id, shape))
                .collect();
            Ok((loss_val, gs))
        })
        .collect();
    let results = results?;
    let scale = 1.0 / batch.len() as Real;
    let mut mean_loss = 0.0;
    let mut acc: Vec<Field> = shapes
        .iter()
        .map(|&(c, h, w)| Field::zeros(c, h, w))
        .collect();
    for (loss, gs) in &results {
        mean_loss += loss * scale;
        for (a, g) in acc.iter_mut().zip(gs) {
            a.add_scaled(g, scale);
        }
    }
    if !mean_loss.is_finite() {
        return Err(WaveError::NonFinite("batch loss".into()));
    }
    let mut params = model.named_params_mut();
    adam.step(&mut params, &acc)?;
    Ok(mean_loss)
}

fn epoch_order(n: usize, run_seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mix = run_seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix));
    order
}

/// Mean long-wavelength fraction over the probe samples at the configured
/// timestep (mid-rollout by default). None for feed-forward models.
fn wave_fraction(
    model: &Segmenter,
    cfg: &ExperimentConfig,
    probe: &[SegSample],
) -> Result<Option<Real>> {
    let mut total = 0.0;
    let mut count = 0usize;
    for s in probe {
        let Some(roll) = model.rollout(&s.image)? else {
            return Ok(None);
        };
        let (t, _, _, _) = roll.dims();
        let phases = hilbert_phase(&roll, cfg.spectral.channel)?;
        let at = cfg.spectral.timestep.unwrap_or(t / 2).min(t - 1);
        let pf = &phases[at];
        match long_wavelength_fraction(
            &pf.wavelength_norm,
            Some(&pf.excluded),
            cfg.spectral.threshold,
        ) {
            Ok(f) => {
                total += f;
                count += 1;
            }
            // all-excluded probe (e.g. a dead rollout) contributes nothing
            Err(WaveError::InvalidArgument(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(if count == 0 {
        None
    } else {
        Some(total / count as Real)
    })
}

fn report_row(
    iteration: usize,
    epoch: usize,
    split: &'static str,
    rep: &MetricReport,
) -> HistoryRow {
    HistoryRow {
        iteration,
        epoch,
        split,
        loss: rep.loss,
        acc: rep.acc,
        iou: rep.iou,
        fg_loss: rep.fg_loss,
        fg_acc: rep.fg_acc,
        fg_iou: rep.fg_iou,
    }
}

/// Run the full loop; returns the best model and metric history. If
/// `cfg.run.out_dir` is set, writes the resolved config, history CSVs, the
/// best checkpoint and a final report under it. On divergence the last good
/// checkpoint is preserved on disk before the error propagates.
pub fn train_run(cfg: &ExperimentConfig, splits: &DatasetSplits) -> Result<TrainOutcome> {
    cfg.validate()?;
    let seed = cfg.run.seed;
    let out_dir = cfg.run.out_dir.as_ref().map(std::path::PathBuf::from);
    if let Some(dir) = &out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.resolved.toml"), cfg.to_toml_string()?)?;
    }

    let mut model = cfg.build_model(seed)?;
    let mut adam = AdamState::new(&model.named_params(), cfg.run.lr);
    let mut best = model.clone();
    let mut best_val_loss = Real::INFINITY;
    let mut best_epoch = 0usize;
    let mut history = Vec::new();
    let mut wave_history = Vec::new();
    let mut iteration = 0usize;

    let probe_count = cfg.spectral.probe_samples.min(splits.train.len());
    let probe = &splits.train[..probe_count];

    // Initial validation so even zero-epoch runs retain a defined best.
    if !splits.val.is_empty() {
        let rep = evaluate(&model, &splits.val)?;
        best_val_loss = rep.loss;
    }

    let result = (|| -> Result<()> {
        for epoch in 0..cfg.run.epochs {
            let order = epoch_order(splits.train.len(), seed, epoch);
            let mut epoch_loss = 0.0;
            let mut batches = 0usize;
            for chunk in order.chunks(cfg.run.batch_size) {
                let batch: Vec<&SegSample> = chunk.iter().map(|&i| &splits.train[i]).collect();
                let loss = batch_step(&mut model, &mut adam, &batch)?;
                epoch_loss += loss;
                batches += 1;
                iteration += 1;
            }
            let epoch_loss = epoch_loss / batches.max(1) as Real;

            if cfg.spectral.hook_every > 0 && (epoch + 1) % cfg.spectral.hook_every == 0 {
                if let Some(frac) = wave_fraction(&model, cfg, probe)? {
                    wave_history.push(WaveRow {
                        iteration,
                        long_wave_fraction: frac,
                        loss: epoch_loss,
                    });
                }
            }

            if (epoch + 1) % cfg.run.eval_every == 0 || epoch + 1 == cfg.run.epochs {
                let train_rep = evaluate(&model, &splits.train)?;
                history.push(report_row(iteration, epoch, "train", &train_rep));
                if !splits.val.is_empty() {
                    let val_rep = evaluate(&model, &splits.val)?;
                    history.push(report_row(iteration, epoch, "val", &val_rep));
                    if val_rep.loss < best_val_loss {
                        best_val_loss = val_rep.loss;
                        best_epoch = epoch + 1;
                        best = model.clone();
                        if let Some(dir) = &out_dir {
                            save_checkpoint(
                                &dir.join("best"),
                                &best,
                                cfg,
                                seed,
                                best_epoch,
                                best_val_loss as f64,
                            )?;
                        }
                    }
                }
            }
        }
        Ok(())
    })();

    if let Err(e) = result {
        // Keep what we have on disk; report the failure.
        if let Some(dir) = &out_dir {
            let _ = save_checkpoint(
                &dir.join("best"),
                &best,
                cfg,
                seed,
                best_epoch,
                best_val_loss as f64,
            );
        }
        return Err(e);
    }

    if cfg.run.epochs == 0 || splits.val.is_empty() {
        best = model.clone();
    }

    let test_report = if splits.test.is_empty() {
        MetricReport::default()
    } else {
        evaluate(&best, &splits.test)?
    };

    if let Some(dir) = &out_dir {
        save_checkpoint(
            &dir.join("best"),
            &best,
            cfg,
            seed,
            best_epoch,
            best_val_loss as f64,
        )?;
        std::fs::write(dir.join("history.csv"), history_csv(&history))?;
        std::fs::write(dir.join("wave_history.csv"), wave_csv(&wave_history))?;
        std::fs::write(
            dir.join("report.json"),
            serde_json::to_string_pretty(&test_report)?,
        )?;
    }

    Ok(TrainOutcome {
        model: best,
        best_val_loss,
        best_epoch,
        history,
        wave_history,
        test_report,
        iterations: iteration,
    })
}

pub fn history_csv(rows: &[HistoryRow]) -> String {
    let mut out = String::from("iteration,epoch,split,loss,acc,iou,fg_loss,fg_acc,fg_iou\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.iteration, r.epoch, r.split, r.loss, r.acc, r.iou, r.fg_loss, r.fg_acc, r.fg_iou
        ));
    }
    out
}

pub fn wave_csv(rows: &[WaveRow]) -> String {
    let mut out = String::from("iteration,long_wave_fraction,loss\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{}\n",
            r.iteration, r.long_wave_fraction, r.loss
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::desk_polygons_config;

    fn tiny_cfg() -> ExperimentConfig {
        let mut cfg = desk_polygons_config();
        cfg.run.epochs = 2;
        cfg.run.batch_size = 4;
        cfg.model.steps = Some(8);
        cfg.model.encoder_width = 4;
        cfg.model.mlp_hidden = vec![8];
        cfg.data.train = 8;
        cfg.data.val = 3;
        cfg.data.test = 3;
        cfg.data.canvas = 16;
        cfg.data.radius_min = 3.0;
        cfg.data.radius_max = 5.0;
        cfg
    }

    #[test]
    fn zero_epoch_run_returns_initialization() {
        let mut cfg = tiny_cfg();
        cfg.run.epochs = 0;
        let splits = cfg.build_splits().unwrap();
        let out = train_run(&cfg, &splits).unwrap();
        assert!(out.history.is_empty());
        assert_eq!(out.iterations, 0);
        let init = cfg.build_model(cfg.run.seed).unwrap();
        for ((_, a), (_, b)) in out.model.named_params().iter().zip(init.named_params()) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn same_seed_identical_history_bytes() {
        let cfg = tiny_cfg();
        let splits = cfg.build_splits().unwrap();
        let a = train_run(&cfg, &splits).unwrap();
        let b = train_run(&cfg, &splits).unwrap();
        assert_eq!(history_csv(&a.history), history_csv(&b.history));
        assert_eq!(wave_csv(&a.wave_history), wave_csv(&b.wave_history));
    }

    #[test]
    fn single_sample_overfit() {
        // NWM-Linear on one sample for a couple hundred iterations drives the
        // training loss near zero.
        let mut cfg = tiny_cfg();
        cfg.run.epochs = 200;
        cfg.run.batch_size = 1;
        cfg.run.eval_every = 200;
        cfg.spectral.hook_every = 0;
        cfg.data.train = 1;
        cfg.data.val = 0;
        cfg.data.test = 0;
        let splits = cfg.build_splits().unwrap();
        let out = train_run(&cfg, &splits).unwrap();
        let train_rows: Vec<_> = out.history.iter().filter(|r| r.split == "train").collect();
        let final_loss = train_rows.last().unwrap().loss;
        assert!(final_loss < 0.1, "overfit loss {final_loss}");
    }
}
