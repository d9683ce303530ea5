//! Multi-seed orchestration: whole runs in parallel workers, aggregated as
//! mean/std and min/median/max per metric. Per-run failures are recorded in
//! the table rather than aborting the sweep.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::{train_run, MetricReport};
use crate::config::ExperimentConfig;
use crate::data::DatasetSplits;
use crate::error::Result;
use crate::field::Real;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub ok: bool,
    #[serde(default)]
    pub error: Option<String>,
    #[serde(default)]
    pub report: Option<MetricReport>,
    #[serde(default)]
    pub best_val_loss: Option<Real>,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct Stats {
    pub mean: Real,
    pub std: Real,
    pub min: Real,
    pub median: Real,
    pub max: Real,
    pub n: usize,
}

pub fn stats_of(values: &[Real]) -> Stats {
    if values.is_empty() {
        return Stats::default();
    }
    let n = values.len();
    let mean = values.iter().sum::<Real>() / n as Real;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<Real>() / n as Real;
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    Stats {
        mean,
        std: var.sqrt(),
        min: sorted[0],
        median,
        max: sorted[n - 1],
        n,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub runs: Vec<SeedRun>,
    /// Per-metric aggregates over the successful runs' test reports.
    pub aggregate: BTreeMap<String, Stats>,
}

/// Train once per seed (dataset held fixed) and aggregate every metric.
/// `out_root`, when set on the config, gets one subdirectory per seed.
pub fn seed_sweep(
    cfg: &ExperimentConfig,
    splits: &DatasetSplits,
    seeds: &[u64],
) -> Result<SweepResult> {
    let runs: Vec<SeedRun> = seeds
        .par_iter()
        .map(|&seed| {
            let mut run_cfg = cfg.clone();
            run_cfg.run.seed = seed;
            if let Some(root) = &cfg.run.out_dir {
                run_cfg.run.out_dir = Some(format!("{root}/seed_{seed}"));
            }
            match train_run(&run_cfg, splits) {
                Ok(out) => SeedRun {
                    seed,
                    ok: true,
                    error: None,
                    report: Some(out.test_report),
                    best_val_loss: Some(out.best_val_loss),
                },
                Err(e) => SeedRun {
                    seed,
                    ok: false,
                    error: Some(e.to_string()),
                    report: None,
                    best_val_loss: None,
                },
            }
        })
        .collect();

    let mut aggregate = BTreeMap::new();
    let metric = |f: fn(&MetricReport) -> Real| -> Vec<Real> {
        runs.iter()
            .filter_map(|r| r.report.as_ref().map(f))
            .collect()
    };
    aggregate.insert("loss".to_string(), stats_of(&metric(|r| r.loss)));
    aggregate.insert("acc".to_string(), stats_of(&metric(|r| r.acc)));
    aggregate.insert("iou".to_string(), stats_of(&metric(|r| r.iou)));
    aggregate.insert("fg_loss".to_string(), stats_of(&metric(|r| r.fg_loss)));
    aggregate.insert("fg_acc".to_string(), stats_of(&metric(|r| r.fg_acc)));
    aggregate.insert("fg_iou".to_string(), stats_of(&metric(|r| r.fg_iou)));
    Ok(SweepResult { runs, aggregate })
}
