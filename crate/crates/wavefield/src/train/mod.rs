//! Optimization loop, metrics, checkpoint selection, and seed sweeps.

mod adam;
mod metrics;
mod run;
mod sweep;

pub use adam::AdamState;
pub use metrics::{aggregate, eval_sample, predictions, xent_loss, MetricReport, SampleMetrics};
pub use run::{
    batch_step, evaluate, history_csv, train_run, wave_csv, HistoryRow, TrainOutcome, WaveRow,
};
pub use sweep::{seed_sweep, SeedRun, Stats, SweepResult};
