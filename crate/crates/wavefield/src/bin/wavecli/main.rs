//! Command-line entry point: drum verification, dataset generation,
//! training, evaluation, seed sweeps, and wave analysis exports.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wavefield::checkpoint::load_checkpoint;
use wavefield::config::ExperimentConfig;
use wavefield::data::{
    class_histogram, compose_multimnist, gen_polygons, gen_tetrominoes, load_mnist_idx,
    load_mnist_native, save_dataset, DatasetManifest, MultiMnistSpec, PolygonsSpec, SegSample,
    TetrominoesSpec,
};
use wavefield::drum::{measure_fundamental, simulate_drum, square_mask, theoretical_frequency, DrumSpec};
use wavefield::error::WaveError;
use wavefield::field::Real;
use wavefield::spectral::{class_average_spectrum, hilbert_phase, long_wavelength_fraction, pearson};
use wavefield::train::{evaluate, seed_sweep, train_run};
use wavefield::wft::write_wft1_file;

#[derive(Parser)]
#[command(name = "wavecli", version, about = "Wave-based segmentation engine")]
struct Cli {
    /// Worker threads (also WAVEFIELD_WORKERS); 0 = rayon default.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Square-drum eigenfrequency experiment; writes a CSV of
    /// (L, f_theory_hz, f_measured_hz, rel_error).
    Drum(DrumArgs),
    /// Generate a dataset directory with a manifest.
    GenData(GenDataArgs),
    /// Train a model from a TOML config.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a split.
    Eval(EvalArgs),
    /// Train one config across several seeds and aggregate.
    Sweep(SweepArgs),
    /// Export per-class spectra, rollout dumps, and the wavelength/loss
    /// correlation for a trained checkpoint.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct DrumArgs {
    /// Side lengths as start:end:step (inclusive), e.g. 13:21:2.
    #[arg(long = "L-range", default_value = "13:21:2")]
    l_range: String,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 0.025)]
    dt: f64,
    #[arg(long, default_value_t = 40_000)]
    steps: usize,
    #[arg(long, default_value_t = 64)]
    grid: usize,
    /// Output CSV path (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit nonzero if any relative error exceeds this.
    #[arg(long, default_value_t = 0.01)]
    tolerance: f64,
}

#[derive(Args)]
struct GenDataArgs {
    /// polygons | tetrominoes | mnist | multimnist
    dataset: String,
    #[arg(long, default_value_t = 100)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    canvas: Option<usize>,
    /// Polygons: shape classes starting at triangles (2 = triangles+squares).
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long)]
    radius: Option<String>,
    /// Shapes (polygons) or blocks (tetrominoes) per image, as min:max.
    #[arg(long)]
    shapes: Option<String>,
    /// Digits per multi-MNIST image, as min:max.
    #[arg(long)]
    digits: Option<String>,
    /// IDX files for mnist / multimnist sources.
    #[arg(long)]
    mnist_images: Option<PathBuf>,
    #[arg(long)]
    mnist_labels: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override run.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override run.out_dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dotted-key overrides, e.g. --set model.kind=cnn.
    #[arg(long = "set")]
    sets: Vec<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// train | val | test
    #[arg(long, default_value = "test")]
    split: String,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated seeds, e.g. 1,2,3.
    #[arg(long)]
    seeds: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long = "set")]
    sets: Vec<String>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Test samples to analyze.
    #[arg(long, default_value_t = 16)]
    samples: usize,
    /// Rollout dumps to write.
    #[arg(long, default_value_t = 1)]
    dumps: usize,
}

fn exit_code_for(err: &WaveError) -> u8 {
    match err {
        WaveError::Config(_) | WaveError::InvalidArgument(_) | WaveError::Unstable { .. } => 2,
        WaveError::Diverged { .. } | WaveError::NonFinite(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let workers = if cli.workers > 0 {
        cli.workers
    } else {
        std::env::var("WAVEFIELD_WORKERS")
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(0)
    };
    if workers > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn run(cmd: Command) -> Result<ExitCode, WaveError> {
    match cmd {
        Command::Drum(args) => cmd_drum(args),
        Command::GenData(args) => cmd_gen_data(args).map(|_| ExitCode::SUCCESS),
        Command::Train(args) => cmd_train(args).map(|_| ExitCode::SUCCESS),
        Command::Eval(args) => cmd_eval(args).map(|_| ExitCode::SUCCESS),
        Command::Sweep(args) => cmd_sweep(args).map(|_| ExitCode::SUCCESS),
        Command::Analyze(args) => cmd_analyze(args).map(|_| ExitCode::SUCCESS),
    }
}

fn parse_range(text: &str) -> Result<Vec<usize>, WaveError> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || WaveError::Config(format!("range '{text}' is not start:end[:step]"));
    match parts.as_slice() {
        [a, b] | [a, b, _] => {
            let start: usize = a.parse().map_err(|_| bad())?;
            let end: usize = b.parse().map_err(|_| bad())?;
            let step: usize = if parts.len() == 3 {
                parts[2].parse().map_err(|_| bad())?
            } else {
                1
            };
            if step == 0 || end < start {
                return Err(bad());
            }
            Ok((start..=end).step_by(step).collect())
        }
        _ => Err(bad()),
    }
}

fn parse_min_max(text: &str) -> Result<(usize, usize), WaveError> {
    let vals = parse_range(text)?;
    Ok((*vals.first().unwrap(), *vals.last().unwrap()))
}

fn cmd_drum(args: DrumArgs) -> Result<ExitCode, WaveError> {
    let ls = parse_range(&args.l_range)?;
    let mut csv = String::from("L,f_theory_hz,f_measured_hz,rel_error\n");
    let mut worst: f64 = 0.0;
    for &l in &ls {
        let mask = square_mask(l, args.grid, args.grid)?;
        let center = (args.grid / 2, args.grid / 2);
        let source = if mask.get(0, center.0, center.1) == 1.0 {
            center
        } else {
            // even block: center node sits off-lattice, take the nearest free node
            (center.0.saturating_sub(1), center.1.saturating_sub(1))
        };
        let spec = DrumSpec {
            mask,
            source,
            wave_speed: args.c as Real,
            dt: args.dt as Real,
            steps: args.steps,
        };
        spec.validate()?;
        let trace = simulate_drum(&spec)?;
        let measured = measure_fundamental(&trace)? as f64;
        let theory = theoretical_frequency(1, 1, l as Real, args.c as Real) as f64;
        let rel = (measured - theory).abs() / theory;
        worst = worst.max(rel);
        csv.push_str(&format!("{l},{theory},{measured},{rel}\n"));
    }
    match &args.out {
        Some(path) => std::fs::write(path, &csv)?,
        None => print!("{csv}"),
    }
    if worst > args.tolerance {
        eprintln!("worst relative error {worst} exceeds tolerance {}", args.tolerance);
        return Ok(ExitCode::from(4));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_gen_data(args: GenDataArgs) -> Result<(), WaveError> {
    let (samples, class_count, params): (Vec<SegSample>, usize, serde_json::Value) =
        match args.dataset.as_str() {
            "polygons" => {
                let (rmin, rmax) = match &args.radius {
                    Some(r) => {
                        let (a, b) = parse_min_max(r)?;
                        (a as f64, b as f64)
                    }
                    None => (15.0, 20.0),
                };
                let (smin, smax) = match &args.shapes {
                    Some(s) => parse_min_max(s)?,
                    None => (1, 2),
                };
                let spec = PolygonsSpec {
                    count: args.count,
                    canvas: args.canvas.unwrap_or(75),
                    shapes_min: smin,
                    shapes_max: smax,
                    edges_min: 3,
                    edges_max: 3 + args.classes - 1,
                    radius_min: rmin,
                    radius_max: rmax,
                    seed: args.seed,
                };
                let params = serde_json::to_value(format!("{spec:?}"))?;
                (gen_polygons(&spec)?, spec.class_count(), params)
            }
            "tetrominoes" => {
                let (bmin, bmax) = match &args.shapes {
                    Some(s) => parse_min_max(s)?,
                    None => (1, 5),
                };
                let spec = TetrominoesSpec {
                    count: args.count,
                    canvas: args.canvas.unwrap_or(64),
                    blocks_min: bmin,
                    blocks_max: bmax,
                    len_min: 14,
                    len_max: 28,
                    seed: args.seed,
                };
                let params = serde_json::to_value(format!("{spec:?}"))?;
                (gen_tetrominoes(&spec)?, 7, params)
            }
            "mnist" => {
                let (imgs, labs) = mnist_paths(&args)?;
                let samples = load_mnist_idx(&imgs, &labs)?;
                let n = samples.len().min(args.count);
                (
                    samples.into_iter().take(n).collect(),
                    11,
                    serde_json::json!({"source": "idx", "count": n}),
                )
            }
            "multimnist" => {
                let (imgs, labs) = mnist_paths(&args)?;
                let native = load_mnist_native(&imgs, &labs)?;
                let (dmin, dmax) = match &args.digits {
                    Some(d) => parse_min_max(d)?,
                    None => (1, 4),
                };
                let spec = MultiMnistSpec {
                    count: args.count,
                    canvas: args.canvas.unwrap_or(128),
                    digit_size: 42,
                    digits_min: dmin,
                    digits_max: dmax,
                    seed: args.seed,
                };
                let params = serde_json::to_value(format!("{spec:?}"))?;
                (compose_multimnist(&spec, &native)?, 11, params)
            }
            other => {
                return Err(WaveError::Config(format!(
                    "unknown dataset '{other}' (polygons | tetrominoes | mnist | multimnist)"
                )))
            }
        };
    let manifest = DatasetManifest {
        name: args.dataset.clone(),
        sample_count: samples.len(),
        class_count,
        seed: args.seed,
        params,
    };
    save_dataset(&args.out, &samples, &manifest)?;
    let hist = class_histogram(&samples, class_count);
    println!("wrote {} samples to {}", samples.len(), args.out.display());
    for (class, count) in hist.iter().enumerate() {
        println!("class {class}: {count} pixels");
    }
    Ok(())
}

fn mnist_paths(args: &GenDataArgs) -> Result<(PathBuf, PathBuf), WaveError> {
    match (&args.mnist_images, &args.mnist_labels) {
        (Some(i), Some(l)) => Ok((i.clone(), l.clone())),
        _ => Err(WaveError::Config(
            "--mnist-images and --mnist-labels are required for this dataset".into(),
        )),
    }
}

fn load_config(path: &Path, sets: &[String]) -> Result<ExperimentConfig, WaveError> {
    let text = std::fs::read_to_string(path)?;
    let cfg = ExperimentConfig::from_toml_with_overrides(&text, sets)?;
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train(args: TrainArgs) -> Result<(), WaveError> {
    let mut cfg = load_config(&args.config, &args.sets)?;
    if let Some(seed) = args.seed {
        cfg.run.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.run.out_dir = Some(out.display().to_string());
    }
    let splits = cfg.build_splits()?;
    let outcome = train_run(&cfg, &splits)?;
    println!(
        "best val loss {:.6} at epoch {} ({} iterations)",
        outcome.best_val_loss, outcome.best_epoch, outcome.iterations
    );
    let r = &outcome.test_report;
    println!(
        "test: loss {:.4} acc {:.4} iou {:.4} fg_loss {:.4} fg_acc {:.4} fg_iou {:.4}",
        r.loss, r.acc, r.iou, r.fg_loss, r.fg_acc, r.fg_iou
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), WaveError> {
    let (model, manifest) = load_checkpoint(&args.ckpt)?;
    let splits = manifest.config.build_splits()?;
    let samples = match args.split.as_str() {
        "train" => &splits.train,
        "val" => &splits.val,
        "test" => &splits.test,
        other => {
            return Err(WaveError::Config(format!(
                "unknown split '{other}' (train | val | test)"
            )))
        }
    };
    let rep = evaluate(&model, samples)?;
    println!("split: {}", args.split);
    println!("images: {} (fg-excluded: {})", rep.images, rep.fg_excluded_images);
    println!("loss: {}", rep.loss);
    println!("acc: {}", rep.acc);
    println!("iou: {}", rep.iou);
    println!("fg_loss: {}", rep.fg_loss);
    println!("fg_acc: {}", rep.fg_acc);
    println!("fg_iou: {}", rep.fg_iou);
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<(), WaveError> {
    let mut cfg = load_config(&args.config, &args.sets)?;
    if let Some(out) = &args.out {
        cfg.run.out_dir = Some(out.display().to_string());
    }
    let seeds: Result<Vec<u64>, _> = args.seeds.split(',').map(|s| s.trim().parse()).collect();
    let seeds = seeds.map_err(|_| WaveError::Config(format!("bad seed list '{}'", args.seeds)))?;
    if seeds.is_empty() {
        return Err(WaveError::Config("no seeds given".into()));
    }
    let splits = cfg.build_splits()?;
    let result = seed_sweep(&cfg, &splits, &seeds)?;
    let json = serde_json::to_string_pretty(&result)?;
    if let Some(out) = &args.out {
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join("sweep.json"), &json)?;
    }
    println!("{json}");
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<(), WaveError> {
    let (model, manifest) = load_checkpoint(&args.ckpt)?;
    let cfg = &manifest.config;
    let splits = cfg.build_splits()?;
    let n = args.samples.min(splits.test.len());
    if n == 0 {
        return Err(WaveError::InvalidArgument("no test samples to analyze".into()));
    }
    std::fs::create_dir_all(&args.out)?;

    let mut rollouts = Vec::with_capacity(n);
    let mut masks = Vec::with_capacity(n);
    for s in &splits.test[..n] {
        match model.rollout(&s.image)? {
            Some(r) => {
                rollouts.push(r);
                masks.push(s.mask.clone());
            }
            None => {
                return Err(WaveError::InvalidArgument(
                    "analyze needs a recurrent model checkpoint".into(),
                ))
            }
        }
    }

    // Per-class average spectra.
    let spectra = class_average_spectrum(&rollouts, &masks, cfg.model.dt)?;
    let mut csv = String::from("class,bin,amplitude\n");
    for (class, spec) in &spectra {
        for (b, &a) in spec.amplitudes.iter().enumerate() {
            csv.push_str(&format!("{class},{},{a}\n", b + 1));
        }
    }
    std::fs::write(args.out.join("class_spectra.csv"), csv)?;

    // Rollout dumps for visualization.
    for (i, roll) in rollouts.iter().take(args.dumps).enumerate() {
        let (dims, data) = roll.to_flat();
        write_wft1_file(&args.out.join(format!("rollout_{i:05}.wft1")), &dims, &data)?;
    }

    // Degenerate-pixel flags and current wavelength fraction of the first
    // rollout, as a sanity line.
    let phases = hilbert_phase(&rollouts[0], cfg.spectral.channel)?;
    let (t, _, _, _) = rollouts[0].dims();
    let mid = &phases[cfg.spectral.timestep.unwrap_or(t / 2).min(t - 1)];
    let degenerate = mid.excluded.iter().filter(|&&e| e).count();
    if degenerate > 0 {
        println!("{degenerate} degenerate (all-zero) pixels excluded from wavelength stats");
    }
    match long_wavelength_fraction(&mid.wavelength_norm, Some(&mid.excluded), cfg.spectral.threshold)
    {
        Ok(frac) => println!("long-wavelength fraction (threshold {}): {frac}", cfg.spectral.threshold),
        Err(_) => println!("long-wavelength fraction undefined (all pixels degenerate)"),
    }

    // Wavelength-vs-loss correlation from the training history next to the
    // checkpoint (run_dir/wave_history.csv).
    let run_dir = args.ckpt.parent().unwrap_or(Path::new("."));
    let wave_path = run_dir.join("wave_history.csv");
    if wave_path.exists() {
        let text = std::fs::read_to_string(&wave_path)?;
        let mut fracs = Vec::new();
        let mut neg_losses = Vec::new();
        let mut rows = String::from("iteration,long_wave_fraction,neg_loss\n");
        for line in text.lines().skip(1) {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                continue;
            }
            let frac: Real = cols[1].parse().map_err(|_| {
                WaveError::Format(format!("bad wave_history row '{line}'"))
            })?;
            let loss: Real = cols[2].parse().map_err(|_| {
                WaveError::Format(format!("bad wave_history row '{line}'"))
            })?;
            fracs.push(frac);
            neg_losses.push(-loss);
            rows.push_str(&format!("{},{},{}\n", cols[0], frac, -loss));
        }
        std::fs::write(args.out.join("wavelength_vs_loss.csv"), rows)?;
        if fracs.len() >= 2 {
            match pearson(&fracs, &neg_losses) {
                Ok(r) => println!("pearson(long_wave_fraction, -loss) = {r}"),
                Err(e) => println!("pearson undefined: {e}"),
            }
        }
    } else {
        println!(
            "no wave_history.csv next to the checkpoint; skipping the wavelength/loss correlation"
        );
    }
    println!("analysis written to {}", args.out.display());
    Ok(())
}
