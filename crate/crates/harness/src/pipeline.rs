//! The five workflow steps behind the CLI: synth, train, evaluate,
//! predict and report. Each works on a run directory:
//!
//! ```text
//! <run_dir>/config.toml          frozen configuration
//! <run_dir>/preprocess.toml      crop/split/clip/normalization statistics
//! <run_dir>/origins_{train,test}.csv
//! <run_dir>/epoch_log.csv
//! <run_dir>/checkpoints/latest.ckpt
//! <run_dir>/eval/                metric CSVs and figures
//! <run_dir>/report/              curves and summary
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, ensure, Context, Result};
use ndarray::{s, Array2, Array3, Axis};
use serde::{Deserialize, Serialize};
use velgan_core::metrics::{self, EvalConfig, MetricReport, PatchPredictor};
use velgan_core::preprocess::{prepare, sample_patches};
use velgan_core::segy::{read_segy, write_segy};
use velgan_core::synth::{build_dataset, checksum, DatasetManifest, MANIFEST_FILE};
use velgan_core::{ChannelMode, NormStats, PatchOrigin, PatchPair, PreprocessStats, Role, Volume3D, VolumeSet};
use velgan_net::train::CallbackError;
use velgan_net::{Checkpoint, EpochLosses, Generator, NoiseMode, TrainState};

use crate::config::RunConfig;
use crate::figures;

pub const CONFIG_FILE: &str = "config.toml";
pub const PREPROCESS_FILE: &str = "preprocess.toml";
pub const LOG_FILE: &str = "epoch_log.csv";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const LATEST_CHECKPOINT: &str = "latest.ckpt";

pub fn latest_checkpoint(run_dir: &Path) -> PathBuf {
    run_dir.join(CHECKPOINT_DIR).join(LATEST_CHECKPOINT)
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<DatasetManifest> {
    build_dataset(&cfg.synth, &cfg.dataset.dir)
        .with_context(|| format!("building dataset in {}", cfg.dataset.dir.display()))
}

/// Loads the four volumes and verifies them against the manifest checksums.
pub fn load_dataset(dir: &Path) -> Result<VolumeSet> {
    if !dir.join(MANIFEST_FILE).exists() {
        bail!("no dataset at {} (run `velgan synth` first)", dir.display());
    }
    let manifest = DatasetManifest::load(dir)?;
    let set = VolumeSet::load(dir).with_context(|| format!("reading volumes from {}", dir.display()))?;
    for role in [Role::Seismic, Role::VAvg, Role::Twt, Role::VInt] {
        let found = checksum(set.get(role))?;
        let expected = &manifest.file(role).crc32;
        ensure!(&found == expected, "{} checksum {found} does not match manifest {expected}", role.file_name());
    }
    Ok(set)
}

/// Normalized volumes, their statistics and the sampled patch sets.
pub struct Prepared {
    pub normalized: VolumeSet,
    pub raw_dim: (usize, usize, usize),
    pub stats: PreprocessStats,
    pub train: Vec<PatchPair>,
    pub test: Vec<PatchPair>,
}

pub fn prepare_data(cfg: &RunConfig) -> Result<Prepared> {
    let raw = load_dataset(&cfg.dataset.dir)?;
    let p = &cfg.preprocess;
    let (normalized, stats) = prepare(&raw, p.crop_top, cfg.split())?;
    let mode = cfg.channel_mode();
    let train = sample_patches(&normalized, stats.train, p.n_train, p.patch_size, p.seed, mode)
        .context("sampling training patches")?;
    let test = sample_patches(&normalized, stats.test, p.n_test, p.patch_size, p.seed.wrapping_add(1), mode)
        .context("sampling test patches")?;
    Ok(Prepared { normalized, raw_dim: raw.dim(), stats, train, test })
}

fn write_origins(path: &Path, patches: &[PatchPair]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for p in patches {
        w.serialize(p.origin)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_origins(path: &Path) -> Result<Vec<PatchOrigin>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

/// One row of `epoch_log.csv`; test metrics are empty on epochs without
/// an evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub d_loss: f64,
    pub g_adv: f64,
    pub g_l1: f64,
    pub g_total: f64,
    pub test_pe: Option<f64>,
    pub test_ssim: Option<f64>,
    pub wall_time_s: f64,
}

pub fn read_log(path: &Path) -> Result<Vec<EpochRow>> {
    if !path.exists() {
        bail!("no epoch log at {}", path.display());
    }
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

fn write_log(path: &Path, rows: &[EpochRow]) -> Result<()> {
    let tmp = path.with_extension("csv.partial");
    {
        let mut w = csv::Writer::from_path(&tmp)?;
        if rows.is_empty() {
            w.write_record(["epoch", "d_loss", "g_adv", "g_l1", "g_total", "test_pe", "test_ssim", "wall_time_s"])?;
        }
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Metadata stored alongside the weights so that evaluation and
/// prediction need nothing but the checkpoint and the input volumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub preprocess: PreprocessStats,
    pub raw_n_crosslines: usize,
    pub raw_n_samples: usize,
}

impl CheckpointMeta {
    pub fn to_table(&self) -> Result<toml::Table> {
        match toml::Value::try_from(self)? {
            toml::Value::Table(t) => Ok(t),
            _ => unreachable!("struct serializes to a table"),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        toml::Value::Table(ckpt.header.extra.clone())
            .try_into()
            .context("checkpoint lacks preprocessing metadata")
    }
}

/// Runs `predictor` over the test patches and denormalizes with the
/// target's statistics.
pub fn evaluate_patches<P: PatchPredictor>(
    predictor: &mut P,
    patches: &[PatchPair],
    norm: NormStats,
    cfg: &EvalConfig,
) -> Result<MetricReport> {
    Ok(metrics::evaluate(predictor, patches, norm, cfg)?)
}

/// Evaluates with dropout disabled, whatever the generator's noise mode.
pub fn evaluate_generator(
    generator: &mut Generator<f32>,
    patches: &[PatchPair],
    norm: NormStats,
    cfg: &EvalConfig,
) -> Result<MetricReport> {
    let mode = generator.spec().noise_mode;
    generator.set_noise_mode(NoiseMode::None);
    let report = evaluate_patches(generator, patches, norm, cfg);
    generator.set_noise_mode(mode);
    report
}

pub struct TrainOutcome {
    pub rows: Vec<EpochRow>,
    pub state: TrainState<f32>,
}

/// Preprocesses, trains and logs. With `resume`, training continues from
/// the run's latest checkpoint and the log is truncated to its epoch.
pub fn cmd_train(cfg: &RunConfig, resume: bool, progress: &mut dyn FnMut(&EpochRow)) -> Result<TrainOutcome> {
    let run_dir = &cfg.train.run_dir;
    fs::create_dir_all(run_dir.join(CHECKPOINT_DIR))
        .with_context(|| format!("creating run directory {}", run_dir.display()))?;
    let prep = prepare_data(cfg)?;
    fs::write(run_dir.join(CONFIG_FILE), cfg.to_toml()?)?;
    fs::write(run_dir.join(PREPROCESS_FILE), toml::to_string(&prep.stats)?)?;
    write_origins(&run_dir.join("origins_train.csv"), &prep.train)?;
    write_origins(&run_dir.join("origins_test.csv"), &prep.test)?;
    let meta = CheckpointMeta {
        preprocess: prep.stats.clone(),
        raw_n_crosslines: prep.raw_dim.1,
        raw_n_samples: prep.raw_dim.2,
    };

    let log_path = run_dir.join(LOG_FILE);
    let latest = latest_checkpoint(run_dir);
    let (mut state, mut rows) = if resume {
        let ckpt = Checkpoint::load(&latest).with_context(|| format!("resuming from {}", latest.display()))?;
        ensure!(
            CheckpointMeta::from_checkpoint(&ckpt)? == meta,
            "checkpoint preprocessing differs from the current configuration"
        );
        let state: TrainState<f32> = ckpt.train_state()?;
        ensure!(
            state.generator.spec() == &cfg.generator_spec() && state.discriminator.spec() == &cfg.discriminator_spec(),
            "checkpoint networks differ from the current configuration"
        );
        let rows: Vec<EpochRow> = if log_path.exists() {
            read_log(&log_path)?.into_iter().filter(|r| r.epoch <= state.epoch).collect()
        } else {
            Vec::new()
        };
        (state, rows)
    } else {
        let state = TrainState::new(
            cfg.generator_spec(),
            cfg.discriminator_spec(),
            cfg.loss,
            cfg.optim,
            cfg.train.seed,
        )?;
        (state, Vec::new())
    };
    write_log(&log_path, &rows)?;

    let epochs = cfg.train.epochs;
    let remaining = epochs.saturating_sub(state.epoch);
    let wall_offset = rows.last().map_or(0.0, |r| r.wall_time_s);
    let started = Instant::now();
    let norm = prep.stats.v_int.norm;
    let eval_cfg = cfg.eval_config();
    let extra = meta.to_table()?;

    let mut after_epoch = |state: &mut TrainState<f32>, e: &EpochLosses| -> Result<()> {
        let (test_pe, test_ssim) = if e.epoch.is_multiple_of(cfg.train.eval_every) || e.epoch == epochs {
            let r = evaluate_generator(&mut state.generator, &prep.test, norm, &eval_cfg)?;
            (Some(r.pe_mean), Some(r.ssim_mean))
        } else {
            (None, None)
        };
        let row = EpochRow {
            epoch: e.epoch,
            d_loss: e.d_loss,
            g_adv: e.g_adv,
            g_l1: e.g_l1,
            g_total: e.g_total,
            test_pe,
            test_ssim,
            wall_time_s: wall_offset + started.elapsed().as_secs_f64(),
        };
        rows.push(row.clone());
        write_log(&log_path, &rows)?;
        if e.epoch.is_multiple_of(cfg.train.checkpoint_every) || e.epoch == epochs {
            let ckpt = Checkpoint::from_state(state, extra.clone());
            ckpt.save(&latest)?;
            if cfg.train.keep_checkpoints {
                fs::copy(&latest, run_dir.join(CHECKPOINT_DIR).join(format!("epoch_{:04}.ckpt", e.epoch)))?;
            }
        }
        progress(&row);
        Ok(())
    };
    state.train(&prep.train, remaining, |s, e| after_epoch(s, e).map_err(CallbackError::from))?;
    Ok(TrainOutcome { rows, state })
}

pub struct EvaluateOutcome {
    pub report: MetricReport,
    pub out_dir: PathBuf,
    pub checkpoint_crc32: String,
    pub panels: Vec<PathBuf>,
}

/// Writes the report CSVs plus per-patch panels (target, prediction,
/// percent error, SSIM) and the velocity histograms.
pub fn write_report_files(report: &MetricReport, out_dir: &Path, extra: &[(&str, String)]) -> Result<Vec<PathBuf>> {
    report.write_csv(out_dir, extra)?;
    let (lo, hi) = (report.norm.x_min, report.norm.x_max);
    let mut panels = Vec::new();
    for m in &report.maps {
        let pe_hi = m.pe_map.iter().copied().fold(1e-9, f64::max);
        let panel = figures::hstack(
            &[
                figures::heatmap(&m.target, lo, hi, 4),
                figures::heatmap(&m.prediction, lo, hi, 4),
                figures::heatmap(&m.pe_map, 0.0, pe_hi, 4),
                figures::heatmap(&m.ssim_map, 0.0, 1.0, 4),
            ],
            8,
        );
        let path = out_dir.join(format!("panel_{:04}.png", m.index));
        figures::save(&panel, &path)?;
        panels.push(path);
    }
    figures::save(
        &figures::histogram_chart(&report.histogram_true, &report.histogram_pred, 640, 360),
        &out_dir.join("histogram.png"),
    )?;
    Ok(panels)
}

pub fn cmd_evaluate(cfg: &RunConfig, checkpoint: Option<&Path>, out_dir: Option<&Path>) -> Result<EvaluateOutcome> {
    let ckpt_path = checkpoint.map_or_else(|| latest_checkpoint(&cfg.train.run_dir), Path::to_path_buf);
    let bytes = fs::read(&ckpt_path).with_context(|| format!("reading checkpoint {}", ckpt_path.display()))?;
    let checkpoint_crc32 = format!("{:08x}", crc32fast::hash(&bytes));
    let ckpt = Checkpoint::read_from(&mut bytes.as_slice())?;
    let meta = CheckpointMeta::from_checkpoint(&ckpt)?;
    let prep = prepare_data(cfg)?;
    ensure!(
        meta.preprocess == prep.stats,
        "checkpoint preprocessing statistics differ from those of the configured dataset"
    );
    let mut generator: Generator<f32> = ckpt.generator()?;
    ensure!(
        generator.spec().in_channels == cfg.preprocess.channels,
        "checkpoint expects {} input channels, config gives {}",
        generator.spec().in_channels,
        cfg.preprocess.channels
    );
    let report = evaluate_generator(&mut generator, &prep.test, meta.preprocess.v_int.norm, &cfg.eval_config())?;
    let out_dir = out_dir.map_or_else(|| cfg.train.run_dir.join("eval"), Path::to_path_buf);
    let panels = write_report_files(
        &report,
        &out_dir,
        &[
            ("checkpoint", ckpt_path.display().to_string()),
            ("checkpoint_crc32", checkpoint_crc32.clone()),
            ("checkpoint_epoch", ckpt.header.epoch.to_string()),
        ],
    )?;
    Ok(EvaluateOutcome { report, out_dir, checkpoint_crc32, panels })
}

/// First corners of `size`-long tiles covering `0..n` at 50% overlap; the
/// last tile is flush with the end.
pub fn tile_starts(n: usize, size: usize) -> Vec<usize> {
    assert!(size >= 2 && n >= size);
    let step = size / 2;
    let mut starts: Vec<usize> = (0..).map(|k| k * step).take_while(|&s| s + size <= n).collect();
    if starts.last() != Some(&(n - size)) {
        starts.push(n - size);
    }
    starts
}

/// Cosine-squared taper; overlapping copies at half-tile offsets sum to 1.
pub fn taper(size: usize) -> Vec<f64> {
    (0..size)
        .map(|i| (std::f64::consts::PI * (i as f64 + 0.5) / size as f64).sin().powi(2))
        .collect()
}

/// Predicts every inline section of normalized volumes by blending
/// overlapping tiles. Returns `(inline, crossline, sample)` in `[0, 1]`.
pub fn predict_sections<P: PatchPredictor>(predictor: &mut P, vs: &VolumeSet, mode: ChannelMode, size: usize) -> Result<Array3<f64>>
where
    P::Error: 'static,
{
    let (ni, nx, nt) = vs.dim();
    ensure!(nx >= size && nt >= size, "{size}x{size} tiles do not fit sections of {nx}x{nt}");
    let w = taper(size);
    let (rows, cols) = (tile_starts(nt, size), tile_starts(nx, size));
    let mut out = Array3::zeros((ni, nx, nt));
    for i in 0..ni {
        // Time-major sections: rows = time, columns = crossline.
        let section = |v: &Volume3D| v.samples().index_axis(Axis(0), i).t().to_owned();
        let seismic = section(&vs.seismic);
        let stack = match mode {
            ChannelMode::Three => ndarray::stack(Axis(0), &[seismic.view(), section(&vs.v_avg).view(), section(&vs.twt).view()])?,
            ChannelMode::SeismicOnly => seismic.insert_axis(Axis(0)),
        };
        let mut acc = Array2::<f64>::zeros((nt, nx));
        let mut weight = Array2::<f64>::zeros((nt, nx));
        for &r in &rows {
            for &c in &cols {
                let tile = stack.slice(s![.., r..r + size, c..c + size]).to_owned();
                let pred = predictor.predict(&tile).map_err(|e| anyhow!(e))?;
                for a in 0..size {
                    for b in 0..size {
                        let wt = w[a] * w[b];
                        acc[[r + a, c + b]] += wt * pred[[a, b]];
                        weight[[r + a, c + b]] += wt;
                    }
                }
            }
        }
        out.index_axis_mut(Axis(0), i).assign(&(acc / weight).t());
    }
    Ok(out)
}

pub struct PredictOutcome {
    pub volume: Volume3D,
    /// Percent error against `v_int.sgy` when the input directory has one.
    pub pe_vs_v_int: Option<f64>,
}

/// Predicts an interval-velocity volume for the volumes in `input_dir`
/// (`seismic.sgy`, `v_avg.sgy`, `twt.sgy`; `v_int.sgy` optional) and
/// writes it to `out` as SEG-Y. Inference is deterministic.
pub fn cmd_predict(checkpoint: &Path, input_dir: &Path, out: &Path) -> Result<PredictOutcome> {
    let ckpt = Checkpoint::load(checkpoint).with_context(|| format!("reading checkpoint {}", checkpoint.display()))?;
    let meta = CheckpointMeta::from_checkpoint(&ckpt)?;
    let read = |role: Role| {
        let path = input_dir.join(role.file_name());
        read_segy(&path).with_context(|| format!("reading {}", path.display()))
    };
    let seismic = read(Role::Seismic)?;
    let v_avg = read(Role::VAvg)?;
    let twt = read(Role::Twt)?;
    let v_int_path = input_dir.join(Role::VInt.file_name());
    let v_int = if v_int_path.exists() { Some(read(Role::VInt)?) } else { None };
    let (_, nx, nt) = seismic.dim();
    ensure!(
        nx == meta.raw_n_crosslines && nt == meta.raw_n_samples,
        "input grid has {nx} crosslines × {nt} samples, the checkpoint was trained on {} × {}",
        meta.raw_n_crosslines,
        meta.raw_n_samples
    );
    // v_int only feeds its own normalization here; a stand-in keeps the set complete.
    let raw = VolumeSet::new(seismic, v_avg.clone(), twt, v_int.clone().unwrap_or(v_avg))?;
    let normalized = meta.preprocess.apply(&raw)?;

    let mut generator: Generator<f32> = ckpt.generator()?;
    generator.set_noise_mode(NoiseMode::None);
    let mode = ChannelMode::try_from(generator.spec().in_channels)?;
    let size = generator.spec().patch_size;
    let pred = predict_sections(&mut generator, &normalized, mode, size)?;

    let norm = meta.preprocess.v_int.norm;
    let crop = meta.preprocess.crop_top;
    let (ni, nx, nt) = raw.dim();
    // Cropped samples take the shallowest predicted value.
    let samples = Array3::from_shape_fn((ni, nx, nt), |(i, x, k)| {
        norm.denormalize_value(pred[[i, x, k.saturating_sub(crop)]])
    });
    let volume = Volume3D::new(samples, raw.seismic.dx, raw.seismic.dy, raw.seismic.dt)?
        .with_origin(raw.seismic.origin)
        .with_t0(raw.seismic.t0)
        .with_label("v_int_predicted");
    if let Some(parent) = out.parent() {
        fs::create_dir_all(parent)?;
    }
    write_segy(&volume, out).with_context(|| format!("writing {}", out.display()))?;
    let pe_vs_v_int = match &v_int {
        Some(v) => {
            let y = v.samples().slice(s![.., .., crop..]).to_owned();
            let y_hat = volume.samples().slice(s![.., .., crop..]).to_owned();
            let flat = |a: Array3<f64>| {
                let n = a.len();
                a.into_shape_with_order((1, n)).expect("contiguous")
            };
            Some(metrics::percent_error(flat(y).view(), flat(y_hat).view())?)
        }
        None => None,
    };
    Ok(PredictOutcome { volume, pe_vs_v_int })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportSummary {
    pub n_epochs: usize,
    pub n_evaluations: usize,
    pub best_epoch: usize,
    pub best_pe: f64,
    pub ssim_at_best: f64,
    pub final_epoch: usize,
    pub final_pe: f64,
    pub final_ssim: f64,
    pub max_ssim: f64,
}

/// PE/SSIM-versus-epoch curves, a loss chart and `summary.toml` for a run.
pub fn cmd_report(run_dir: &Path) -> Result<ReportSummary> {
    let rows = read_log(&run_dir.join(LOG_FILE))?;
    let evals: Vec<(usize, f64, f64)> = rows
        .iter()
        .filter_map(|r| Some((r.epoch, r.test_pe?, r.test_ssim?)))
        .collect();
    ensure!(!evals.is_empty(), "epoch log in {} has no evaluated epochs", run_dir.display());
    // Earliest epoch wins ties.
    let best = evals
        .iter()
        .copied()
        .fold(None::<(usize, f64, f64)>, |acc, e| match acc {
            Some(a) if a.1 <= e.1 => Some(a),
            _ => Some(e),
        })
        .expect("nonempty");
    let last = *evals.last().expect("nonempty");
    let summary = ReportSummary {
        n_epochs: rows.len(),
        n_evaluations: evals.len(),
        best_epoch: best.0,
        best_pe: best.1,
        ssim_at_best: best.2,
        final_epoch: last.0,
        final_pe: last.1,
        final_ssim: last.2,
        max_ssim: evals.iter().map(|e| e.2).fold(f64::NEG_INFINITY, f64::max),
    };
    let dir = run_dir.join("report");
    fs::create_dir_all(&dir)?;
    let pe: Vec<(f64, f64)> = evals.iter().map(|e| (e.0 as f64, e.1)).collect();
    let ssim: Vec<(f64, f64)> = evals.iter().map(|e| (e.0 as f64, e.2)).collect();
    let d: Vec<(f64, f64)> = rows.iter().map(|r| (r.epoch as f64, r.d_loss)).collect();
    let g: Vec<(f64, f64)> = rows.iter().map(|r| (r.epoch as f64, r.g_adv)).collect();
    figures::save(&figures::line_chart(&[(&pe, figures::BLUE)], 640, 360), &dir.join("pe_vs_epoch.png"))?;
    figures::save(&figures::line_chart(&[(&ssim, figures::BLUE)], 640, 360), &dir.join("ssim_vs_epoch.png"))?;
    figures::save(
        &figures::line_chart(&[(&d, figures::BLUE), (&g, figures::ORANGE)], 640, 360),
        &dir.join("adversarial_losses.png"),
    )?;
    fs::write(dir.join("summary.toml"), toml::to_string(&summary)?)?;
    Ok(summary)
}
