//! Evaluation metrics on physical (denormalized) velocities: percent error,
//! SSIM in global and Gaussian-windowed form, velocity histograms, and the
//! per-test-set report.

use std::fs;
use std::path::Path;

use ndarray::{Array2, Array3, ArrayView2, Zip};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::preprocess::{NormStats, PatchOrigin, PatchPair};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),
    #[error("reference velocity must be positive, found {value} at {index:?}")]
    NonPositiveReference { index: (usize, usize), value: f64 },
    #[error("an SSIM map needs a windowed configuration")]
    GlobalMap,
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("invalid metric config: {0}")]
    Config(String),
    #[error("prediction failed: {0}")]
    Predictor(Box<dyn std::error::Error + Send + Sync>),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

fn same_shape(y: &ArrayView2<'_, f64>, y_hat: &ArrayView2<'_, f64>) -> Result<(), MetricsError> {
    if y.dim() != y_hat.dim() {
        return Err(MetricsError::ShapeMismatch(y.dim(), y_hat.dim()));
    }
    if y.is_empty() {
        return Err(MetricsError::Empty("image"));
    }
    Ok(())
}

/// Per-pixel `|y - y_hat| / y * 100`.
pub fn percent_error_map(y: ArrayView2<'_, f64>, y_hat: ArrayView2<'_, f64>) -> Result<Array2<f64>, MetricsError> {
    same_shape(&y, &y_hat)?;
    if let Some((index, &value)) = y.indexed_iter().find(|(_, &v)| !(v > 0.0)) {
        return Err(MetricsError::NonPositiveReference { index, value });
    }
    Ok(Zip::from(&y).and(&y_hat).map_collect(|&a, &b| (a - b).abs() / a * 100.0))
}

/// Mean percent error of `y_hat` against the reference `y`.
pub fn percent_error(y: ArrayView2<'_, f64>, y_hat: ArrayView2<'_, f64>) -> Result<f64, MetricsError> {
    let map = percent_error_map(y, y_hat)?;
    Ok(map.sum() / map.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SsimWindow {
    /// One set of statistics over the whole image.
    Global,
    /// Gaussian-weighted local statistics around every pixel; the window is
    /// truncated at the image border and its weights renormalized.
    Gaussian { size: usize, sigma: f64 },
}

impl SsimWindow {
    pub const STANDARD: SsimWindow = SsimWindow::Gaussian { size: 11, sigma: 1.5 };

    pub fn label(&self) -> String {
        match self {
            SsimWindow::Global => "global".into(),
            SsimWindow::Gaussian { size, sigma } => format!("gaussian{size}x{size}-sigma{sigma}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimConfig {
    pub k1: f64,
    pub k2: f64,
    /// Dynamic range `L` of the compared values.
    pub data_range: f64,
    pub window: SsimWindow,
}

impl SsimConfig {
    pub fn new(data_range: f64, window: SsimWindow) -> Self {
        Self {
            k1: 0.01,
            k2: 0.03,
            data_range,
            window,
        }
    }

    pub fn c1(&self) -> f64 {
        (self.k1 * self.data_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.data_range).powi(2)
    }

    pub fn c3(&self) -> f64 {
        self.c2() / 2.0
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        if !(self.c1() > 0.0 && self.c2() > 0.0 && self.c1().is_finite() && self.c2().is_finite()) {
            return Err(MetricsError::Config(format!(
                "constants must be positive: k1={} k2={} L={}",
                self.k1, self.k2, self.data_range
            )));
        }
        if let SsimWindow::Gaussian { size, sigma } = self.window {
            if size % 2 == 0 || size == 0 || !(sigma > 0.0) {
                return Err(MetricsError::Config(format!(
                    "window size must be odd and sigma positive, got {size} / {sigma}"
                )));
            }
        }
        Ok(())
    }
}

/// Luminance, contrast and structure terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimComponents {
    pub l: f64,
    pub c: f64,
    pub s: f64,
}

/// First and second moments of a pair of signals.
#[derive(Debug, Clone, Copy)]
struct Moments {
    mu_y: f64,
    mu_p: f64,
    var_y: f64,
    var_p: f64,
    cov: f64,
}

impl Moments {
    fn components(&self, cfg: &SsimConfig) -> SsimComponents {
        let (c1, c2, c3) = (cfg.c1(), cfg.c2(), cfg.c3());
        let (sd_y, sd_p) = (self.var_y.max(0.0).sqrt(), self.var_p.max(0.0).sqrt());
        SsimComponents {
            l: (2.0 * self.mu_y * self.mu_p + c1) / (self.mu_y.powi(2) + self.mu_p.powi(2) + c1),
            c: (2.0 * sd_y * sd_p + c2) / (self.var_y + self.var_p + c2),
            s: (self.cov + c3) / (sd_y * sd_p + c3),
        }
    }

    /// The closed form obtained with `C3 = C2 / 2`.
    fn ssim(&self, cfg: &SsimConfig) -> f64 {
        let (c1, c2) = (cfg.c1(), cfg.c2());
        ((2.0 * self.mu_y * self.mu_p + c1) * (2.0 * self.cov + c2))
            / ((self.mu_y.powi(2) + self.mu_p.powi(2) + c1) * (self.var_y + self.var_p + c2))
    }
}

fn global_moments(y: &ArrayView2<'_, f64>, p: &ArrayView2<'_, f64>) -> Moments {
    let n = y.len() as f64;
    let mu_y = y.sum() / n;
    let mu_p = p.sum() / n;
    let (mut var_y, mut var_p, mut cov) = (0.0, 0.0, 0.0);
    Zip::from(y).and(p).for_each(|&a, &b| {
        let (da, db) = (a - mu_y, b - mu_p);
        var_y += da * da;
        var_p += db * db;
        cov += da * db;
    });
    Moments {
        mu_y,
        mu_p,
        var_y: var_y / n,
        var_p: var_p / n,
        cov: cov / n,
    }
}

fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let r = (size / 2) as isize;
    (-r..=r).map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp()).collect()
}

/// Separable weighted mean of `img` around every pixel, with the kernel cut
/// at the border and renormalized.
fn filter(img: &Array2<f64>, kernel: &[f64]) -> Array2<f64> {
    let r = (kernel.len() / 2) as isize;
    let (h, w) = img.dim();
    let pass = |src: &Array2<f64>, along_rows: bool| -> Array2<f64> {
        Array2::from_shape_fn((h, w), |(i, j)| {
            let (centre, len) = if along_rows { (j as isize, w) } else { (i as isize, h) };
            let (mut acc, mut norm) = (0.0, 0.0);
            for d in -r..=r {
                let q = centre + d;
                if q < 0 || q >= len as isize {
                    continue;
                }
                let wgt = kernel[(d + r) as usize];
                let v = if along_rows { src[[i, q as usize]] } else { src[[q as usize, j]] };
                acc += wgt * v;
                norm += wgt;
            }
            acc / norm
        })
    };
    pass(&pass(img, true), false)
}

fn local_moments(y: &ArrayView2<'_, f64>, p: &ArrayView2<'_, f64>, size: usize, sigma: f64) -> Array2<Moments> {
    let k = gaussian_kernel(size, sigma);
    let mu_y = filter(&y.to_owned(), &k);
    let mu_p = filter(&p.to_owned(), &k);
    let yy = filter(&(y * y), &k);
    let pp = filter(&(p * p), &k);
    let yp = filter(&(y * p), &k);
    Array2::from_shape_fn(y.dim(), |ix| Moments {
        mu_y: mu_y[ix],
        mu_p: mu_p[ix],
        var_y: yy[ix] - mu_y[ix] * mu_y[ix],
        var_p: pp[ix] - mu_p[ix] * mu_p[ix],
        cov: yp[ix] - mu_y[ix] * mu_p[ix],
    })
}

/// `l`, `c`, `s` over the whole image (global mode) or averaged over all
/// window positions (windowed mode).
pub fn ssim_components(
    y: ArrayView2<'_, f64>,
    y_hat: ArrayView2<'_, f64>,
    cfg: &SsimConfig,
) -> Result<SsimComponents, MetricsError> {
    same_shape(&y, &y_hat)?;
    cfg.validate()?;
    match cfg.window {
        SsimWindow::Global => Ok(global_moments(&y, &y_hat).components(cfg)),
        SsimWindow::Gaussian { size, sigma } => {
            let m = local_moments(&y, &y_hat, size, sigma);
            let n = m.len() as f64;
            let (l, c, s) = m.iter().map(|mo| mo.components(cfg)).fold((0.0, 0.0, 0.0), |acc, k| {
                (acc.0 + k.l, acc.1 + k.c, acc.2 + k.s)
            });
            Ok(SsimComponents { l: l / n, c: c / n, s: s / n })
        }
    }
}

pub fn ssim(y: ArrayView2<'_, f64>, y_hat: ArrayView2<'_, f64>, cfg: &SsimConfig) -> Result<f64, MetricsError> {
    same_shape(&y, &y_hat)?;
    cfg.validate()?;
    match cfg.window {
        SsimWindow::Global => Ok(global_moments(&y, &y_hat).ssim(cfg)),
        SsimWindow::Gaussian { .. } => {
            let map = ssim_map(y, y_hat, cfg)?;
            Ok(map.sum() / map.len() as f64)
        }
    }
}

/// Per-pixel windowed SSIM; same shape as the inputs.
pub fn ssim_map(y: ArrayView2<'_, f64>, y_hat: ArrayView2<'_, f64>, cfg: &SsimConfig) -> Result<Array2<f64>, MetricsError> {
    same_shape(&y, &y_hat)?;
    cfg.validate()?;
    match cfg.window {
        SsimWindow::Global => Err(MetricsError::GlobalMap),
        SsimWindow::Gaussian { size, sigma } => {
            Ok(local_moments(&y, &y_hat, size, sigma).map(|m| m.ssim(cfg)))
        }
    }
}

/// Equal-width binning over `[lo, hi]`; values outside land in the edge bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn bin_center(&self, b: usize) -> f64 {
        self.lo + (b as f64 + 0.5) * self.bin_width()
    }
}

pub fn velocity_histogram(
    values: impl IntoIterator<Item = f64>,
    bins: usize,
    range: (f64, f64),
) -> Result<Histogram, MetricsError> {
    let (lo, hi) = range;
    if bins == 0 || !(hi > lo) {
        return Err(MetricsError::Config(format!("need bins >= 1 and hi > lo, got {bins} over {range:?}")));
    }
    let mut counts = vec![0u64; bins];
    let width = (hi - lo) / bins as f64;
    let mut any = false;
    for v in values {
        any = true;
        let b = ((v - lo) / width).floor();
        let b = if b.is_nan() { 0 } else { (b.max(0.0) as usize).min(bins - 1) };
        counts[b] += 1;
    }
    if !any {
        return Err(MetricsError::Empty("histogram input"));
    }
    Ok(Histogram { lo, hi, counts })
}

/// Produces a normalized `[0, 1]` velocity patch from a normalized input stack.
pub trait PatchPredictor {
    type Error: std::error::Error + Send + Sync + 'static;

    fn predict(&mut self, input: &Array3<f64>) -> Result<Array2<f64>, Self::Error>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub window: SsimWindow,
    /// Patches for which maps are kept (evenly spread over the test set).
    pub n_map_samples: usize,
    pub histogram_bins: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            window: SsimWindow::STANDARD,
            n_map_samples: 3,
            histogram_bins: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchScore {
    pub index: usize,
    pub inline: usize,
    pub crossline: usize,
    pub sample: usize,
    pub pe: f64,
    pub ssim: f64,
}

/// Target, prediction and error maps of one patch, in m/s.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchMaps {
    pub index: usize,
    pub origin: PatchOrigin,
    pub target: Array2<f64>,
    pub prediction: Array2<f64>,
    pub pe_map: Array2<f64>,
    pub ssim_map: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub pe_mean: f64,
    pub ssim_mean: f64,
    pub ssim_window: SsimWindow,
    pub n_patches: usize,
    pub norm: NormStats,
    pub per_patch: Vec<PatchScore>,
    pub maps: Vec<PatchMaps>,
    pub histogram_pred: Histogram,
    pub histogram_true: Histogram,
}

fn map_sample_indices(n: usize, k: usize) -> Vec<usize> {
    let k = k.min(n);
    (0..k).map(|i| i * n / k).collect()
}

/// Runs `predictor` on every test patch, denormalizes prediction and target
/// with `norm`, and aggregates PE and SSIM as unweighted means over patches.
pub fn evaluate<P: PatchPredictor>(
    predictor: &mut P,
    patches: &[PatchPair],
    norm: NormStats,
    cfg: &EvalConfig,
) -> Result<MetricReport, MetricsError> {
    if patches.is_empty() {
        return Err(MetricsError::Empty("test set"));
    }
    let ssim_cfg = SsimConfig::new(norm.range(), cfg.window);
    ssim_cfg.validate()?;
    let map_cfg = match cfg.window {
        SsimWindow::Global => SsimConfig::new(norm.range(), SsimWindow::STANDARD),
        _ => ssim_cfg,
    };
    let keep = map_sample_indices(patches.len(), cfg.n_map_samples);
    let mut per_patch = Vec::with_capacity(patches.len());
    let mut maps = Vec::new();
    let mut pred_values = Vec::new();
    let mut true_values = Vec::new();
    for (index, patch) in patches.iter().enumerate() {
        let pred_norm = predictor
            .predict(&patch.input)
            .map_err(|e| MetricsError::Predictor(Box::new(e)))?;
        let prediction = pred_norm.mapv(|u| norm.denormalize_value(u));
        let target = patch.target.mapv(|u| norm.denormalize_value(u));
        let pe = percent_error(target.view(), prediction.view())?;
        let score = ssim(target.view(), prediction.view(), &ssim_cfg)?;
        per_patch.push(PatchScore {
            index,
            inline: patch.origin.inline,
            crossline: patch.origin.crossline,
            sample: patch.origin.sample,
            pe,
            ssim: score,
        });
        pred_values.extend(prediction.iter().copied());
        true_values.extend(target.iter().copied());
        if keep.contains(&index) {
            maps.push(PatchMaps {
                index,
                origin: patch.origin,
                pe_map: percent_error_map(target.view(), prediction.view())?,
                ssim_map: ssim_map(target.view(), prediction.view(), &map_cfg)?,
                target,
                prediction,
            });
        }
    }
    let n = per_patch.len() as f64;
    let range = (norm.x_min, norm.x_max);
    Ok(MetricReport {
        pe_mean: per_patch.iter().map(|p| p.pe).sum::<f64>() / n,
        ssim_mean: per_patch.iter().map(|p| p.ssim).sum::<f64>() / n,
        ssim_window: cfg.window,
        n_patches: patches.len(),
        norm,
        per_patch,
        maps,
        histogram_pred: velocity_histogram(pred_values, cfg.histogram_bins, range)?,
        histogram_true: velocity_histogram(true_values, cfg.histogram_bins, range)?,
    })
}

impl MetricReport {
    /// Writes `summary.csv` (key,value rows), `per_patch.csv` and
    /// `histograms.csv` into `dir`.
    pub fn write_csv(&self, dir: impl AsRef<Path>, extra: &[(&str, String)]) -> Result<(), MetricsError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
        w.write_record(["key", "value"])?;
        let rows = [
            ("pe_mean", self.pe_mean.to_string()),
            ("ssim_mean", self.ssim_mean.to_string()),
            ("ssim_window", self.ssim_window.label()),
            ("n_patches", self.n_patches.to_string()),
            ("norm_x_min", self.norm.x_min.to_string()),
            ("norm_x_max", self.norm.x_max.to_string()),
        ];
        for (k, v) in rows.iter().map(|(k, v)| (*k, v.clone())).chain(extra.iter().cloned()) {
            w.write_record([k, v.as_str()])?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("per_patch.csv"))?;
        for p in &self.per_patch {
            w.serialize(p)?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("histograms.csv"))?;
        w.write_record(["bin_center", "count_true", "count_pred"])?;
        for b in 0..self.histogram_true.counts.len() {
            w.write_record([
                self.histogram_true.bin_center(b).to_string(),
                self.histogram_true.counts[b].to_string(),
                self.histogram_pred.counts[b].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
