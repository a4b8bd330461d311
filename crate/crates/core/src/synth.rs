//! Synthetic paired data: a layered time-domain earth model with optional
//! salt bodies, its average velocity, the TWT grid, and a convolutional
//! post-stack seismic image.
//!
//! The model is three-dimensional: horizons undulate smoothly in both the
//! inline and crossline direction and salt bodies are ellipsoids, so
//! adjacent inline sections are correlated.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Role, VolumeSet};
use crate::segy::{sample_bytes, write_segy, SegyError};
use crate::volume::{Volume3D, VolumeError};

/// Velocities are clamped to `[v_water, V_CEILING]`.
pub const V_CEILING: f64 = 6500.0;

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Segy(#[from] SegyError),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("manifest: {0}")]
    Manifest(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeoModelConfig {
    pub n_inlines: usize,
    pub n_crosslines: usize,
    pub n_samples: usize,
    /// Sample interval, seconds.
    pub dt: f64,
    /// Trace spacing, meters.
    pub spacing: f64,
    pub n_layers: usize,
    pub v_water: f64,
    pub v_range_min: f64,
    pub v_range_max: f64,
    pub horizon_roughness: f64,
    pub salt_probability: f64,
    pub salt_velocity: f64,
    pub wavelet_peak_hz: f64,
    pub snr_db: f64,
    /// Lateral Gaussian σ (traces) applied to the average velocity; 0 disables.
    pub avg_smoothing_sigma: f64,
    pub seed: u64,
}

impl Default for GeoModelConfig {
    fn default() -> Self {
        Self {
            n_inlines: 24,
            n_crosslines: 256,
            n_samples: 160,
            dt: 0.004,
            spacing: 12.5,
            n_layers: 8,
            v_water: 1480.0,
            v_range_min: 1600.0,
            v_range_max: 4200.0,
            horizon_roughness: 0.08,
            salt_probability: 0.3,
            salt_velocity: 4500.0,
            wavelet_peak_hz: 25.0,
            snr_db: 20.0,
            avg_smoothing_sigma: 8.0,
            seed: 7,
        }
    }
}

impl GeoModelConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |m: String| Err(SynthError::Config(m));
        if self.n_inlines == 0 || self.n_crosslines == 0 || self.n_samples == 0 {
            return fail("grid dimensions must be at least 1".into());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) || !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return fail("dt and spacing must be positive".into());
        }
        if self.n_layers < 2 {
            return fail(format!("n_layers must be >= 2, got {}", self.n_layers));
        }
        if !(self.v_water > 0.0) || self.v_range_min < self.v_water || self.v_range_max < self.v_range_min {
            return fail(format!(
                "need 0 < v_water <= v_range_min <= v_range_max, got {} / {} / {}",
                self.v_water, self.v_range_min, self.v_range_max
            ));
        }
        if !self.snr_db.is_finite() {
            return fail("snr_db must be finite".into());
        }
        if !(0.0..=1.0).contains(&self.salt_probability) {
            return fail(format!("salt_probability {} outside [0, 1]", self.salt_probability));
        }
        if !(self.horizon_roughness >= 0.0) || !(self.avg_smoothing_sigma >= 0.0) {
            return fail("horizon_roughness and avg_smoothing_sigma must be >= 0".into());
        }
        if !(self.wavelet_peak_hz > 0.0) || !(self.salt_velocity > 0.0) {
            return fail("wavelet_peak_hz and salt_velocity must be positive".into());
        }
        Ok(())
    }

    fn record_length(&self) -> f64 {
        self.n_samples as f64 * self.dt
    }

    fn clamp_velocity(&self, v: f64) -> f64 {
        v.clamp(self.v_water, V_CEILING.max(self.v_water))
    }
}

/// Sum of low-wavenumber plane sinusoids over normalized lateral coordinates.
#[derive(Debug, Clone)]
struct Undulation {
    terms: Vec<(f64, f64, f64, f64)>, // amplitude, k_inline, k_crossline, phase
}

impl Undulation {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let mut terms: Vec<_> = (0..3)
            .map(|_| {
                let k_il = rng.random_range(-2.0..2.0);
                let k_xl = rng.random_range(0.5..2.5);
                (rng.random_range(0.2..1.0), k_il, k_xl, rng.random_range(0.0..2.0 * PI))
            })
            .collect();
        let norm: f64 = terms.iter().map(|t| t.0).sum();
        for t in &mut terms {
            t.0 /= norm;
        }
        Self { terms }
    }

    /// Value in [-1, 1] at normalized lateral position `(u_il, u_xl)`.
    fn at(&self, u_il: f64, u_xl: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(a, ki, kx, ph)| a * (2.0 * PI * (ki * u_il + kx * u_xl) + ph).sin())
            .sum()
    }
}

/// Ellipsoidal salt body in (inline, crossline, time) index space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaltBody {
    pub center: (f64, f64, f64),
    pub semi_axes: (f64, f64, f64),
}

impl SaltBody {
    fn contains(&self, i: f64, j: f64, t: f64) -> bool {
        let (ci, cj, ct) = self.center;
        let (ai, aj, at) = self.semi_axes;
        ((i - ci) / ai).powi(2) + ((j - cj) / aj).powi(2) + ((t - ct) / at).powi(2) <= 1.0
    }
}

/// A random layered model fully determined by its config (and seed).
#[derive(Debug, Clone)]
pub struct GeoModel {
    cfg: GeoModelConfig,
    /// Interval velocity per layer, top (water) first; nondecreasing.
    layer_velocities: Vec<f64>,
    /// Mean two-way time of each boundary, water bottom first.
    boundary_times: Vec<f64>,
    shared: Undulation,
    own: Vec<Undulation>,
    salt: Vec<SaltBody>,
}

impl GeoModel {
    pub fn new(cfg: &GeoModelConfig) -> Result<Self, SynthError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let record = cfg.record_length();

        let mut sediments: Vec<f64> = (0..cfg.n_layers - 1)
            .map(|_| {
                if cfg.v_range_max > cfg.v_range_min {
                    rng.random_range(cfg.v_range_min..=cfg.v_range_max)
                } else {
                    cfg.v_range_min
                }
            })
            .map(|v| cfg.clamp_velocity(v))
            .collect();
        sediments.sort_by(f64::total_cmp);
        let mut layer_velocities = vec![cfg.v_water];
        layer_velocities.extend(sediments);

        let water_bottom = record * rng.random_range(0.18..0.28);
        let mut boundary_times = vec![water_bottom];
        let mut deeper: Vec<f64> = (0..cfg.n_layers - 2)
            .map(|_| rng.random_range(water_bottom..record))
            .collect();
        deeper.sort_by(f64::total_cmp);
        boundary_times.extend(deeper);

        let shared = Undulation::random(&mut rng);
        let own = (0..boundary_times.len()).map(|_| Undulation::random(&mut rng)).collect();

        let candidates = cfg.n_inlines.div_ceil(16).max(1);
        let mut salt = Vec::new();
        for _ in 0..candidates {
            // Draw the geometry unconditionally so the rng stream does not
            // depend on salt_probability.
            let body = SaltBody {
                center: (
                    rng.random_range(0.0..cfg.n_inlines as f64),
                    rng.random_range(0.0..cfg.n_crosslines as f64),
                    rng.random_range(0.55..0.85) * cfg.n_samples as f64,
                ),
                semi_axes: (
                    rng.random_range(0.25..0.6) * cfg.n_inlines.max(8) as f64,
                    rng.random_range(0.06..0.16) * cfg.n_crosslines as f64,
                    rng.random_range(0.06..0.14) * cfg.n_samples as f64,
                ),
            };
            let draw: f64 = rng.random();
            if draw < cfg.salt_probability {
                salt.push(body);
            }
        }

        Ok(Self {
            cfg: cfg.clone(),
            layer_velocities,
            boundary_times,
            shared,
            own,
            salt,
        })
    }

    pub fn config(&self) -> &GeoModelConfig {
        &self.cfg
    }

    /// The layer table: interval velocity of each layer, water first.
    pub fn layer_velocities(&self) -> &[f64] {
        &self.layer_velocities
    }

    pub fn salt_bodies(&self) -> &[SaltBody] {
        &self.salt
    }

    /// Boundary times at one lateral position; nondecreasing (layers pinch
    /// out rather than cross).
    pub fn boundaries_at(&self, inline: usize, crossline: usize) -> Vec<f64> {
        let extent = self.cfg.n_crosslines as f64 * self.cfg.spacing;
        let u_il = inline as f64 * self.cfg.spacing / extent;
        let u_xl = crossline as f64 * self.cfg.spacing / extent;
        let amp = self.cfg.horizon_roughness * self.cfg.record_length();
        let common = self.shared.at(u_il, u_xl);
        let mut prev = 0.0f64;
        self.boundary_times
            .iter()
            .zip(&self.own)
            .map(|(&mean, own)| {
                let t = (mean + amp * (0.6 * common + 0.4 * own.at(u_il, u_xl))).max(prev);
                prev = t;
                t
            })
            .collect()
    }

    /// Interval velocity (crossline × time) at inline position `inline`.
    pub fn velocity_section(&self, inline: usize) -> Result<Array2<f64>, SynthError> {
        let cfg = &self.cfg;
        if inline >= cfg.n_inlines {
            return Err(SynthError::Input(format!(
                "inline {inline} outside model with {} inlines",
                cfg.n_inlines
            )));
        }
        let mut section = Array2::zeros((cfg.n_crosslines, cfg.n_samples));
        for j in 0..cfg.n_crosslines {
            let bounds = self.boundaries_at(inline, j);
            for k in 0..cfg.n_samples {
                let t = k as f64 * cfg.dt;
                let layer = bounds.iter().take_while(|&&b| b <= t).count();
                let mut v = self.layer_velocities[layer];
                if self.salt.iter().any(|s| s.contains(inline as f64, j as f64, k as f64)) {
                    v = cfg.salt_velocity;
                }
                section[[j, k]] = cfg.clamp_velocity(v);
            }
        }
        Ok(section)
    }
}

/// Interval-velocity section (crossline × time) for one inline of the model
/// described by `cfg`.
pub fn generate_velocity_section(cfg: &GeoModelConfig, inline: usize) -> Result<Array2<f64>, SynthError> {
    GeoModel::new(cfg)?.velocity_section(inline)
}

/// Per-trace prefix mean of interval velocity down to each sample, followed
/// by lateral Gaussian smoothing with standard deviation `lateral_sigma`
/// traces (0 disables). Sections are crossline × time.
pub fn average_velocity(v_int: ArrayView2<'_, f64>, lateral_sigma: f64) -> Result<Array2<f64>, SynthError> {
    let (n_traces, n_samples) = v_int.dim();
    if n_samples == 0 || n_traces == 0 {
        return Err(SynthError::Input("average_velocity: empty trace".into()));
    }
    if v_int.iter().any(|&v| !(v > 0.0)) {
        return Err(SynthError::Input("average_velocity: interval velocity must be positive".into()));
    }
    let mut out = Array2::zeros((n_traces, n_samples));
    for (trace, mut avg) in v_int.axis_iter(Axis(0)).zip(out.axis_iter_mut(Axis(0))) {
        let mut sum = 0.0;
        for (k, (&v, a)) in trace.iter().zip(avg.iter_mut()).enumerate() {
            sum += v;
            *a = sum / (k + 1) as f64;
        }
    }
    if lateral_sigma > 0.0 {
        out = smooth_lateral(out.view(), lateral_sigma);
    }
    Ok(out)
}

/// Gaussian smoothing along the trace axis; the kernel is truncated at 3σ
/// and renormalized where it overhangs the section edge.
pub fn smooth_lateral(section: ArrayView2<'_, f64>, sigma: f64) -> Array2<f64> {
    let (n_traces, n_samples) = section.dim();
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|d| (-(d as f64).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let mut out = Array2::zeros((n_traces, n_samples));
    for j in 0..n_traces as isize {
        let lo = (j - radius).max(0);
        let hi = (j + radius).min(n_traces as isize - 1);
        let weight: f64 = (lo..=hi).map(|m| kernel[(m - j + radius) as usize]).sum();
        for m in lo..=hi {
            let w = kernel[(m - j + radius) as usize] / weight;
            let src = section.row(m as usize);
            let mut dst = out.row_mut(j as usize);
            dst.scaled_add(w, &src);
        }
    }
    out
}

/// `twt[trace, k] = k * dt`.
pub fn twt_grid(n_samples: usize, dt: f64, n_traces: usize) -> Array2<f64> {
    Array2::from_shape_fn((n_traces, n_samples), |(_, k)| k as f64 * dt)
}

/// Normal-incidence reflectivity for constant density:
/// `r[k] = (v[k+1] - v[k]) / (v[k+1] + v[k])`, last sample 0.
pub fn reflectivity(v_int: ArrayView2<'_, f64>) -> Array2<f64> {
    let (n_traces, n_samples) = v_int.dim();
    let mut r = Array2::zeros((n_traces, n_samples));
    for j in 0..n_traces {
        for k in 0..n_samples.saturating_sub(1) {
            let (a, b) = (v_int[[j, k]], v_int[[j, k + 1]]);
            r[[j, k]] = (b - a) / (b + a);
        }
    }
    r
}

/// Ricker wavelet sampled at `t = k * dt`, `k` in `[-half_len, half_len]`.
pub fn ricker(peak_hz: f64, dt: f64, half_len: usize) -> Vec<f64> {
    let h = half_len as isize;
    (-h..=h)
        .map(|k| {
            let a = (PI * peak_hz * k as f64 * dt).powi(2);
            (1.0 - 2.0 * a) * (-a).exp()
        })
        .collect()
}

/// Half-length (samples) covering ±1.5 / f of a Ricker wavelet.
pub fn ricker_half_len(peak_hz: f64, dt: f64) -> usize {
    ((1.5 / (peak_hz * dt)).ceil() as usize).max(1)
}

/// Convolves each trace with the centered `wavelet` (same length output,
/// zero padding) and adds Gaussian noise at `snr_db` relative to the mean
/// power of the clean section. `snr_db = +inf` disables noise.
pub fn synthesize_seismic(
    refl: ArrayView2<'_, f64>,
    wavelet: &[f64],
    snr_db: f64,
    seed: u64,
) -> Result<Array2<f64>, SynthError> {
    let (n_traces, n_samples) = refl.dim();
    if wavelet.len().is_multiple_of(2) {
        return Err(SynthError::Input("wavelet length must be odd (centered)".into()));
    }
    if wavelet.len() >= n_samples {
        return Err(SynthError::Input(format!(
            "wavelet of {} samples is not shorter than the {n_samples}-sample trace",
            wavelet.len()
        )));
    }
    let half = (wavelet.len() / 2) as isize;
    let mut out = Array2::zeros((n_traces, n_samples));
    for j in 0..n_traces {
        for k in 0..n_samples as isize {
            let mut acc = 0.0;
            for (m, &w) in (-half..=half).zip(wavelet) {
                let src = k - m;
                if (0..n_samples as isize).contains(&src) {
                    acc += refl[[j, src as usize]] * w;
                }
            }
            out[[j, k as usize]] = acc;
        }
    }
    if snr_db.is_finite() {
        let signal_power = out.iter().map(|v| v * v).sum::<f64>() / out.len() as f64;
        let sigma = (signal_power / 10f64.powf(snr_db / 10.0)).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in out.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += sigma * z;
        }
    } else if snr_db < 0.0 {
        return Err(SynthError::Input("snr_db = -inf is meaningless".into()));
    }
    Ok(out)
}

/// Generates all four volumes in memory.
pub fn generate_volumes(cfg: &GeoModelConfig) -> Result<VolumeSet, SynthError> {
    let model = GeoModel::new(cfg)?;
    let shape = (cfg.n_inlines, cfg.n_crosslines, cfg.n_samples);
    let mut v_int = Array3::zeros(shape);
    let mut v_avg = Array3::zeros(shape);
    let mut seismic = Array3::zeros(shape);
    let wavelet = ricker(cfg.wavelet_peak_hz, cfg.dt, ricker_half_len(cfg.wavelet_peak_hz, cfg.dt));
    for i in 0..cfg.n_inlines {
        let vi = model.velocity_section(i)?;
        let va = average_velocity(vi.view(), cfg.avg_smoothing_sigma)?;
        let seis = synthesize_seismic(
            reflectivity(vi.view()).view(),
            &wavelet,
            cfg.snr_db,
            cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64),
        )?;
        v_int.index_axis_mut(Axis(0), i).assign(&vi);
        v_avg.index_axis_mut(Axis(0), i).assign(&va);
        seismic.index_axis_mut(Axis(0), i).assign(&seis);
    }
    let twt = Array3::from_shape_fn(shape, |(_, _, k)| k as f64 * cfg.dt);
    let mk = |a| Volume3D::new(a, cfg.spacing, cfg.spacing, cfg.dt);
    Ok(VolumeSet::new(mk(seismic)?, mk(v_avg)?, mk(twt)?, mk(v_int)?)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub file: String,
    /// CRC-32 of the big-endian sample words, lowercase hex.
    pub crc32: String,
}

/// What `build_dataset` wrote; serialized as `manifest.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub config: GeoModelConfig,
    pub seismic: ManifestFile,
    pub v_avg: ManifestFile,
    pub twt: ManifestFile,
    pub v_int: ManifestFile,
}

impl DatasetManifest {
    pub fn file(&self, role: Role) -> &ManifestFile {
        match role {
            Role::Seismic => &self.seismic,
            Role::VAvg => &self.v_avg,
            Role::Twt => &self.twt,
            Role::VInt => &self.v_int,
        }
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, SynthError> {
        let path = dir.as_ref().join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|source| SynthError::Io { path, source })?;
        toml::from_str(&text).map_err(|e| SynthError::Manifest(e.to_string()))
    }
}

pub fn checksum(volume: &Volume3D) -> Result<String, SegyError> {
    Ok(format!("{:08x}", crc32fast::hash(&sample_bytes(volume)?)))
}

/// Writes the four volumes and `manifest.toml` into `out_dir`.
pub fn build_dataset(cfg: &GeoModelConfig, out_dir: impl AsRef<Path>) -> Result<DatasetManifest, SynthError> {
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|source| SynthError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let set = generate_volumes(cfg)?;
    let entry = |role: Role| -> Result<ManifestFile, SynthError> {
        let volume = set.get(role);
        write_segy(volume, out_dir.join(role.file_name()))?;
        Ok(ManifestFile {
            file: role.file_name().to_string(),
            crc32: checksum(volume)?,
        })
    };
    let manifest = DatasetManifest {
        format: "segy-rev1-ieee-be".into(),
        config: cfg.clone(),
        seismic: entry(Role::Seismic)?,
        v_avg: entry(Role::VAvg)?,
        twt: entry(Role::Twt)?,
        v_int: entry(Role::VInt)?,
    };
    let path = out_dir.join(MANIFEST_FILE);
    let text = toml::to_string(&manifest).map_err(|e| SynthError::Manifest(e.to_string()))?;
    fs::write(&path, text).map_err(|source| SynthError::Io { path, source })?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn flat_cfg() -> GeoModelConfig {
        GeoModelConfig {
            n_inlines: 2,
            n_crosslines: 16,
            n_samples: 64,
            n_layers: 2,
            horizon_roughness: 0.0,
            salt_probability: 0.0,
            ..GeoModelConfig::default()
        }
    }

    #[test]
    fn flat_two_layer_model() {
        let cfg = flat_cfg();
        let model = GeoModel::new(&cfg).unwrap();
        let sec = model.velocity_section(1).unwrap();
        let table = model.layer_velocities();
        assert_eq!(table.len(), 2);
        let first = sec.row(0).to_owned();
        for row in sec.rows() {
            assert_eq!(row, first);
        }
        let values: std::collections::BTreeSet<u64> = sec.iter().map(|v| v.to_bits()).collect();
        assert_eq!(values.len(), 2);
        assert_eq!(first[0], cfg.v_water);
        assert_eq!(first[63], table[1]);
    }

    #[test]
    fn velocity_section_is_deterministic() {
        let cfg = GeoModelConfig::default();
        assert_eq!(
            generate_velocity_section(&cfg, 3).unwrap(),
            generate_velocity_section(&cfg, 3).unwrap()
        );
    }

    #[test]
    fn traces_follow_the_layer_table() {
        for seed in 0..5 {
            let cfg = GeoModelConfig {
                seed,
                salt_probability: 0.0,
                horizon_roughness: 0.2,
                ..GeoModelConfig::default()
            };
            let model = GeoModel::new(&cfg).unwrap();
            let table = model.layer_velocities();
            assert!(table.windows(2).all(|w| w[0] <= w[1]));
            assert!(table[1..].iter().all(|&v| (cfg.v_range_min..=cfg.v_range_max).contains(&v)));
            let sec = model.velocity_section(5).unwrap();
            for trace in sec.rows() {
                assert!(trace.iter().all(|v| table.contains(v)));
                assert!(trace.as_slice().unwrap().windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }

    #[test]
    fn salt_inserted_when_certain() {
        let cfg = GeoModelConfig {
            salt_probability: 1.0,
            ..GeoModelConfig::default()
        };
        let model = GeoModel::new(&cfg).unwrap();
        assert!(!model.salt_bodies().is_empty());
        let set = generate_volumes(&cfg).unwrap();
        assert!(set.v_int.samples().iter().any(|&v| v == cfg.salt_velocity));
    }

    #[test]
    fn config_validation() {
        let bad = GeoModelConfig {
            v_range_min: 1000.0,
            ..GeoModelConfig::default()
        };
        assert!(matches!(GeoModel::new(&bad), Err(SynthError::Config(_))));
        let bad = GeoModelConfig {
            n_layers: 1,
            ..GeoModelConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = GeoModelConfig {
            snr_db: f64::INFINITY,
            ..GeoModelConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn average_velocity_examples() {
        let c = Array2::from_elem((5, 7), 2000.0);
        assert!(average_velocity(c.view(), 0.0).unwrap().iter().all(|&v| v == 2000.0));
        let tr = array![[1500.0, 1500.0, 4500.0]];
        assert_eq!(average_velocity(tr.view(), 0.0).unwrap(), array![[1500.0, 1500.0, 2500.0]]);
        assert!(average_velocity(Array2::<f64>::zeros((3, 0)).view(), 0.0).is_err());
    }

    #[test]
    fn smoothing_leaves_laterally_constant_model_alone() {
        let trace = [1500.0, 1800.0, 2400.0, 2400.0, 3100.0];
        let sec = Array2::from_shape_fn((20, 5), |(_, k)| trace[k]);
        let raw = average_velocity(sec.view(), 0.0).unwrap();
        let smooth = average_velocity(sec.view(), 8.0).unwrap();
        for (a, b) in raw.iter().zip(smooth.iter()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn twt_examples() {
        let g = twt_grid(3, 0.004, 4);
        for row in g.rows() {
            assert_eq!(row.to_vec(), vec![0.0, 0.004, 0.008]);
        }
        assert!(g.column(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reflectivity_examples() {
        let c = Array2::from_elem((2, 6), 2500.0);
        assert!(reflectivity(c.view()).iter().all(|&r| r == 0.0));
        let tr = array![[2000.0, 2000.0, 3000.0, 3000.0]];
        assert_eq!(reflectivity(tr.view()), array![[0.0, 0.2, 0.0, 0.0]]);
    }

    #[test]
    fn ricker_examples() {
        let w = ricker(25.0, 0.0005, 40);
        assert_eq!(w[40], 1.0);
        for k in 0..40 {
            assert_eq!(w[40 - k], w[40 + k]);
        }
        // Zero crossing at 1/(sqrt(2) pi f) = 0.0090 s for 25 Hz.
        let t0 = 1.0 / (2f64.sqrt() * PI * 25.0);
        assert!((t0 - 0.0090).abs() < 5e-5);
        let exact = ricker(25.0, t0, 1);
        assert!(exact[0].abs() < 1e-12 && exact[2].abs() < 1e-12);
        let before = 17usize; // 0.0085 s
        let after = 19usize; // 0.0095 s
        assert!(w[40 + before] > 0.0 && w[40 + after] < 0.0);
    }

    #[test]
    fn seismic_of_zero_reflectivity_is_zero() {
        let r = Array2::zeros((3, 40));
        let w = ricker(25.0, 0.004, 5);
        let s = synthesize_seismic(r.view(), &w, f64::INFINITY, 1).unwrap();
        assert!(s.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn spike_reproduces_wavelet() {
        let mut r = Array2::zeros((1, 40));
        r[[0, 20]] = 1.0;
        let w = ricker(25.0, 0.004, 5);
        let s = synthesize_seismic(r.view(), &w, f64::INFINITY, 1).unwrap();
        for (m, &wv) in w.iter().enumerate() {
            assert_eq!(s[[0, 15 + m]], wv);
        }
        assert_eq!(s[[0, 14]], 0.0);
        assert_eq!(s[[0, 26]], 0.0);
    }

    #[test]
    fn wavelet_must_be_shorter_than_trace() {
        let r = Array2::zeros((1, 5));
        assert!(synthesize_seismic(r.view(), &ricker(25.0, 0.004, 3), 20.0, 0).is_err());
    }
}
