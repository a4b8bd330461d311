//! Data preparation: outlier clipping, water-column crop, min/max
//! normalization, the contiguous train/test crossline split, random patch
//! sampling and channel stacking.
//!
//! Every statistic is computed on the training region only and then applied
//! unchanged to the whole volume, so the test region never leaks into them.

use ndarray::{s, Array2, Array3, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Role, VolumeSet};
use crate::volume::{Volume3D, VolumeError};

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("empty region: {0}")]
    EmptyRegion(String),
    #[error("crop index {top} out of range for {n_samples} samples")]
    CropOutOfRange { top: usize, n_samples: usize },
    #[error("degenerate normalization range: min {0} == max {1}")]
    DegenerateRange(f64, f64),
    #[error("invalid split fraction {0}: must lie strictly between 0 and 1")]
    BadFraction(f64),
    #[error("split of {n} crosslines at {fraction} leaves an empty {side} set")]
    EmptySplit {
        n: usize,
        fraction: f64,
        side: &'static str,
    },
    #[error("{size}x{size} window does not fit: {0}", size = .1)]
    WindowDoesNotFit(String, usize),
    #[error("channel shapes differ: {0:?}")]
    ShapeMismatch(Vec<(usize, usize)>),
    #[error("unsupported channel count {0} (expected 1 or 3)")]
    BadChannels(usize),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

/// Contiguous block of crosslines `[start, end)` spanning every inline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub xline_start: usize,
    pub xline_end: usize,
}

impl Region {
    pub fn new(xline_start: usize, xline_end: usize) -> Self {
        Self { xline_start, xline_end }
    }

    pub fn len(&self) -> usize {
        self.xline_end.saturating_sub(self.xline_start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, xline: usize) -> bool {
        (self.xline_start..self.xline_end).contains(&xline)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipStats {
    pub mu: f64,
    pub sigma: f64,
}

impl ClipStats {
    pub fn bounds(&self) -> (f64, f64) {
        (self.mu - 2.0 * self.sigma, self.mu + 2.0 * self.sigma)
    }
}

/// Population mean and standard deviation over `region`.
pub fn compute_clip_stats(v: &Volume3D, region: Region) -> Result<ClipStats, PreprocessError> {
    let view = region_view(v, region)?;
    let n = view.len() as f64;
    let mu = view.sum() / n;
    let var = view.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / n;
    Ok(ClipStats { mu, sigma: var.sqrt() })
}

/// Clamps every sample into `[mu - 2 sigma, mu + 2 sigma]`.
pub fn clip_two_sigma(v: &Volume3D, stats: ClipStats) -> Volume3D {
    let (lo, hi) = stats.bounds();
    v.map_samples(|x| x.clamp(lo, hi))
}

/// Drops time samples `[0, top_index)`; `t0` moves down accordingly so the
/// remaining samples keep their absolute two-way time.
pub fn crop_water_column(v: &Volume3D, top_index: usize) -> Result<Volume3D, PreprocessError> {
    let n_samples = v.n_samples();
    if top_index >= n_samples {
        return Err(PreprocessError::CropOutOfRange { top: top_index, n_samples });
    }
    let cropped = v.samples().slice(s![.., .., top_index..]).to_owned();
    let t0 = v.time_of(top_index);
    Ok(v.with_samples(cropped).with_t0(t0))
}

/// Global minimum and maximum of one volume role.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub x_min: f64,
    pub x_max: f64,
}

impl NormStats {
    pub fn new(x_min: f64, x_max: f64) -> Result<Self, PreprocessError> {
        if !(x_max > x_min) {
            return Err(PreprocessError::DegenerateRange(x_min, x_max));
        }
        Ok(Self { x_min, x_max })
    }

    pub fn from_region(v: &Volume3D, region: Region) -> Result<Self, PreprocessError> {
        let view = region_view(v, region)?;
        let (lo, hi) = view
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        Self::new(lo, hi)
    }

    pub fn range(&self) -> f64 {
        self.x_max - self.x_min
    }

    /// `(x - min) / (max - min)`, clamped to `[0, 1]`.
    pub fn normalize_value(&self, x: f64) -> f64 {
        ((x - self.x_min) / self.range()).clamp(0.0, 1.0)
    }

    pub fn denormalize_value(&self, u: f64) -> f64 {
        self.x_min + u * self.range()
    }
}

pub fn normalize(v: &Volume3D, n: NormStats) -> Result<Volume3D, PreprocessError> {
    NormStats::new(n.x_min, n.x_max)?;
    Ok(v.map_samples(|x| n.normalize_value(x)))
}

pub fn denormalize(v: &Volume3D, n: NormStats) -> Volume3D {
    v.map_samples(|u| n.denormalize_value(u))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train_fraction: 0.70 }
    }
}

impl SplitSpec {
    /// Number of leading crosslines assigned to training: the fraction of
    /// `n` rounded to the nearest crossline (3001 at 0.70 gives 2101).
    pub fn boundary_index(&self, n: usize) -> Result<usize, PreprocessError> {
        let f = self.train_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(PreprocessError::BadFraction(f));
        }
        let boundary = (f * n as f64).round() as usize;
        if boundary == 0 {
            return Err(PreprocessError::EmptySplit { n, fraction: f, side: "training" });
        }
        if boundary >= n {
            return Err(PreprocessError::EmptySplit { n, fraction: f, side: "test" });
        }
        Ok(boundary)
    }

    pub fn regions(&self, n_crosslines: usize) -> Result<(Region, Region), PreprocessError> {
        let b = self.boundary_index(n_crosslines)?;
        Ok((Region::new(0, b), Region::new(b, n_crosslines)))
    }
}

/// Contiguous crossline partition shared by all volumes of the set.
pub fn split_train_test(vs: &VolumeSet, spec: SplitSpec) -> Result<(Region, Region), PreprocessError> {
    vs.check_geometry()?;
    spec.regions(vs.seismic.n_crosslines())
}

/// Which channels form the network input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub enum ChannelMode {
    /// `[seismic, v_avg, twt]`.
    Three,
    /// Seismic only (the ablation).
    SeismicOnly,
}

impl ChannelMode {
    pub fn count(self) -> usize {
        match self {
            ChannelMode::Three => 3,
            ChannelMode::SeismicOnly => 1,
        }
    }
}

impl TryFrom<usize> for ChannelMode {
    type Error = PreprocessError;

    fn try_from(n: usize) -> Result<Self, Self::Error> {
        match n {
            3 => Ok(ChannelMode::Three),
            1 => Ok(ChannelMode::SeismicOnly),
            other => Err(PreprocessError::BadChannels(other)),
        }
    }
}

impl From<ChannelMode> for usize {
    fn from(m: ChannelMode) -> usize {
        m.count()
    }
}

/// Stacks three equally shaped patches in the fixed order
/// `[seismic, v_avg, twt]`.
pub fn stack_channels(
    seismic: ArrayView2<'_, f64>,
    v_avg: ArrayView2<'_, f64>,
    twt: ArrayView2<'_, f64>,
) -> Result<Array3<f64>, PreprocessError> {
    let dims = [seismic.dim(), v_avg.dim(), twt.dim()];
    if dims.iter().any(|&d| d != dims[0]) {
        return Err(PreprocessError::ShapeMismatch(dims.to_vec()));
    }
    Ok(ndarray::stack(Axis(0), &[seismic, v_avg, twt]).expect("shapes checked"))
}

/// Inverse of [`stack_channels`].
pub fn unstack_channels(x: &Array3<f64>) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    (
        x.index_axis(Axis(0), 0).to_owned(),
        x.index_axis(Axis(0), 1).to_owned(),
        x.index_axis(Axis(0), 2).to_owned(),
    )
}

/// Inline position, first crossline and first time sample of a patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatchOrigin {
    pub inline: usize,
    pub crossline: usize,
    pub sample: usize,
}

/// A training/test sample: normalized input channels and target, each
/// `size × size` with rows along time and columns along crossline.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchPair {
    pub input: Array3<f64>,
    pub target: Array2<f64>,
    pub origin: PatchOrigin,
}

impl PatchPair {
    pub fn size(&self) -> usize {
        self.target.nrows()
    }

    pub fn channels(&self) -> usize {
        self.input.dim().0
    }
}

/// Cuts the `size × size` window at `origin` out of an inline section and
/// returns it time-major (rows = time, columns = crossline).
pub fn extract_window(v: &Volume3D, origin: PatchOrigin, size: usize) -> Result<Array2<f64>, PreprocessError> {
    let (ni, nx, nt) = v.dim();
    if origin.inline >= ni || origin.crossline + size > nx || origin.sample + size > nt {
        return Err(PreprocessError::WindowDoesNotFit(
            format!("origin {origin:?} in volume {:?}", v.dim()),
            size,
        ));
    }
    let window = v.samples().slice(s![
        origin.inline,
        origin.crossline..origin.crossline + size,
        origin.sample..origin.sample + size
    ]);
    Ok(window.t().to_owned())
}

/// Builds the patch pair at `origin` from normalized volumes.
pub fn extract_patch(
    vs: &VolumeSet,
    origin: PatchOrigin,
    size: usize,
    channels: ChannelMode,
) -> Result<PatchPair, PreprocessError> {
    let seismic = extract_window(&vs.seismic, origin, size)?;
    let input = match channels {
        ChannelMode::Three => stack_channels(
            seismic.view(),
            extract_window(&vs.v_avg, origin, size)?.view(),
            extract_window(&vs.twt, origin, size)?.view(),
        )?,
        ChannelMode::SeismicOnly => seismic.insert_axis(Axis(0)),
    };
    Ok(PatchPair {
        input,
        target: extract_window(&vs.v_int, origin, size)?,
        origin,
    })
}

/// Uniformly random window origins inside `region`; deterministic in `seed`.
pub fn sample_origins(
    dim: (usize, usize, usize),
    region: Region,
    n: usize,
    size: usize,
    seed: u64,
) -> Result<Vec<PatchOrigin>, PreprocessError> {
    let (ni, nx, nt) = dim;
    if region.xline_end > nx || region.len() < size || nt < size || ni == 0 || size == 0 {
        return Err(PreprocessError::WindowDoesNotFit(
            format!("region {region:?} of volume {dim:?}"),
            size,
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| PatchOrigin {
            inline: rng.random_range(0..ni),
            crossline: rng.random_range(region.xline_start..=region.xline_end - size),
            sample: rng.random_range(0..=nt - size),
        })
        .collect())
}

/// `n` random patch pairs from normalized volumes, windows fully inside `region`.
pub fn sample_patches(
    vs: &VolumeSet,
    region: Region,
    n: usize,
    size: usize,
    seed: u64,
    channels: ChannelMode,
) -> Result<Vec<PatchPair>, PreprocessError> {
    sample_origins(vs.dim(), region, n, size, seed)?
        .into_iter()
        .map(|o| extract_patch(vs, o, size, channels))
        .collect()
}

/// Clip and normalization statistics for one volume role.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoleStats {
    pub clip: ClipStats,
    pub norm: NormStats,
}

/// Everything needed to replay preprocessing on new volumes bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessStats {
    pub crop_top: usize,
    pub split: SplitSpec,
    pub train: Region,
    pub test: Region,
    /// Patches are windows of inline sections (crossline × time).
    pub patch_plane: String,
    pub seismic: RoleStats,
    pub v_avg: RoleStats,
    pub twt: RoleStats,
    pub v_int: RoleStats,
}

impl PreprocessStats {
    pub fn role(&self, role: Role) -> &RoleStats {
        match role {
            Role::Seismic => &self.seismic,
            Role::VAvg => &self.v_avg,
            Role::Twt => &self.twt,
            Role::VInt => &self.v_int,
        }
    }

    /// Crop, clip and normalize `raw` with these statistics.
    pub fn apply(&self, raw: &VolumeSet) -> Result<VolumeSet, PreprocessError> {
        raw.check_geometry()?;
        raw.try_map(|role, v| {
            let s = self.role(role);
            normalize(&clip_two_sigma(&crop_water_column(v, self.crop_top)?, s.clip), s.norm)
        })
    }
}

/// The full preparation chain: crop, split, clip with training-region
/// statistics, then normalize with training-region min/max (per role).
pub fn prepare(raw: &VolumeSet, crop_top: usize, split: SplitSpec) -> Result<(VolumeSet, PreprocessStats), PreprocessError> {
    raw.check_geometry()?;
    let cropped = raw.try_map(|_, v| crop_water_column(v, crop_top))?;
    let (train, test) = split_train_test(&cropped, split)?;
    let role_stats = |role: Role| -> Result<RoleStats, PreprocessError> {
        let v = cropped.get(role);
        let clip = compute_clip_stats(v, train)?;
        let norm = NormStats::from_region(&clip_two_sigma(v, clip), train)?;
        Ok(RoleStats { clip, norm })
    };
    let stats = PreprocessStats {
        crop_top,
        split,
        train,
        test,
        patch_plane: "inline".into(),
        seismic: role_stats(Role::Seismic)?,
        v_avg: role_stats(Role::VAvg)?,
        twt: role_stats(Role::Twt)?,
        v_int: role_stats(Role::VInt)?,
    };
    let normalized = stats.apply(raw)?;
    Ok((normalized, stats))
}

fn region_view(v: &Volume3D, region: Region) -> Result<ndarray::ArrayView3<'_, f64>, PreprocessError> {
    if region.is_empty() || region.xline_end > v.n_crosslines() {
        return Err(PreprocessError::EmptyRegion(format!(
            "{region:?} in volume with {} crosslines",
            v.n_crosslines()
        )));
    }
    Ok(v.samples().slice(s![.., region.xline_start..region.xline_end, ..]))
}
