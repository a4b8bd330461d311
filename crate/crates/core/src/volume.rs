//! In-memory seismic volume.

use ndarray::{s, Array2, Array3, ArrayView2};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum VolumeError {
    #[error("volume dimensions must all be at least 1, got {0:?}")]
    EmptyDimension((usize, usize, usize)),
    #[error("{name} must be positive and finite, got {value}")]
    BadSpacing { name: &'static str, value: f64 },
    #[error("non-finite sample at (inline {0}, crossline {1}, sample {2})")]
    NonFinite(usize, usize, usize),
    #[error("index {index} out of range for {axis} axis of length {len}")]
    OutOfRange {
        axis: &'static str,
        index: usize,
        len: usize,
    },
    #[error("volumes do not share one geometry: {0}")]
    GeometryMismatch(String),
}

/// A 3-D grid of samples indexed `(inline, crossline, time sample)`.
///
/// Samples are held as `f64` whatever the on-disk precision. The volume is
/// immutable after construction; every transform returns a new volume.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume3D {
    samples: Array3<f64>,
    /// Inline spacing in meters.
    pub dx: f64,
    /// Crossline spacing in meters.
    pub dy: f64,
    /// Sample interval in seconds.
    pub dt: f64,
    /// Two-way time of the first sample, in seconds.
    pub t0: f64,
    /// Header numbers of the first inline and first crossline.
    pub origin: (i32, i32),
    /// Free-text role tag (`seismic`, `v_avg`, `twt`, `v_int_fwi`, ...).
    pub label: String,
}

impl Volume3D {
    pub fn new(samples: Array3<f64>, dx: f64, dy: f64, dt: f64) -> Result<Self, VolumeError> {
        let (ni, nx, nt) = samples.dim();
        if ni == 0 || nx == 0 || nt == 0 {
            return Err(VolumeError::EmptyDimension((ni, nx, nt)));
        }
        for (name, value) in [("dx", dx), ("dy", dy), ("dt", dt)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(VolumeError::BadSpacing { name, value });
            }
        }
        if let Some(((i, j, k), _)) = samples.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(VolumeError::NonFinite(i, j, k));
        }
        Ok(Self {
            samples,
            dx,
            dy,
            dt,
            t0: 0.0,
            origin: (1, 1),
            label: String::new(),
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_origin(mut self, origin: (i32, i32)) -> Self {
        self.origin = origin;
        self
    }

    pub fn with_t0(mut self, t0: f64) -> Self {
        self.t0 = t0;
        self
    }

    /// Same geometry and metadata, new samples of identical shape.
    pub fn map_samples(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            samples: self.samples.mapv(f),
            ..self.clone_meta()
        }
    }

    /// Replaces the samples, keeping geometry; the shape may change along time only
    /// if the caller also fixes `t0`.
    pub(crate) fn with_samples(&self, samples: Array3<f64>) -> Self {
        Self {
            samples,
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> Self {
        Self {
            samples: Array3::zeros((0, 0, 0)),
            dx: self.dx,
            dy: self.dy,
            dt: self.dt,
            t0: self.t0,
            origin: self.origin,
            label: self.label.clone(),
        }
    }

    pub fn samples(&self) -> &Array3<f64> {
        &self.samples
    }

    pub fn into_samples(self) -> Array3<f64> {
        self.samples
    }

    /// `(inlines, crosslines, time samples)`.
    pub fn dim(&self) -> (usize, usize, usize) {
        self.samples.dim()
    }

    pub fn n_inlines(&self) -> usize {
        self.samples.dim().0
    }

    pub fn n_crosslines(&self) -> usize {
        self.samples.dim().1
    }

    pub fn n_samples(&self) -> usize {
        self.samples.dim().2
    }

    /// Two-way time of sample `k`.
    pub fn time_of(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    /// Borrowed crossline × time section at inline position `i` (0-based).
    pub fn slice_inline(&self, i: usize) -> Result<ArrayView2<'_, f64>, VolumeError> {
        let len = self.n_inlines();
        if i >= len {
            return Err(VolumeError::OutOfRange {
                axis: "inline",
                index: i,
                len,
            });
        }
        Ok(self.samples.slice(s![i, .., ..]))
    }

    /// Owned copy of [`Volume3D::slice_inline`].
    pub fn inline_section(&self, i: usize) -> Result<Array2<f64>, VolumeError> {
        self.slice_inline(i).map(|v| v.to_owned())
    }

    /// True when both volumes share shape, spacing, start time and origin.
    pub fn same_geometry(&self, other: &Volume3D) -> bool {
        self.dim() == other.dim()
            && self.dx == other.dx
            && self.dy == other.dy
            && self.dt == other.dt
            && self.t0 == other.t0
            && self.origin == other.origin
    }

    pub fn ensure_same_geometry(&self, other: &Volume3D) -> Result<(), VolumeError> {
        if self.same_geometry(other) {
            Ok(())
        } else {
            Err(VolumeError::GeometryMismatch(format!(
                "'{}' {:?} dt={} t0={} vs '{}' {:?} dt={} t0={}",
                self.label,
                self.dim(),
                self.dt,
                self.t0,
                other.label,
                other.dim(),
                other.dt,
                other.t0
            )))
        }
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(ni: usize, nx: usize, nt: usize) -> Volume3D {
        let a = Array3::from_shape_fn((ni, nx, nt), |(i, j, k)| (i * 100 + j * 10 + k) as f64);
        Volume3D::new(a, 12.5, 12.5, 0.004).unwrap()
    }

    #[test]
    fn rejects_bad_geometry() {
        let a = Array3::<f64>::zeros((0, 2, 2));
        assert!(matches!(
            Volume3D::new(a, 1.0, 1.0, 1.0),
            Err(VolumeError::EmptyDimension(_))
        ));
        let a = Array3::<f64>::zeros((1, 1, 1));
        assert!(matches!(
            Volume3D::new(a.clone(), 1.0, 1.0, 0.0),
            Err(VolumeError::BadSpacing { name: "dt", .. })
        ));
        let mut b = a;
        b[[0, 0, 0]] = f64::NAN;
        assert_eq!(
            Volume3D::new(b, 1.0, 1.0, 1.0),
            Err(VolumeError::NonFinite(0, 0, 0))
        );
    }

    #[test]
    fn slice_inline_zero() {
        let v = ramp(2, 3, 4);
        let sec = v.slice_inline(0).unwrap();
        assert_eq!(sec.dim(), (3, 4));
        assert_eq!(sec, v.samples().slice(s![0, .., ..]));
    }

    #[test]
    fn slice_inline_out_of_range() {
        let v = ramp(2, 3, 4);
        assert_eq!(
            v.slice_inline(2),
            Err(VolumeError::OutOfRange {
                axis: "inline",
                index: 2,
                len: 2
            })
        );
    }

    #[test]
    fn slice_of_constant_volume_is_constant() {
        let v = Volume3D::new(Array3::from_elem((3, 4, 5), 7.5), 1.0, 1.0, 0.002).unwrap();
        for i in 0..3 {
            assert!(v.slice_inline(i).unwrap().iter().all(|&x| x == 7.5));
        }
    }
}
