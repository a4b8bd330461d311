//! Scalar trait, NCHW helpers and the im2col/col2im kernels the
//! convolution layers are built on.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array4, ArrayView2, ArrayViewMut2, Axis, LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point element type of a network: `f32` for training, `f64`
/// for gradient checks.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + LinalgScalar
    + ScalarOperand
    + Debug
    + Default
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + 'static
{
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("representable")
    }

    fn f64(self) -> f64 {
        self.to_f64().expect("finite")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `c = a · b + beta · c`.
pub(crate) fn gemm<T: Real>(a: ArrayView2<'_, T>, b: ArrayView2<'_, T>, beta: T, c: &mut ArrayViewMut2<'_, T>) {
    general_mat_mul(T::one(), &a, &b, beta, c);
}

/// Geometry of a square-kernel convolution over one image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        (self.height + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.width + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    #[cfg(test)]
    pub fn col_cols(&self) -> usize {
        self.out_h() * self.out_w()
    }
}

/// Unfolds one `C×H×W` image into a `(C·k·k) × (Ho·Wo)` matrix.
pub(crate) fn im2col<T: Real>(x: &[T], g: ConvGeom, cols: &mut [T]) {
    let (ho, wo) = (g.out_h(), g.out_w());
    let k = g.kernel;
    debug_assert_eq!(x.len(), g.channels * g.height * g.width);
    debug_assert_eq!(cols.len(), g.col_rows() * ho * wo);
    for c in 0..g.channels {
        let plane = &x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let dst = &mut cols[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    let out = &mut dst[oy * wo..(oy + 1) * wo];
                    if iy < 0 || iy >= g.height as isize {
                        out.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for (ox, o) in out.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        *o = if ix >= 0 && ix < g.width as isize {
                            src[ix as usize]
                        } else {
                            T::zero()
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-adds columns back into an image.
pub(crate) fn col2im<T: Real>(cols: &[T], g: ConvGeom, x: &mut [T]) {
    let (ho, wo) = (g.out_h(), g.out_w());
    let k = g.kernel;
    debug_assert_eq!(x.len(), g.channels * g.height * g.width);
    for c in 0..g.channels {
        let plane = &mut x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let src = &cols[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for (ox, &v) in src[oy * wo..(oy + 1) * wo].iter().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.width as isize {
                            dst[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

/// Concatenates two NCHW tensors along the channel axis.
pub fn concat_channels<T: Real>(a: &Array4<T>, b: &Array4<T>) -> Array4<T> {
    ndarray::concatenate(Axis(1), &[a.view(), b.view()])
        .expect("batch and spatial dims agree")
        .as_standard_layout()
        .to_owned()
}

/// Splits channel-wise at `first` channels.
pub fn split_channels<T: Real>(x: &Array4<T>, first: usize) -> (Array4<T>, Array4<T>) {
    (
        x.slice(s![.., ..first, .., ..]).to_owned(),
        x.slice(s![.., first.., .., ..]).to_owned(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn im2col_col2im_are_adjoint() {
        // <im2col(x), c> == <x, col2im(c)> for arbitrary x, c.
        let g = ConvGeom { channels: 2, height: 5, width: 6, kernel: 4, stride: 2, pad: 1 };
        let x: Vec<f64> = (0..60).map(|i| ((i * 7 % 13) as f64) - 6.0).collect();
        let c: Vec<f64> = (0..g.col_rows() * g.col_cols()).map(|i| ((i * 5 % 11) as f64) - 5.0).collect();
        let mut cols = vec![0.0; c.len()];
        im2col(&x, g, &mut cols);
        let mut back = vec![0.0; x.len()];
        col2im(&c, g, &mut back);
        let lhs: f64 = cols.iter().zip(&c).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn output_geometry() {
        let g = ConvGeom { channels: 1, height: 256, width: 256, kernel: 4, stride: 2, pad: 1 };
        assert_eq!((g.out_h(), g.out_w()), (128, 128));
        let g = ConvGeom { stride: 1, height: 32, width: 32, ..g };
        assert_eq!(g.out_h(), 31);
    }

    #[test]
    fn concat_then_split() {
        let a = Array4::from_shape_fn((2, 3, 2, 2), |(n, c, h, w)| (n * 100 + c * 10 + h * 2 + w) as f32);
        let b = Array4::from_shape_fn((2, 1, 2, 2), |(n, _, h, w)| -((n * 4 + h * 2 + w) as f32));
        let cat = concat_channels(&a, &b);
        assert_eq!(cat.dim(), (2, 4, 2, 2));
        let (a2, b2) = split_channels(&cat, 3);
        assert_eq!((a2, b2), (a, b));
    }
}
