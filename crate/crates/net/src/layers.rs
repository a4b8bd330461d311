//! Layers with explicit forward/backward passes.
//!
//! Each layer caches what its backward pass needs during `forward`, so a
//! `backward` call always refers to the most recent `forward`. Parameter
//! gradients accumulate until [`Param::zero_grad`].

use ndarray::{Array2, Array4, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::tensor::{col2im, gemm, im2col, ConvGeom, Real};

/// A trainable array and its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<T>,
    pub grad: Vec<T>,
}

impl<T: Real> Param<T> {
    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            name: name.into(),
            shape,
            value: vec![T::zero(); n],
            grad: vec![T::zero(); n],
        }
    }

    pub fn normal(name: impl Into<String>, shape: Vec<usize>, mean: f64, std: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut p = Self::zeros(name, shape);
        let dist = Normal::new(mean, std).expect("valid normal");
        for v in &mut p.value {
            *v = T::of(dist.sample(rng));
        }
        p
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    fn matrix(&self, rows: usize, cols: usize) -> ArrayView2<'_, T> {
        ArrayView2::from_shape((rows, cols), &self.value).expect("param shape")
    }

    fn grad_matrix(&mut self, rows: usize, cols: usize) -> ArrayViewMut2<'_, T> {
        ArrayViewMut2::from_shape((rows, cols), &mut self.grad).expect("param shape")
    }
}

/// Per-call forward settings: whether dropout is active, and its rng.
pub struct ForwardCtx {
    pub dropout: bool,
    pub rng: ChaCha8Rng,
}

impl ForwardCtx {
    pub fn new(dropout: bool, rng: ChaCha8Rng) -> Self {
        Self { dropout, rng }
    }

    /// Dropout off; the rng is never drawn from.
    pub fn deterministic() -> Self {
        use rand::SeedableRng;
        Self::new(false, ChaCha8Rng::seed_from_u64(0))
    }
}

pub trait Layer<T: Real>: Send {
    fn forward(&mut self, x: &Array4<T>, ctx: &mut ForwardCtx) -> Array4<T>;

    /// Gradient w.r.t. the input of the last `forward`; accumulates
    /// parameter gradients.
    fn backward(&mut self, grad_out: &Array4<T>) -> Array4<T>;

    fn params(&self) -> Vec<&Param<T>> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        Vec::new()
    }

    fn kind(&self) -> &'static str;
}

/// Square-kernel 2-D convolution, weight laid out `[out, in, k, k]`.
pub struct Conv2d<T> {
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
    in_ch: usize,
    out_ch: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    cols: Vec<Array2<T>>,
    in_dim: (usize, usize, usize, usize),
}

impl<T: Real> Conv2d<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        bias: bool,
        init_std: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self {
            weight: Param::normal(format!("{name}.weight"), vec![out_ch, in_ch, kernel, kernel], 0.0, init_std, rng),
            bias: bias.then(|| Param::zeros(format!("{name}.bias"), vec![out_ch])),
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
            cols: Vec::new(),
            in_dim: (0, 0, 0, 0),
        }
    }

    fn geom(&self, h: usize, w: usize) -> ConvGeom {
        ConvGeom {
            channels: self.in_ch,
            height: h,
            width: w,
            kernel: self.kernel,
            stride: self.stride,
            pad: self.pad,
        }
    }
}

impl<T: Real> Layer<T> for Conv2d<T> {
    fn forward(&mut self, x: &Array4<T>, _ctx: &mut ForwardCtx) -> Array4<T> {
        let (n, c, h, w) = x.dim();
        assert_eq!(c, self.in_ch, "conv input channels");
        let x = x.as_standard_layout();
        let g = self.geom(h, w);
        let (ho, wo) = (g.out_h(), g.out_w());
        let mut out = Array4::zeros((n, self.out_ch, ho, wo));
        self.cols.clear();
        let wmat = self.weight.matrix(self.out_ch, g.col_rows());
        for b in 0..n {
            let mut cols = Array2::zeros((g.col_rows(), ho * wo));
            im2col(
                x.index_axis(Axis(0), b).as_slice().expect("contiguous"),
                g,
                cols.as_slice_mut().expect("contiguous"),
            );
            let mut ob = out.index_axis_mut(Axis(0), b);
            let mut o2 = ob
                .view_mut()
                .into_shape_with_order((self.out_ch, ho * wo))
                .expect("contiguous");
            gemm(wmat, cols.view(), T::zero(), &mut o2);
            if let Some(bias) = &self.bias {
                for (mut row, &bv) in o2.outer_iter_mut().zip(&bias.value) {
                    row.mapv_inplace(|v| v + bv);
                }
            }
            self.cols.push(cols);
        }
        self.in_dim = (n, c, h, w);
        out
    }

    fn backward(&mut self, grad_out: &Array4<T>) -> Array4<T> {
        let (n, c, h, w) = self.in_dim;
        let g = self.geom(h, w);
        let (ho, wo) = (g.out_h(), g.out_w());
        let grad_out = grad_out.as_standard_layout();
        let mut dx = Array4::zeros((n, c, h, w));
        let mut dcols = Array2::zeros((g.col_rows(), ho * wo));
        for b in 0..n {
            let go = grad_out
                .index_axis(Axis(0), b)
                .into_shape_with_order((self.out_ch, ho * wo))
                .expect("contiguous");
            {
                let mut dw = self.weight.grad_matrix(self.out_ch, g.col_rows());
                gemm(go, self.cols[b].t(), T::one(), &mut dw);
            }
            if let Some(bias) = &mut self.bias {
                for (gb, row) in bias.grad.iter_mut().zip(go.outer_iter()) {
                    *gb += row.sum();
                }
            }
            let wmat = self.weight.matrix(self.out_ch, g.col_rows());
            gemm(wmat.t(), go, T::zero(), &mut dcols.view_mut());
            let mut dxb = dx.index_axis_mut(Axis(0), b);
            col2im(
                dcols.as_slice().expect("contiguous"),
                g,
                dxb.as_slice_mut().expect("contiguous"),
            );
        }
        dx
    }

    fn params(&self) -> Vec<&Param<T>> {
        std::iter::once(&self.weight).chain(self.bias.as_ref()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        std::iter::once(&mut self.weight).chain(self.bias.as_mut()).collect()
    }

    fn kind(&self) -> &'static str {
        "conv2d"
    }
}

/// Transposed convolution (the adjoint of [`Conv2d`] in its input),
/// weight laid out `[in, out, k, k]`; output size `(H - 1)·s - 2p + k`.
pub struct ConvTranspose2d<T> {
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
    in_ch: usize,
    out_ch: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    input: Array4<T>,
}

impl<T: Real> ConvTranspose2d<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        bias: bool,
        init_std: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self {
            weight: Param::normal(format!("{name}.weight"), vec![in_ch, out_ch, kernel, kernel], 0.0, init_std, rng),
            bias: bias.then(|| Param::zeros(format!("{name}.bias"), vec![out_ch])),
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
            input: Array4::zeros((0, 0, 0, 0)),
        }
    }

    pub fn output_size(&self, input: usize) -> usize {
        (input - 1) * self.stride + self.kernel - 2 * self.pad
    }

    /// Geometry of the equivalent forward convolution whose output is our input.
    fn geom(&self, h: usize, w: usize) -> ConvGeom {
        ConvGeom {
            channels: self.out_ch,
            height: self.output_size(h),
            width: self.output_size(w),
            kernel: self.kernel,
            stride: self.stride,
            pad: self.pad,
        }
    }
}

impl<T: Real> Layer<T> for ConvTranspose2d<T> {
    fn forward(&mut self, x: &Array4<T>, _ctx: &mut ForwardCtx) -> Array4<T> {
        let (n, c, h, w) = x.dim();
        assert_eq!(c, self.in_ch, "transposed conv input channels");
        self.input = x.as_standard_layout().to_owned();
        let g = self.geom(h, w);
        debug_assert_eq!((g.out_h(), g.out_w()), (h, w));
        let mut out = Array4::zeros((n, self.out_ch, g.height, g.width));
        let mut cols = Array2::zeros((g.col_rows(), h * w));
        let wmat = self.weight.matrix(self.in_ch, g.col_rows());
        for b in 0..n {
            let xb = self
                .input
                .index_axis(Axis(0), b)
                .into_shape_with_order((c, h * w))
                .expect("contiguous");
            gemm(wmat.t(), xb, T::zero(), &mut cols.view_mut());
            let mut ob = out.index_axis_mut(Axis(0), b);
            let slice = ob.as_slice_mut().expect("contiguous");
            col2im(cols.as_slice().expect("contiguous"), g, slice);
            if let Some(bias) = &self.bias {
                let plane = g.height * g.width;
                for (oc, &bv) in bias.value.iter().enumerate() {
                    slice[oc * plane..(oc + 1) * plane].iter_mut().for_each(|v| *v += bv);
                }
            }
        }
        out
    }

    fn backward(&mut self, grad_out: &Array4<T>) -> Array4<T> {
        let (n, c, h, w) = self.input.dim();
        let g = self.geom(h, w);
        let grad_out = grad_out.as_standard_layout();
        let mut dx = Array4::zeros((n, c, h, w));
        let mut dcols = Array2::zeros((g.col_rows(), h * w));
        for b in 0..n {
            let gob = grad_out.index_axis(Axis(0), b);
            im2col(gob.as_slice().expect("contiguous"), g, dcols.as_slice_mut().expect("contiguous"));
            if let Some(bias) = &mut self.bias {
                let plane = g.height * g.width;
                let s = gob.as_slice().expect("contiguous");
                for (oc, gb) in bias.grad.iter_mut().enumerate() {
                    *gb += s[oc * plane..(oc + 1) * plane].iter().copied().sum::<T>();
                }
            }
            let xb = self
                .input
                .index_axis(Axis(0), b)
                .into_shape_with_order((c, h * w))
                .expect("contiguous");
            {
                let mut dw = self.weight.grad_matrix(self.in_ch, g.col_rows());
                gemm(xb, dcols.t(), T::one(), &mut dw);
            }
            let wmat = self.weight.matrix(self.in_ch, g.col_rows());
            let mut dxb = dx
                .index_axis_mut(Axis(0), b)
                .into_shape_with_order((c, h * w))
                .expect("contiguous");
            gemm(wmat, dcols.view(), T::zero(), &mut dxb);
        }
        dx
    }

    fn params(&self) -> Vec<&Param<T>> {
        std::iter::once(&self.weight).chain(self.bias.as_ref()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        std::iter::once(&mut self.weight).chain(self.bias.as_mut()).collect()
    }

    fn kind(&self) -> &'static str {
        "conv_transpose2d"
    }
}

/// Batch normalization over `(N, H, W)` per channel, always with the
/// statistics of the current batch (no running averages). With batch size
/// 1 this is per-sample normalization, at training and inference alike.
pub struct BatchNorm2d<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    eps: f64,
    x_hat: Array4<T>,
    inv_std: Vec<T>,
}

impl<T: Real> BatchNorm2d<T> {
    pub const EPS: f64 = 1e-5;

    pub fn new(name: &str, channels: usize, init_std: f64, rng: &mut ChaCha8Rng) -> Self {
        Self {
            gamma: Param::normal(format!("{name}.gamma"), vec![channels], 1.0, init_std, rng),
            beta: Param::zeros(format!("{name}.beta"), vec![channels]),
            eps: Self::EPS,
            x_hat: Array4::zeros((0, 0, 0, 0)),
            inv_std: Vec::new(),
        }
    }
}

impl<T: Real> Layer<T> for BatchNorm2d<T> {
    fn forward(&mut self, x: &Array4<T>, _ctx: &mut ForwardCtx) -> Array4<T> {
        let (n, c, h, w) = x.dim();
        let m = T::of((n * h * w) as f64);
        let mut x_hat = x.as_standard_layout().to_owned();
        let mut out = Array4::zeros((n, c, h, w));
        self.inv_std = vec![T::zero(); c];
        for ch in 0..c {
            let mut xc = x_hat.index_axis_mut(Axis(1), ch);
            let mean = xc.iter().copied().sum::<T>() / m;
            let var = xc.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / m;
            let inv = T::one() / (var + T::of(self.eps)).sqrt();
            xc.mapv_inplace(|v| (v - mean) * inv);
            self.inv_std[ch] = inv;
            let (g, b) = (self.gamma.value[ch], self.beta.value[ch]);
            out.index_axis_mut(Axis(1), ch).zip_mut_with(&xc, |o, &xh| *o = g * xh + b);
        }
        self.x_hat = x_hat;
        out
    }

    fn backward(&mut self, grad_out: &Array4<T>) -> Array4<T> {
        let (n, c, h, w) = self.x_hat.dim();
        let m = T::of((n * h * w) as f64);
        let mut dx = Array4::zeros((n, c, h, w));
        for ch in 0..c {
            let go = grad_out.index_axis(Axis(1), ch);
            let xh = self.x_hat.index_axis(Axis(1), ch);
            let dbeta = go.iter().copied().sum::<T>();
            let dgamma = go.iter().zip(xh.iter()).map(|(&g, &x)| g * x).sum::<T>();
            self.beta.grad[ch] += dbeta;
            self.gamma.grad[ch] += dgamma;
            let scale = self.gamma.value[ch] * self.inv_std[ch] / m;
            let mut dxc = dx.index_axis_mut(Axis(1), ch);
            ndarray::Zip::from(&mut dxc)
                .and(&go)
                .and(&xh)
                .for_each(|d, &g, &x| *d = scale * (m * g - dbeta - x * dgamma));
        }
        dx
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.gamma, &self.beta]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.gamma, &mut self.beta]
    }

    fn kind(&self) -> &'static str {
        "batch_norm2d"
    }
}

/// `max(x, slope·x)`; `slope = 0` gives the standard rectifier.
pub struct LeakyRelu<T> {
    slope: T,
    input: Array4<T>,
}

impl<T: Real> LeakyRelu<T> {
    pub fn new(slope: f64) -> Self {
        Self {
            slope: T::of(slope),
            input: Array4::zeros((0, 0, 0, 0)),
        }
    }

    pub fn relu() -> Self {
        Self::new(0.0)
    }
}

impl<T: Real> Layer<T> for LeakyRelu<T> {
    fn forward(&mut self, x: &Array4<T>, _ctx: &mut ForwardCtx) -> Array4<T> {
        self.input = x.to_owned();
        let s = self.slope;
        x.mapv(|v| if v > T::zero() { v } else { s * v })
    }

    fn backward(&mut self, grad_out: &Array4<T>) -> Array4<T> {
        let s = self.slope;
        let mut dx = grad_out.to_owned();
        dx.zip_mut_with(&self.input, |g, &x| {
            if x <= T::zero() {
                *g = *g * s
            }
        });
        dx
    }

    fn kind(&self) -> &'static str {
        if self.slope == T::zero() {
            "relu"
        } else {
            "leaky_relu"
        }
    }
}

pub struct Tanh<T> {
    output: Array4<T>,
}

impl<T: Real> Tanh<T> {
    pub fn new() -> Self {
        Self {
            output: Array4::zeros((0, 0, 0, 0)),
        }
    }
}

impl<T: Real> Default for Tanh<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Layer<T> for Tanh<T> {
    fn forward(&mut self, x: &Array4<T>, _ctx: &mut ForwardCtx) -> Array4<T> {
        self.output = x.mapv(|v| v.tanh());
        self.output.clone()
    }

    fn backward(&mut self, grad_out: &Array4<T>) -> Array4<T> {
        let mut dx = grad_out.to_owned();
        dx.zip_mut_with(&self.output, |g, &y| *g = *g * (T::one() - y * y));
        dx
    }

    fn kind(&self) -> &'static str {
        "tanh"
    }
}

/// Inverted dropout: kept units are scaled by `1 / (1 - rate)` so the
/// dropout-free forward has the same expectation.
pub struct Dropout<T> {
    rate: f64,
    mask: Option<Array4<T>>,
}

impl<T: Real> Dropout<T> {
    pub fn new(rate: f64) -> Self {
        assert!((0.0..1.0).contains(&rate), "dropout rate in [0, 1)");
        Self { rate, mask: None }
    }
}

impl<T: Real> Layer<T> for Dropout<T> {
    fn forward(&mut self, x: &Array4<T>, ctx: &mut ForwardCtx) -> Array4<T> {
        if !ctx.dropout || self.rate == 0.0 {
            self.mask = None;
            return x.to_owned();
        }
        let keep = T::of(1.0 / (1.0 - self.rate));
        let rate = self.rate;
        let mask = x.map(|_| if ctx.rng.random::<f64>() < rate { T::zero() } else { keep });
        let out = x * &mask;
        self.mask = Some(mask);
        out
    }

    fn backward(&mut self, grad_out: &Array4<T>) -> Array4<T> {
        match &self.mask {
            Some(mask) => grad_out * mask,
            None => grad_out.to_owned(),
        }
    }

    fn kind(&self) -> &'static str {
        "dropout"
    }
}

/// Layers applied in order.
pub struct Sequential<T> {
    pub layers: Vec<Box<dyn Layer<T>>>,
}

impl<T: Real> Sequential<T> {
    pub fn new(layers: Vec<Box<dyn Layer<T>>>) -> Self {
        Self { layers }
    }
}

impl<T: Real> Layer<T> for Sequential<T> {
    fn forward(&mut self, x: &Array4<T>, ctx: &mut ForwardCtx) -> Array4<T> {
        let mut h = x.to_owned();
        for layer in &mut self.layers {
            h = layer.forward(&h, ctx);
        }
        h
    }

    fn backward(&mut self, grad_out: &Array4<T>) -> Array4<T> {
        let mut g = grad_out.to_owned();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g);
        }
        g
    }

    fn params(&self) -> Vec<&Param<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    fn kind(&self) -> &'static str {
        "sequential"
    }
}
