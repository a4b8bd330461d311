//! UNet generator: a stride-2 convolutional encoder down to a 1×1
//! bottleneck, mirrored by a transposed-convolution decoder with skip
//! connections, ending in `tanh`.

use ndarray::{Array2, Array3, Array4, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use velgan_core::metrics::PatchPredictor;

use crate::layers::{
    BatchNorm2d, Conv2d, ConvTranspose2d, Dropout, ForwardCtx, Layer, LeakyRelu, Param, Sequential, Tanh,
};
use crate::tensor::{concat_channels, split_channels, Real};
use crate::NetError;

pub const INIT_STD: f64 = 0.02;
pub const LEAKY_SLOPE: f64 = 0.2;
pub const KERNEL: usize = 4;

/// How the generator's noise (dropout) behaves outside training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Dropout stays active at inference, so predictions are stochastic.
    DropoutAtTrainAndTest,
    /// Dropout only during training; inference is deterministic.
    #[default]
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub patch_size: usize,
    pub base_width: usize,
    pub max_width: usize,
    pub dropout_rate: f64,
    /// Decoder blocks (counted from the bottleneck) that carry dropout.
    pub dropout_blocks: usize,
    pub noise_mode: NoiseMode,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            in_channels: 3,
            out_channels: 1,
            patch_size: 64,
            base_width: 64,
            max_width: 512,
            dropout_rate: 0.5,
            dropout_blocks: 3,
            noise_mode: NoiseMode::None,
        }
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: String| Err(NetError::InvalidSpec(m));
        if !self.patch_size.is_power_of_two() || self.patch_size < 4 {
            return bad(format!("patch size {} is not a power of two >= 4", self.patch_size));
        }
        if self.in_channels == 0 || self.out_channels == 0 || self.base_width == 0 {
            return bad("channel counts must be positive".into());
        }
        if self.max_width < self.base_width {
            return bad(format!("max width {} below base width {}", self.max_width, self.base_width));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout rate {} outside [0, 1)", self.dropout_rate));
        }
        Ok(())
    }

    /// Number of stride-2 encoder levels; the bottleneck is 1×1.
    pub fn depth(&self) -> usize {
        self.patch_size.trailing_zeros() as usize
    }

    /// Output channels of encoder level `i`: base·2^i, capped.
    pub fn width(&self, level: usize) -> usize {
        let w = self.base_width.saturating_mul(1usize.checked_shl(level as u32).unwrap_or(usize::MAX));
        w.min(self.max_width)
    }

    pub fn widths(&self) -> Vec<usize> {
        (0..self.depth()).map(|i| self.width(i)).collect()
    }
}

pub struct Generator<T: Real> {
    spec: GeneratorSpec,
    encoder: Vec<Sequential<T>>,
    /// `decoder[j]` maps level `j + 1` back up to level `j`'s resolution.
    decoder: Vec<Sequential<T>>,
    head: Sequential<T>,
    infer_rng: ChaCha8Rng,
}

impl<T: Real> Generator<T> {
    pub fn new(spec: GeneratorSpec, seed: u64) -> Result<Self, NetError> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = spec.depth();
        let w = spec.widths();

        let mut encoder = Vec::with_capacity(d);
        for i in 0..d {
            let cin = if i == 0 { spec.in_channels } else { w[i - 1] };
            let norm = i != 0 && i != d - 1;
            let name = format!("g.enc{i}");
            let mut layers: Vec<Box<dyn Layer<T>>> = vec![Box::new(Conv2d::new(
                &format!("{name}.conv"),
                cin,
                w[i],
                KERNEL,
                2,
                1,
                !norm,
                INIT_STD,
                &mut rng,
            ))];
            if norm {
                layers.push(Box::new(BatchNorm2d::new(&format!("{name}.bn"), w[i], INIT_STD, &mut rng)));
            }
            layers.push(Box::new(LeakyRelu::new(LEAKY_SLOPE)));
            encoder.push(Sequential::new(layers));
        }

        let mut decoder = Vec::with_capacity(d - 1);
        for j in 0..d - 1 {
            // Input is the bottleneck alone for the innermost block, else
            // the previous decoder output concatenated with its skip.
            let cin = if j + 1 == d - 1 { w[d - 1] } else { 2 * w[j + 1] };
            let name = format!("g.dec{j}");
            let mut layers: Vec<Box<dyn Layer<T>>> = vec![
                Box::new(ConvTranspose2d::new(
                    &format!("{name}.convt"),
                    cin,
                    w[j],
                    KERNEL,
                    2,
                    1,
                    false,
                    INIT_STD,
                    &mut rng,
                )),
                Box::new(BatchNorm2d::new(&format!("{name}.bn"), w[j], INIT_STD, &mut rng)),
            ];
            if d - 1 - j <= spec.dropout_blocks {
                layers.push(Box::new(Dropout::new(spec.dropout_rate)));
            }
            layers.push(Box::new(LeakyRelu::relu()));
            decoder.push(Sequential::new(layers));
        }

        let head = Sequential::new(vec![
            Box::new(ConvTranspose2d::new(
                "g.head.convt",
                2 * w[0],
                spec.out_channels,
                KERNEL,
                2,
                1,
                true,
                INIT_STD,
                &mut rng,
            )),
            Box::new(Tanh::new()),
        ]);

        Ok(Self {
            infer_rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_1AFE),
            spec,
            encoder,
            decoder,
            head,
        })
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    pub fn set_noise_mode(&mut self, mode: NoiseMode) {
        self.spec.noise_mode = mode;
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Inference on a batch: dropout follows the spec's noise mode.
    pub fn infer(&mut self, x: &Array4<T>) -> Array4<T> {
        let dropout = self.spec.noise_mode == NoiseMode::DropoutAtTrainAndTest;
        let rng = self.infer_rng.clone();
        let mut ctx = ForwardCtx::new(dropout, rng);
        let y = self.forward(x, &mut ctx);
        if dropout {
            self.infer_rng = ctx.rng;
        }
        y
    }
}

impl<T: Real> Layer<T> for Generator<T> {
    fn forward(&mut self, x: &Array4<T>, ctx: &mut ForwardCtx) -> Array4<T> {
        let (_, c, h, w) = x.dim();
        assert_eq!(c, self.spec.in_channels, "generator input channels");
        assert!(h == self.spec.patch_size && w == self.spec.patch_size, "generator input size");
        let mut skips: Vec<Array4<T>> = Vec::with_capacity(self.encoder.len());
        let mut h = x.to_owned();
        for enc in &mut self.encoder {
            h = enc.forward(&h, ctx);
            skips.push(h.clone());
        }
        for j in (0..self.decoder.len()).rev() {
            let u = self.decoder[j].forward(&h, ctx);
            h = concat_channels(&u, &skips[j]);
        }
        self.head.forward(&h, ctx)
    }

    fn backward(&mut self, grad_out: &Array4<T>) -> Array4<T> {
        let d = self.encoder.len();
        let w = self.spec.widths();
        let mut g = self.head.backward(grad_out);
        let mut skip_grads: Vec<Option<Array4<T>>> = (0..d).map(|_| None).collect();
        for j in 0..self.decoder.len() {
            let (gu, gs) = split_channels(&g, w[j]);
            skip_grads[j] = Some(gs);
            g = self.decoder[j].backward(&gu);
        }
        for i in (0..d).rev() {
            if let Some(gs) = skip_grads[i].take() {
                g += &gs;
            }
            g = self.encoder[i].backward(&g);
        }
        g
    }

    fn params(&self) -> Vec<&Param<T>> {
        let mut out: Vec<&Param<T>> = self.encoder.iter().flat_map(|l| l.params()).collect();
        out.extend(self.decoder.iter().flat_map(|l| l.params()));
        out.extend(self.head.params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out: Vec<&mut Param<T>> = self.encoder.iter_mut().flat_map(|l| l.params_mut()).collect();
        out.extend(self.decoder.iter_mut().flat_map(|l| l.params_mut()));
        out.extend(self.head.params_mut());
        out
    }

    fn kind(&self) -> &'static str {
        "unet"
    }
}

/// Maps `[0, 1]` data to the `[-1, 1]` range the networks work in.
pub fn to_signed<T: Real>(x: f64) -> T {
    T::of(2.0 * x - 1.0)
}

/// Inverse of [`to_signed`].
pub fn to_unit<T: Real>(x: T) -> f64 {
    (x.f64() + 1.0) * 0.5
}

impl<T: Real> PatchPredictor for Generator<T> {
    type Error = NetError;

    fn predict(&mut self, input: &Array3<f64>) -> Result<Array2<f64>, NetError> {
        let (c, h, w) = input.dim();
        if c != self.spec.in_channels || h != self.spec.patch_size || w != self.spec.patch_size {
            return Err(NetError::Shape(format!(
                "predictor expects {}×{p}×{p}, got {c}×{h}×{w}",
                self.spec.in_channels,
                p = self.spec.patch_size
            )));
        }
        let x = input.mapv(to_signed::<T>).insert_axis(Axis(0));
        let y = self.infer(&x);
        Ok(y.index_axis(Axis(0), 0).index_axis(Axis(0), 0).mapv(to_unit))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(patch: usize) -> GeneratorSpec {
        GeneratorSpec { patch_size: patch, base_width: 4, max_width: 16, ..Default::default() }
    }

    #[test]
    fn widths_double_then_cap() {
        let spec = GeneratorSpec { patch_size: 256, ..Default::default() };
        assert_eq!(spec.depth(), 8);
        assert_eq!(spec.widths(), vec![64, 128, 256, 512, 512, 512, 512, 512]);
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert!(Generator::<f32>::new(small(48), 0).is_err());
        assert!(Generator::<f32>::new(small(2), 0).is_err());
    }

    #[test]
    fn output_shape_and_range() {
        let mut g = Generator::<f32>::new(small(16), 1).unwrap();
        let x = Array4::from_shape_fn((2, 3, 16, 16), |(n, c, i, j)| ((n + c + i * j) % 5) as f32 - 2.0);
        let y = g.forward(&x, &mut ForwardCtx::new(true, ChaCha8Rng::seed_from_u64(0)));
        assert_eq!(y.dim(), (2, 1, 16, 16));
        assert!(y.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn inference_without_noise_is_deterministic() {
        let mut g = Generator::<f64>::new(small(8), 2).unwrap();
        let x = Array4::from_shape_fn((1, 3, 8, 8), |(_, c, i, j)| (c as f64 - 1.0) * 0.3 + (i * j) as f64 * 0.01);
        assert_eq!(g.infer(&x), g.infer(&x));
    }

    #[test]
    fn dropout_sits_on_innermost_decoder_blocks() {
        let g = Generator::<f32>::new(small(64), 0).unwrap();
        let has_dropout: Vec<bool> = g
            .decoder
            .iter()
            .map(|s| s.layers.iter().any(|l| l.kind() == "dropout"))
            .collect();
        assert_eq!(has_dropout, vec![false, false, true, true, true]);
    }
}
