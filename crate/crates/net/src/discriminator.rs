//! PatchGAN discriminator: a fully convolutional stack whose output is a
//! map of logits, one per receptive patch of the (input, target) pair.

use ndarray::Array4;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::generator::{INIT_STD, LEAKY_SLOPE};
use crate::layers::{BatchNorm2d, Conv2d, ForwardCtx, Layer, LeakyRelu, Param, Sequential};
use crate::tensor::Real;
use crate::NetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscLayer {
    pub out_channels: usize,
    pub stride: usize,
    pub norm: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscriminatorSpec {
    /// Generator input channels plus the target/prediction channel.
    pub in_channels: usize,
    pub kernel: usize,
    pub pad: usize,
    pub leaky_slope: f64,
    /// The last entry is the logit layer: no activation follows it.
    pub layers: Vec<DiscLayer>,
}

impl DiscriminatorSpec {
    /// The 70×70 PatchGAN plan.
    pub fn patchgan70(in_channels: usize) -> Self {
        let l = |out_channels, stride, norm| DiscLayer { out_channels, stride, norm };
        Self {
            in_channels,
            kernel: 4,
            pad: 1,
            leaky_slope: LEAKY_SLOPE,
            layers: vec![l(64, 2, false), l(128, 2, true), l(256, 2, true), l(512, 1, true), l(1, 1, false)],
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: &str| Err(NetError::InvalidSpec(m.to_string()));
        if self.in_channels == 0 || self.kernel == 0 {
            return bad("discriminator needs input channels and a kernel");
        }
        if self.layers.is_empty() {
            return bad("discriminator has no layers");
        }
        if self.layers.iter().any(|l| l.out_channels == 0 || l.stride == 0) {
            return bad("discriminator layer with zero width or stride");
        }
        Ok(())
    }

    /// Receptive field of one output logit, in input pixels.
    pub fn receptive_field(&self) -> usize {
        let (mut r, mut j) = (1, 1);
        for l in &self.layers {
            r += (self.kernel - 1) * j;
            j *= l.stride;
        }
        r
    }

    /// Side length of the logit map for a square input, or `None` if the
    /// input is too small for the stack.
    pub fn map_size(&self, input: usize) -> Option<usize> {
        let mut n = input;
        for l in &self.layers {
            let padded = n + 2 * self.pad;
            if padded < self.kernel {
                return None;
            }
            n = (padded - self.kernel) / l.stride + 1;
        }
        Some(n)
    }
}

pub struct Discriminator<T: Real> {
    spec: DiscriminatorSpec,
    net: Sequential<T>,
}

impl<T: Real> Discriminator<T> {
    pub fn new(spec: DiscriminatorSpec, seed: u64) -> Result<Self, NetError> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers: Vec<Box<dyn Layer<T>>> = Vec::new();
        let mut cin = spec.in_channels;
        let last = spec.layers.len() - 1;
        for (i, l) in spec.layers.iter().enumerate() {
            let name = format!("d.l{i}");
            layers.push(Box::new(Conv2d::new(
                &format!("{name}.conv"),
                cin,
                l.out_channels,
                spec.kernel,
                l.stride,
                spec.pad,
                !l.norm,
                INIT_STD,
                &mut rng,
            )));
            if l.norm {
                layers.push(Box::new(BatchNorm2d::new(&format!("{name}.bn"), l.out_channels, INIT_STD, &mut rng)));
            }
            if i != last {
                layers.push(Box::new(LeakyRelu::new(spec.leaky_slope)));
            }
            cin = l.out_channels;
        }
        Ok(Self { spec, net: Sequential::new(layers) })
    }

    pub fn spec(&self) -> &DiscriminatorSpec {
        &self.spec
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}

impl<T: Real> Layer<T> for Discriminator<T> {
    fn forward(&mut self, x: &Array4<T>, ctx: &mut ForwardCtx) -> Array4<T> {
        assert_eq!(x.dim().1, self.spec.in_channels, "discriminator input channels");
        self.net.forward(x, ctx)
    }

    fn backward(&mut self, grad_out: &Array4<T>) -> Array4<T> {
        self.net.backward(grad_out)
    }

    fn params(&self) -> Vec<&Param<T>> {
        self.net.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.net.params_mut()
    }

    fn kind(&self) -> &'static str {
        "patchgan"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn receptive_field_grows_per_layer() {
        let full = DiscriminatorSpec::patchgan70(4);
        let fields: Vec<usize> = (1..=full.layers.len())
            .map(|n| DiscriminatorSpec { layers: full.layers[..n].to_vec(), ..full.clone() }.receptive_field())
            .collect();
        assert_eq!(fields, vec![4, 10, 22, 46, 70]);
    }

    #[test]
    fn map_size_examples() {
        let spec = DiscriminatorSpec::patchgan70(4);
        assert_eq!(spec.map_size(256), Some(30));
        assert_eq!(spec.map_size(64), Some(6));
        assert_eq!(spec.map_size(4), None);
    }

    #[test]
    fn forward_shape_matches_map_size() {
        let spec = DiscriminatorSpec {
            layers: vec![
                DiscLayer { out_channels: 4, stride: 2, norm: false },
                DiscLayer { out_channels: 4, stride: 2, norm: true },
                DiscLayer { out_channels: 1, stride: 1, norm: false },
            ],
            ..DiscriminatorSpec::patchgan70(2)
        };
        let mut d = Discriminator::<f64>::new(spec.clone(), 0).unwrap();
        let x = Array4::from_elem((1, 2, 20, 20), 0.5);
        let y = d.forward(&x, &mut ForwardCtx::deterministic());
        let m = spec.map_size(20).unwrap();
        assert_eq!(y.dim(), (1, 1, m, m));
    }
}
