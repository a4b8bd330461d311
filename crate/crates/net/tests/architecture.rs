//! Shape arithmetic of the generator and discriminator.

use ndarray::Array4;
use velgan_net::{DiscriminatorSpec, Discriminator, ForwardCtx, Generator, GeneratorSpec, Layer};

/// Output size of a convolution stack, one layer at a time.
fn conv_stack_output(spec: &DiscriminatorSpec, input: usize) -> usize {
    spec.layers.iter().fold(input, |n, l| (n + 2 * spec.pad - spec.kernel) / l.stride + 1)
}

/// Receptive field walked backwards from one output unit.
fn receptive_field_backwards(spec: &DiscriminatorSpec) -> usize {
    spec.layers.iter().rev().fold(1, |r, l| (r - 1) * l.stride + spec.kernel)
}

#[test]
fn patchgan_sees_70_pixels() {
    let spec = DiscriminatorSpec::patchgan70(4);
    assert_eq!(spec.receptive_field(), 70);
    assert_eq!(receptive_field_backwards(&spec), 70);
}

#[test]
fn discriminator_maps_follow_stride_arithmetic() {
    let spec = DiscriminatorSpec::patchgan70(4);
    let mut d = Discriminator::<f32>::new(spec.clone(), 3).unwrap();
    for n in [64, 128, 256] {
        let expected = conv_stack_output(&spec, n);
        assert_eq!(spec.map_size(n), Some(expected));
        let out = d.forward(&Array4::zeros((1, 4, n, n)), &mut ForwardCtx::deterministic());
        assert_eq!(out.dim(), (1, 1, expected, expected), "input {n}");
    }
    assert_eq!(spec.map_size(256), Some(30));
}

#[test]
fn generator_preserves_spatial_shape() {
    for n in [32, 64, 128, 256, 512] {
        // Narrow widths: shape depends on depth and strides only.
        let spec = GeneratorSpec { patch_size: n, base_width: 4, max_width: 16, ..Default::default() };
        assert_eq!(spec.depth(), n.trailing_zeros() as usize);
        let mut g = Generator::<f32>::new(spec, 5).unwrap();
        let x = Array4::from_shape_fn((1, 3, n, n), |(_, c, i, j)| ((c + i * 7 + j * 3) % 11) as f32 / 11.0 - 0.5);
        let y = g.infer(&x);
        assert_eq!(y.dim(), (1, 1, n, n), "patch {n}");
        assert!(y.iter().all(|v| v.abs() <= 1.0));
    }
}

#[test]
fn full_width_generator_at_desk_size() {
    let mut g = Generator::<f32>::new(GeneratorSpec::default(), 1).unwrap();
    assert_eq!(g.spec().widths(), vec![64, 128, 256, 512, 512, 512]);
    let y = g.infer(&Array4::from_elem((1, 3, 64, 64), 0.1));
    assert_eq!(y.dim(), (1, 1, 64, 64));
}
