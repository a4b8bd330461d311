//! Clipping, normalization, splitting and patch sampling on whole volumes.

use ndarray::Array3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use velgan_core::preprocess::{
    clip_two_sigma, compute_clip_stats, denormalize, normalize, prepare, sample_patches, ChannelMode, NormStats,
    PreprocessStats, Region, SplitSpec,
};
use velgan_core::synth::{generate_volumes, GeoModelConfig};
use velgan_core::{Role, Volume3D, VolumeSet};

fn small_cfg(seed: u64) -> GeoModelConfig {
    GeoModelConfig { n_inlines: 3, n_crosslines: 60, n_samples: 80, seed, ..Default::default() }
}

fn random_volume(seed: u64, shape: (usize, usize, usize)) -> Volume3D {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = Array3::from_shape_fn(shape, |_| rng.random_range(-3.0..3.0) * rng.random_range(0.0..1.0f64).powi(4) * 50.0);
    Volume3D::new(a, 12.5, 12.5, 0.004).unwrap()
}

#[test]
fn split_of_3001_crosslines() {
    let spec = SplitSpec { train_fraction: 0.70 };
    assert_eq!(spec.boundary_index(3001).unwrap(), 2101);
    let (train, test) = spec.regions(3001).unwrap();
    assert_eq!((train.len(), test.len()), (2101, 900));
    assert_eq!((train.xline_end, test.xline_start), (2101, 2101));
    assert!(SplitSpec { train_fraction: 1.0 }.boundary_index(10).is_err());
    assert!(SplitSpec { train_fraction: 0.01 }.boundary_index(10).is_err());
}

#[test]
fn normalization_endpoints() {
    let n = NormStats::new(1500.0, 4500.0).unwrap();
    assert_eq!(n.normalize_value(1500.0), 0.0);
    assert_eq!(n.normalize_value(4500.0), 1.0);
    assert_eq!(n.normalize_value(3000.0), 0.5);
    assert_eq!(n.denormalize_value(0.0), 1500.0);
    assert_eq!(n.denormalize_value(1.0), 4500.0);
    assert!(NormStats::new(2.0, 2.0).is_err());
}

#[test]
fn statistics_come_from_the_training_region_only() {
    let raw = generate_volumes(&small_cfg(3)).unwrap();
    let split = SplitSpec::default();
    let (_, stats) = prepare(&raw, 5, split).unwrap();
    // Changing anything right of the boundary must not move the statistics.
    let b = stats.train.xline_end;
    let tampered = raw
        .try_map(|_, v| {
            let mut a = v.samples().clone();
            a.slice_mut(ndarray::s![.., b.., ..]).mapv_inplace(|x| x * 3.0 + 1e4);
            Volume3D::new(a, v.dx, v.dy, v.dt)
        })
        .unwrap();
    let (_, stats2) = prepare(&tampered, 5, split).unwrap();
    assert_eq!(stats, stats2);
    let shifted = raw.try_map(|_, v| Ok::<_, std::convert::Infallible>(v.map_samples(|x| x + 1.0))).unwrap();
    let (_, stats3) = prepare(&shifted, 5, split).unwrap();
    assert_ne!(stats, stats3);
}

#[test]
fn prepared_volumes_are_unit_range_on_training_region() {
    let raw = generate_volumes(&small_cfg(4)).unwrap();
    let (norm, stats) = prepare(&raw, 5, SplitSpec::default()).unwrap();
    assert_eq!(norm.dim(), (3, 60, 75));
    for role in Role::ALL {
        let v = norm.get(role);
        assert!(v.samples().iter().all(|x| (0.0..=1.0).contains(x)));
        let train = v.samples().slice(ndarray::s![.., ..stats.train.xline_end, ..]);
        let (lo, hi) = train.iter().fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
        assert_eq!((lo, hi), (0.0, 1.0), "{role:?}");
    }
    // Replaying the stored statistics gives the same volumes.
    let text = toml::to_string(&stats).unwrap();
    let back: PreprocessStats = toml::from_str(&text).unwrap();
    assert_eq!(back.apply(&raw).unwrap(), norm);
}

#[test]
fn patches_stay_inside_their_region() {
    let raw = generate_volumes(&small_cfg(5)).unwrap();
    let (norm, stats) = prepare(&raw, 5, SplitSpec::default()).unwrap();
    for (region, seed) in [(stats.train, 1), (stats.test, 2)] {
        let patches = sample_patches(&norm, region, 40, 16, seed, ChannelMode::Three).unwrap();
        for p in &patches {
            assert!(p.origin.crossline >= region.xline_start && p.origin.crossline + 16 <= region.xline_end);
            assert_eq!(p.input.dim(), (3, 16, 16));
            assert_eq!(p.target.dim(), (16, 16));
        }
        let again = sample_patches(&norm, region, 40, 16, seed, ChannelMode::SeismicOnly).unwrap();
        assert!(patches.iter().zip(&again).all(|(a, b)| a.origin == b.origin && a.target == b.target));
        assert_eq!(again[0].input.dim().0, 1);
    }
    assert!(sample_patches(&norm, Region::new(0, 10), 1, 16, 0, ChannelMode::Three).is_err());
}

#[test]
fn loaded_set_rejects_mismatched_geometry() {
    let a = random_volume(1, (2, 4, 6));
    let b = random_volume(2, (2, 5, 6));
    assert!(VolumeSet::new(a.clone(), a.clone(), a.clone(), b).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn clipping_respects_bounds(seed in 0u64..10_000) {
        let v = random_volume(seed, (2, 9, 7));
        let region = Region::new(0, 6);
        let s = compute_clip_stats(&v, region).unwrap();
        let (lo, hi) = s.bounds();
        let clipped = clip_two_sigma(&v, s);
        prop_assert!(clipped.samples().iter().all(|x| *x >= lo && *x <= hi));
        for (c, x) in clipped.samples().iter().zip(v.samples()) {
            if *x >= lo && *x <= hi {
                prop_assert_eq!(c, x);
            }
        }
    }

    #[test]
    fn normalization_round_trips(seed in 0u64..10_000) {
        let v = random_volume(seed, (2, 6, 5));
        let n = NormStats::from_region(&v, Region::new(0, 6)).unwrap();
        let back = denormalize(&normalize(&v, n).unwrap(), n);
        for (a, b) in back.samples().iter().zip(v.samples()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}
