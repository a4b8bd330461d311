//! Adam against a scalar reference, and loss identities.

use ndarray::Array4;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use velgan_net::loss::{d_loss, g_adv_loss, l1_loss, softplus, AdversarialForm};
use velgan_net::{adam_update, OptimConfig};

struct ScalarAdam {
    m: f64,
    v: f64,
    t: i32,
}

impl ScalarAdam {
    fn step(&mut self, p: f64, g: f64, lr: f64, b1: f64, b2: f64, eps: f64) -> f64 {
        self.t += 1;
        self.m = b1 * self.m + (1.0 - b1) * g;
        self.v = b2 * self.v + (1.0 - b2) * g * g;
        let m_hat = self.m / (1.0 - b1.powi(self.t));
        let v_hat = self.v / (1.0 - b2.powi(self.t));
        p - lr * m_hat / (v_hat.sqrt() + eps)
    }
}

#[test]
fn adam_matches_scalar_reference_over_100_steps() {
    let cfg = OptimConfig { lr: 2e-5, beta1: 0.5, beta2: 0.999, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let n = 16;
    let mut value: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (mut m, mut v) = (vec![0.0; n], vec![0.0; n]);
    let mut reference: Vec<(f64, ScalarAdam)> =
        value.iter().map(|&p| (p, ScalarAdam { m: 0.0, v: 0.0, t: 0 })).collect();
    let mut worst = 0.0f64;
    for t in 1..=100u64 {
        let grad: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        adam_update(&mut value, &grad, &mut m, &mut v, t, &cfg).unwrap();
        for ((p, s), (&g, &got)) in reference.iter_mut().zip(grad.iter().zip(&value)) {
            *p = s.step(*p, g, cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon);
            worst = worst.max((*p - got).abs());
        }
    }
    assert!(worst < 1e-12, "max deviation {worst:e}");
}

#[test]
fn adam_rejects_step_zero_and_mismatched_lengths() {
    let cfg = OptimConfig::default();
    let (mut p, mut m, mut v) = (vec![0.0f64; 2], vec![0.0; 2], vec![0.0; 2]);
    assert!(adam_update(&mut p, &[1.0, 1.0], &mut m, &mut v, 0, &cfg).is_err());
    assert!(adam_update(&mut p, &[1.0], &mut m, &mut v, 1, &cfg).is_err());
}

fn map(values: &[f64]) -> Array4<f64> {
    Array4::from_shape_vec((1, 1, 1, values.len()), values.to_vec()).unwrap()
}

proptest! {
    #[test]
    fn losses_are_finite_and_nonnegative(
        real in prop::collection::vec(-80.0f64..80.0, 1..20),
        shift in -5.0f64..5.0,
    ) {
        let fake: Vec<f64> = real.iter().map(|r| r + shift).collect();
        let (d, _, _) = d_loss(&map(&real), &map(&fake)).unwrap();
        prop_assert!(d.is_finite() && d >= 0.0);
        let (ns, _) = g_adv_loss(&map(&fake), AdversarialForm::NonSaturating);
        prop_assert!(ns.is_finite() && ns >= 0.0);
        let (mm, _) = g_adv_loss(&map(&fake), AdversarialForm::Minimax);
        prop_assert!(mm.is_finite() && mm <= 0.0);
    }

    #[test]
    fn d_loss_is_mean_binary_cross_entropy(real in -6.0f64..6.0, fake in -6.0f64..6.0) {
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let bce = -(sig(real).ln()) - (1.0 - sig(fake)).ln();
        let (d, _, _) = d_loss(&map(&[real]), &map(&[fake])).unwrap();
        prop_assert!((d - bce).abs() < 1e-9);
    }

    #[test]
    fn softplus_identity(x in -30.0f64..30.0) {
        // softplus(x) - softplus(-x) = x
        prop_assert!((softplus(x) - softplus(-x) - x).abs() < 1e-12);
    }

    #[test]
    fn l1_is_symmetric_and_zero_on_identity(
        a in prop::collection::vec(-1.0f64..1.0, 1..30),
        d in -1.0f64..1.0,
    ) {
        let b: Vec<f64> = a.iter().map(|x| x + d).collect();
        let (ab, _) = l1_loss(&map(&a), &map(&b)).unwrap();
        let (ba, _) = l1_loss(&map(&b), &map(&a)).unwrap();
        prop_assert!((ab - ba).abs() < 1e-15);
        prop_assert!((ab - d.abs()).abs() < 1e-12);
        let (aa, g) = l1_loss(&map(&a), &map(&a)).unwrap();
        prop_assert_eq!(aa, 0.0);
        prop_assert!(g.iter().all(|v| *v == 0.0));
    }
}

#[test]
fn shape_mismatch_is_an_error() {
    assert!(d_loss(&map(&[0.0, 1.0]), &map(&[0.0])).is_err());
    assert!(l1_loss(&map(&[0.0, 1.0]), &map(&[0.0])).is_err());
}
