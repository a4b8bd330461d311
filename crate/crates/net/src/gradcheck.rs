//! Central finite-difference checks of analytic gradients (float64).

use ndarray::Array4;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::layers::{ForwardCtx, Layer};

pub const STEP: f64 = 1e-5;
/// Denominator floor of the relative error, so gradients that are zero
/// up to rounding do not produce spurious failures.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub max_rel_error: f64,
    /// Where the worst error was seen, e.g. `"conv.weight[3]"` or `"input[7]"`.
    pub worst: String,
    pub checked: usize,
    pub tolerance: f64,
}

impl GradReport {
    fn new(tolerance: f64) -> Self {
        Self { max_rel_error: 0.0, worst: String::new(), checked: 0, tolerance }
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }

    fn record(&mut self, analytic: f64, numeric: f64, at: impl FnOnce() -> String) {
        let err = rel_error(analytic, numeric);
        self.checked += 1;
        if err > self.max_rel_error || !err.is_finite() {
            self.max_rel_error = err;
            self.worst = at();
        }
    }
}

pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Checks parameter and input gradients of `layer` under the scalar loss
/// `sum(out · R)` for a fixed random projection `R`. With `dropout_seed`
/// set, every forward replays the same dropout mask.
pub fn check_layer(layer: &mut dyn Layer<f64>, input: &Array4<f64>, dropout_seed: Option<u64>, tolerance: f64) -> GradReport {
    let ctx = || match dropout_seed {
        Some(s) => ForwardCtx::new(true, ChaCha8Rng::seed_from_u64(s)),
        None => ForwardCtx::deterministic(),
    };
    let out = layer.forward(input, &mut ctx());
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);
    let proj = out.mapv(|_| StandardNormal.sample(&mut rng));
    let loss = |layer: &mut dyn Layer<f64>, x: &Array4<f64>| (layer.forward(x, &mut ctx()) * &proj).sum();

    for p in layer.params_mut() {
        p.zero_grad();
    }
    layer.forward(input, &mut ctx());
    let dx = layer.backward(&proj);
    let analytic: Vec<Vec<f64>> = layer.params().iter().map(|p| p.grad.clone()).collect();
    let names: Vec<String> = layer.params().iter().map(|p| p.name.clone()).collect();

    let mut report = GradReport::new(tolerance);
    for (pi, grads) in analytic.iter().enumerate() {
        for (k, &a) in grads.iter().enumerate() {
            let orig = layer.params()[pi].value[k];
            layer.params_mut()[pi].value[k] = orig + STEP;
            let up = loss(layer, input);
            layer.params_mut()[pi].value[k] = orig - STEP;
            let down = loss(layer, input);
            layer.params_mut()[pi].value[k] = orig;
            report.record(a, (up - down) / (2.0 * STEP), || format!("{}[{k}]", names[pi]));
        }
    }
    let mut x = input.as_standard_layout().to_owned();
    let dx = dx.as_standard_layout().to_owned();
    let dx = dx.as_slice().expect("contiguous");
    for k in 0..x.len() {
        let orig = x.as_slice().expect("contiguous")[k];
        x.as_slice_mut().expect("contiguous")[k] = orig + STEP;
        let up = loss(layer, &x);
        x.as_slice_mut().expect("contiguous")[k] = orig - STEP;
        let down = loss(layer, &x);
        x.as_slice_mut().expect("contiguous")[k] = orig;
        report.record(dx[k], (up - down) / (2.0 * STEP), || format!("input[{k}]"));
    }
    report
}

/// Checks an analytic gradient of a scalar function at `x`.
pub fn check_fn(f: impl Fn(&Array4<f64>) -> f64, grad: &Array4<f64>, x: &Array4<f64>, tolerance: f64) -> GradReport {
    let mut report = GradReport::new(tolerance);
    let mut x = x.as_standard_layout().to_owned();
    let grad = grad.as_standard_layout();
    let g = grad.as_slice().expect("contiguous");
    for k in 0..x.len() {
        let orig = x.as_slice().expect("contiguous")[k];
        x.as_slice_mut().expect("contiguous")[k] = orig + STEP;
        let up = f(&x);
        x.as_slice_mut().expect("contiguous")[k] = orig - STEP;
        let down = f(&x);
        x.as_slice_mut().expect("contiguous")[k] = orig;
        report.record(g[k], (up - down) / (2.0 * STEP), || format!("x[{k}]"));
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{Conv2d, Sequential, Tanh};

    #[test]
    fn conv_tanh_passes_tightly() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut net = Sequential::new(vec![
            Box::new(Conv2d::<f64>::new("c", 1, 2, 4, 2, 1, true, 0.3, &mut rng)),
            Box::new(Tanh::new()),
        ]);
        let x = Array4::from_shape_fn((1, 1, 8, 8), |(_, _, i, j)| ((i * 3 + j * 5) % 7) as f64 / 7.0 - 0.4);
        let r = check_layer(&mut net, &x, None, 1e-6);
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.checked, 2 * 16 + 2 + 64);
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let x = Array4::from_elem((1, 1, 1, 3), 0.7);
        let wrong = Array4::from_elem((1, 1, 1, 3), 1.0);
        let r = check_fn(|x| x.mapv(|v| v * v).sum(), &wrong, &x, 1e-4);
        assert!(!r.passed());
    }
}
