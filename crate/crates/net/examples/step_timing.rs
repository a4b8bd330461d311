//! Times train steps at the default 64×64, 3-channel configuration.

use std::time::Instant;

use ndarray::{Array2, Array3};
use velgan_core::{PatchOrigin, PatchPair};
use velgan_net::{Batch, Layer, DiscriminatorSpec, GeneratorSpec, LossConfig, OptimConfig, TrainState};

fn main() {
    let patch = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(64);
    let g = GeneratorSpec { patch_size: patch, ..Default::default() };
    let mut state =
        TrainState::<f32>::new(g, DiscriminatorSpec::patchgan70(4), LossConfig::default(), OptimConfig::default(), 1)
            .unwrap();
    let pair = PatchPair {
        input: Array3::from_shape_fn((3, patch, patch), |(c, i, j)| ((c * 7 + i * 3 + j) % 11) as f64 / 10.0),
        target: Array2::from_shape_fn((patch, patch), |(i, _)| i as f64 / patch as f64),
        origin: PatchOrigin { inline: 0, crossline: 0, sample: 0 },
    };
    let batch = Batch::from_pairs(&[&pair]).unwrap();
    state.train_step(&batch).unwrap();
    let n = 20;
    let t = Instant::now();
    for _ in 0..n {
        state.train_step(&batch).unwrap();
    }
    println!("{:.1} ms/step", t.elapsed().as_secs_f64() * 1e3 / n as f64);
    println!("G params {} D params {}", state.generator.param_count(), state.discriminator.param_count());
    let (mut tg, mut td, mut tu) = (0.0, 0.0, 0.0);
    for _ in 0..n {
        let t = Instant::now();
        let fake = state.generate(&batch);
        tg += t.elapsed().as_secs_f64();
        let t = Instant::now();
        state.d_update(&batch, &fake).unwrap();
        td += t.elapsed().as_secs_f64();
        let t = Instant::now();
        state.g_update(&batch, &fake).unwrap();
        tu += t.elapsed().as_secs_f64();
    }
    let mut adam = state.g_adam.clone();
    let t = Instant::now();
    for _ in 0..n {
        adam.step(&mut state.generator.params_mut(), &state.optim).unwrap();
    }
    let ta = t.elapsed().as_secs_f64();
    println!("gen fwd {:.1} d_update {:.1} g_update {:.1} g-adam {:.1} ms", tg * 1e3 / n as f64, td * 1e3 / n as f64, tu * 1e3 / n as f64, ta * 1e3 / n as f64);
}
