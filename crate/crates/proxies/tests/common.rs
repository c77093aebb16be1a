#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use zcp_core::{MacroConfig, Tensor};
use zcp_proxies::ScoreBatch;

pub fn small_macro() -> MacroConfig {
    MacroConfig {
        stem_channels: 2,
        input_resolution: 4,
        num_classes: 3,
        ..MacroConfig::default()
    }
}

pub fn gaussian(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()).unwrap()
}

pub fn pixels(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = Uniform::new(0.0, 1.0).unwrap();
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| u.sample(&mut rng)).collect()).unwrap()
}

pub fn batch_for(shape: [usize; 3], n: usize, classes: usize, seed: u64) -> ScoreBatch {
    let [c, h, w] = shape;
    let labels = (0..n).map(|i| i % classes).collect();
    ScoreBatch::new(pixels(&[n, c, h, w], seed), labels, 2.0 / 255.0, seed).unwrap()
}
