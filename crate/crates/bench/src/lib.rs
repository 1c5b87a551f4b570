//! Fixtures shared by the benchmarks.

use crl_core::rng;
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn randn(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut r = rng::stream(seed, "bench/randn");
    Array2::from_shape_simple_fn((rows, cols), || r.sample(StandardNormal))
}

pub fn randn_vec(n: usize, seed: u64) -> Array1<f64> {
    let mut r = rng::stream(seed, "bench/randn_vec");
    Array1::from_shape_simple_fn(n, || r.sample(StandardNormal))
}
