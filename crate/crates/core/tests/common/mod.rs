#![allow(dead_code)]

pub mod oracles;

use crossfuse::numkit::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform entries in `[-scale, scale]`.
pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix<f64> {
    let data = (0..rows * cols).map(|_| rng.random_range(-scale..=scale)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

pub fn random_matrix_f32(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f32) -> Matrix<f32> {
    let data = (0..rows * cols).map(|_| rng.random_range(-scale..=scale)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

pub fn max_abs_diff(a: &Matrix<f64>, b: &Matrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
