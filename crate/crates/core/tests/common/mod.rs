#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use scm_profile::store::{ContextSource, EmbeddingRecord, EmbeddingStore, StoreHeader};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn gaussian_rows(rng: &mut ChaCha8Rng, h: usize, d: usize) -> Vec<Vec<f64>> {
    (0..h).map(|_| gaussian(rng, d)).collect()
}

/// Minimum-norm least-squares solution of aᵀ d ≈ x via an SVD
/// pseudo-inverse, independent of the library's normal equations.
pub fn svd_oracle(basis: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    let (h, d) = (basis.len(), basis[0].len());
    let at = DMatrix::from_fn(d, h, |i, j| basis[j][i]);
    let pinv = at.pseudo_inverse(1e-14).expect("svd converges");
    (pinv * DVector::from_column_slice(x)).iter().copied().collect()
}

pub fn singular_values(basis: &[Vec<f64>]) -> Vec<f64> {
    let (h, d) = (basis.len(), basis[0].len());
    let a = DMatrix::from_fn(h, d, |i, j| basis[i][j]);
    a.singular_values().iter().copied().collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// aᵀ c
pub fn combine(basis: &[Vec<f64>], c: &[f64]) -> Vec<f64> {
    let d = basis[0].len();
    (0..d).map(|j| basis.iter().zip(c).map(|(row, ci)| row[j] * ci).sum()).collect()
}

pub fn record(term: &str, example: &str, layer: usize, vector: Vec<f32>) -> EmbeddingRecord {
    EmbeddingRecord {
        term: term.into(),
        example_id: example.into(),
        source: ContextSource::Generated,
        layer,
        vector,
    }
}

pub fn memory_store(dim: usize, layers: usize, records: &[EmbeddingRecord]) -> EmbeddingStore {
    EmbeddingStore::from_records(&StoreHeader::new("test", dim, layers), records).unwrap()
}

/// Values on a 1/64 grid, so small integer multiples stay exact in f32.
pub fn grid_vector(rng: &mut ChaCha8Rng, d: usize) -> Vec<f32> {
    (0..d).map(|_| rng.random_range(-512i32..=512) as f32 / 64.0).collect()
}
