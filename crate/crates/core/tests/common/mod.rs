//! Shared generators for the integration tests. Each test target compiles
//! its own copy, so not every helper is used everywhere.
#![allow(dead_code)]

use fairmac_core::Matrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random point of the floored simplex: floor plus a normalized positive bulk.
pub fn random_floored_simplex<R: Rng + ?Sized>(rng: &mut R, l: usize, eps: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..l).map(|_| rng.random::<f64>() + 1e-6).collect();
    let sum: f64 = raw.iter().sum();
    let slack = 1.0 - eps * l as f64;
    raw.into_iter().map(|v| eps + slack * v / sum).collect()
}

/// Matrix whose rows are random floored simplex points.
pub fn random_row_stochastic<R: Rng + ?Sized>(rng: &mut R, s: usize, eps: f64) -> Matrix {
    let rows: Vec<Vec<f64>> = (0..s).map(|_| random_floored_simplex(rng, s, eps)).collect();
    Matrix::from_rows(&rows)
}

/// Matrix whose columns are random floored simplex points.
pub fn random_col_stochastic<R: Rng + ?Sized>(rng: &mut R, s: usize, eps: f64) -> Matrix {
    let mut m = Matrix::zeros(s, s);
    for j in 0..s {
        let col = random_floored_simplex(rng, s, eps);
        m.set_col(j, &col);
    }
    m
}

/// Random doubly stochastic matrix: convex combination of random permutations.
pub fn random_doubly_stochastic<R: Rng + ?Sized>(rng: &mut R, s: usize, terms: usize) -> Matrix {
    let weights = random_floored_simplex(rng, terms, 0.0);
    let mut m = Matrix::zeros(s, s);
    for &w in &weights {
        let perm = random_permutation(rng, s);
        for (i, &j) in perm.iter().enumerate() {
            m[(i, j)] += w;
        }
    }
    m
}

/// Fisher-Yates shuffle of the identity map.
pub fn random_permutation<R: Rng + ?Sized>(rng: &mut R, s: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..s).collect();
    for i in (1..s).rev() {
        let j = rng.random_range(0..=i);
        perm.swap(i, j);
    }
    perm
}

/// Random entries drawn uniformly from [lo, hi).
pub fn random_matrix<R: Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    cols: usize,
    lo: f64,
    hi: f64,
) -> Matrix {
    let data: Vec<Vec<f64>> = (0..rows)
        .map(|_| (0..cols).map(|_| rng.random_range(lo..hi)).collect())
        .collect();
    Matrix::from_rows(&data)
}

pub fn l1_deviation_from_one(sums: &[f64]) -> f64 {
    sums.iter().map(|&v| (v - 1.0).abs()).sum()
}
