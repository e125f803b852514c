//! Input builders shared by the benchmark targets.

use fairmac_core::polytope::{round_to_birkhoff, StochKind, StochMatrix};
use fairmac_core::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Row-stochastic matrix whose entries respect the floor `eps`.
pub fn random_row_stochastic(rng: &mut ChaCha8Rng, s: usize, eps: f64) -> Matrix {
    let mut p = Matrix::zeros(s, s);
    for i in 0..s {
        let w: Vec<f64> = (0..s).map(|_| rng.random_range(0.02..1.0)).collect();
        let total: f64 = w.iter().sum();
        for (j, wj) in w.into_iter().enumerate() {
            p[(i, j)] = eps + (1.0 - eps * s as f64) * wj / total;
        }
    }
    p
}

/// Doubly stochastic sample, produced by rounding a row-stochastic one.
pub fn random_doubly_stochastic(rng: &mut ChaCha8Rng, s: usize, eps: f64) -> StochMatrix {
    let p = random_row_stochastic(rng, s, eps);
    let tagged = StochMatrix::new(p, StochKind::Row, eps).unwrap();
    round_to_birkhoff(&tagged).unwrap()
}

pub fn random_weights(rng: &mut ChaCha8Rng, s: usize) -> Matrix {
    let mut w = Matrix::zeros(s, s);
    for i in 0..s {
        for j in 0..s {
            w[(i, j)] = rng.random_range(0.0..10.0);
        }
    }
    w
}
