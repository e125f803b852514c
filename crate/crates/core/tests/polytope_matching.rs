//! Maximum-weight matching against exhaustive search, including the
//! lexicographic tie-break on exactly tied optima.

mod common;

use fairmac_core::polytope::max_weight_matching;
use fairmac_core::Matrix;
use itertools::Itertools;
use proptest::prelude::*;

/// Value of a permutation, summed in row order (the tie-break comparison
/// must use the same summation order as the implementation).
fn perm_value(w: &Matrix, perm: &[usize]) -> f64 {
    perm.iter().enumerate().map(|(i, &j)| w[(i, j)]).sum()
}

/// Exhaustive maximizer with lexicographic preference among exact ties.
fn brute_force(w: &Matrix) -> Vec<usize> {
    let s = w.rows();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for perm in (0..s).permutations(s) {
        let value = perm_value(w, &perm);
        let better = match &best {
            None => true,
            Some((bv, bp)) => value > *bv || (value == *bv && perm < *bp),
        };
        if better {
            best = Some((value, perm));
        }
    }
    best.unwrap().1
}

#[test]
fn diagonal_dominant_picks_the_diagonal() {
    let mut w = Matrix::zeros(3, 3);
    for i in 0..3 {
        w[(i, i)] = 10.0;
    }
    assert_eq!(max_weight_matching(&w).unwrap(), vec![0, 1, 2]);
}

#[test]
fn antidiagonal_beats_diagonal() {
    let w = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
    assert_eq!(max_weight_matching(&w).unwrap(), vec![1, 0]);
}

#[test]
fn zero_matrix_breaks_ties_to_identity() {
    for s in 1..=6 {
        let w = Matrix::zeros(s, s);
        let expected: Vec<usize> = (0..s).collect();
        assert_eq!(max_weight_matching(&w).unwrap(), expected);
    }
}

#[test]
fn constant_matrix_breaks_ties_to_identity() {
    let w = Matrix::filled(4, 4, 2.5);
    assert_eq!(max_weight_matching(&w).unwrap(), vec![0, 1, 2, 3]);
}

#[test]
fn rejects_non_finite_weights() {
    let w = Matrix::from_rows(&[vec![1.0, f64::NAN], vec![0.0, 1.0]]);
    assert!(max_weight_matching(&w).is_err());
}

#[test]
fn structured_ties_match_lexicographic_brute_force() {
    // Weights drawn from a tiny value set force many exactly-equal optima.
    let mut rng = common::seeded_rng(99);
    use rand::Rng;
    for _ in 0..300 {
        let s = rng.random_range(2..=5);
        let values = [0.0, 1.0, 2.0];
        let rows: Vec<Vec<f64>> = (0..s)
            .map(|_| (0..s).map(|_| values[rng.random_range(0..3)]).collect())
            .collect();
        let w = Matrix::from_rows(&rows);
        assert_eq!(max_weight_matching(&w).unwrap(), brute_force(&w), "w = {w}");
    }
}

proptest! {
    #[test]
    fn matches_brute_force_on_random_weights(
        seed in 0u64..1_000_000,
        s in 1usize..=6,
    ) {
        let mut rng = common::seeded_rng(seed);
        let w = common::random_matrix(&mut rng, s, s, -5.0, 5.0);
        let got = max_weight_matching(&w).unwrap();
        let want = brute_force(&w);
        prop_assert_eq!(perm_value(&w, &got), perm_value(&w, &want));
        prop_assert_eq!(got, want);
    }

    #[test]
    fn queue_scaled_indices_match_brute_force(
        seed in 0u64..1_000_000,
        s in 2usize..=5,
    ) {
        // The scheduler's weight shape: nonnegative rows scaled by queues,
        // with some rows identically zero.
        let mut rng = common::seeded_rng(seed);
        use rand::Rng;
        let mut w = common::random_matrix(&mut rng, s, s, 0.0, 2.0);
        for i in 0..s {
            if rng.random::<f64>() < 0.4 {
                for j in 0..s {
                    w[(i, j)] = 0.0;
                }
            }
        }
        prop_assert_eq!(max_weight_matching(&w).unwrap(), brute_force(&w));
    }
}
