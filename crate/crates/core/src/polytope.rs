//! Birkhoff-polytope primitives: rounding near-stochastic matrices onto the
//! doubly stochastic set, Birkhoff-von Neumann decomposition and sampling,
//! KL projection onto a floored simplex, and max-weight bipartite matching.
//!
//! Conventions shared by every operation here:
//! - all logarithms are natural;
//! - stochastic row/column sums are accepted within `1e-9`;
//! - claimed entry floors are accepted within `1e-12`;
//! - the decomposition treats entries at or below `1e-12` as zero.

use crate::types::Matrix;
use rand::Rng;

/// Tolerance on stochastic row/column sums.
pub const SUM_TOL: f64 = 1e-9;
/// Tolerance on claimed entry floors.
pub const FLOOR_TOL: f64 = 1e-12;
/// Entries at or below this are treated as structural zeros.
const ZERO_TOL: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("entry ({i},{j}) = {value} must be finite and nonnegative")]
    BadEntry { i: usize, j: usize, value: f64 },
    #[error("row {i} sums to {sum}, expected 1 within {SUM_TOL:e}")]
    RowSum { i: usize, sum: f64 },
    #[error("column {j} sums to {sum}, expected 1 within {SUM_TOL:e}")]
    ColSum { j: usize, sum: f64 },
    #[error("entry ({i},{j}) = {value} lies below the claimed floor {floor}")]
    BelowFloor { i: usize, j: usize, value: f64, floor: f64 },
    #[error("coordinate {i} = {value} lies below the claimed floor {floor}")]
    VecBelowFloor { i: usize, value: f64, floor: f64 },
    #[error("floor {floor} with {len} coordinates leaves the simplex empty")]
    InfeasibleFloor { floor: f64, len: usize },
    #[error("reference entry {i} = {value} must be strictly positive and finite")]
    BadReference { i: usize, value: f64 },
    #[error("input {i} = {value} must be finite")]
    BadInput { i: usize, value: f64 },
    #[error("lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("no perfect matching on the positivity pattern; unextracted weight {residual}")]
    DecompositionStuck { residual: f64 },
    #[error("decomposition weights sum to {sum}, expected 1 within {SUM_TOL:e}")]
    BadWeights { sum: f64 },
    #[error("permutation {index} is not a bijection on [{size}]")]
    BadPermutation { index: usize, size: usize },
    #[error("weight matrix entry ({i},{j}) = {value} must be finite")]
    BadWeight { i: usize, j: usize, value: f64 },
}

/// Constraint-set tag for a square nonnegative matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StochKind {
    /// Every row sums to 1.
    Row,
    /// Every column sums to 1.
    Col,
    /// Both row and column sums are 1.
    Doubly,
    /// No sum constraint claimed.
    General,
}

/// Square nonnegative matrix tagged with the stochasticity it satisfies and an
/// entrywise floor it respects. The constructor checks every claim.
#[derive(Clone, Debug, PartialEq)]
pub struct StochMatrix {
    entries: Matrix,
    kind: StochKind,
    floor: f64,
}

impl StochMatrix {
    pub fn new(entries: Matrix, kind: StochKind, floor: f64) -> Result<Self, Error> {
        if !entries.is_square() {
            return Err(Error::NotSquare { rows: entries.rows(), cols: entries.cols() });
        }
        let s = entries.rows();
        for i in 0..s {
            for j in 0..s {
                let v = entries[(i, j)];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::BadEntry { i, j, value: v });
                }
                if v < floor - FLOOR_TOL {
                    return Err(Error::BelowFloor { i, j, value: v, floor });
                }
            }
        }
        if matches!(kind, StochKind::Row | StochKind::Doubly) {
            for (i, sum) in entries.row_sums().into_iter().enumerate() {
                if (sum - 1.0).abs() > SUM_TOL {
                    return Err(Error::RowSum { i, sum });
                }
            }
        }
        if matches!(kind, StochKind::Col | StochKind::Doubly) {
            for (j, sum) in entries.col_sums().into_iter().enumerate() {
                if (sum - 1.0).abs() > SUM_TOL {
                    return Err(Error::ColSum { j, sum });
                }
            }
        }
        Ok(StochMatrix { entries, kind, floor })
    }

    pub fn entries(&self) -> &Matrix {
        &self.entries
    }

    pub fn kind(&self) -> StochKind {
        self.kind
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn size(&self) -> usize {
        self.entries.rows()
    }

    pub fn into_entries(self) -> Matrix {
        self.entries
    }
}

/// Intermediate matrices of the three rounding steps, exposed so the
/// structural bounds relating them can be checked directly.
#[derive(Clone, Debug)]
pub struct RoundSteps {
    /// Rows with sum > 1 scaled back to sum 1.
    pub row_scaled: Matrix,
    /// Columns of `row_scaled` with sum > 1 scaled back to sum 1.
    pub col_scaled: Matrix,
    /// `col_scaled` plus the rank-one deficit correction; doubly stochastic.
    pub rounded: Matrix,
}

/// Runs the three rounding steps on a square nonnegative matrix.
///
/// Step 1 normalizes any row with sum above 1, step 2 any column of the result
/// with sum above 1. Step 3 adds `r c^T / C` where `r` and `c` are the row and
/// column deficits of the step-2 matrix and `C = sum(r) = sum(c)`; when `C = 0`
/// the step-2 matrix is already doubly stochastic and is returned unchanged.
pub fn round_steps(p: &Matrix) -> Result<RoundSteps, Error> {
    if !p.is_square() {
        return Err(Error::NotSquare { rows: p.rows(), cols: p.cols() });
    }
    let s = p.rows();
    for i in 0..s {
        for j in 0..s {
            let v = p[(i, j)];
            if !v.is_finite() || v < 0.0 {
                return Err(Error::BadEntry { i, j, value: v });
            }
        }
    }

    let mut row_scaled = p.clone();
    for i in 0..s {
        let sum: f64 = row_scaled.row(i).iter().sum();
        if sum > 1.0 {
            for v in row_scaled.row_mut(i) {
                *v /= sum;
            }
        }
    }

    let mut col_scaled = row_scaled.clone();
    for j in 0..s {
        let sum: f64 = (0..s).map(|i| col_scaled[(i, j)]).sum();
        if sum > 1.0 {
            for i in 0..s {
                col_scaled[(i, j)] /= sum;
            }
        }
    }

    // After both scalings every row and column sums to at most 1, so the
    // deficits are nonnegative up to rounding; clamp the rounding away.
    let row_deficit: Vec<f64> =
        col_scaled.row_sums().into_iter().map(|v| (1.0 - v).max(0.0)).collect();
    let col_deficit: Vec<f64> =
        col_scaled.col_sums().into_iter().map(|v| (1.0 - v).max(0.0)).collect();
    let c: f64 = row_deficit.iter().sum();

    let mut rounded = col_scaled.clone();
    if c > 0.0 {
        for i in 0..s {
            for j in 0..s {
                rounded[(i, j)] += row_deficit[i] * col_deficit[j] / c;
            }
        }
    }

    Ok(RoundSteps { row_scaled, col_scaled, rounded })
}

/// Rounds a near-stochastic matrix onto the doubly stochastic polytope.
///
/// If the input is row- or column-stochastic with entry floor `eps`, the
/// output is doubly stochastic with entry floor `eps / s`, and the L1 motion
/// is at most twice the input's total row-plus-column deficit.
pub fn round_to_birkhoff(p: &StochMatrix) -> Result<StochMatrix, Error> {
    let steps = round_steps(p.entries())?;
    let floor = match p.kind() {
        StochKind::General => 0.0,
        _ => p.floor() / p.size() as f64,
    };
    StochMatrix::new(steps.rounded, StochKind::Doubly, floor)
}

/// Convex combination of permutation matrices reconstructing a doubly
/// stochastic matrix. Zero-weight terms are removed at construction.
#[derive(Clone, Debug)]
pub struct BvnDecomposition {
    weights: Vec<f64>,
    permutations: Vec<Vec<usize>>,
}

impl BvnDecomposition {
    pub fn new(weights: Vec<f64>, permutations: Vec<Vec<usize>>) -> Result<Self, Error> {
        if weights.len() != permutations.len() {
            return Err(Error::LengthMismatch {
                left: weights.len(),
                right: permutations.len(),
            });
        }
        let kept: Vec<(f64, Vec<usize>)> = weights
            .into_iter()
            .zip(permutations)
            .filter(|(w, _)| *w > 0.0)
            .collect();
        let sum: f64 = kept.iter().map(|(w, _)| w).sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::BadWeights { sum });
        }
        let size = kept.first().map_or(0, |(_, p)| p.len());
        for (index, (_, perm)) in kept.iter().enumerate() {
            let mut seen = vec![false; size];
            let ok = perm.len() == size
                && perm.iter().all(|&j| {
                    if j >= size || seen[j] {
                        false
                    } else {
                        seen[j] = true;
                        true
                    }
                });
            if !ok {
                return Err(Error::BadPermutation { index, size });
            }
        }
        let (weights, permutations) = kept.into_iter().unzip();
        Ok(BvnDecomposition { weights, permutations })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn permutations(&self) -> &[Vec<usize>] {
        &self.permutations
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn size(&self) -> usize {
        self.permutations.first().map_or(0, Vec::len)
    }

    /// Weighted sum of the permutation matrices.
    pub fn reconstruct(&self) -> Matrix {
        let s = self.size();
        let mut m = Matrix::zeros(s, s);
        for (w, perm) in self.weights.iter().zip(&self.permutations) {
            for (i, &j) in perm.iter().enumerate() {
                m[(i, j)] += w;
            }
        }
        m
    }
}

/// Perfect matching on the positivity pattern of `m` (entries above
/// `ZERO_TOL`) via augmenting paths, scanning rows and columns in index order.
fn pattern_matching(m: &Matrix) -> Option<Vec<usize>> {
    let s = m.rows();
    let mut col_of_row = vec![usize::MAX; s];
    let mut row_of_col = vec![usize::MAX; s];

    fn augment(
        m: &Matrix,
        row: usize,
        visited: &mut [bool],
        col_of_row: &mut [usize],
        row_of_col: &mut [usize],
    ) -> bool {
        let s = m.rows();
        for col in 0..s {
            if m[(row, col)] > ZERO_TOL && !visited[col] {
                visited[col] = true;
                if row_of_col[col] == usize::MAX
                    || augment(m, row_of_col[col], visited, col_of_row, row_of_col)
                {
                    col_of_row[row] = col;
                    row_of_col[col] = row;
                    return true;
                }
            }
        }
        false
    }

    for row in 0..s {
        let mut visited = vec![false; s];
        if !augment(m, row, &mut visited, &mut col_of_row, &mut row_of_col) {
            return None;
        }
    }
    Some(col_of_row)
}

/// Removes one term from an affinely dependent set of permutation matrices by
/// moving the weights along a null direction until some weight reaches zero.
/// The weighted sum is unchanged. Returns false if no dependency was found.
fn prune_affine_dependency(weights: &mut Vec<f64>, perms: &mut Vec<Vec<usize>>, s: usize) -> bool {
    let l = weights.len();
    let rows = s * s + 1;
    // Columns are the terms: vec(M_k) stacked with an all-ones affine row.
    let mut a = vec![vec![0.0f64; l]; rows];
    for (k, perm) in perms.iter().enumerate() {
        for (i, &j) in perm.iter().enumerate() {
            a[i * s + j][k] = 1.0;
        }
        a[rows - 1][k] = 1.0;
    }

    // Reduced row echelon form with partial pivoting.
    let mut pivot_row_of_col: Vec<Option<usize>> = vec![None; l];
    let mut next_row = 0;
    for col in 0..l {
        let (best_row, best_val) = (next_row..rows)
            .map(|r| (r, a[r][col].abs()))
            .fold((next_row, 0.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if best_val <= 1e-9 {
            continue;
        }
        a.swap(next_row, best_row);
        let pivot = a[next_row][col];
        for v in a[next_row][col..].iter_mut() {
            *v /= pivot;
        }
        for r in 0..rows {
            if r != next_row && a[r][col] != 0.0 {
                let factor = a[r][col];
                for cc in col..l {
                    let sub = factor * a[next_row][cc];
                    a[r][cc] -= sub;
                }
            }
        }
        pivot_row_of_col[col] = Some(next_row);
        next_row += 1;
        if next_row == rows {
            break;
        }
    }

    let Some(free) = (0..l).find(|&c| pivot_row_of_col[c].is_none()) else {
        return false;
    };
    let mut lambda = vec![0.0; l];
    lambda[free] = 1.0;
    for col in 0..l {
        if let Some(pr) = pivot_row_of_col[col] {
            lambda[col] = -a[pr][free];
        }
    }

    // The affine row forces sum(lambda) = 0, so a positive coordinate exists.
    let mut tau = f64::INFINITY;
    let mut hit = usize::MAX;
    for k in 0..l {
        if lambda[k] > ZERO_TOL {
            let step = weights[k] / lambda[k];
            if step < tau {
                tau = step;
                hit = k;
            }
        }
    }
    debug_assert!(hit != usize::MAX, "null direction lacks a positive coordinate");
    for k in 0..l {
        weights[k] -= tau * lambda[k];
    }
    weights[hit] = 0.0;

    let mut idx = 0;
    perms.retain(|_| {
        let keep = weights[idx] > ZERO_TOL;
        idx += 1;
        keep
    });
    weights.retain(|w| *w > ZERO_TOL);
    true
}

/// Birkhoff-von Neumann decomposition of a doubly stochastic matrix.
///
/// Greedy extraction: find a perfect matching on the positivity pattern,
/// subtract the minimum matched entry, zero entries at or below `1e-12`,
/// repeat. A Caratheodory pruning pass then merges affinely dependent terms so
/// the result has at most `s^2 - 2s + 2` of them. Reconstruction error stays
/// within `1e-9` entrywise for inputs doubly stochastic within `1e-9`.
pub fn bvn_decompose(p: &StochMatrix) -> Result<BvnDecomposition, Error> {
    let entries = p.entries();
    let s = p.size();
    for (i, sum) in entries.row_sums().into_iter().enumerate() {
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::RowSum { i, sum });
        }
    }
    for (j, sum) in entries.col_sums().into_iter().enumerate() {
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::ColSum { j, sum });
        }
    }

    let mut residual = entries.clone();
    for i in 0..s {
        for v in residual.row_mut(i) {
            if *v <= ZERO_TOL {
                *v = 0.0;
            }
        }
    }

    let mut weights: Vec<f64> = Vec::new();
    let mut perms: Vec<Vec<usize>> = Vec::new();
    let mut extracted = 0.0;
    while extracted < 1.0 - SUM_TOL {
        let Some(perm) = pattern_matching(&residual) else {
            // Inputs inside the tolerance can strand up to ~SUM_TOL of weight.
            if 1.0 - extracted <= 10.0 * SUM_TOL {
                break;
            }
            return Err(Error::DecompositionStuck { residual: 1.0 - extracted });
        };
        let alpha = perm
            .iter()
            .enumerate()
            .map(|(i, &j)| residual[(i, j)])
            .fold(f64::INFINITY, f64::min);
        debug_assert!(alpha > ZERO_TOL);
        for (i, &j) in perm.iter().enumerate() {
            let v = &mut residual[(i, j)];
            *v = if *v - alpha <= ZERO_TOL { 0.0 } else { *v - alpha };
        }
        weights.push(alpha);
        perms.push(perm);
        extracted += alpha;
    }

    let bound = s * s + 2 - 2 * s;
    while weights.len() > bound {
        if !prune_affine_dependency(&mut weights, &mut perms, s) {
            break;
        }
    }

    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    BvnDecomposition::new(weights, perms)
}

/// Samples a term index with probability proportional to its weight,
/// consuming exactly one uniform draw.
pub fn sample_permutation<R: Rng + ?Sized>(d: &BvnDecomposition, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (l, w) in d.weights().iter().enumerate() {
        acc += w;
        if u < acc {
            return l;
        }
    }
    d.len() - 1
}

/// Probability vector whose entries all sit at or above a common floor.
#[derive(Clone, Debug, PartialEq)]
pub struct FlooredSimplexVector {
    values: Vec<f64>,
    floor: f64,
}

impl FlooredSimplexVector {
    pub fn new(values: Vec<f64>, floor: f64) -> Result<Self, Error> {
        let l = values.len();
        if l == 0 || floor < 0.0 || floor * l as f64 > 1.0 + FLOOR_TOL {
            return Err(Error::InfeasibleFloor { floor, len: l });
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > FLOOR_TOL {
            return Err(Error::BadWeights { sum });
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() || v < floor - FLOOR_TOL {
                return Err(Error::VecBelowFloor { i, value: v, floor });
            }
        }
        Ok(FlooredSimplexVector { values, floor })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Uniform distribution over `l` coordinates; feasible for any floor <= 1/l.
    pub fn uniform(l: usize, floor: f64) -> Result<Self, Error> {
        FlooredSimplexVector::new(vec![1.0 / l as f64; l], floor)
    }
}

/// Minimizes `-<x, p> + KL(p || y)` over the simplex with entry floor `eps`.
///
/// The reference `y` may be any strictly positive vector: scaling `y` shifts
/// the objective by a constant, so only its direction matters. The solver
/// forms `z_i = y_i exp(x_i)`, sorts ascending with index tie-breaks, and
/// scans floor counts `i = 0..l-1`, returning the first candidate whose free
/// coordinates all clear the floor. The scan always terminates because with
/// `l - 1` floored coordinates the single free one holds `1 - eps(l-1) >= eps`.
pub fn kl_project(x: &[f64], y: &[f64], eps: f64) -> Result<FlooredSimplexVector, Error> {
    let l = x.len();
    if l != y.len() {
        return Err(Error::LengthMismatch { left: l, right: y.len() });
    }
    if l == 0 || eps < 0.0 || eps * l as f64 > 1.0 + FLOOR_TOL {
        return Err(Error::InfeasibleFloor { floor: eps, len: l });
    }
    for (i, &v) in y.iter().enumerate() {
        if !v.is_finite() || v <= 0.0 {
            return Err(Error::BadReference { i, value: v });
        }
    }
    for (i, &v) in x.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::BadInput { i, value: v });
        }
    }

    // Shift x by its maximum: multiplies z by a constant, which cancels.
    let x_max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: Vec<f64> = x.iter().zip(y).map(|(&xi, &yi)| yi * (xi - x_max).exp()).collect();

    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|&a, &b| z[a].partial_cmp(&z[b]).unwrap().then(a.cmp(&b)));

    // suffix[k] = sum of z over sorted positions k..l
    let mut suffix = vec![0.0; l + 1];
    for k in (0..l).rev() {
        suffix[k] = suffix[k + 1] + z[order[k]];
    }

    for floored in 0..l {
        let scale = (1.0 - eps * floored as f64) / suffix[floored];
        let min_free = z[order[floored]] * scale;
        if min_free >= eps || floored == l - 1 {
            let mut p = vec![0.0; l];
            for (pos, &idx) in order.iter().enumerate() {
                p[idx] = if pos < floored { eps } else { z[idx] * scale };
            }
            return FlooredSimplexVector::new(p, eps);
        }
    }
    unreachable!("floor scan covers i = l - 1");
}

/// `sum_i p_i ln(p_i / y_i)` with the convention `0 ln 0 = 0`.
pub fn kl_divergence(p: &[f64], y: &[f64]) -> f64 {
    p.iter()
        .zip(y)
        .map(|(&pi, &yi)| if pi > 0.0 { pi * (pi / yi).ln() } else { 0.0 })
        .sum()
}

/// Entrywise matrix divergence `sum_ij X_ij ln(X_ij / Y_ij)`.
pub fn matrix_kl(x: &Matrix, y: &Matrix) -> f64 {
    x.iter()
        .zip(y.iter())
        .map(|(a, b)| if a > 0.0 { a * (a / b).ln() } else { 0.0 })
        .sum()
}

/// Minimum-cost perfect matching on a square cost matrix, O(dim^3) shortest
/// augmenting paths with dual labels. Deterministic scan order.
fn hungarian_min(cost: &Matrix) -> Vec<usize> {
    let dim = cost.rows();
    let mut c = cost.clone();
    for i in 0..dim {
        let m = c.row(i).iter().copied().fold(f64::INFINITY, f64::min);
        for v in c.row_mut(i) {
            *v -= m;
        }
    }
    for j in 0..dim {
        let m = (0..dim).map(|i| c[(i, j)]).fold(f64::INFINITY, f64::min);
        for i in 0..dim {
            c[(i, j)] -= m;
        }
    }

    let mut label_worker = vec![0.0; dim];
    let mut label_job: Vec<f64> = (0..dim)
        .map(|j| (0..dim).map(|i| c[(i, j)]).fold(f64::INFINITY, f64::min))
        .collect();
    let mut job_of_worker: Vec<Option<usize>> = vec![None; dim];
    let mut worker_of_job: Vec<Option<usize>> = vec![None; dim];
    for w in 0..dim {
        for j in 0..dim {
            if job_of_worker[w].is_none()
                && worker_of_job[j].is_none()
                && c[(w, j)] - label_worker[w] - label_job[j] == 0.0
            {
                job_of_worker[w] = Some(j);
                worker_of_job[j] = Some(w);
            }
        }
    }

    let mut committed = vec![false; dim];
    let mut parent: Vec<Option<usize>> = vec![None; dim];
    let mut slack_val = vec![0.0; dim];
    let mut slack_worker = vec![0usize; dim];
    while let Some(root) = (0..dim).find(|&w| job_of_worker[w].is_none()) {
        committed.fill(false);
        parent.fill(None);
        committed[root] = true;
        for j in 0..dim {
            slack_val[j] = c[(root, j)] - label_worker[root] - label_job[j];
            slack_worker[j] = root;
        }
        loop {
            let mut min_val = f64::INFINITY;
            let mut min_job = usize::MAX;
            for j in 0..dim {
                if parent[j].is_none() && slack_val[j] < min_val {
                    min_val = slack_val[j];
                    min_job = j;
                }
            }
            let j = min_job;
            if min_val > 0.0 {
                for w in 0..dim {
                    if committed[w] {
                        label_worker[w] += min_val;
                    }
                }
                for jj in 0..dim {
                    if parent[jj].is_some() {
                        label_job[jj] -= min_val;
                    } else {
                        slack_val[jj] -= min_val;
                    }
                }
            }
            parent[j] = Some(slack_worker[j]);
            match worker_of_job[j] {
                None => {
                    // Augment along the alternating path back to the root.
                    let mut job = j;
                    loop {
                        let w = parent[job].expect("committed job has a parent");
                        let next = job_of_worker[w];
                        job_of_worker[w] = Some(job);
                        worker_of_job[job] = Some(w);
                        match next {
                            Some(nj) => job = nj,
                            None => break,
                        }
                    }
                    break;
                }
                Some(w2) => {
                    committed[w2] = true;
                    for jj in 0..dim {
                        if parent[jj].is_none() {
                            let slack = c[(w2, jj)] - label_worker[w2] - label_job[jj];
                            if slack < slack_val[jj] {
                                slack_val[jj] = slack;
                                slack_worker[jj] = w2;
                            }
                        }
                    }
                }
            }
        }
    }
    job_of_worker.into_iter().map(|j| j.expect("perfect matching")).collect()
}

fn perm_value(w: &Matrix, perm: &[usize]) -> f64 {
    perm.iter().enumerate().map(|(i, &j)| w[(i, j)]).sum()
}

/// Maximum-weight completion of rows `start..s` over the unused columns, via
/// the Hungarian solver on the negated submatrix. Returns columns in row order.
fn complete_max(w: &Matrix, start: usize, used: &[bool]) -> Vec<usize> {
    let s = w.rows();
    let free_cols: Vec<usize> = (0..s).filter(|&j| !used[j]).collect();
    let k = s - start;
    debug_assert_eq!(free_cols.len(), k);
    if k == 0 {
        return Vec::new();
    }
    let mut sub = Matrix::zeros(k, k);
    for r in 0..k {
        for (cc, &j) in free_cols.iter().enumerate() {
            sub[(r, cc)] = -w[(start + r, j)];
        }
    }
    hungarian_min(&sub).into_iter().map(|cc| free_cols[cc]).collect()
}

/// Returns the permutation maximizing `sum_i W[i, sigma(i)]`; ties are broken
/// toward the lexicographically smallest permutation.
///
/// A Hungarian pass finds one maximizer; a refinement pass then walks the rows
/// in order and, for each, adopts the smallest column that still admits a
/// completion matching the optimal value (checked by solving the remaining
/// subproblem exactly, with a row-maxima bound to prune hopeless candidates).
pub fn max_weight_matching(w: &Matrix) -> Result<Vec<usize>, Error> {
    if !w.is_square() {
        return Err(Error::NotSquare { rows: w.rows(), cols: w.cols() });
    }
    let s = w.rows();
    for i in 0..s {
        for j in 0..s {
            if !w[(i, j)].is_finite() {
                return Err(Error::BadWeight { i, j, value: w[(i, j)] });
            }
        }
    }

    // Constant matrices tie everywhere; the identity is the lex-smallest.
    let first = w[(0, 0)];
    if w.iter().all(|v| v == first) {
        return Ok((0..s).collect());
    }

    let neg = {
        let mut m = w.clone();
        for i in 0..s {
            for v in m.row_mut(i) {
                *v = -*v;
            }
        }
        m
    };
    let mut cur = hungarian_min(&neg);
    let mut best = perm_value(w, &cur);
    let slack = 1e-9 * (1.0 + best.abs());

    let mut used = vec![false; s];
    let mut prefix = 0.0;
    for i in 0..s {
        for j in 0..cur[i] {
            if used[j] {
                continue;
            }
            // Row-maxima upper bound on any completion through (i, j).
            let mut bound = prefix + w[(i, j)];
            for r in i + 1..s {
                bound += (0..s)
                    .filter(|&jj| !used[jj] && jj != j)
                    .map(|jj| w[(r, jj)])
                    .fold(f64::NEG_INFINITY, f64::max);
            }
            if bound < best - slack {
                continue;
            }
            used[j] = true;
            let rest = complete_max(w, i + 1, &used);
            used[j] = false;
            let mut cand = cur[..i].to_vec();
            cand.push(j);
            cand.extend(rest);
            let v = perm_value(w, &cand);
            if v >= best {
                best = v;
                cur = cand;
                break;
            }
        }
        used[cur[i]] = true;
        prefix += w[(i, cur[i])];
    }
    Ok(cur)
}
