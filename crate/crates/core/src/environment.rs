//! Bernoulli link environment with piecewise-constant success probabilities,
//! per-run trace recording, and an exact-enumeration reference solver for the
//! best stationary randomized assignment and its utility value.

use itertools::Itertools;
use rand::Rng;

use crate::types::{Assignment, Feedback, Matrix};
use crate::utility::{self, UtilitySpec};

/// Factorial enumeration cap for the reference solver.
pub const MAX_ORACLE_SIZE: usize = 7;

/// User count cap imposed by the per-slot success bitmask.
pub const MAX_TRACE_USERS: usize = 64;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("schedule needs at least one segment")]
    EmptySchedule,
    #[error("segment {index} starts at {start}; expected {expected}")]
    BadSegmentStart { index: usize, start: u64, expected: String },
    #[error("horizon {horizon} does not cover the last segment start {start}")]
    BadHorizon { horizon: u64, start: u64 },
    #[error("segment {index} has dims ({rows}, {cols}), expected ({n}, {m})")]
    SegmentDims { index: usize, rows: usize, cols: usize, n: usize, m: usize },
    #[error("q[({i}, {j})] = {value} is outside [0, 1]")]
    BadProbability { i: usize, j: usize, value: f64 },
    #[error("slot {t} is outside the horizon [1, {horizon}]")]
    OutOfHorizon { t: u64, horizon: u64 },
    #[error("assignment pair ({i}, {j}) is outside the ({n}, {m}) grid")]
    PairOutOfRange { i: usize, j: usize, n: usize, m: usize },
    #[error("reference solver handles max(n, m) <= {MAX_ORACLE_SIZE}, got {s}")]
    TooLarge { s: usize },
    #[error("trace bitmask holds at most {MAX_TRACE_USERS} users, got {n}")]
    TooManyUsers { n: usize },
    #[error("record for slot {got} arrived; expected slot {expected}")]
    NonContiguousTrace { got: u64, expected: u64 },
    #[error(transparent)]
    Utility(#[from] utility::Error),
}

/// One constant-probability stretch of slots.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub start: u64,
    pub q: Matrix,
}

/// Piecewise-constant success probabilities covering slots `1..=horizon`.
/// Segment `k` is active from its start until the next segment's start.
#[derive(Clone, Debug, PartialEq)]
pub struct SuccessSchedule {
    segments: Vec<Segment>,
    horizon: u64,
    n: usize,
    m: usize,
}

impl SuccessSchedule {
    pub fn new(segments: Vec<Segment>, horizon: u64) -> Result<Self, Error> {
        let first = segments.first().ok_or(Error::EmptySchedule)?;
        let (n, m) = (first.q.rows(), first.q.cols());
        if first.start != 1 {
            return Err(Error::BadSegmentStart {
                index: 0,
                start: first.start,
                expected: "1".into(),
            });
        }
        let mut prev = 0u64;
        for (index, seg) in segments.iter().enumerate() {
            if seg.start <= prev {
                return Err(Error::BadSegmentStart {
                    index,
                    start: seg.start,
                    expected: format!("> {prev}"),
                });
            }
            prev = seg.start;
            if seg.q.rows() != n || seg.q.cols() != m {
                return Err(Error::SegmentDims {
                    index,
                    rows: seg.q.rows(),
                    cols: seg.q.cols(),
                    n,
                    m,
                });
            }
            for i in 0..n {
                for j in 0..m {
                    let value = seg.q[(i, j)];
                    if !(value.is_finite() && (0.0..=1.0).contains(&value)) {
                        return Err(Error::BadProbability { i, j, value });
                    }
                }
            }
        }
        if horizon < prev {
            return Err(Error::BadHorizon { horizon, start: prev });
        }
        Ok(SuccessSchedule { segments, horizon, n, m })
    }

    /// Single segment covering the whole horizon.
    pub fn constant(q: Matrix, horizon: u64) -> Result<Self, Error> {
        SuccessSchedule::new(vec![Segment { start: 1, q }], horizon)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n, self.m)
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment_index(&self, t: u64) -> usize {
        match self.segments.binary_search_by_key(&t, |seg| seg.start) {
            Ok(k) => k,
            Err(k) => k - 1,
        }
    }

    /// Active slot range of segment `k`: `(start, end)` inclusive.
    pub fn segment_bounds(&self, k: usize) -> (u64, u64) {
        let start = self.segments[k].start;
        let end = match self.segments.get(k + 1) {
            Some(next) => next.start - 1,
            None => self.horizon,
        };
        (start, end)
    }

    pub fn q_at(&self, t: u64) -> &Matrix {
        &self.segments[self.segment_index(t)].q
    }
}

/// Draws one slot of feedback: each assigned pair succeeds independently
/// with the active segment's probability, one uniform draw per pair in
/// user order. Unassigned pairs yield no observation.
pub fn draw_feedback<R: Rng + ?Sized>(
    schedule: &SuccessSchedule,
    t: u64,
    assignment: &Assignment,
    rng: &mut R,
) -> Result<Feedback, Error> {
    if t < 1 || t > schedule.horizon {
        return Err(Error::OutOfHorizon { t, horizon: schedule.horizon });
    }
    let q = schedule.q_at(t);
    let mut results = Vec::with_capacity(assignment.len());
    for &(i, j) in assignment.pairs() {
        if i >= schedule.n || j >= schedule.m {
            return Err(Error::PairOutOfRange { i, j, n: schedule.n, m: schedule.m });
        }
        let success = rng.random::<f64>() < q[(i, j)];
        results.push((i, j, success));
    }
    Ok(Feedback::new(results))
}

/// One slot's trace entry. Bit `i` of `x_mask` is user `i`'s success.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlotRecord {
    pub t: u64,
    pub x_mask: u64,
    pub assigned: u8,
    pub successes: u8,
    pub queue_max: f64,
}

impl SlotRecord {
    pub fn from_slot(t: u64, feedback: &Feedback, queue_max: f64) -> Self {
        let mut x_mask = 0u64;
        for &(i, _, success) in feedback.results() {
            if success {
                x_mask |= 1 << i;
            }
        }
        SlotRecord {
            t,
            x_mask,
            assigned: feedback.len() as u8,
            successes: feedback.successes() as u8,
            queue_max,
        }
    }
}

/// Complete per-slot history of one run, slot 1 through the horizon, plus
/// the segment starts active during it.
#[derive(Clone, Debug)]
pub struct RunTrace {
    n: usize,
    segment_starts: Vec<u64>,
    records: Vec<SlotRecord>,
}

impl RunTrace {
    pub fn new(n: usize, segment_starts: Vec<u64>) -> Result<Self, Error> {
        if n > MAX_TRACE_USERS {
            return Err(Error::TooManyUsers { n });
        }
        Ok(RunTrace { n, segment_starts, records: Vec::new() })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn segment_starts(&self) -> &[u64] {
        &self.segment_starts
    }

    pub fn records(&self) -> &[SlotRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Appends the next slot's record; slots must arrive as 1, 2, 3, ...
    pub fn push(&mut self, record: SlotRecord) -> Result<(), Error> {
        let expected = self.records.len() as u64 + 1;
        if record.t != expected {
            return Err(Error::NonContiguousTrace { got: record.t, expected });
        }
        self.records.push(record);
        Ok(())
    }

    /// Decodes record `idx`'s success indicators as a 0/1 vector.
    pub fn x_at(&self, idx: usize) -> Vec<f64> {
        let mask = self.records[idx].x_mask;
        (0..self.n).map(|i| ((mask >> i) & 1) as f64).collect()
    }
}

/// The utility of the running average success rate at every slot. With
/// `segment_reset` the average restarts at each segment boundary, matching
/// how a piecewise-stationary run is scored per segment.
pub fn running_utility(
    trace: &RunTrace,
    spec: &UtilitySpec,
    segment_reset: bool,
) -> Result<Vec<f64>, Error> {
    let mut series = Vec::with_capacity(trace.len());
    let mut counts = vec![0.0; trace.n()];
    let mut base = 0u64;
    let mut next_boundary = 0usize;
    for record in trace.records() {
        if segment_reset {
            while next_boundary < trace.segment_starts.len()
                && trace.segment_starts[next_boundary] <= record.t
            {
                if trace.segment_starts[next_boundary] == record.t {
                    counts.iter_mut().for_each(|c| *c = 0.0);
                    base = record.t - 1;
                }
                next_boundary += 1;
            }
        }
        for i in 0..trace.n() {
            counts[i] += ((record.x_mask >> i) & 1) as f64;
        }
        let span = (record.t - base) as f64;
        let avg: Vec<f64> = counts.iter().map(|&c| c / span).collect();
        series.push(spec.eval_phi(&avg)?);
    }
    Ok(series)
}

/// Best stationary randomized assignment for a fixed success matrix.
#[derive(Clone, Debug)]
pub struct P2Solution {
    /// Optimal utility of the achievable long-run success rates.
    pub phi_star: f64,
    /// Optimal doubly stochastic assignment matrix, padded to s x s.
    pub p_star: Matrix,
    /// The achieved per-user rates, clipped to the unit box.
    pub gamma_star: Vec<f64>,
}

/// Maximizes `phi` over mixtures of the s! permutation assignments by
/// projected subgradient ascent on the mixture weights, with every vertex
/// evaluated exactly first and the best iterate kept.
pub fn solve_p2_reference(q: &Matrix, spec: &UtilitySpec) -> Result<P2Solution, Error> {
    let (n, m) = (q.rows(), q.cols());
    let s = n.max(m);
    if s > MAX_ORACLE_SIZE {
        return Err(Error::TooLarge { s });
    }
    if spec.n() != n {
        return Err(Error::Utility(utility::Error::DimensionMismatch {
            expected: n,
            got: spec.n(),
        }));
    }
    for i in 0..n {
        for j in 0..m {
            let value = q[(i, j)];
            if !(value.is_finite() && (0.0..=1.0).contains(&value)) {
                return Err(Error::BadProbability { i, j, value });
            }
        }
    }

    // Per-permutation rate vectors: r[k][i] = q[(i, perm_k(i))], zero when
    // the permutation sends user i to a virtual channel.
    let perms: Vec<Vec<usize>> = (0..s).permutations(s).collect();
    let rates: Vec<Vec<f64>> = perms
        .iter()
        .map(|perm| {
            (0..n)
                .map(|i| if perm[i] < m { q[(i, perm[i])] } else { 0.0 })
                .collect()
        })
        .collect();
    let count = perms.len();

    let gamma_of = |w: &[f64]| -> Vec<f64> {
        let mut gamma = vec![0.0; n];
        for (wk, rk) in w.iter().zip(&rates) {
            if *wk > 0.0 {
                for i in 0..n {
                    gamma[i] += wk * rk[i];
                }
            }
        }
        gamma
    };

    let mut best_w = vec![1.0 / count as f64; count];
    let mut best_value = spec.eval_phi(&gamma_of(&best_w))?;

    // Vertex pre-scan: every pure permutation, evaluated exactly. Utilities
    // maximized at a vertex then come back without ascent error.
    for k in 0..count {
        let value = spec.eval_phi(&rates[k])?;
        if value > best_value {
            best_value = value;
            best_w = {
                let mut w = vec![0.0; count];
                w[k] = 1.0;
                w
            };
        }
    }

    let mut w = best_w.clone();
    let step0 = 0.5;
    for iter in 1..=20_000u32 {
        let gamma = gamma_of(&w);
        let grad_phi = spec.subgradient(&gamma);
        let grad_w: Vec<f64> = rates
            .iter()
            .map(|rk| rk.iter().zip(&grad_phi).map(|(r, g)| r * g).sum())
            .collect();
        let step = step0 / (iter as f64).sqrt();
        for (wk, gk) in w.iter_mut().zip(&grad_w) {
            *wk += step * gk;
        }
        project_to_simplex(&mut w);
        let value = spec.eval_phi(&gamma_of(&w))?;
        if value > best_value {
            best_value = value;
            best_w = w.clone();
        }
    }

    let mut p_star = Matrix::zeros(s, s);
    for (wk, perm) in best_w.iter().zip(&perms) {
        if *wk > 0.0 {
            for (i, &j) in perm.iter().enumerate() {
                p_star[(i, j)] += wk;
            }
        }
    }
    let gamma_star: Vec<f64> =
        gamma_of(&best_w).into_iter().map(|g| g.clamp(0.0, 1.0)).collect();
    let phi_star = spec.eval_phi(&gamma_star)?;
    Ok(P2Solution { phi_star, p_star, gamma_star })
}

/// Euclidean projection onto the probability simplex (sort-based).
fn project_to_simplex(v: &mut [f64]) {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - 1.0) / (k + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    for value in v.iter_mut() {
        *value = (*value - theta).max(0.0);
    }
}
