//! Optimistic max-weight scheduler: per-pair success counts and means, a
//! Hoeffding confidence bonus, and a queue-weighted maximum matching each
//! slot. A deterministic cyclic prologue observes every user-channel pair
//! exactly once before the indices take over; after that the scheduler is
//! fully deterministic given the feedback sequence.

use crate::polytope::{self, max_weight_matching};
use crate::types::{Assignment, Feedback, Matrix};
use crate::utility::{self, UtilitySpec};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {what}")]
    BadParameter { what: String },
    #[error("slot {t} is outside the exploration prologue [1, {s}]")]
    OutsidePrologue { t: u64, s: usize },
    #[error("pair ({i}, {j}) has no observations; the index needs a count >= 1")]
    ZeroCount { i: usize, j: usize },
    #[error("decide and update must alternate; expected a call to {expected}")]
    OutOfPhase { expected: &'static str },
    #[error("feedback does not match the pending assignment")]
    FeedbackMismatch,
    #[error(transparent)]
    Polytope(#[from] polytope::Error),
    #[error(transparent)]
    Utility(#[from] utility::Error),
}

/// Confidence-parameter sequence for the index bonus.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DeltaSchedule {
    /// `delta_t = 1/t`.
    Reciprocal,
    /// A fixed `delta` in (0, 1].
    Constant(f64),
}

impl DeltaSchedule {
    pub fn value(&self, t: u64) -> f64 {
        match self {
            DeltaSchedule::Reciprocal => 1.0 / t as f64,
            DeltaSchedule::Constant(c) => *c,
        }
    }
}

/// Penalty weight and confidence schedule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UcbParams {
    pub v: f64,
    pub delta: DeltaSchedule,
}

impl UcbParams {
    /// Horizon-tuned default: `V = sqrt(T)` with `delta_t = 1/t`.
    pub fn for_horizon(horizon: u64) -> Self {
        UcbParams { v: (horizon as f64).sqrt(), delta: DeltaSchedule::Reciprocal }
    }

    fn validate(&self) -> Result<(), Error> {
        if !(self.v.is_finite() && self.v > 0.0) {
            return Err(Error::BadParameter { what: format!("V = {}", self.v) });
        }
        if let DeltaSchedule::Constant(c) = self.delta {
            if !(c.is_finite() && c > 0.0 && c <= 1.0) {
                return Err(Error::BadParameter {
                    what: format!("constant delta = {c} must lie in (0, 1]"),
                });
            }
        }
        Ok(())
    }
}

/// Per-pair observation counts and empirical success means. Means of
/// never-observed pairs read 0.
#[derive(Clone, Debug, PartialEq)]
pub struct UcbStats {
    n: usize,
    m: usize,
    counts: Vec<u64>,
    means: Vec<f64>,
}

impl UcbStats {
    pub fn new(n: usize, m: usize) -> Self {
        UcbStats { n, m, counts: vec![0; n * m], means: vec![0.0; n * m] }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n, self.m)
    }

    pub fn count(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.m + j]
    }

    pub fn mean(&self, i: usize, j: usize) -> f64 {
        self.means[i * self.m + j]
    }

    pub fn record(&mut self, i: usize, j: usize, success: bool) {
        let k = i * self.m + j;
        self.counts[k] += 1;
        let x = if success { 1.0 } else { 0.0 };
        self.means[k] += (x - self.means[k]) / self.counts[k] as f64;
    }

    pub fn total_count(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Hoeffding bonus `sqrt(ln(c(c+1)/delta) / (2c))` for a pair observed
/// `count` times. Requires `count >= 1` and `delta in (0, 1]`.
pub fn confidence_radius(count: u64, delta: f64) -> f64 {
    let c = count as f64;
    ((c * (c + 1.0) / delta).ln() / (2.0 * c)).sqrt()
}

/// Entrywise optimistic index: empirical mean plus confidence bonus.
pub fn ucb_index(stats: &UcbStats, delta: f64) -> Result<Matrix, Error> {
    if !(delta.is_finite() && delta > 0.0 && delta <= 1.0) {
        return Err(Error::BadParameter { what: format!("delta = {delta}") });
    }
    let (n, m) = stats.dims();
    let mut index = Matrix::zeros(n, m);
    for i in 0..n {
        for j in 0..m {
            let count = stats.count(i, j);
            if count == 0 {
                return Err(Error::ZeroCount { i, j });
            }
            index[(i, j)] = stats.mean(i, j) + confidence_radius(count, delta);
        }
    }
    Ok(index)
}

/// Slot `t` of the cyclic exploration prologue: channel `j` goes to user
/// `(t - 1 + j) mod s` (0-based), skipped when that index is virtual. Over
/// `t in [1, s]` every real pair is visited exactly once.
pub fn exploration_assignment(t: u64, n: usize, m: usize) -> Result<Assignment, Error> {
    let s = n.max(m);
    if t < 1 || t > s as u64 {
        return Err(Error::OutsidePrologue { t, s });
    }
    let offset = (t - 1) as usize;
    let pairs: Vec<(usize, usize)> = (0..m)
        .filter_map(|j| {
            let user = (offset + j) % s;
            (user < n).then_some((user, j))
        })
        .collect();
    Ok(Assignment::new(pairs))
}

/// Optimistic max-weight scheduler state. Queues stay frozen at zero during
/// the prologue and follow the clamped recursion afterwards.
#[derive(Clone)]
pub struct UcbMac {
    n: usize,
    m: usize,
    s: usize,
    utility: UtilitySpec,
    params: UcbParams,
    t: u64,
    stats: UcbStats,
    queues: Vec<f64>,
    gamma: Vec<f64>,
    pending: Option<Assignment>,
}

impl UcbMac {
    pub fn new(
        n: usize,
        m: usize,
        utility: UtilitySpec,
        params: UcbParams,
    ) -> Result<Self, Error> {
        if n == 0 || m == 0 {
            return Err(Error::BadParameter { what: format!("dims ({n}, {m})") });
        }
        if utility.n() != n {
            return Err(Error::BadParameter {
                what: format!("utility is for {} users, scheduler has {n}", utility.n()),
            });
        }
        params.validate()?;
        Ok(UcbMac {
            n,
            m,
            s: n.max(m),
            utility,
            params,
            t: 1,
            stats: UcbStats::new(n, m),
            queues: vec![0.0; n],
            gamma: vec![0.0; n],
            pending: None,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n, self.m, self.s)
    }

    pub fn slot(&self) -> u64 {
        self.t
    }

    pub fn in_prologue(&self) -> bool {
        self.t <= self.s as u64
    }

    pub fn params(&self) -> &UcbParams {
        &self.params
    }

    pub fn utility(&self) -> &UtilitySpec {
        &self.utility
    }

    pub fn stats(&self) -> &UcbStats {
        &self.stats
    }

    pub fn queues(&self) -> &[f64] {
        &self.queues
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    /// Prologue slots replay the fixed exploration schedule. Afterwards the
    /// slot's auxiliary rates are solved from the current queues, and the
    /// assignment is the exact maximum-weight matching of the queue-scaled
    /// optimistic indices (padded to s x s, truncated back to real pairs).
    pub fn decide(&mut self) -> Result<Assignment, Error> {
        if self.pending.is_some() {
            return Err(Error::OutOfPhase { expected: "update" });
        }
        let assignment = if self.in_prologue() {
            exploration_assignment(self.t, self.n, self.m)?
        } else {
            self.gamma = self.utility.solve_gamma(&self.queues, self.params.v)?;
            let delta = self.params.delta.value(self.t - 1);
            let index = ucb_index(&self.stats, delta)?;
            let mut weights = Matrix::zeros(self.s, self.s);
            for i in 0..self.n {
                for j in 0..self.m {
                    weights[(i, j)] = self.queues[i] * index[(i, j)];
                }
            }
            let perm = max_weight_matching(&weights)?;
            let pairs: Vec<(usize, usize)> = perm
                .iter()
                .enumerate()
                .filter(|&(i, &j)| i < self.n && j < self.m)
                .map(|(i, &j)| (i, j))
                .collect();
            Assignment::new(pairs)
        };
        self.pending = Some(assignment.clone());
        Ok(assignment)
    }

    /// Records every observation into the pair statistics; outside the
    /// prologue also applies the clamped queue recursion with the auxiliary
    /// rates fixed at decide time.
    pub fn update(&mut self, feedback: &Feedback) -> Result<(), Error> {
        let assignment = self
            .pending
            .as_ref()
            .ok_or(Error::OutOfPhase { expected: "decide" })?;
        check_feedback(feedback, assignment)?;
        if feedback.results().iter().any(|&(i, j, _)| i >= self.n || j >= self.m) {
            return Err(Error::FeedbackMismatch);
        }
        self.pending = None;
        for &(i, j, success) in feedback.results() {
            self.stats.record(i, j, success);
        }

        if !self.in_prologue() {
            let x = feedback.x_vector(self.n);
            for i in 0..self.n {
                self.queues[i] = (self.queues[i] + self.gamma[i] - x[i]).max(0.0);
            }
            debug_assert!({
                let bound = self.utility.subgradient_bound() * self.params.v + 1.0;
                self.queues.iter().all(|&q| q <= bound)
            });
        }
        self.t += 1;
        Ok(())
    }
}

fn check_feedback(feedback: &Feedback, assignment: &Assignment) -> Result<(), Error> {
    if feedback.len() != assignment.len() {
        return Err(Error::FeedbackMismatch);
    }
    for &(i, j, _) in feedback.results() {
        if assignment.channel_of(i) != Some(j) {
            return Err(Error::FeedbackMismatch);
        }
    }
    Ok(())
}
