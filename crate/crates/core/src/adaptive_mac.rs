//! Bandit mirror-descent scheduler: alternating row/column multiplicative
//! updates on a padded assignment-probability matrix, Birkhoff rounding with
//! permutation sampling, and virtual queues that trade utility against
//! service through a per-slot auxiliary-rate subproblem. Includes the
//! single-channel specialization that keeps a plain probability vector.

use rand::Rng;

use crate::polytope::{
    self, bvn_decompose, kl_project, round_to_birkhoff, sample_permutation, StochKind,
    StochMatrix,
};
use crate::types::{Assignment, Feedback, Matrix};
use crate::utility::{self, UtilitySpec};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {what}")]
    BadParameter { what: String },
    #[error("decide and update must alternate; expected a call to {expected}")]
    OutOfPhase { expected: &'static str },
    #[error("feedback does not match the pending assignment")]
    FeedbackMismatch,
    #[error(transparent)]
    Polytope(#[from] polytope::Error),
    #[error(transparent)]
    Utility(#[from] utility::Error),
}

/// Tuning knobs of the mirror-descent scheduler: penalty weight `V`,
/// step size `eta`, and the simplex floor `eps` (strictly below `1/s`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaptiveParams {
    pub v: f64,
    pub eta: f64,
    pub eps: f64,
}

impl AdaptiveParams {
    /// Horizon-tuned schedule: `V = T^(1/3)`, `eta = 1/T`, and
    /// `eps = min(T^(-1/3), 0.9/s)` so the floored polytope keeps margin.
    pub fn for_horizon(horizon: u64, s: usize) -> Self {
        let t = horizon as f64;
        AdaptiveParams {
            v: t.cbrt(),
            eta: 1.0 / t,
            eps: (1.0 / t.cbrt()).min(0.9 / s as f64),
        }
    }

    fn validate(&self, s: usize) -> Result<(), Error> {
        if !(self.v.is_finite() && self.v > 0.0) {
            return Err(Error::BadParameter { what: format!("V = {}", self.v) });
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::BadParameter { what: format!("eta = {}", self.eta) });
        }
        if !(self.eps.is_finite() && self.eps > 0.0 && self.eps * (s as f64) < 1.0) {
            return Err(Error::BadParameter {
                what: format!("eps = {} must lie in (0, 1/{s})", self.eps),
            });
        }
        Ok(())
    }
}

/// Importance-weighted success estimator: `S_hat[(i,j)] = 1/P[(i,j)]` for an
/// assigned pair that succeeded, 0 elsewhere. Unbiased for the success matrix
/// because a pair is observed with probability exactly `P[(i,j)]`.
pub fn importance_estimate(
    feedback: &Feedback,
    assignment: &Assignment,
    p: &StochMatrix,
    n: usize,
    m: usize,
) -> Result<Matrix, Error> {
    if p.floor() <= 0.0 {
        return Err(Error::BadParameter {
            what: "importance weights need a positive probability floor".into(),
        });
    }
    check_feedback(feedback, assignment)?;
    let mut est = Matrix::zeros(n, m);
    for &(i, j, success) in feedback.results() {
        if i >= n || j >= m {
            return Err(Error::FeedbackMismatch);
        }
        if success {
            est[(i, j)] = 1.0 / p.entries()[(i, j)];
        }
    }
    Ok(est)
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

#[derive(Clone)]
struct Pending {
    p: StochMatrix,
    assignment: Assignment,
}

/// Multi-channel scheduler state. One slot is one `decide` (sample an
/// assignment) followed by one `update` (absorb the observed successes).
#[derive(Clone)]
pub struct AdaptiveMac {
    n: usize,
    m: usize,
    s: usize,
    utility: UtilitySpec,
    params: AdaptiveParams,
    t: u64,
    p_tilde: Matrix,
    p_kind: StochKind,
    queues: Vec<f64>,
    gamma: Vec<f64>,
    pending: Option<Pending>,
}

impl AdaptiveMac {
    /// Uniform matrix and zero queues; slot counter starts at 1.
    pub fn new(
        n: usize,
        m: usize,
        utility: UtilitySpec,
        params: AdaptiveParams,
    ) -> Result<Self, Error> {
        if n == 0 || m == 0 {
            return Err(Error::BadParameter { what: format!("dims ({n}, {m})") });
        }
        if utility.n() != n {
            return Err(Error::BadParameter {
                what: format!("utility is for {} users, scheduler has {n}", utility.n()),
            });
        }
        let s = n.max(m);
        params.validate(s)?;
        Ok(AdaptiveMac {
            n,
            m,
            s,
            utility,
            params,
            t: 1,
            p_tilde: Matrix::filled(s, s, 1.0 / s as f64),
            p_kind: StochKind::Doubly,
            queues: vec![0.0; n],
            gamma: vec![0.0; n],
            pending: None,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n, self.m, self.s)
    }

    /// Current slot index (starts at 1, advances on `update`).
    pub fn slot(&self) -> u64 {
        self.t
    }

    pub fn params(&self) -> &AdaptiveParams {
        &self.params
    }

    pub fn utility(&self) -> &UtilitySpec {
        &self.utility
    }

    pub fn queues(&self) -> &[f64] {
        &self.queues
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    /// The mirror point: row-stochastic after an odd-slot update,
    /// column-stochastic after an even-slot update.
    pub fn p_tilde(&self) -> &Matrix {
        &self.p_tilde
    }

    pub fn p_tilde_kind(&self) -> StochKind {
        self.p_kind
    }

    /// The rounded doubly stochastic matrix of the slot in flight, if any.
    pub fn pending_p(&self) -> Option<&StochMatrix> {
        self.pending.as_ref().map(|pending| &pending.p)
    }

    /// Rounds the mirror point, samples one permutation from its Birkhoff
    /// decomposition, and truncates it to real users and channels.
    pub fn decide<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Assignment, Error> {
        if self.pending.is_some() {
            return Err(Error::OutOfPhase { expected: "update" });
        }
        let mirror = StochMatrix::new(self.p_tilde.clone(), self.p_kind, self.params.eps)?;
        let p = round_to_birkhoff(&mirror)?;
        let decomposition = bvn_decompose(&p)?;
        let pick = sample_permutation(&decomposition, rng);
        let perm = &decomposition.permutations()[pick];
        let pairs: Vec<(usize, usize)> = perm
            .iter()
            .enumerate()
            .filter(|&(i, &j)| i < self.n && j < self.m)
            .map(|(i, &j)| (i, j))
            .collect();
        let assignment = Assignment::new(pairs);
        self.pending = Some(Pending { p, assignment: assignment.clone() });
        Ok(assignment)
    }

    /// Absorbs one slot of feedback: recomputes the auxiliary rates from the
    /// pre-update queues, re-projects every row (odd slots) or column (even
    /// slots) of the mirror point against the importance-weighted estimator,
    /// then applies the clamped queue recursion and advances the slot.
    pub fn update(&mut self, feedback: &Feedback) -> Result<(), Error> {
        let pending = self
            .pending
            .as_ref()
            .ok_or(Error::OutOfPhase { expected: "decide" })?;
        // Validate before consuming: rejected feedback leaves the slot open.
        let est = importance_estimate(feedback, &pending.assignment, &pending.p, self.n, self.m)?;
        self.pending = None;

        let gamma_next = self.utility.solve_gamma(&self.queues, self.params.v)?;

        // Padded gradient: x[(i, j)] = eta * Q_i * S_hat[(i, j)], zero for
        // virtual rows and columns. Queues here are the pre-update values.
        let weight = |i: usize, j: usize| -> f64 {
            if i < self.n && j < self.m {
                self.params.eta * self.queues[i] * est[(i, j)]
            } else {
                0.0
            }
        };
        let mut next = self.p_tilde.clone();
        if self.t % 2 == 1 {
            for i in 0..self.s {
                let x: Vec<f64> = (0..self.s).map(|j| weight(i, j)).collect();
                let row = kl_project(&x, self.p_tilde.row(i), self.params.eps)?;
                next.row_mut(i).copy_from_slice(row.values());
            }
            self.p_kind = StochKind::Row;
        } else {
            for j in 0..self.s {
                let x: Vec<f64> = (0..self.s).map(|i| weight(i, j)).collect();
                let col = kl_project(&x, &self.p_tilde.col_vec(j), self.params.eps)?;
                next.set_col(j, col.values());
            }
            self.p_kind = StochKind::Col;
        }
        self.p_tilde = next;

        let x = feedback.x_vector(self.n);
        for i in 0..self.n {
            self.queues[i] = (self.queues[i] + gamma_next[i] - x[i]).max(0.0);
        }
        self.gamma = gamma_next;
        self.t += 1;

        debug_assert!({
            let bound = self.utility.subgradient_bound() * self.params.v + 1.0;
            self.queues.iter().all(|&q| q <= bound)
        });
        Ok(())
    }
}

/// Single-channel scheduler: the mirror point is one probability vector over
/// users and every slot re-projects it, with the same auxiliary-rate and
/// queue recursions as the matrix version.
#[derive(Clone)]
pub struct SingleChannelMac {
    n: usize,
    utility: UtilitySpec,
    params: AdaptiveParams,
    t: u64,
    p: Vec<f64>,
    queues: Vec<f64>,
    gamma: Vec<f64>,
    pending: Option<Pending1>,
}

#[derive(Clone)]
struct Pending1 {
    user: usize,
    prob: f64,
}

impl SingleChannelMac {
    /// `m` is accepted for interface parity and must be 1.
    pub fn new(
        n: usize,
        m: usize,
        utility: UtilitySpec,
        params: AdaptiveParams,
    ) -> Result<Self, Error> {
        if m != 1 {
            return Err(Error::BadParameter {
                what: format!("single-channel scheduler requires m = 1, got {m}"),
            });
        }
        if n == 0 {
            return Err(Error::BadParameter { what: "n = 0".into() });
        }
        if utility.n() != n {
            return Err(Error::BadParameter {
                what: format!("utility is for {} users, scheduler has {n}", utility.n()),
            });
        }
        params.validate(n)?;
        Ok(SingleChannelMac {
            n,
            utility,
            params,
            t: 1,
            p: vec![1.0 / n as f64; n],
            queues: vec![0.0; n],
            gamma: vec![0.0; n],
            pending: None,
        })
    }

    pub fn slot(&self) -> u64 {
        self.t
    }

    pub fn queues(&self) -> &[f64] {
        &self.queues
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    /// Samples the transmitting user from the current vector; the assignment
    /// is that user on channel 0.
    pub fn decide<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Assignment, Error> {
        if self.pending.is_some() {
            return Err(Error::OutOfPhase { expected: "update" });
        }
        let draw: f64 = rng.random();
        let mut user = self.n - 1;
        let mut acc = 0.0;
        for (i, &pi) in self.p.iter().enumerate() {
            acc += pi;
            if draw < acc {
                user = i;
                break;
            }
        }
        self.pending = Some(Pending1 { user, prob: self.p[user] });
        Ok(Assignment::new(vec![(user, 0)]))
    }

    pub fn update(&mut self, feedback: &Feedback) -> Result<(), Error> {
        let pending = self
            .pending
            .as_ref()
            .ok_or(Error::OutOfPhase { expected: "decide" })?;
        let success = match feedback.results() {
            [(user, 0, success)] if *user == pending.user => *success,
            _ => return Err(Error::FeedbackMismatch),
        };
        let pending = self.pending.take().unwrap();

        let gamma_next = self.utility.solve_gamma(&self.queues, self.params.v)?;

        let mut x = vec![0.0; self.n];
        if success {
            x[pending.user] = self.params.eta * self.queues[pending.user] / pending.prob;
        }
        self.p = kl_project(&x, &self.p, self.params.eps)?.into_values();

        for i in 0..self.n {
            let served = if i == pending.user && success { 1.0 } else { 0.0 };
            self.queues[i] = (self.queues[i] + gamma_next[i] - served).max(0.0);
        }
        self.gamma = gamma_next;
        self.t += 1;

        debug_assert!({
            let bound = self.utility.subgradient_bound() * self.params.v + 1.0;
            self.queues.iter().all(|&q| q <= bound)
        });
        Ok(())
    }
}
