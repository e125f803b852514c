//! Concave entrywise-nondecreasing utility functions and the exact
//! minimizer of `-V phi(gamma) + <Q, gamma>` over the unit box that the
//! drift-plus-penalty schedulers call every slot.

use std::fmt;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("expected a length-{expected} vector, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {what}")]
    BadParameter { what: String },
    #[error("coordinate {i} = {value} must be finite and nonnegative")]
    BadValue { i: usize, value: f64 },
}

/// Utility function family. All members are concave and entrywise
/// nondecreasing on the unit box with a finite subgradient bound.
#[derive(Clone, Debug, PartialEq)]
pub enum UtilityKind {
    /// `sum_i ln(1 + beta x_i)` (proportional fairness for beta = 1).
    LogProp { beta: f64 },
    /// `min_i x_i` (max-min fairness).
    Min,
    /// `w1 min_i x_i + w2 sum_i ln(1 + beta x_i)`.
    WeightedCombo { w1: f64, w2: f64, beta: f64 },
    /// `sum_i w_i x_i`.
    WeightedLinear { weights: Vec<f64> },
}

impl fmt::Display for UtilityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UtilityKind::LogProp { beta } => write!(f, "log_prop({beta})"),
            UtilityKind::Min => write!(f, "min"),
            UtilityKind::WeightedCombo { w1, w2, beta } => {
                write!(f, "weighted_combo({w1}, {w2}, {beta})")
            }
            UtilityKind::WeightedLinear { weights } => {
                write!(f, "weighted_linear(")?;
                for (i, w) in weights.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{w}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// A utility kind bound to a user count.
#[derive(Clone, Debug, PartialEq)]
pub struct UtilitySpec {
    kind: UtilityKind,
    n: usize,
}

impl UtilitySpec {
    pub fn new(kind: UtilityKind, n: usize) -> Result<Self, Error> {
        if n == 0 {
            return Err(Error::BadParameter { what: "user count must be positive".into() });
        }
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        match &kind {
            UtilityKind::LogProp { beta } => {
                if !ok(*beta) {
                    return Err(Error::BadParameter { what: format!("beta = {beta}") });
                }
            }
            UtilityKind::Min => {}
            UtilityKind::WeightedCombo { w1, w2, beta } => {
                if !ok(*w1) || !ok(*w2) || !ok(*beta) {
                    return Err(Error::BadParameter {
                        what: format!("weighted_combo({w1}, {w2}, {beta})"),
                    });
                }
            }
            UtilityKind::WeightedLinear { weights } => {
                if weights.len() != n {
                    return Err(Error::DimensionMismatch { expected: n, got: weights.len() });
                }
                if !weights.iter().all(|&w| ok(w)) {
                    return Err(Error::BadParameter { what: "linear weights".into() });
                }
            }
        }
        Ok(UtilitySpec { kind, n })
    }

    pub fn kind(&self) -> &UtilityKind {
        &self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Evaluates `phi(x)`. Entries are clamped to `[0, 1]`; time-averaged
    /// success rates can overshoot 1 by rounding noise.
    pub fn eval_phi(&self, x: &[f64]) -> Result<f64, Error> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: x.len() });
        }
        let c = |v: f64| v.clamp(0.0, 1.0);
        let value = match &self.kind {
            UtilityKind::LogProp { beta } => {
                x.iter().map(|&v| (1.0 + beta * c(v)).ln()).sum()
            }
            UtilityKind::Min => x.iter().map(|&v| c(v)).fold(f64::INFINITY, f64::min),
            UtilityKind::WeightedCombo { w1, w2, beta } => {
                let mn = x.iter().map(|&v| c(v)).fold(f64::INFINITY, f64::min);
                let lg: f64 = x.iter().map(|&v| (1.0 + beta * c(v)).ln()).sum();
                w1 * mn + w2 * lg
            }
            UtilityKind::WeightedLinear { weights } => {
                x.iter().zip(weights).map(|(&v, &w)| w * c(v)).sum()
            }
        };
        Ok(value)
    }

    /// A bound `B` on the entrywise subgradients of `phi` over the unit box.
    pub fn subgradient_bound(&self) -> f64 {
        match &self.kind {
            UtilityKind::LogProp { beta } => *beta,
            UtilityKind::Min => 1.0,
            UtilityKind::WeightedCombo { w1, w2, beta } => w1 + w2 * beta,
            UtilityKind::WeightedLinear { weights } => {
                weights.iter().copied().fold(0.0, f64::max)
            }
        }
    }

    /// One subgradient of `phi` at `x` (entries clamped to the unit box).
    /// For the min terms the lowest coordinate (first on ties) is charged.
    pub(crate) fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        let c = |v: f64| v.clamp(0.0, 1.0);
        let argmin = |xs: &[f64]| {
            let mut best = 0usize;
            for (i, &v) in xs.iter().enumerate() {
                if c(v) < c(xs[best]) {
                    best = i;
                }
            }
            best
        };
        match &self.kind {
            UtilityKind::LogProp { beta } => {
                x.iter().map(|&v| beta / (1.0 + beta * c(v))).collect()
            }
            UtilityKind::Min => {
                let mut g = vec![0.0; self.n];
                g[argmin(x)] = 1.0;
                g
            }
            UtilityKind::WeightedCombo { w1, w2, beta } => {
                let mut g: Vec<f64> =
                    x.iter().map(|&v| w2 * beta / (1.0 + beta * c(v))).collect();
                g[argmin(x)] += w1;
                g
            }
            UtilityKind::WeightedLinear { weights } => weights.clone(),
        }
    }

    /// Exact minimizer of `-V phi(gamma) + sum_i Q_i gamma_i` over `[0,1]^n`.
    ///
    /// Separable kinds solve coordinatewise in closed form. The min term is
    /// handled through the common floor level: for pure min the floor is 1
    /// when `sum(Q) <= V` and 0 otherwise; for the combined kind the convex
    /// floor objective is minimized by golden-section with the endpoints
    /// {0, 1} checked exactly and preferred on ties.
    ///
    /// Whatever the kind, any coordinate with `Q_k > B V` comes back exactly
    /// 0: the closed forms put its stationary point below zero, and forcing
    /// the exact zero keeps the deterministic queue bound an exact invariant
    /// under floating-point rounding (objective cost is below 1e-14).
    pub fn solve_gamma(&self, q: &[f64], v: f64) -> Result<Vec<f64>, Error> {
        if q.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: q.len() });
        }
        for (i, &qi) in q.iter().enumerate() {
            if !qi.is_finite() || qi < 0.0 {
                return Err(Error::BadValue { i, value: qi });
            }
        }
        if !v.is_finite() || v <= 0.0 {
            return Err(Error::BadParameter { what: format!("V = {v}") });
        }

        let mut gamma = match &self.kind {
            UtilityKind::LogProp { beta } => solve_separable_log(q, v, 1.0, *beta),
            UtilityKind::Min => {
                let z = common_min_level(q, v);
                vec![z; self.n]
            }
            UtilityKind::WeightedCombo { w1, w2, beta } => {
                if *w1 == 0.0 {
                    solve_separable_log(q, v, *w2, *beta)
                } else if *w2 == 0.0 || *beta == 0.0 {
                    let z = common_min_level(q, v * w1);
                    vec![z; self.n]
                } else {
                    solve_combo(q, v, *w1, *w2, *beta)
                }
            }
            UtilityKind::WeightedLinear { weights } => q
                .iter()
                .zip(weights)
                .map(|(&qi, &wi)| if v * wi >= qi { 1.0 } else { 0.0 })
                .collect(),
        };

        let bv = self.subgradient_bound() * v;
        for (g, &qi) in gamma.iter_mut().zip(q) {
            if qi > bv {
                *g = 0.0;
            }
        }
        Ok(gamma)
    }
}

/// Coordinatewise minimizer for `-V w2 ln(1 + beta g) + Q g`: the stationary
/// point `V w2 / Q - 1/beta` clamped to the box, with flat coordinates
/// (`Q = 0`, or `phi` constant) resolved upward to 1.
fn solve_separable_log(q: &[f64], v: f64, w2: f64, beta: f64) -> Vec<f64> {
    q.iter()
        .map(|&qi| {
            if w2 == 0.0 || beta == 0.0 {
                if qi == 0.0 {
                    1.0
                } else {
                    0.0
                }
            } else if qi == 0.0 {
                1.0
            } else {
                (v * w2 / qi - 1.0 / beta).clamp(0.0, 1.0)
            }
        })
        .collect()
}

/// Optimal common level for `-V z + sum_i Q_i z` over `z in [0,1]`.
fn common_min_level(q: &[f64], v: f64) -> f64 {
    let total: f64 = q.iter().sum();
    if total <= v {
        1.0
    } else {
        0.0
    }
}

/// Floor-level solve for `w1 min + w2 log` with all parameters positive.
/// `G(z) = -V w1 z + sum_i min_{g in [z,1]} h_i(g)` is convex in `z`.
fn solve_combo(q: &[f64], v: f64, w1: f64, w2: f64, beta: f64) -> Vec<f64> {
    // Unconstrained stationary points of h_i(g) = -V w2 ln(1 + beta g) + Q_i g.
    let hats: Vec<f64> = q
        .iter()
        .map(|&qi| if qi == 0.0 { f64::INFINITY } else { v * w2 / qi - 1.0 / beta })
        .collect();
    let h = |i: usize, g: f64| -v * w2 * (1.0 + beta * g).ln() + q[i] * g;
    let objective = |z: f64| -> f64 {
        let mut total = -v * w1 * z;
        for (i, &hat) in hats.iter().enumerate() {
            total += h(i, hat.clamp(z, 1.0));
        }
        total
    };

    let mut a = 0.0;
    let mut b = 1.0;
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let mut fc = objective(c);
    let mut fd = objective(d);
    for _ in 0..90 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = objective(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = objective(d);
        }
    }
    let interior = 0.5 * (a + b);

    // Prefer the exact endpoints on ties so vertex optima come back exact.
    let mut z_star = 0.0;
    let mut best = objective(0.0);
    for cand in [1.0, interior] {
        let val = objective(cand);
        if val < best {
            best = val;
            z_star = cand;
        }
    }

    hats.iter().map(|&hat| hat.clamp(z_star, 1.0)).collect()
}
