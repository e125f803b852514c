//! Fair multi-channel multiple-access scheduling under bandit feedback:
//! doubly stochastic rounding and decomposition primitives, two online
//! schedulers (mirror descent and optimistic max-weight), a Bernoulli link
//! environment with change points, and an exact reference solver for the
//! best stationary assignment.

pub mod adaptive_mac;
pub mod environment;
pub mod polytope;
pub mod types;
pub mod ucb_mac;
pub mod utility;

pub use types::{Assignment, Feedback, Matrix};
