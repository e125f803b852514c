//! Experiment front end: config parsing, orchestration, CSV output, and
//! shipped change-point scenarios.

pub mod config;
pub mod csv;
pub mod runner;
pub mod scenarios;
