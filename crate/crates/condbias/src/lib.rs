//! Simulation library for studying the sign of conditional versus marginal
//! bias of sample means, empirical CDFs and monotone functionals in
//! multi-armed bandit experiments.
//!
//! The crate has three layers:
//!
//! * a deterministic tabular reward model ([`tabular`]) plus a library of
//!   sampling / stopping / choosing rules ([`rules`]) and a trial executor
//!   ([`engine`]);
//! * a Monte Carlo bias lab ([`bias`]) that estimates marginal and
//!   conditional biases of the estimators in [`stats`] with standard errors
//!   and sign verdicts;
//! * an exhaustive small-instance oracle ([`oracle`]) that verifies the
//!   monotonicity properties that determine those signs, by enumerating
//!   every reward table over a finite support and replaying single-cell
//!   perturbations.
//!
//! [`config`] holds the named experiment presets and the JSON configuration
//! schema; [`report`] renders reports as CSV, JSON and SVG.
//!
//! Everything is a pure function of the configuration and a 64-bit seed:
//! rewards come from a counter-based hash, so reports are reproducible
//! across processes and worker counts.

pub mod bias;
pub mod config;
pub mod engine;
mod error;
pub mod exec;
pub mod oracle;
pub mod report;
pub mod rules;
pub mod stats;
pub mod tabular;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
