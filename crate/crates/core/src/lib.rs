//! Certified hitting-time computations for dice-sum processes.
//!
//! A fair `m`-sided die is rolled repeatedly and the running sum is tracked
//! until it first lands in a target set `A`. This crate computes exact
//! rational enclosures of the moments of that hitting time by backward
//! dynamic programming with a cutoff, together with the survival
//! probabilities that control the truncation error and the boundary
//! certificates that make the enclosures rigorous when `A` is the primes.
//!
//! Module map:
//!
//! * [`numerics`]: exact rationals, base-`m` fixed-denominator values, decimal rendering.
//! * [`targets`]: target-set oracles (primes, squares, Fibonacci, explicit files).
//! * [`engine`]: truncated moment DP, survival probabilities, moment enclosures.
//! * [`tailbound`]: landing probabilities and boundary certificates.
//! * [`oracle`]: independent ground truth (exact solver, path enumeration, Monte Carlo).
//! * [`cli`]: the `dicehit` command-line front end.

pub mod cli;
pub mod engine;
mod error;
pub mod exec;
pub mod numerics;
pub mod oracle;
pub mod tailbound;
pub mod targets;

pub use error::{Error, Result};
pub use exec::Exec;
pub use numerics::{BaseMAdic, Enclosure, ExactRational};
pub use targets::{ProcessSpec, TargetSet};
