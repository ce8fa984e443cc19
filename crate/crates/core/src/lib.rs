//! Scenario reduction for two-stage stochastic programs.
//!
//! The opportunity-cost matrix and discrepancy-minimizing partition live in
//! [`cssc`]; [`baselines`] holds the distribution-driven reductions and
//! [`evaluation`] measures the implementation error of any reduction.

pub mod baselines;
pub mod cssc;
pub mod evaluation;
pub mod lshaped;
pub mod model;
pub mod problems;
pub mod seed;
