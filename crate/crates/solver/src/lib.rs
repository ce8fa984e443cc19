//! Small, deterministic LP and mixed-binary solver.
//!
//! [`solve_lp`] runs a bounded-variable revised simplex; [`solve_mip`]
//! wraps it in best-bound branch-and-bound over the binary columns of a
//! [`MixedBinaryProgram`]. Neither entry point keeps state between calls,
//! so independent solves can run on separate threads.

mod error;
mod mip;
mod program;
mod result;
mod simplex;

pub use error::SolverError;
pub use mip::{solve_mip, solve_mip_with_start};
pub use program::{LinearProgram, MixedBinaryProgram, Row, Sense, Var};
pub use result::{SolveResult, SolveStatus, SolverLimits};
pub use simplex::solve_lp;
