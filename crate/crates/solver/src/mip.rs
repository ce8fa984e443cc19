//! Best-bound branch-and-bound over binary columns.
//!
//! Children are solved eagerly and queued by their LP bound; ties go to the
//! node created first. Branching picks the most fractional binary, lowest
//! column index on ties, and explores the 0-branch before the 1-branch.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use crate::error::SolverError;
use crate::program::MixedBinaryProgram;
use crate::result::{SolveResult, SolveStatus, SolverLimits};
use crate::simplex::solve_lp;

struct Node {
    bound: f64,
    id: usize,
    fixings: Vec<(usize, f64)>,
    branch_on: usize,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // BinaryHeap is a max-heap: the "largest" node is the one with the
    // smallest bound, then the smallest id.
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then_with(|| other.id.cmp(&self.id))
    }
}

struct Incumbent {
    x: Vec<f64>,
    value: f64,
    degenerate: bool,
}

pub fn solve_mip(mip: &MixedBinaryProgram, limits: &SolverLimits) -> Result<SolveResult, SolverError> {
    solve_mip_with_start(mip, limits, None)
}

/// Like [`solve_mip`], seeded with a known solution. A start that violates
/// a row, a bound or integrality is ignored.
pub fn solve_mip_with_start(
    mip: &MixedBinaryProgram,
    limits: &SolverLimits,
    start: Option<&[f64]>,
) -> Result<SolveResult, SolverError> {
    mip.validate()?;
    let clock = Instant::now();
    let binaries: Vec<usize> = mip.binaries().map(|v| v.0).collect();
    let mut search = Search { mip, limits, binaries, work: mip.lp.clone(), nodes: 0, iterations: 0 };

    let mut incumbent = start.and_then(|x| search.accept_start(x));

    let root = search.solve_node(&[], clock)?;
    let mut heap = BinaryHeap::new();
    let mut next_id = 0usize;
    match root {
        NodeOutcome::Infeasible => return Ok(search.finish(incumbent, SolveStatus::Infeasible, f64::INFINITY)),
        NodeOutcome::Unbounded => {
            let mut res = SolveResult::without_solution(SolveStatus::Unbounded);
            res.objective = f64::NEG_INFINITY;
            res.nodes = search.nodes;
            return Ok(res);
        }
        NodeOutcome::Limit(status) => return Ok(search.finish(incumbent, status, f64::NEG_INFINITY)),
        NodeOutcome::Solved { bound, x, degenerate } => match search.most_fractional(&x) {
            None => search.offer(&mut incumbent, x, degenerate),
            Some(branch_on) => {
                heap.push(Node { bound, id: next_id, fixings: Vec::new(), branch_on });
                next_id += 1;
            }
        },
    }

    while let Some(node) = heap.pop() {
        if let Some(inc) = &incumbent {
            let gap = (inc.value - node.bound) / inc.value.abs().max(1.0);
            if gap <= limits.relative_gap {
                return Ok(search.finish(incumbent, SolveStatus::Optimal, node.bound));
            }
        }
        let limit = if search.nodes >= limits.max_nodes {
            Some(SolveStatus::NodeLimit)
        } else if limits.time_limit.is_some_and(|t| clock.elapsed() >= t) {
            Some(SolveStatus::TimeLimit)
        } else {
            None
        };
        if let Some(status) = limit {
            let bound = node.bound;
            return Ok(search.finish(incumbent, status, bound));
        }

        for value in [0.0, 1.0] {
            let mut fixings = node.fixings.clone();
            fixings.push((node.branch_on, value));
            match search.solve_node(&fixings, clock)? {
                NodeOutcome::Infeasible => {}
                NodeOutcome::Unbounded => {
                    return Err(SolverError::Numerical("unbounded child of a bounded node".into()));
                }
                NodeOutcome::Limit(status) => {
                    let bound = heap.peek().map_or(node.bound, |n| n.bound.min(node.bound));
                    return Ok(search.finish(incumbent, status, bound));
                }
                NodeOutcome::Solved { bound, x, degenerate } => {
                    if let Some(inc) = &incumbent {
                        if (inc.value - bound) / inc.value.abs().max(1.0) <= limits.relative_gap {
                            continue;
                        }
                    }
                    match search.most_fractional(&x) {
                        None => search.offer(&mut incumbent, x, degenerate),
                        Some(branch_on) => {
                            heap.push(Node { bound, id: next_id, fixings, branch_on });
                            next_id += 1;
                        }
                    }
                }
            }
        }
    }
    let bound = incumbent.as_ref().map_or(f64::INFINITY, |inc| inc.value);
    let status = if incumbent.is_some() { SolveStatus::Optimal } else { SolveStatus::Infeasible };
    Ok(search.finish(incumbent, status, bound))
}

enum NodeOutcome {
    Solved { bound: f64, x: Vec<f64>, degenerate: bool },
    Infeasible,
    Unbounded,
    Limit(SolveStatus),
}

struct Search<'a> {
    mip: &'a MixedBinaryProgram,
    limits: &'a SolverLimits,
    binaries: Vec<usize>,
    work: crate::program::LinearProgram,
    nodes: usize,
    iterations: usize,
}

impl Search<'_> {
    fn solve_node(&mut self, fixings: &[(usize, f64)], clock: Instant) -> Result<NodeOutcome, SolverError> {
        self.work.lower.clone_from(&self.mip.lp.lower);
        self.work.upper.clone_from(&self.mip.lp.upper);
        for &(j, v) in fixings {
            self.work.lower[j] = v;
            self.work.upper[j] = v;
        }
        let mut lp_limits = self.limits.clone();
        if let Some(t) = self.limits.time_limit {
            lp_limits.time_limit = Some(t.saturating_sub(clock.elapsed()));
        }
        let res = solve_lp(&self.work, &lp_limits)?;
        self.nodes += 1;
        self.iterations += res.iterations;
        Ok(match res.status {
            SolveStatus::Optimal => NodeOutcome::Solved { bound: res.objective, x: res.x, degenerate: res.degenerate },
            SolveStatus::Infeasible => NodeOutcome::Infeasible,
            SolveStatus::Unbounded => NodeOutcome::Unbounded,
            other => NodeOutcome::Limit(other),
        })
    }

    fn most_fractional(&self, x: &[f64]) -> Option<usize> {
        let mut best = None;
        let mut best_score = self.limits.integrality_tol;
        for &j in &self.binaries {
            let score = x[j].min(1.0 - x[j]);
            if score > best_score {
                best_score = score;
                best = Some(j);
            }
        }
        best
    }

    fn snap(&self, mut x: Vec<f64>) -> Vec<f64> {
        for &j in &self.binaries {
            x[j] = x[j].round();
        }
        x
    }

    fn offer(&self, incumbent: &mut Option<Incumbent>, x: Vec<f64>, degenerate: bool) {
        let x = self.snap(x);
        let value = self.mip.lp.objective_at(&x);
        if incumbent.as_ref().is_none_or(|inc| value < inc.value) {
            *incumbent = Some(Incumbent { x, value, degenerate });
        }
    }

    fn accept_start(&self, x: &[f64]) -> Option<Incumbent> {
        if x.len() != self.mip.lp.num_vars() {
            return None;
        }
        let integral = self.binaries.iter().all(|&j| (x[j] - x[j].round()).abs() <= self.limits.integrality_tol);
        let x = self.snap(x.to_vec());
        if !integral || self.mip.lp.max_violation(&x) > 1e-6 {
            return None;
        }
        let value = self.mip.lp.objective_at(&x);
        Some(Incumbent { x, value, degenerate: false })
    }

    fn finish(&self, incumbent: Option<Incumbent>, status: SolveStatus, bound: f64) -> SolveResult {
        let mut res = match incumbent {
            Some(inc) => SolveResult {
                status,
                best_bound: bound.min(inc.value),
                x: inc.x,
                objective: inc.value,
                duals: Vec::new(),
                reduced_costs: Vec::new(),
                iterations: 0,
                nodes: 0,
                degenerate: inc.degenerate,
            },
            None => {
                let mut res = SolveResult::without_solution(status);
                res.best_bound = bound;
                res
            }
        };
        if res.status == SolveStatus::Optimal && !res.has_solution() {
            res.status = SolveStatus::Infeasible;
        }
        res.iterations = self.iterations;
        res.nodes = self.nodes;
        res
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::Sense;

    #[test]
    fn two_item_knapsack() {
        let mut mip = MixedBinaryProgram::new();
        let a = mip.add_binary(-2.0);
        let b = mip.add_binary(-3.0);
        mip.add_row(&[(a, 1.0), (b, 1.0)], Sense::Le, 1.0);
        let res = solve_mip(&mip, &SolverLimits::default()).unwrap();
        assert_eq!(res.status, SolveStatus::Optimal);
        assert_eq!(res.x, vec![0.0, 1.0]);
        assert_eq!(res.objective, -3.0);
    }

    #[test]
    fn branching_is_needed_for_fractional_root() {
        // max 5a + 4b + 3c s.t. 2a + 3b + c <= 5, 4a + b + 2c <= 11, 3a + 4b + 2c <= 8
        let mut mip = MixedBinaryProgram::new();
        let v: Vec<_> = [-5.0, -4.0, -3.0].iter().map(|&c| mip.add_binary(c)).collect();
        mip.add_row(&[(v[0], 2.0), (v[1], 3.0), (v[2], 1.0)], Sense::Le, 5.0);
        mip.add_row(&[(v[0], 4.0), (v[1], 1.0), (v[2], 2.0)], Sense::Le, 11.0);
        mip.add_row(&[(v[0], 3.0), (v[1], 4.0), (v[2], 2.0)], Sense::Le, 5.5);
        let res = solve_mip(&mip, &SolverLimits::default()).unwrap();
        assert_eq!(res.status, SolveStatus::Optimal);
        assert_eq!(res.objective, -8.0);
        assert!(res.best_bound <= res.objective);
    }

    #[test]
    fn integer_infeasible_program() {
        let mut mip = MixedBinaryProgram::new();
        let a = mip.add_binary(1.0);
        let b = mip.add_binary(1.0);
        mip.add_row(&[(a, 2.0), (b, 2.0)], Sense::Eq, 1.0);
        let res = solve_mip(&mip, &SolverLimits::default()).unwrap();
        assert_eq!(res.status, SolveStatus::Infeasible);
        assert!(!res.has_solution());
    }

    #[test]
    fn node_limit_keeps_start_incumbent() {
        let mut mip = MixedBinaryProgram::new();
        let v: Vec<_> = (0..6).map(|k| mip.add_binary(-(k as f64) - 1.5)).collect();
        let terms: Vec<_> = v.iter().enumerate().map(|(k, &x)| (x, 2.0 + k as f64)).collect();
        mip.add_row(&terms, Sense::Le, 9.5);
        let start = vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let limits = SolverLimits::default().with_max_nodes(1);
        let res = solve_mip_with_start(&mip, &limits, Some(&start)).unwrap();
        assert_eq!(res.status, SolveStatus::NodeLimit);
        assert_eq!(res.x, start);
        assert!(res.relative_gap() > 0.0);
        assert!(res.best_bound <= res.objective);
    }
}
