//! L-shaped branch-and-cut for two-stage programs with binary first stage
//! and an LP-representable recourse.
//!
//! The master holds the first-stage columns plus one epigraph variable per
//! scenario. Optimality cuts come from the recourse LP duals; when the true
//! (integer) recourse exceeds its LP value at a binary point, an integer
//! L-shaped cut closes the difference there.

use std::collections::{BinaryHeap, HashSet};
use std::time::Instant;

use cssc_solver::{solve_lp, LinearProgram, Sense, SolveStatus, SolverLimits, Var};
use rayon::prelude::*;

use crate::model::ModelError;

/// Value and subgradient of a scenario's recourse function at `x`.
#[derive(Debug, Clone)]
pub struct Recourse {
    pub value: f64,
    pub gradient: Vec<f64>,
}

pub trait RecourseOracle: Sync {
    fn first_stage_costs(&self) -> &[f64];

    /// Rows over the first-stage columns only.
    fn first_stage_rows(&self) -> Vec<(Vec<(usize, f64)>, Sense, f64)>;

    /// LP recourse value and a subgradient at a possibly fractional `x`.
    fn recourse(&self, x: &[f64], scenario: &[f64], limits: &SolverLimits) -> Result<Recourse, ModelError>;

    /// True recourse value at a binary `x`; defaults to the LP value.
    fn exact_recourse(&self, x: &[f64], scenario: &[f64], limits: &SolverLimits) -> Result<f64, ModelError> {
        Ok(self.recourse(x, scenario, limits)?.value)
    }

    /// Lower bound on the recourse of any scenario.
    fn recourse_floor(&self) -> f64 {
        0.0
    }

    /// Maps a fractional master point to a first-stage-feasible binary one.
    fn round(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(x.iter().map(|v| if *v >= 0.5 { 1.0 } else { 0.0 }).collect())
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub x: Vec<f64>,
    pub objective: f64,
    pub best_bound: f64,
    pub status: SolveStatus,
    pub degenerate: bool,
    pub nodes: usize,
    pub cuts: usize,
}

const CUT_TOL: f64 = 1e-7;
const MAX_AGE: usize = 5;
const MAX_ROUNDS: usize = 1000;

struct Cut {
    scenario: usize,
    terms: Vec<(usize, f64)>,
    rhs: f64,
    age: usize,
    active: bool,
}

impl Cut {
    /// `θ_k - Σ g_j x_j ≥ rhs` evaluated as `lhs - rhs`.
    fn slack(&self, x: &[f64], theta: &[f64]) -> f64 {
        theta[self.scenario] - self.terms.iter().map(|&(j, g)| g * x[j]).sum::<f64>() - self.rhs
    }
}

struct Node {
    bound: f64,
    id: usize,
    fixings: Vec<(usize, f64)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == std::cmp::Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other.bound.total_cmp(&self.bound).then_with(|| other.id.cmp(&self.id))
    }
}

struct Incumbent {
    x: Vec<f64>,
    value: f64,
    degenerate: bool,
}

enum NodeResult {
    Infeasible,
    Pruned,
    Solved { bound: f64, x: Vec<f64> },
    Limit(SolveStatus),
}

struct Search<'a, O: RecourseOracle> {
    oracle: &'a O,
    scenarios: &'a [&'a [f64]],
    weights: &'a [f64],
    limits: &'a SolverLimits,
    clock: Instant,
    cuts: Vec<Cut>,
    seen: HashSet<Vec<bool>>,
    incumbent: Option<Incumbent>,
    nodes: usize,
}

/// Minimizes `c·x + Σ_k w_k Q_k(x)` over binary `x`. With `root_only` the
/// root LP point is returned as is (possibly fractional) with its bound.
pub fn solve<O: RecourseOracle>(
    oracle: &O,
    scenarios: &[&[f64]],
    weights: &[f64],
    limits: &SolverLimits,
    root_only: bool,
) -> Result<Outcome, ModelError> {
    let mut search = Search {
        oracle,
        scenarios,
        weights,
        limits,
        clock: Instant::now(),
        cuts: Vec::new(),
        seen: HashSet::new(),
        incumbent: None,
        nodes: 0,
    };
    let n = oracle.first_stage_costs().len();

    let root = search.process(&[], f64::INFINITY)?;
    let (root_bound, root_x) = match root {
        NodeResult::Infeasible | NodeResult::Pruned => {
            return Err(ModelError::InvalidInstance("first-stage feasible set is empty".into()));
        }
        NodeResult::Limit(status) => return search.finish(status, f64::NEG_INFINITY),
        NodeResult::Solved { bound, x } => (bound, x),
    };
    if root_only {
        return Ok(Outcome {
            x: root_x,
            objective: root_bound,
            best_bound: root_bound,
            status: SolveStatus::Optimal,
            degenerate: false,
            nodes: search.nodes,
            cuts: search.cuts.len(),
        });
    }

    let mut heap = BinaryHeap::new();
    let mut next_id = 0usize;
    if let Some(j) = most_fractional(&root_x[..n], limits.integrality_tol) {
        heap.push((Node { bound: root_bound, id: next_id, fixings: Vec::new() }, j));
        next_id += 1;
    }

    while let Some((node, branch_on)) = heap.pop() {
        if search.closes(node.bound) {
            return search.finish(SolveStatus::Optimal, node.bound);
        }
        if search.nodes >= limits.max_nodes {
            return search.finish(SolveStatus::NodeLimit, node.bound);
        }
        if search.out_of_time() {
            return search.finish(SolveStatus::TimeLimit, node.bound);
        }
        for value in [0.0, 1.0] {
            let mut fixings = node.fixings.clone();
            fixings.push((branch_on, value));
            let cutoff = search.incumbent.as_ref().map_or(f64::INFINITY, |inc| inc.value);
            match search.process(&fixings, cutoff)? {
                NodeResult::Infeasible | NodeResult::Pruned => {}
                NodeResult::Limit(status) => {
                    let open = heap.peek().map_or(node.bound, |(n, _)| n.bound.min(node.bound));
                    return search.finish(status, open);
                }
                NodeResult::Solved { bound, x } => {
                    if search.closes(bound) {
                        continue;
                    }
                    if let Some(j) = most_fractional(&x[..n], limits.integrality_tol) {
                        heap.push((Node { bound, id: next_id, fixings }, j));
                        next_id += 1;
                    }
                }
            }
        }
    }
    let bound = search.incumbent.as_ref().map_or(f64::INFINITY, |inc| inc.value);
    search.finish(SolveStatus::Optimal, bound)
}

fn most_fractional(x: &[f64], tol: f64) -> Option<usize> {
    let mut best = None;
    let mut score = tol;
    for (j, v) in x.iter().enumerate() {
        let s = v.min(1.0 - v);
        if s > score {
            score = s;
            best = Some(j);
        }
    }
    best
}

impl<O: RecourseOracle> Search<'_, O> {
    fn out_of_time(&self) -> bool {
        self.limits.time_limit.is_some_and(|t| self.clock.elapsed() >= t)
    }

    fn closes(&self, bound: f64) -> bool {
        self.incumbent
            .as_ref()
            .is_some_and(|inc| (inc.value - bound) / inc.value.abs().max(1.0) <= self.limits.relative_gap)
    }

    fn finish(self, status: SolveStatus, bound: f64) -> Result<Outcome, ModelError> {
        let cuts = self.cuts.len();
        match self.incumbent {
            Some(inc) => Ok(Outcome {
                best_bound: bound.min(inc.value),
                objective: inc.value,
                x: inc.x,
                status,
                degenerate: inc.degenerate,
                nodes: self.nodes,
                cuts,
            }),
            None => Err(ModelError::Limit { status, context: "two-stage branch-and-cut found no incumbent".into() }),
        }
    }

    fn master(&self, fixings: &[(usize, f64)]) -> (LinearProgram, Vec<Var>) {
        let costs = self.oracle.first_stage_costs();
        let mut lp = LinearProgram::new();
        let xs: Vec<Var> = costs.iter().map(|&c| lp.add_var(c, 0.0, 1.0)).collect();
        for &(j, v) in fixings {
            lp.set_bounds(xs[j], v, v);
        }
        let floor = self.oracle.recourse_floor();
        let thetas: Vec<Var> = self.weights.iter().map(|&w| lp.add_var(w, floor, f64::INFINITY)).collect();
        for (terms, sense, rhs) in self.oracle.first_stage_rows() {
            let t: Vec<_> = terms.iter().map(|&(j, a)| (xs[j], a)).collect();
            lp.add_row(&t, sense, rhs);
        }
        for cut in self.cuts.iter().filter(|c| c.active) {
            let mut t: Vec<_> = cut.terms.iter().map(|&(j, g)| (xs[j], -g)).collect();
            t.push((thetas[cut.scenario], 1.0));
            lp.add_row(&t, Sense::Ge, cut.rhs);
        }
        (lp, thetas)
    }

    fn evaluate_all(&self, x: &[f64]) -> Result<Vec<Recourse>, ModelError> {
        self.scenarios.par_iter().map(|s| self.oracle.recourse(x, s, self.limits)).collect()
    }

    fn add_benders_cut(&mut self, k: usize, x: &[f64], r: &Recourse) {
        let terms: Vec<(usize, f64)> =
            r.gradient.iter().enumerate().filter(|(_, g)| **g != 0.0).map(|(j, &g)| (j, g)).collect();
        let rhs = r.value - terms.iter().map(|&(j, g)| g * x[j]).sum::<f64>();
        self.cuts.push(Cut { scenario: k, terms, rhs, age: 0, active: true });
    }

    /// `θ_k ≥ L + (Q - L)(Σ_{S} x_j - Σ_{not S} x_j - |S| + 1)` at binary `x`.
    fn add_integer_cut(&mut self, k: usize, x: &[f64], value: f64) {
        let floor = self.oracle.recourse_floor();
        let span = value - floor;
        let ones = x.iter().filter(|v| **v > 0.5).count() as f64;
        let terms = x.iter().enumerate().map(|(j, v)| (j, if *v > 0.5 { span } else { -span })).collect();
        let rhs = floor - span * (ones - 1.0);
        self.cuts.push(Cut { scenario: k, terms, rhs, age: 0, active: true });
    }

    /// Offers a binary point: evaluates every scenario exactly, records cuts
    /// and updates the incumbent.
    fn offer(&mut self, x: &[f64], degenerate: bool) -> Result<(), ModelError> {
        let key: Vec<bool> = x.iter().map(|v| *v > 0.5).collect();
        if !self.seen.insert(key) {
            return Ok(());
        }
        let lp = self.evaluate_all(x)?;
        let exact: Vec<f64> = self
            .scenarios
            .par_iter()
            .zip(&lp)
            .map(|(s, r)| {
                let e = self.oracle.exact_recourse(x, s, self.limits)?;
                Ok(e.max(r.value))
            })
            .collect::<Result<_, ModelError>>()?;
        let costs = self.oracle.first_stage_costs();
        let mut value: f64 = costs.iter().zip(x).map(|(c, v)| c * v).sum();
        for k in 0..self.scenarios.len() {
            value += self.weights[k] * exact[k];
            self.add_benders_cut(k, x, &lp[k]);
            if exact[k] > lp[k].value + CUT_TOL * exact[k].abs().max(1.0) {
                self.add_integer_cut(k, x, exact[k]);
            }
        }
        if self.incumbent.as_ref().is_none_or(|inc| value < inc.value - 1e-12) {
            self.incumbent = Some(Incumbent { x: x.to_vec(), value, degenerate });
        }
        Ok(())
    }

    fn is_feasible_first_stage(&self, x: &[f64]) -> bool {
        self.oracle.first_stage_rows().iter().all(|(terms, sense, rhs)| {
            let act: f64 = terms.iter().map(|&(j, a)| a * x[j]).sum();
            match sense {
                Sense::Le => act <= rhs + 1e-9,
                Sense::Ge => act >= rhs - 1e-9,
                Sense::Eq => (act - rhs).abs() <= 1e-9,
            }
        })
    }

    fn process(&mut self, fixings: &[(usize, f64)], cutoff: f64) -> Result<NodeResult, ModelError> {
        self.nodes += 1;
        let n = self.oracle.first_stage_costs().len();
        let mut rounds = 0;
        loop {
            if self.out_of_time() {
                return Ok(NodeResult::Limit(SolveStatus::TimeLimit));
            }
            let (lp, _) = self.master(fixings);
            let res = solve_lp(&lp, self.limits)?;
            match res.status {
                SolveStatus::Optimal => {}
                SolveStatus::Infeasible => return Ok(NodeResult::Infeasible),
                SolveStatus::Unbounded => {
                    return Err(ModelError::InvalidInstance("unbounded two-stage master".into()));
                }
                other => return Ok(NodeResult::Limit(other)),
            }
            if cutoff.is_finite() && (cutoff - res.objective) / cutoff.abs().max(1.0) <= self.limits.relative_gap {
                return Ok(NodeResult::Pruned);
            }
            let x = &res.x[..n];
            let theta = &res.x[n..];

            // Inactive pool cuts are cheap to check before any recourse solve.
            let mut revived = false;
            for cut in self.cuts.iter_mut().filter(|c| !c.active) {
                if cut.slack(x, theta) < -CUT_TOL * cut.rhs.abs().max(1.0) {
                    cut.active = true;
                    cut.age = 0;
                    revived = true;
                }
            }
            if revived {
                continue;
            }

            let integral = most_fractional(x, self.limits.integrality_tol).is_none();
            let x_owned: Vec<f64> = if integral { x.iter().map(|v| v.round()).collect() } else { x.to_vec() };
            let recourse = self.evaluate_all(&x_owned)?;
            let mut added = false;
            for (k, r) in recourse.iter().enumerate() {
                if r.value - theta[k] > CUT_TOL * r.value.abs().max(1.0) {
                    self.add_benders_cut(k, &x_owned, r);
                    added = true;
                }
            }
            if integral && !added {
                let exact_needed = self.offer_integral(&x_owned, &recourse, theta, res.degenerate)?;
                if exact_needed {
                    added = true;
                }
            }
            for cut in self.cuts.iter_mut().filter(|c| c.active) {
                if cut.slack(x, theta) > CUT_TOL * cut.rhs.abs().max(1.0) {
                    cut.age += 1;
                    if cut.age >= MAX_AGE {
                        cut.active = false;
                    }
                } else {
                    cut.age = 0;
                }
            }
            rounds += 1;
            if added && rounds < MAX_ROUNDS {
                continue;
            }
            if !integral {
                if let Some(r) = self.oracle.round(x) {
                    if self.is_feasible_first_stage(&r) {
                        self.offer(&r, false)?;
                    }
                }
            }
            return Ok(NodeResult::Solved { bound: res.objective, x: res.x[..n].to_vec() });
        }
    }

    /// At a binary master point whose LP cuts are all satisfied: compares the
    /// exact recourse with the LP one and records the incumbent. Returns true
    /// when integer cuts were added and the node must be resolved.
    fn offer_integral(
        &mut self,
        x: &[f64],
        lp: &[Recourse],
        theta: &[f64],
        degenerate: bool,
    ) -> Result<bool, ModelError> {
        let exact: Vec<f64> = self
            .scenarios
            .par_iter()
            .zip(lp)
            .map(|(s, r)| Ok(self.oracle.exact_recourse(x, s, self.limits)?.max(r.value)))
            .collect::<Result<_, ModelError>>()?;
        let costs = self.oracle.first_stage_costs();
        let mut value: f64 = costs.iter().zip(x).map(|(c, v)| c * v).sum();
        let mut added = false;
        for k in 0..exact.len() {
            value += self.weights[k] * exact[k];
            if exact[k] - theta[k] > CUT_TOL * exact[k].abs().max(1.0) {
                self.add_integer_cut(k, x, exact[k]);
                added = true;
            }
        }
        self.seen.insert(x.iter().map(|v| *v > 0.5).collect());
        if self.incumbent.as_ref().is_none_or(|inc| value < inc.value - 1e-12) {
            self.incumbent = Some(Incumbent { x: x.to_vec(), value, degenerate });
        }
        Ok(added)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Q(x, s) = s · max(0, 1 - x_0 - x_1): a demand of s units served by
    /// either of two facilities, otherwise outsourced at unit cost.
    struct Cover;

    impl RecourseOracle for Cover {
        fn first_stage_costs(&self) -> &[f64] {
            &[0.7, 0.9]
        }

        fn first_stage_rows(&self) -> Vec<(Vec<(usize, f64)>, Sense, f64)> {
            Vec::new()
        }

        fn recourse(&self, x: &[f64], s: &[f64], _: &SolverLimits) -> Result<Recourse, ModelError> {
            let gap = 1.0 - x[0] - x[1];
            if gap > 0.0 {
                Ok(Recourse { value: s[0] * gap, gradient: vec![-s[0], -s[0]] })
            } else {
                Ok(Recourse { value: 0.0, gradient: vec![0.0, 0.0] })
            }
        }
    }

    #[test]
    fn opens_cheapest_facility_when_demand_is_high() {
        let scen: Vec<&[f64]> = vec![&[2.0], &[0.0]];
        let out = solve(&Cover, &scen, &[0.5, 0.5], &SolverLimits::default(), false).unwrap();
        // Expected outsourcing 1.0 when closed versus 0.7 for opening facility 0.
        assert_eq!(out.x, vec![1.0, 0.0]);
        assert!((out.objective - 0.7).abs() < 1e-9);
        assert_eq!(out.status, SolveStatus::Optimal);
    }

    #[test]
    fn stays_closed_when_demand_is_low() {
        let scen: Vec<&[f64]> = vec![&[1.0], &[0.0]];
        let out = solve(&Cover, &scen, &[0.5, 0.5], &SolverLimits::default(), false).unwrap();
        assert_eq!(out.x, vec![0.0, 0.0]);
        assert!((out.objective - 0.5).abs() < 1e-9);
    }

    /// Exact recourse is the LP value rounded up, exercising integer cuts.
    struct Lumpy;

    impl RecourseOracle for Lumpy {
        fn first_stage_costs(&self) -> &[f64] {
            &[1.0, 1.0]
        }

        fn first_stage_rows(&self) -> Vec<(Vec<(usize, f64)>, Sense, f64)> {
            Vec::new()
        }

        fn recourse(&self, x: &[f64], s: &[f64], _: &SolverLimits) -> Result<Recourse, ModelError> {
            let v = s[0] * (2.0 - x[0] - 0.5 * x[1]);
            Ok(Recourse { value: v, gradient: vec![-s[0], -0.5 * s[0]] })
        }

        fn exact_recourse(&self, x: &[f64], s: &[f64], l: &SolverLimits) -> Result<f64, ModelError> {
            Ok(self.recourse(x, s, l)?.value.ceil())
        }
    }

    #[test]
    fn integer_cuts_reach_the_true_optimum() {
        let scen: Vec<&[f64]> = vec![&[1.5]];
        let out = solve(&Lumpy, &scen, &[1.0], &SolverLimits::default(), false).unwrap();
        let brute = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]
            .iter()
            .map(|x: &[f64; 2]| x[0] + x[1] + (1.5 * (2.0 - x[0] - 0.5 * x[1])).ceil())
            .fold(f64::INFINITY, f64::min);
        assert!((out.objective - brute).abs() < 1e-9, "{} vs {brute}", out.objective);
    }
}
