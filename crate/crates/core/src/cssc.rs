//! Cost-space scenario clustering.
//!
//! Step 1 solves every one-scenario subproblem and evaluates each solution
//! on every scenario, giving `V[i][j] = F(x_i*, ξ_j)`. Step 2 partitions the
//! scenarios into `K` clusters with one representative each so that
//!
//! ```text
//! Σ_k | Σ_{j ∈ C_k} w_j (V[r_k][r_k] − V[r_k][j]) |
//! ```
//!
//! is minimal, where `w_j` is the probability of scenario `j` (`1/N` for
//! equiprobable sets). The representatives, weighted by cluster mass, form
//! the reduced scenario set.

use std::time::Instant;

use cssc_solver::{solve_mip_with_start, MixedBinaryProgram, Sense, SolveStatus, SolverLimits, Var};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{
    solve_deterministic, status_serde, FirstStageSolution, ModelError, ReducedScenarioSet, ScenarioSet, SolveMode,
    TwoStageProblem,
};
use crate::seed::derive_seed;

/// Improvements smaller than this are treated as ties by the local search.
const IMPROVE_TOL: f64 = 1e-12;
/// Perturbation rounds per scenario in each local-search restart.
const KICKS_PER_SCENARIO: usize = 20;

/// The matrix `V[i][j] = F(x_i*, ξ_j)` with the data needed to audit it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpportunityCostMatrix {
    pub values: Vec<Vec<f64>>,
    /// Probability of each scenario (column weights of the discrepancy).
    pub weights: Vec<f64>,
    /// One-scenario solutions `x_i*`; empty for matrices built from raw values.
    pub solutions: Vec<FirstStageSolution>,
    pub mode: SolveMode,
    /// Wall-clock seconds per entry. The diagonal holds the one-scenario
    /// solve time, off-diagonal entries the evaluation time.
    pub seconds: Vec<Vec<f64>>,
}

/// Everything in an [`OpportunityCostMatrix`] except the values, persisted
/// next to the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixSidecar {
    pub mode: SolveMode,
    pub weights: Vec<f64>,
    pub solutions: Vec<FirstStageSolution>,
    pub seconds: Vec<Vec<f64>>,
    /// Rows whose one-scenario solve ended on a degenerate basis, i.e. whose
    /// `x_i*` may be one of several optima.
    pub degenerate_rows: Vec<usize>,
}

impl OpportunityCostMatrix {
    /// Wraps a raw square matrix with equiprobable columns.
    pub fn from_values(values: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        let n = values.len();
        let weights = vec![1.0 / n.max(1) as f64; n];
        Self::with_weights(values, weights)
    }

    pub fn with_weights(values: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self, ModelError> {
        let n = values.len();
        if n == 0 || values.iter().any(|r| r.len() != n) || weights.len() != n {
            return Err(ModelError::InvalidInstance("opportunity-cost matrix must be square and non-empty".into()));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidInstance("opportunity-cost matrix has non-finite entries".into()));
        }
        Ok(Self { values, weights, solutions: Vec::new(), mode: SolveMode::Exact, seconds: Vec::new() })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    /// `w_j (V[r][r] − V[r][j])`, the signed contribution of scenario `j`
    /// to a cluster represented by `r`.
    fn contribution(&self, r: usize, j: usize) -> f64 {
        self.weights[j] * (self.values[r][r] - self.values[r][j])
    }

    /// Pairs `(i, j)` with `V[i][i] > V[j][i] + tol`. Empty whenever every
    /// one-scenario solve was exact.
    pub fn diagonal_violations(&self, tol: f64) -> Vec<(usize, usize)> {
        let n = self.len();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if self.values[i][i] > self.values[j][i] + tol {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn degenerate_rows(&self) -> Vec<usize> {
        self.solutions.iter().enumerate().filter(|(_, s)| s.degenerate).map(|(i, _)| i).collect()
    }

    /// Row-major CSV without a header, every value printed so that it
    /// parses back to the same bits.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in &self.values {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Vec<Vec<f64>>, ModelError> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, line)| {
                line.split(',')
                    .map(|cell| {
                        cell.trim()
                            .parse::<f64>()
                            .map_err(|e| ModelError::InvalidInstance(format!("matrix row {i}: {e}")))
                    })
                    .collect()
            })
            .collect()
    }

    pub fn sidecar(&self) -> MatrixSidecar {
        MatrixSidecar {
            mode: self.mode,
            weights: self.weights.clone(),
            solutions: self.solutions.clone(),
            seconds: self.seconds.clone(),
            degenerate_rows: self.degenerate_rows(),
        }
    }

    pub fn from_parts(values: Vec<Vec<f64>>, sidecar: MatrixSidecar) -> Result<Self, ModelError> {
        let mut m = Self::with_weights(values, sidecar.weights)?;
        m.mode = sidecar.mode;
        m.solutions = sidecar.solutions;
        m.seconds = sidecar.seconds;
        Ok(m)
    }
}

fn subproblem(row: usize, col: usize) -> impl FnOnce(ModelError) -> ModelError {
    move |e| ModelError::Subproblem { row, col, source: Box::new(e) }
}

/// Step 1: `N` one-scenario solves, then `N² − N` second-stage evaluations,
/// both spread over the current rayon pool. The diagonal is the objective of
/// the one-scenario solve. Any solve that is not proven optimal aborts the
/// construction with its index.
pub fn build_matrix<P: TwoStageProblem + ?Sized>(
    problem: &P,
    mode: SolveMode,
    limits: &SolverLimits,
) -> Result<OpportunityCostMatrix, ModelError> {
    let set = problem.scenarios();
    let n = set.len();
    let solved: Vec<Result<(FirstStageSolution, f64), ModelError>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let clock = Instant::now();
            let sol = solve_deterministic(problem, i, mode, limits).map_err(subproblem(i, i))?;
            if !sol.is_proven_optimal() {
                let context = format!("one-scenario problem {i}");
                return Err(subproblem(i, i)(ModelError::Limit { status: sol.status, context }));
            }
            Ok((sol, clock.elapsed().as_secs_f64()))
        })
        .collect();
    let mut solutions = Vec::with_capacity(n);
    let mut solve_seconds = Vec::with_capacity(n);
    for r in solved {
        let (sol, secs) = r?;
        solutions.push(sol);
        solve_seconds.push(secs);
    }

    let entries: Vec<Result<(f64, f64), ModelError>> = (0..n * n)
        .into_par_iter()
        .map(|e| {
            let (i, j) = (e / n, e % n);
            if i == j {
                return Ok((solutions[i].objective, solve_seconds[i]));
            }
            let clock = Instant::now();
            let v = problem.evaluate(&solutions[i].x, set.scenario(j), limits).map_err(subproblem(i, j))?;
            Ok((v, clock.elapsed().as_secs_f64()))
        })
        .collect();
    let mut values = vec![vec![0.0; n]; n];
    let mut seconds = vec![vec![0.0; n]; n];
    for (e, r) in entries.into_iter().enumerate() {
        let (v, secs) = r?;
        values[e / n][e % n] = v;
        seconds[e / n][e % n] = secs;
    }
    let mut m = OpportunityCostMatrix::with_weights(values, set.probabilities().to_vec())?;
    m.mode = mode;
    m.solutions = solutions;
    m.seconds = seconds;
    Ok(m)
}

/// `K` clusters of scenario indices. Clusters are ordered by their smallest
/// member and list members in increasing order, so equal partitions compare
/// equal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub method: String,
    pub clusters: Vec<Vec<usize>>,
    /// Representative scenario of each cluster; `None` when the method
    /// represents the cluster by a synthetic point.
    pub representatives: Vec<Option<usize>>,
    pub probabilities: Vec<f64>,
    /// The method's own objective (clustering discrepancy for CSSC).
    pub objective: f64,
    #[serde(with = "status_serde")]
    pub status: SolveStatus,
}

impl Partition {
    /// Canonicalizes and validates. `weights` are the original scenario
    /// probabilities; `p_k` is the mass of cluster `k`.
    pub fn new(
        method: impl Into<String>,
        clusters: Vec<Vec<usize>>,
        representatives: Vec<Option<usize>>,
        weights: &[f64],
        objective: f64,
        status: SolveStatus,
    ) -> Result<Self, ModelError> {
        let n = weights.len();
        if clusters.len() != representatives.len() {
            return Err(ModelError::InvalidPartition("one representative per cluster is required".into()));
        }
        let mut seen = vec![false; n];
        for c in &clusters {
            if c.is_empty() {
                return Err(ModelError::InvalidPartition("empty cluster".into()));
            }
            for &i in c {
                if i >= n || std::mem::replace(&mut seen[i], true) {
                    return Err(ModelError::InvalidPartition(format!("scenario {i} missing from range or repeated")));
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(ModelError::InvalidPartition(format!("scenario {i} is not assigned")));
        }
        for (c, r) in clusters.iter().zip(&representatives) {
            if let Some(r) = r {
                if !c.contains(r) {
                    return Err(ModelError::InvalidPartition(format!("representative {r} outside its cluster")));
                }
            }
        }
        let mut pairs: Vec<(Vec<usize>, Option<usize>)> = clusters
            .into_iter()
            .map(|mut c| {
                c.sort_unstable();
                c
            })
            .zip(representatives)
            .collect();
        pairs.sort_by_key(|(c, _)| c[0]);
        let probabilities = pairs.iter().map(|(c, _)| c.iter().map(|&i| weights[i]).sum()).collect();
        let (clusters, representatives) = pairs.into_iter().unzip();
        Ok(Self { method: method.into(), clusters, representatives, probabilities, objective, status })
    }

    pub fn k(&self) -> usize {
        self.clusters.len()
    }

    pub fn n(&self) -> usize {
        self.clusters.iter().map(Vec::len).sum()
    }

    /// Cluster index of every scenario.
    pub fn membership(&self) -> Vec<usize> {
        let mut out = vec![0; self.n()];
        for (k, c) in self.clusters.iter().enumerate() {
            for &i in c {
                out[i] = k;
            }
        }
        out
    }

    pub fn is_proven_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// Representatives weighted by cluster mass. Fails for partitions with
    /// synthetic representatives.
    pub fn to_reduced(&self, source: &ScenarioSet) -> Result<ReducedScenarioSet, ModelError> {
        let reps: Option<Vec<usize>> = self.representatives.iter().copied().collect();
        let reps = reps.ok_or_else(|| ModelError::InvalidPartition("synthetic representatives".into()))?;
        ReducedScenarioSet::from_indices(self.method.clone(), source, &reps, self.probabilities.clone())
    }
}

/// `Σ_k |Σ_{j ∈ C_k} w_j (V[r_k][r_k] − V[r_k][j])|`; for equiprobable
/// scenarios this is `Σ_k p_k |V[r_k][r_k] − mean_{j ∈ C_k} V[r_k][j]|`.
pub fn discrepancy(matrix: &OpportunityCostMatrix, partition: &Partition) -> Result<f64, ModelError> {
    if partition.n() != matrix.len() {
        return Err(ModelError::InvalidPartition(format!(
            "partition covers {} scenarios, matrix has {}",
            partition.n(),
            matrix.len()
        )));
    }
    let mut total = 0.0;
    for (c, r) in partition.clusters.iter().zip(&partition.representatives) {
        let r = r.ok_or_else(|| ModelError::InvalidPartition("cluster without representative".into()))?;
        if !c.contains(&r) {
            return Err(ModelError::InvalidPartition(format!("representative {r} outside its cluster")));
        }
        total += c.iter().map(|&j| matrix.contribution(r, j)).sum::<f64>().abs();
    }
    Ok(total)
}

fn check_k(matrix: &OpportunityCostMatrix, k: usize) -> Result<(), ModelError> {
    if k == 0 || k > matrix.len() {
        return Err(ModelError::InvalidPartition(format!("K = {k} outside 1..={}", matrix.len())));
    }
    Ok(())
}

/// Variables of the partition program: `x[i][j] = 1` assigns scenario `i`
/// to representative `j`; the diagonal `x[j][j]` doubles as the
/// representative indicator `u_j`.
struct PartitionProgram {
    mip: MixedBinaryProgram,
    x: Vec<Vec<Var>>,
    t: Vec<Var>,
}

fn partition_program(matrix: &OpportunityCostMatrix, k: usize) -> PartitionProgram {
    let n = matrix.len();
    let mut mip = MixedBinaryProgram::new();
    let x: Vec<Vec<Var>> =
        (0..n).map(|i| (0..n).map(|j| mip.add_named_binary(format!("x_{i}_{j}"), 0.0)).collect()).collect();
    let t: Vec<Var> = (0..n).map(|j| mip.add_named_var(format!("t_{j}"), 1.0, 0.0, f64::INFINITY)).collect();
    for j in 0..n {
        let mut plus = vec![(t[j], 1.0)];
        let mut minus = vec![(t[j], 1.0)];
        for i in (0..n).filter(|&i| i != j) {
            let c = matrix.contribution(j, i);
            if c != 0.0 {
                plus.push((x[i][j], -c));
                minus.push((x[i][j], c));
            }
        }
        mip.add_row(&plus, Sense::Ge, 0.0);
        mip.add_row(&minus, Sense::Ge, 0.0);
    }
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            mip.add_row(&[(x[i][j], 1.0), (x[j][j], -1.0)], Sense::Le, 0.0);
        }
    }
    for row in &x {
        let terms: Vec<_> = row.iter().map(|&v| (v, 1.0)).collect();
        mip.add_row(&terms, Sense::Eq, 1.0);
    }
    let reps: Vec<_> = (0..n).map(|j| (x[j][j], 1.0)).collect();
    mip.add_row(&reps, Sense::Eq, k as f64);
    PartitionProgram { mip, x, t }
}

/// Exact Step 2 through the partition MIP, optionally warm-started from a
/// known partition. On a solver limit the best incumbent is returned with
/// the limit status.
pub fn partition_exact(
    matrix: &OpportunityCostMatrix,
    k: usize,
    limits: &SolverLimits,
    start: Option<&Partition>,
) -> Result<Partition, ModelError> {
    check_k(matrix, k)?;
    let n = matrix.len();
    let prog = partition_program(matrix, k);
    let start_x = start.filter(|p| p.k() == k && p.n() == n).map(|p| {
        let mut v = vec![0.0; prog.mip.lp.num_vars()];
        for (c, r) in p.clusters.iter().zip(&p.representatives) {
            let Some(r) = *r else { continue };
            for &i in c {
                v[prog.x[i][r].0] = 1.0;
            }
            v[prog.t[r].0] = c.iter().map(|&j| matrix.contribution(r, j)).sum::<f64>().abs();
        }
        v
    });
    let res = solve_mip_with_start(&prog.mip, limits, start_x.as_deref())?;
    if !res.has_solution() {
        return Err(ModelError::Limit { status: res.status, context: "partition program".into() });
    }
    let mut clusters = Vec::new();
    let mut reps = Vec::new();
    for j in 0..n {
        if res.x[prog.x[j][j].0] > 0.5 {
            clusters.push((0..n).filter(|&i| res.x[prog.x[i][j].0] > 0.5).collect::<Vec<_>>());
            reps.push(Some(j));
        }
    }
    let mut p = Partition::new("cssc", clusters, reps, &matrix.weights, 0.0, res.status)?;
    p.objective = discrepancy(matrix, &p)?;
    Ok(p)
}

/// Largest `N` accepted by [`partition_enumerate`].
pub const ENUMERATION_MAX_N: usize = 12;

/// Exhaustive Step 2 for small `N`: every set partition into `K` blocks
/// (restricted growth strings), each block taking its best representative.
/// Ties keep the first partition found.
pub fn partition_enumerate(matrix: &OpportunityCostMatrix, k: usize) -> Result<Partition, ModelError> {
    check_k(matrix, k)?;
    let n = matrix.len();
    if n > ENUMERATION_MAX_N {
        return Err(ModelError::InvalidPartition(format!("enumeration limited to N <= {ENUMERATION_MAX_N}")));
    }
    let block_best = |members: &[usize]| -> (f64, usize) {
        let mut best = (f64::INFINITY, members[0]);
        for &r in members {
            let v = members.iter().map(|&j| matrix.contribution(r, j)).sum::<f64>().abs();
            if v < best.0 {
                best = (v, r);
            }
        }
        best
    };
    let mut label = vec![0usize; n];
    let mut best: Option<(f64, Vec<usize>)> = None;
    // Depth-first over restricted growth strings with exactly k labels.
    fn walk(i: usize, used: usize, k: usize, label: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
        let n = label.len();
        if n - i < k - used {
            return;
        }
        if i == n {
            visit(label);
            return;
        }
        for l in 0..=used.min(k - 1) {
            label[i] = l;
            walk(i + 1, used.max(l + 1), k, label, visit);
        }
    }
    walk(0, 0, k, &mut label, &mut |lab: &[usize]| {
        let mut total = 0.0;
        for b in 0..k {
            let members: Vec<usize> = (0..n).filter(|&i| lab[i] == b).collect();
            total += block_best(&members).0;
        }
        if best.as_ref().is_none_or(|(v, _)| total < *v) {
            best = Some((total, lab.to_vec()));
        }
    });
    let (_, lab) = best.expect("K <= N admits a partition");
    let clusters: Vec<Vec<usize>> = (0..k).map(|b| (0..n).filter(|&i| lab[i] == b).collect()).collect();
    let reps = clusters.iter().map(|c| Some(block_best(c).1)).collect();
    let mut p = Partition::new("cssc", clusters, reps, &matrix.weights, 0.0, SolveStatus::Optimal)?;
    p.objective = discrepancy(matrix, &p)?;
    Ok(p)
}

/// Working state of the local search: one representative per cluster and
/// the signed cluster sums `S_k = Σ_{j ∈ C_k} w_j (V[r_k][r_k] − V[r_k][j])`.
#[derive(Clone)]
struct Search<'a> {
    m: &'a OpportunityCostMatrix,
    reps: Vec<usize>,
    members: Vec<Vec<usize>>,
    sums: Vec<f64>,
}

impl<'a> Search<'a> {
    /// Assigns every non-representative, in `order`, to the cluster whose
    /// `|S_k|` grows least.
    fn greedy(m: &'a OpportunityCostMatrix, reps: &[usize], order: &[usize]) -> Self {
        let mut s = Self {
            m,
            reps: reps.to_vec(),
            members: reps.iter().map(|&r| vec![r]).collect(),
            sums: vec![0.0; reps.len()],
        };
        for &i in order {
            if reps.contains(&i) {
                continue;
            }
            let mut best = (f64::INFINITY, 0);
            for (k, &r) in s.reps.iter().enumerate() {
                let c = m.contribution(r, i);
                let delta = (s.sums[k] + c).abs() - s.sums[k].abs();
                if delta < best.0 - IMPROVE_TOL {
                    best = (delta, k);
                }
            }
            let k = best.1;
            s.sums[k] += m.contribution(s.reps[k], i);
            s.members[k].push(i);
        }
        s
    }

    fn objective(&self) -> f64 {
        self.sums.iter().map(|v| v.abs()).sum()
    }

    fn cluster_sum(&self, r: usize, members: impl Iterator<Item = usize>) -> f64 {
        members.map(|j| self.m.contribution(r, j)).sum()
    }

    /// Applies the best improving move; `false` at a local optimum.
    fn improve(&mut self) -> bool {
        enum Move {
            Reassign { i: usize, from: usize, to: usize },
            Recenter { k: usize, r: usize },
            Replace { k: usize, from: usize, c: usize },
            Swap { i: usize, a: usize, j: usize, b: usize },
        }
        let kk = self.reps.len();
        let mut best: (f64, Option<Move>) = (-IMPROVE_TOL, None);
        for a in 0..kk {
            for &i in &self.members[a] {
                if i == self.reps[a] {
                    continue;
                }
                let leave = (self.sums[a] - self.m.contribution(self.reps[a], i)).abs() - self.sums[a].abs();
                for b in (0..kk).filter(|&b| b != a) {
                    let join = (self.sums[b] + self.m.contribution(self.reps[b], i)).abs() - self.sums[b].abs();
                    if leave + join < best.0 {
                        best = (leave + join, Some(Move::Reassign { i, from: a, to: b }));
                    }
                }
            }
        }
        for k in 0..kk {
            for &r in &self.members[k] {
                if r == self.reps[k] {
                    continue;
                }
                let delta = self.cluster_sum(r, self.members[k].iter().copied()).abs() - self.sums[k].abs();
                if delta < best.0 {
                    best = (delta, Some(Move::Recenter { k, r }));
                }
            }
        }
        for k in 0..kk {
            for l in (0..kk).filter(|&l| l != k) {
                for &c in &self.members[l] {
                    if c == self.reps[l] {
                        continue;
                    }
                    let grown = self.cluster_sum(c, self.members[k].iter().copied().chain([c])).abs();
                    let shrunk = (self.sums[l] - self.m.contribution(self.reps[l], c)).abs();
                    let delta = grown - self.sums[k].abs() + shrunk - self.sums[l].abs();
                    if delta < best.0 {
                        best = (delta, Some(Move::Replace { k, from: l, c }));
                    }
                }
            }
        }
        for a in 0..kk {
            for b in a + 1..kk {
                let (ra, rb) = (self.reps[a], self.reps[b]);
                for &i in self.members[a].iter().filter(|&&i| i != ra) {
                    for &j in self.members[b].iter().filter(|&&j| j != rb) {
                        let sa = self.sums[a] - self.m.contribution(ra, i) + self.m.contribution(ra, j);
                        let sb = self.sums[b] - self.m.contribution(rb, j) + self.m.contribution(rb, i);
                        let delta = sa.abs() + sb.abs() - self.sums[a].abs() - self.sums[b].abs();
                        if delta < best.0 {
                            best = (delta, Some(Move::Swap { i, a, j, b }));
                        }
                    }
                }
            }
        }
        let Some(mv) = best.1 else { return false };
        match mv {
            Move::Reassign { i, from, to } => {
                self.members[from].retain(|&j| j != i);
                self.members[to].push(i);
            }
            Move::Recenter { k, r } => self.reps[k] = r,
            Move::Replace { k, from, c } => {
                self.members[from].retain(|&j| j != c);
                self.members[k].push(c);
                self.reps[k] = c;
            }
            Move::Swap { i, a, j, b } => {
                self.members[a].retain(|&x| x != i);
                self.members[b].retain(|&x| x != j);
                self.members[a].push(j);
                self.members[b].push(i);
            }
        }
        for k in 0..kk {
            self.sums[k] = self.cluster_sum(self.reps[k], self.members[k].iter().copied());
        }
        true
    }

    /// Moves one to three random non-representatives to random other clusters, or
    /// recenters a random cluster when `K = 1`.
    fn kick(&mut self, rng: &mut ChaCha8Rng) {
        let kk = self.reps.len();
        for _ in 0..rng.random_range(1..=3) {
            let a = rng.random_range(0..kk);
            let movable: Vec<usize> = self.members[a].iter().copied().filter(|&i| i != self.reps[a]).collect();
            if movable.is_empty() {
                continue;
            }
            let i = movable[rng.random_range(0..movable.len())];
            if kk == 1 {
                self.reps[a] = i;
            } else {
                let b = (a + rng.random_range(1..kk)) % kk;
                self.members[a].retain(|&j| j != i);
                self.members[b].push(i);
            }
        }
        for k in 0..kk {
            self.sums[k] = self.cluster_sum(self.reps[k], self.members[k].iter().copied());
        }
    }

    fn into_partition(self, weights: &[f64]) -> Result<Partition, ModelError> {
        let objective = self.objective();
        let reps = self.reps.into_iter().map(Some).collect();
        Partition::new("cssc", self.members, reps, weights, objective, SolveStatus::IterationLimit)
    }
}

/// Multistart local search for Step 2. Each restart seeds representatives
/// greedily from a random first pick, assigns the rest greedily in random
/// order, then applies reassignment, swap, recentering and replacement moves
/// until none improves, and finally perturbs and re-descends a fixed number
/// of times, keeping the best. The result carries status `iteration-limit` since it is
/// never proven optimal.
pub fn partition_local_search(
    matrix: &OpportunityCostMatrix,
    k: usize,
    seed: u64,
    restarts: usize,
) -> Result<Partition, ModelError> {
    check_k(matrix, k)?;
    let n = matrix.len();
    let runs: Vec<Search> = (0..restarts.max(1))
        .into_par_iter()
        .map(|run| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "cssc-local-search", run as u64));
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let mut reps = vec![rng.random_range(0..n)];
            while reps.len() < k {
                let mut best: Option<(f64, usize)> = None;
                for c in (0..n).filter(|c| !reps.contains(c)) {
                    let mut trial = reps.clone();
                    trial.push(c);
                    let obj = Search::greedy(matrix, &trial, &order).objective();
                    if best.is_none_or(|(b, _)| obj < b - IMPROVE_TOL) {
                        best = Some((obj, c));
                    }
                }
                reps.push(best.expect("K <= N leaves a candidate").1);
            }
            let mut s = Search::greedy(matrix, &reps, &order);
            while s.improve() {}
            let mut best = s.clone();
            for _ in 0..KICKS_PER_SCENARIO * n {
                let mut trial = s.clone();
                trial.kick(&mut rng);
                while trial.improve() {}
                if trial.objective() <= s.objective() + IMPROVE_TOL {
                    s = trial;
                    if s.objective() < best.objective() - IMPROVE_TOL {
                        best = s.clone();
                    }
                }
            }
            best
        })
        .collect();
    let mut best = None;
    for s in runs {
        if best.as_ref().is_none_or(|b: &Search| s.objective() < b.objective() - IMPROVE_TOL) {
            best = Some(s);
        }
    }
    best.expect("at least one restart").into_partition(&matrix.weights)
}

/// How Step 2 is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartitionStrategy {
    Exact,
    LocalSearch,
    /// The MIP (warm-started by local search) up to `exact_max_n`
    /// scenarios, local search above.
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionConfig {
    pub strategy: PartitionStrategy,
    pub seed: u64,
    pub restarts: usize,
    pub exact_max_n: usize,
    /// Limits of the partition MIP. The default gap is tight enough for
    /// the decoded discrepancy to match enumeration to 1e-9.
    pub limits: SolverLimits,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            strategy: PartitionStrategy::Auto,
            seed: 0,
            restarts: 10,
            exact_max_n: 10,
            limits: SolverLimits { relative_gap: 1e-10, max_nodes: 20_000, ..SolverLimits::default() },
        }
    }
}

pub fn partition(matrix: &OpportunityCostMatrix, k: usize, config: &PartitionConfig) -> Result<Partition, ModelError> {
    let exact = match config.strategy {
        PartitionStrategy::Exact => true,
        PartitionStrategy::LocalSearch => false,
        PartitionStrategy::Auto => matrix.len() <= config.exact_max_n,
    };
    let heuristic = partition_local_search(matrix, k, config.seed, config.restarts)?;
    if !exact || heuristic.objective == 0.0 {
        return Ok(if exact { Partition { status: SolveStatus::Optimal, ..heuristic } } else { heuristic });
    }
    partition_exact(matrix, k, &config.limits, Some(&heuristic))
}

/// Artifacts of a CSSC reduction.
#[derive(Debug, Clone)]
pub struct CsscReduction {
    pub reduced: ReducedScenarioSet,
    pub partition: Partition,
    pub matrix: OpportunityCostMatrix,
}

/// Steps 1 and 2 end to end.
pub fn reduce_cssc<P: TwoStageProblem + ?Sized>(
    problem: &P,
    k: usize,
    mode: SolveMode,
    config: &PartitionConfig,
    limits: &SolverLimits,
) -> Result<CsscReduction, ModelError> {
    let matrix = build_matrix(problem, mode, limits)?;
    let (reduced, partition) = reduce_from_matrix(problem.scenarios(), &matrix, k, config)?;
    Ok(CsscReduction { reduced, partition, matrix })
}

/// Step 2 on an existing matrix, so one matrix can serve several `K`.
pub fn reduce_from_matrix(
    source: &ScenarioSet,
    matrix: &OpportunityCostMatrix,
    k: usize,
    config: &PartitionConfig,
) -> Result<(ReducedScenarioSet, Partition), ModelError> {
    if matrix.len() != source.len() {
        return Err(ModelError::InvalidInstance("matrix and scenario set sizes differ".into()));
    }
    let partition = partition(matrix, k, config)?;
    Ok((partition.to_reduced(source)?, partition))
}
