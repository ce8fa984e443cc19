//! Bounded-variable revised primal simplex with an explicit dense basis
//! inverse.
//!
//! Every row gets a slack column (`a'x + s = b`, with the slack's bounds
//! encoding the row sense); rows whose slack cannot absorb the initial
//! residual get an artificial column and phase 1 drives those to zero.
//! Pricing is Dantzig's rule until a run of degenerate pivots is seen, at
//! which point Bland's rule takes over until the objective moves again.

use std::time::Instant;

use crate::error::SolverError;
use crate::program::{LinearProgram, Sense};
use crate::result::{SolveResult, SolveStatus, SolverLimits};

const PIVOT_TOL: f64 = 1e-9;
const DEGENERATE_GAIN: f64 = 1e-11;
const STALL_THRESHOLD: usize = 50;
const REFACTOR_INTERVAL: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Basic,
    Lower,
    Upper,
    /// Nonbasic free column parked at zero.
    Zero,
}

enum Outcome {
    Optimal,
    Unbounded,
    Limit(SolveStatus),
}

struct Simplex<'a> {
    lp: &'a LinearProgram,
    m: usize,
    n: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    art_row: Vec<usize>,
    art_sign: Vec<f64>,
    state: Vec<State>,
    x: Vec<f64>,
    basis: Vec<usize>,
    binv: Vec<f64>,
    iterations: usize,
    since_refactor: usize,
    feas_tol: f64,
    opt_tol: f64,
}

/// Solves `lp` to optimality or until a limit is hit.
///
/// The result carries row duals `y` and reduced costs `c - A'y` from the
/// final basis, so `b'y + sum(bound * reduced cost)` reproduces the
/// objective at optimality.
pub fn solve_lp(lp: &LinearProgram, limits: &SolverLimits) -> Result<SolveResult, SolverError> {
    lp.validate()?;
    let start = Instant::now();
    let phase2: Vec<f64> = lp.cost.iter().copied().chain(std::iter::repeat_n(0.0, lp.num_rows())).collect();

    if let Some(mut dual) = Simplex::dual_start(lp, limits) {
        match dual.dual_iterate(&phase2, limits, start)? {
            DualOutcome::Feasible => return dual.finish(&phase2, limits, start),
            DualOutcome::Infeasible => {
                let mut res = SolveResult::without_solution(SolveStatus::Infeasible);
                res.iterations = dual.iterations;
                return Ok(res);
            }
            DualOutcome::Limit(status) => return Ok(dual.limit_result(status)),
            DualOutcome::Stalled => {}
        }
    }

    let mut simplex = Simplex::new(lp, limits);
    if !simplex.art_row.is_empty() {
        let phase1: Vec<f64> =
            (0..simplex.total()).map(|j| if j >= simplex.n + simplex.m { 1.0 } else { 0.0 }).collect();
        match simplex.iterate(&phase1, limits, start)? {
            Outcome::Optimal => {}
            Outcome::Unbounded => return Err(SolverError::Numerical("phase 1 reported unbounded".into())),
            Outcome::Limit(status) => return Ok(simplex.limit_result(status)),
        }
        let infeasibility: f64 = (simplex.n + simplex.m..simplex.total()).map(|j| simplex.x[j].max(0.0)).sum();
        let scale = lp.rhs.iter().fold(1.0_f64, |acc, b| acc.max(b.abs()));
        if infeasibility > 1e-6 * scale {
            let mut res = SolveResult::without_solution(SolveStatus::Infeasible);
            res.iterations = simplex.iterations;
            return Ok(res);
        }
        for j in simplex.n + simplex.m..simplex.total() {
            simplex.lower[j] = 0.0;
            simplex.upper[j] = 0.0;
            if simplex.state[j] != State::Basic {
                simplex.state[j] = State::Lower;
                simplex.x[j] = 0.0;
            }
        }
    }
    let phase2: Vec<f64> = (0..simplex.total()).map(|j| if j < simplex.n { lp.cost[j] } else { 0.0 }).collect();
    simplex.finish(&phase2, limits, start)
}

enum DualOutcome {
    Feasible,
    Infeasible,
    Limit(SolveStatus),
    /// No dual progress for too long; the caller restarts with the primal.
    Stalled,
}

impl<'a> Simplex<'a> {
    /// Slack basis with every structural column parked at the bound its
    /// cost sign prefers. `None` when some column cannot be placed
    /// dual-feasibly (e.g. a negative cost with no finite upper bound).
    fn dual_start(lp: &'a LinearProgram, limits: &SolverLimits) -> Option<Self> {
        let m = lp.num_rows();
        let n = lp.num_vars();
        let mut state = Vec::with_capacity(n + m);
        let mut x = Vec::with_capacity(n + m);
        for j in 0..n {
            let (lo, hi, c) = (lp.lower[j], lp.upper[j], lp.cost[j]);
            let (st, v) = if lo == hi {
                (State::Lower, lo)
            } else if c > 0.0 {
                if !lo.is_finite() {
                    return None;
                }
                (State::Lower, lo)
            } else if c < 0.0 {
                if !hi.is_finite() {
                    return None;
                }
                (State::Upper, hi)
            } else if lo.is_finite() {
                (State::Lower, lo)
            } else if hi.is_finite() {
                (State::Upper, hi)
            } else {
                (State::Zero, 0.0)
            };
            state.push(st);
            x.push(v);
        }
        let activity = lp.activities(&x);
        let mut lower = lp.lower.clone();
        let mut upper = lp.upper.clone();
        for i in 0..m {
            let (lo, hi) = match lp.senses[i] {
                Sense::Le => (0.0, f64::INFINITY),
                Sense::Ge => (f64::NEG_INFINITY, 0.0),
                Sense::Eq => (0.0, 0.0),
            };
            lower.push(lo);
            upper.push(hi);
            state.push(State::Basic);
            x.push(lp.rhs[i] - activity[i]);
        }
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = 1.0;
        }
        Some(Self {
            lp,
            m,
            n,
            lower,
            upper,
            art_row: Vec::new(),
            art_sign: Vec::new(),
            state,
            x,
            basis: (n..n + m).collect(),
            binv,
            iterations: 0,
            since_refactor: 0,
            feas_tol: limits.feasibility_tol,
            opt_tol: limits.optimality_tol,
        })
    }

    /// Dual simplex from a dual-feasible basis: the most infeasible basic
    /// column leaves to its violated bound, and the entering column keeps
    /// every reduced cost on the right side (Harris two-pass ratio test).
    fn dual_iterate(
        &mut self,
        cost: &[f64],
        limits: &SolverLimits,
        start: Instant,
    ) -> Result<DualOutcome, SolverError> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        let mut rho = vec![0.0; m];
        let mut row_alpha = vec![0.0; self.total()];
        let mut stall = 0usize;
        let mut objective: f64 = (0..self.total()).map(|j| cost[j] * self.x[j]).sum();
        let mut confirmed = false;
        loop {
            if self.since_refactor >= REFACTOR_INTERVAL {
                self.refactor()?;
            }
            if self.iterations >= limits.max_iterations {
                return Ok(DualOutcome::Limit(SolveStatus::IterationLimit));
            }
            if self.iterations % 64 == 0 && limits.time_limit.is_some_and(|t| start.elapsed() >= t) {
                return Ok(DualOutcome::Limit(SolveStatus::TimeLimit));
            }
            let mut leave = None;
            let mut worst = self.feas_tol;
            for i in 0..m {
                let b = self.basis[i];
                let v = self.x[b];
                let infeasibility = (self.lower[b] - v).max(v - self.upper[b]);
                if infeasibility > worst {
                    worst = infeasibility;
                    leave = Some(i);
                }
            }
            let Some(r) = leave else {
                return Ok(DualOutcome::Feasible);
            };
            let out = self.basis[r];
            let to_lower = self.x[out] < self.lower[out];
            let target = if to_lower { self.lower[out] } else { self.upper[out] };
            // The leaving value must rise (to_lower) or fall; entering
            // column j moving by s contributes -alpha_rj * s.
            let want = if to_lower { -1.0 } else { 1.0 };

            let y = self.duals(cost);
            rho.copy_from_slice(&self.binv[r * m..(r + 1) * m]);
            let mut bound = f64::INFINITY;
            let mut candidates = Vec::new();
            for j in 0..self.total() {
                let st = self.state[j];
                if st == State::Basic || self.lower[j] == self.upper[j] {
                    continue;
                }
                let mut a = 0.0;
                self.for_column(j, |i, v| a += rho[i] * v);
                row_alpha[j] = a;
                if a.abs() <= PIVOT_TOL {
                    continue;
                }
                let s = match st {
                    State::Lower => 1.0,
                    State::Upper => -1.0,
                    _ => want * a.signum(),
                };
                if a * s * want <= 0.0 {
                    continue;
                }
                let d = self.reduced_cost(cost, &y, j) * s;
                bound = bound.min((d.max(0.0) + self.opt_tol) / a.abs());
                candidates.push((j, d.max(0.0) / a.abs(), s));
            }
            let mut entering: Option<(usize, f64)> = None;
            let mut best_pivot = 0.0;
            for &(j, ratio, _) in &candidates {
                if ratio <= bound && row_alpha[j].abs() > best_pivot {
                    best_pivot = row_alpha[j].abs();
                    entering = Some((j, ratio));
                }
            }
            let Some((q, _)) = entering else {
                if confirmed {
                    return Ok(DualOutcome::Infeasible);
                }
                // Only trust a dual ray found on a fresh factorization.
                self.refactor()?;
                confirmed = true;
                continue;
            };
            confirmed = false;

            {
                let binv = &self.binv;
                let mut col = Vec::new();
                self.for_column(q, |i, a| col.push((i, a)));
                for (i, ai) in alpha.iter_mut().enumerate() {
                    let row = &binv[i * m..(i + 1) * m];
                    *ai = col.iter().map(|&(k, a)| row[k] * a).sum();
                }
            }
            if alpha[r].abs() <= PIVOT_TOL {
                self.refactor()?;
                stall += 1;
                if stall > 4 * (m + self.n) {
                    return Ok(DualOutcome::Stalled);
                }
                continue;
            }
            let delta = (self.x[out] - target) / alpha[r];
            self.x[q] += delta;
            for i in 0..m {
                let b = self.basis[i];
                self.x[b] -= alpha[i] * delta;
            }
            self.x[out] = target;
            self.state[out] = if to_lower { State::Lower } else { State::Upper };
            self.state[q] = State::Basic;
            self.basis[r] = q;
            self.pivot(r, &alpha);
            self.since_refactor += 1;
            self.iterations += 1;

            let previous = objective;
            objective = (0..self.n).map(|j| cost[j] * self.x[j]).sum();
            if objective - previous <= DEGENERATE_GAIN * objective.abs().max(1.0) {
                stall += 1;
                if stall > 4 * (m + self.n) {
                    return Ok(DualOutcome::Stalled);
                }
            } else {
                stall = 0;
            }
        }
    }

    /// Primal phase 2 from a feasible basis, then the optimality recheck on
    /// a fresh factorization.
    fn finish(mut self, phase2: &[f64], limits: &SolverLimits, start: Instant) -> Result<SolveResult, SolverError> {
        loop {
            match self.iterate(phase2, limits, start)? {
                Outcome::Optimal => {}
                Outcome::Unbounded => {
                    let mut res = SolveResult::without_solution(SolveStatus::Unbounded);
                    res.objective = f64::NEG_INFINITY;
                    res.iterations = self.iterations;
                    return Ok(res);
                }
                Outcome::Limit(status) => return Ok(self.limit_result(status)),
            }
            // Confirm optimality on a fresh factorization; drift can leave a
            // stale reduced cost behind.
            self.refactor()?;
            if self.entering(phase2, false, &self.duals(phase2)).is_none() {
                break;
            }
        }
        Ok(self.optimal_result(phase2))
    }

    fn new(lp: &'a LinearProgram, limits: &SolverLimits) -> Self {
        let m = lp.num_rows();
        let n = lp.num_vars();
        let mut lower = lp.lower.clone();
        let mut upper = lp.upper.clone();
        let mut state = Vec::with_capacity(n + m);
        let mut x = Vec::with_capacity(n + m);
        for j in 0..n {
            let (s, v) = if lower[j].is_finite() {
                (State::Lower, lower[j])
            } else if upper[j].is_finite() {
                (State::Upper, upper[j])
            } else {
                (State::Zero, 0.0)
            };
            state.push(s);
            x.push(v);
        }
        let activity = lp.activities(&x);
        let mut basis = vec![0; m];
        let mut art_row = Vec::new();
        let mut art_sign = Vec::new();
        let mut art_value = Vec::new();
        for i in 0..m {
            let (lo, hi) = match lp.senses[i] {
                Sense::Le => (0.0, f64::INFINITY),
                Sense::Ge => (f64::NEG_INFINITY, 0.0),
                Sense::Eq => (0.0, 0.0),
            };
            lower.push(lo);
            upper.push(hi);
            let residual = lp.rhs[i] - activity[i];
            if residual >= lo && residual <= hi {
                state.push(State::Basic);
                x.push(residual);
                basis[i] = n + i;
            } else {
                let (s, v) = if residual < lo { (State::Lower, lo) } else { (State::Upper, hi) };
                state.push(s);
                x.push(v);
                art_row.push(i);
                art_sign.push(if residual - v > 0.0 { 1.0 } else { -1.0 });
                art_value.push((residual - v).abs());
            }
        }
        for (k, &i) in art_row.iter().enumerate() {
            lower.push(0.0);
            upper.push(f64::INFINITY);
            state.push(State::Basic);
            x.push(art_value[k]);
            basis[i] = n + m + k;
        }
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = 1.0;
        }
        for (k, &i) in art_row.iter().enumerate() {
            binv[i * m + i] = art_sign[k];
        }
        Self {
            lp,
            m,
            n,
            lower,
            upper,
            art_row,
            art_sign,
            state,
            x,
            basis,
            binv,
            iterations: 0,
            since_refactor: 0,
            feas_tol: limits.feasibility_tol,
            opt_tol: limits.optimality_tol,
        }
    }

    fn total(&self) -> usize {
        self.n + self.m + self.art_row.len()
    }

    fn for_column(&self, j: usize, mut f: impl FnMut(usize, f64)) {
        if j < self.n {
            for &(i, a) in &self.lp.columns[j] {
                f(i, a);
            }
        } else if j < self.n + self.m {
            f(j - self.n, 1.0);
        } else {
            let k = j - self.n - self.m;
            f(self.art_row[k], self.art_sign[k]);
        }
    }

    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = cost[b];
            if cb != 0.0 {
                let row = &self.binv[i * m..(i + 1) * m];
                for (yk, &v) in y.iter_mut().zip(row) {
                    *yk += cb * v;
                }
            }
        }
        y
    }

    fn reduced_cost(&self, cost: &[f64], y: &[f64], j: usize) -> f64 {
        let mut d = cost[j];
        self.for_column(j, |i, a| d -= y[i] * a);
        d
    }

    /// Picks an entering column and its direction (+1 increase, -1 decrease).
    fn entering(&self, cost: &[f64], bland: bool, y: &[f64]) -> Option<(usize, f64, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        let mut best_score = 0.0;
        for j in 0..self.total() {
            let st = self.state[j];
            if st == State::Basic || self.lower[j] == self.upper[j] {
                continue;
            }
            let d = self.reduced_cost(cost, y, j);
            let candidate = match st {
                State::Lower if d < -self.opt_tol => Some(1.0),
                State::Upper if d > self.opt_tol => Some(-1.0),
                State::Zero if d.abs() > self.opt_tol => Some(if d < 0.0 { 1.0 } else { -1.0 }),
                _ => None,
            };
            if let Some(dir) = candidate {
                if bland {
                    return Some((j, dir, d));
                }
                if d.abs() > best_score {
                    best_score = d.abs();
                    best = Some((j, dir, d));
                }
            }
        }
        best
    }

    fn iterate(&mut self, cost: &[f64], limits: &SolverLimits, start: Instant) -> Result<Outcome, SolverError> {
        let m = self.m;
        let mut stall = 0usize;
        let mut bland = false;
        let mut alpha = vec![0.0; m];
        let mut objective: f64 = (0..self.total()).map(|j| cost[j] * self.x[j]).sum();
        loop {
            if self.since_refactor >= REFACTOR_INTERVAL {
                self.refactor()?;
            }
            if self.iterations >= limits.max_iterations {
                return Ok(Outcome::Limit(SolveStatus::IterationLimit));
            }
            if self.iterations % 64 == 0 {
                if let Some(limit) = limits.time_limit {
                    if start.elapsed() >= limit {
                        return Ok(Outcome::Limit(SolveStatus::TimeLimit));
                    }
                }
            }
            let y = self.duals(cost);
            let Some((q, dir, d)) = self.entering(cost, bland, &y) else {
                return Ok(Outcome::Optimal);
            };

            alpha.iter_mut().for_each(|a| *a = 0.0);
            {
                let binv = &self.binv;
                let mut col = Vec::new();
                self.for_column(q, |r, a| col.push((r, a)));
                for (i, ai) in alpha.iter_mut().enumerate() {
                    let row = &binv[i * m..(i + 1) * m];
                    *ai = col.iter().map(|&(r, a)| row[r] * a).sum();
                }
            }

            // Harris two-pass ratio test; Bland mode uses the exact minimum
            // with lowest-column tie-breaking instead.
            let flip = self.upper[q] - self.lower[q];
            let mut step = f64::INFINITY;
            let mut leave: Option<usize> = None;
            if bland {
                for i in 0..m {
                    let rate = -dir * alpha[i];
                    if rate.abs() <= PIVOT_TOL {
                        continue;
                    }
                    if let Some(ratio) = self.ratio(i, rate, 0.0) {
                        let better = match leave {
                            None => true,
                            Some(l) => ratio < step - 1e-12 || (ratio <= step + 1e-12 && self.basis[i] < self.basis[l]),
                        };
                        if better {
                            step = ratio.min(step);
                            leave = Some(i);
                        }
                    }
                }
            } else {
                let mut bound = f64::INFINITY;
                for i in 0..m {
                    let rate = -dir * alpha[i];
                    if rate.abs() <= PIVOT_TOL {
                        continue;
                    }
                    if let Some(ratio) = self.ratio(i, rate, self.feas_tol) {
                        bound = bound.min(ratio);
                    }
                }
                if bound.is_finite() {
                    let mut best_pivot = 0.0;
                    for i in 0..m {
                        let rate = -dir * alpha[i];
                        if rate.abs() <= PIVOT_TOL {
                            continue;
                        }
                        if let Some(ratio) = self.ratio(i, rate, 0.0) {
                            if ratio <= bound && alpha[i].abs() > best_pivot {
                                best_pivot = alpha[i].abs();
                                leave = Some(i);
                                step = ratio;
                            }
                        }
                    }
                }
            }
            if flip <= step {
                step = flip;
                leave = None;
            }
            if !step.is_finite() {
                return Ok(Outcome::Unbounded);
            }
            step = step.max(0.0);

            self.x[q] += dir * step;
            for i in 0..m {
                let b = self.basis[i];
                self.x[b] -= dir * alpha[i] * step;
            }
            match leave {
                None => {
                    if dir > 0.0 {
                        self.state[q] = State::Upper;
                        self.x[q] = self.upper[q];
                    } else {
                        self.state[q] = State::Lower;
                        self.x[q] = self.lower[q];
                    }
                }
                Some(r) => {
                    let out = self.basis[r];
                    let rate = -dir * alpha[r];
                    if rate < 0.0 {
                        self.state[out] = State::Lower;
                        self.x[out] = self.lower[out];
                    } else {
                        self.state[out] = State::Upper;
                        self.x[out] = self.upper[out];
                    }
                    self.state[q] = State::Basic;
                    self.basis[r] = q;
                    self.pivot(r, &alpha);
                    self.since_refactor += 1;
                }
            }
            self.iterations += 1;

            // A step counts as degenerate when it barely moves the objective,
            // not only when it is exactly zero: tiny positive steps can cycle
            // just as well.
            let gain = d.abs() * step;
            objective -= gain;
            if gain <= DEGENERATE_GAIN * objective.abs().max(1.0) {
                stall += 1;
                if stall >= STALL_THRESHOLD {
                    bland = true;
                }
            } else {
                stall = 0;
                bland = false;
            }
        }
    }

    /// Step length at which basic row `i`, moving at `rate` per unit step,
    /// reaches a bound relaxed by `slack`.
    fn ratio(&self, i: usize, rate: f64, slack: f64) -> Option<f64> {
        let b = self.basis[i];
        if rate < 0.0 {
            let lo = self.lower[b];
            lo.is_finite().then(|| ((self.x[b] - lo + slack) / -rate).max(0.0))
        } else {
            let hi = self.upper[b];
            hi.is_finite().then(|| ((hi - self.x[b] + slack) / rate).max(0.0))
        }
    }

    fn pivot(&mut self, r: usize, alpha: &[f64]) {
        let m = self.m;
        let inv = 1.0 / alpha[r];
        let (head, tail) = self.binv.split_at_mut(r * m);
        let (pivot_row, rest) = tail.split_at_mut(m);
        pivot_row.iter_mut().for_each(|v| *v *= inv);
        for (i, &f) in alpha.iter().enumerate() {
            if i == r || f == 0.0 {
                continue;
            }
            let row = if i < r { &mut head[i * m..(i + 1) * m] } else { &mut rest[(i - r - 1) * m..(i - r) * m] };
            for (v, &p) in row.iter_mut().zip(pivot_row.iter()) {
                *v -= f * p;
            }
        }
    }

    /// Rebuilds the basis inverse from scratch and recomputes basic values.
    fn refactor(&mut self) -> Result<(), SolverError> {
        let m = self.m;
        self.since_refactor = 0;
        if m == 0 {
            return Ok(());
        }
        let mut work = vec![0.0; m * m];
        for (k, &j) in self.basis.iter().enumerate() {
            self.for_column(j, |i, a| work[i * m + k] = a);
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for c in 0..m {
            let (p, pv) =
                (c..m).map(|r| (r, work[r * m + c].abs())).fold((c, -1.0), |acc, v| if v.1 > acc.1 { v } else { acc });
            if pv < 1e-12 {
                return Err(SolverError::Numerical("singular basis during refactorization".into()));
            }
            if p != c {
                for k in 0..m {
                    work.swap(p * m + k, c * m + k);
                    inv.swap(p * m + k, c * m + k);
                }
            }
            let d = 1.0 / work[c * m + c];
            for k in 0..m {
                work[c * m + k] *= d;
                inv[c * m + k] *= d;
            }
            for r in 0..m {
                if r == c {
                    continue;
                }
                let f = work[r * m + c];
                if f == 0.0 {
                    continue;
                }
                for k in 0..m {
                    work[r * m + k] -= f * work[c * m + k];
                    inv[r * m + k] -= f * inv[c * m + k];
                }
            }
        }
        // `work` was reduced to the identity, so `inv` = B^-1 with rows in
        // basis order.
        self.binv = inv;

        let mut residual = self.lp.rhs.clone();
        for j in 0..self.total() {
            if self.state[j] != State::Basic && self.x[j] != 0.0 {
                let v = self.x[j];
                self.for_column(j, |i, a| residual[i] -= a * v);
            }
        }
        for i in 0..m {
            let row = &self.binv[i * m..(i + 1) * m];
            self.x[self.basis[i]] = row.iter().zip(&residual).map(|(a, b)| a * b).sum();
        }
        Ok(())
    }

    fn limit_result(&self, status: SolveStatus) -> SolveResult {
        let mut res = SolveResult::without_solution(status);
        res.iterations = self.iterations;
        res
    }

    fn optimal_result(&self, cost: &[f64]) -> SolveResult {
        let y = self.duals(cost);
        let reduced: Vec<f64> = (0..self.n).map(|j| self.reduced_cost(cost, &y, j)).collect();
        let x: Vec<f64> =
            self.x[..self.n].iter().enumerate().map(|(j, &v)| v.clamp(self.lower[j], self.upper[j])).collect();
        let degenerate = (0..self.n + self.m).any(|j| {
            self.state[j] != State::Basic
                && self.lower[j] != self.upper[j]
                && self.reduced_cost(cost, &y, j).abs() <= 1e-9
        });
        let objective = self.lp.objective_at(&x);
        SolveResult {
            status: SolveStatus::Optimal,
            x,
            objective,
            best_bound: objective,
            duals: y,
            reduced_costs: reduced,
            iterations: self.iterations,
            nodes: 0,
            degenerate,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::Var;

    fn limits() -> SolverLimits {
        SolverLimits::default()
    }

    #[test]
    fn one_variable_upper_bound() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var(-1.0, 0.0, f64::INFINITY);
        lp.add_row(&[(x, 1.0)], Sense::Le, 1.0);
        let res = solve_lp(&lp, &limits()).unwrap();
        assert_eq!(res.status, SolveStatus::Optimal);
        assert!((res.x[0] - 1.0).abs() < 1e-9);
        assert!((res.objective + 1.0).abs() < 1e-9);
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var(1.0, f64::NEG_INFINITY, f64::INFINITY);
        lp.add_row(&[(x, 1.0)], Sense::Ge, 2.0);
        lp.add_row(&[(x, 1.0)], Sense::Le, 1.0);
        assert_eq!(solve_lp(&lp, &limits()).unwrap().status, SolveStatus::Infeasible);
    }

    #[test]
    fn detects_unbounded_direction() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var(-1.0, 0.0, f64::INFINITY);
        let y = lp.add_var(0.0, 0.0, f64::INFINITY);
        lp.add_row(&[(x, 1.0), (y, -1.0)], Sense::Le, 1.0);
        assert_eq!(solve_lp(&lp, &limits()).unwrap().status, SolveStatus::Unbounded);
    }

    #[test]
    fn free_variable_and_equality() {
        // min |x - 3| written with a free x and t >= +-(x - 3)
        let mut lp = LinearProgram::new();
        let x = lp.add_var(0.0, f64::NEG_INFINITY, f64::INFINITY);
        let t = lp.add_var(1.0, 0.0, f64::INFINITY);
        lp.add_row(&[(t, 1.0), (x, -1.0)], Sense::Ge, -3.0);
        lp.add_row(&[(t, 1.0), (x, 1.0)], Sense::Ge, 3.0);
        let res = solve_lp(&lp, &limits()).unwrap();
        assert!(res.objective.abs() < 1e-9);
        assert!((res.x[0] - 3.0).abs() < 1e-9);

        let mut eq = LinearProgram::new();
        let a = eq.add_var(1.0, 0.0, 10.0);
        let b = eq.add_var(2.0, 0.0, 10.0);
        eq.add_row(&[(a, 1.0), (b, 1.0)], Sense::Eq, 4.0);
        eq.add_row(&[(a, 1.0)], Sense::Le, 3.0);
        let res = solve_lp(&eq, &limits()).unwrap();
        assert!((res.objective - 5.0).abs() < 1e-9, "{res:?}");
    }

    #[test]
    fn degenerate_cycling_example_terminates() {
        // Beale's classic cycling LP under the textbook Dantzig rule.
        let mut lp = LinearProgram::new();
        let v: Vec<Var> = [-0.75, 150.0, -0.02, 6.0].iter().map(|&c| lp.add_var(c, 0.0, f64::INFINITY)).collect();
        lp.add_row(&[(v[0], 0.25), (v[1], -60.0), (v[2], -0.04), (v[3], 9.0)], Sense::Le, 0.0);
        lp.add_row(&[(v[0], 0.5), (v[1], -90.0), (v[2], -0.02), (v[3], 3.0)], Sense::Le, 0.0);
        lp.add_row(&[(v[2], 1.0)], Sense::Le, 1.0);
        let res = solve_lp(&lp, &limits()).unwrap();
        assert_eq!(res.status, SolveStatus::Optimal);
        assert!((res.objective + 0.05).abs() < 1e-9, "{res:?}");
    }

    #[test]
    fn empty_row_set_uses_bounds() {
        let mut lp = LinearProgram::new();
        lp.add_var(-2.0, -1.0, 4.0);
        lp.add_var(3.0, -5.0, 1.0);
        let res = solve_lp(&lp, &limits()).unwrap();
        assert_eq!(res.x, vec![4.0, -5.0]);
        assert!((res.objective + 23.0).abs() < 1e-12);
    }

    #[test]
    fn iteration_cap_is_reported() {
        let mut lp = LinearProgram::new();
        let a = lp.add_var(-1.0, 0.0, f64::INFINITY);
        let b = lp.add_var(-1.0, 0.0, f64::INFINITY);
        lp.add_row(&[(a, 1.0), (b, 2.0)], Sense::Le, 4.0);
        lp.add_row(&[(a, 3.0), (b, 1.0)], Sense::Le, 6.0);
        let capped = SolverLimits { max_iterations: 1, ..SolverLimits::default() };
        assert_eq!(solve_lp(&lp, &capped).unwrap().status, SolveStatus::IterationLimit);
    }
}
