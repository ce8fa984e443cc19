use std::time::Duration;

/// Tolerances and work caps shared by the LP and MIP entry points.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverLimits {
    /// Primal feasibility tolerance on rows and bounds.
    pub feasibility_tol: f64,
    /// Dual feasibility (reduced-cost) tolerance.
    pub optimality_tol: f64,
    /// Distance from {0, 1} below which a binary counts as integral.
    pub integrality_tol: f64,
    /// Relative gap `(incumbent - bound) / max(1, |incumbent|)` at which
    /// branch-and-bound stops.
    pub relative_gap: f64,
    /// Simplex pivots per LP solve.
    pub max_iterations: usize,
    /// Branch-and-bound nodes (LP solves) per MIP solve.
    pub max_nodes: usize,
    pub time_limit: Option<Duration>,
}

impl Default for SolverLimits {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-7,
            optimality_tol: 1e-9,
            integrality_tol: 1e-6,
            relative_gap: 1e-6,
            max_iterations: 1_000_000,
            max_nodes: 1_000_000,
            time_limit: None,
        }
    }
}

impl SolverLimits {
    pub fn with_time_limit(mut self, limit: Duration) -> Self {
        self.time_limit = Some(limit);
        self
    }

    pub fn with_max_nodes(mut self, nodes: usize) -> Self {
        self.max_nodes = nodes;
        self
    }

    pub fn with_relative_gap(mut self, gap: f64) -> Self {
        self.relative_gap = gap;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    NodeLimit,
    TimeLimit,
}

impl SolveStatus {
    pub fn is_optimal(self) -> bool {
        self == SolveStatus::Optimal
    }

    /// A work cap stopped the solve before optimality was proven.
    pub fn is_limit(self) -> bool {
        matches!(self, SolveStatus::IterationLimit | SolveStatus::NodeLimit | SolveStatus::TimeLimit)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::IterationLimit => "iteration-limit",
            SolveStatus::NodeLimit => "node-limit",
            SolveStatus::TimeLimit => "time-limit",
        }
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome of an LP or MIP solve.
///
/// For LPs `objective == best_bound` at optimality. For MIPs `objective` is
/// the incumbent value (`+inf` when no incumbent exists) and `best_bound`
/// the smallest open-node bound.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Primal values; empty when no feasible point is known.
    pub x: Vec<f64>,
    pub objective: f64,
    pub best_bound: f64,
    /// Row duals `y` with reduced costs `c - A'y` (LP only, final basis).
    pub duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub iterations: usize,
    pub nodes: usize,
    /// Set when the final basis is primal degenerate, i.e. the optimum may
    /// not be unique.
    pub degenerate: bool,
}

impl SolveResult {
    pub(crate) fn without_solution(status: SolveStatus) -> Self {
        Self {
            status,
            x: Vec::new(),
            objective: f64::INFINITY,
            best_bound: f64::NEG_INFINITY,
            duals: Vec::new(),
            reduced_costs: Vec::new(),
            iterations: 0,
            nodes: 0,
            degenerate: false,
        }
    }

    pub fn has_solution(&self) -> bool {
        !self.x.is_empty()
    }

    /// `(incumbent - bound) / max(1, |incumbent|)`, or `+inf` without an
    /// incumbent.
    pub fn relative_gap(&self) -> f64 {
        if !self.has_solution() || !self.objective.is_finite() {
            return f64::INFINITY;
        }
        ((self.objective - self.best_bound) / self.objective.abs().max(1.0)).max(0.0)
    }
}
