//! Finite-scenario two-stage stochastic programs.
//!
//! A [`TwoStageProblem`] exposes the cost function `F(x, ξ)` (first-stage
//! cost plus optimal recourse cost) and a solver for
//! `min_x Σ_k w_k F(x, ξ_k)`. Everything else in the crate, from the
//! opportunity-cost matrix to the implementation-error report, is written
//! against this trait.

use cssc_solver::{SolveStatus, SolverError, SolverLimits};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Probabilities must sum to one within this tolerance.
pub const PROBABILITY_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("{context}: solver stopped with status {status} before proving optimality")]
    Limit { status: SolveStatus, context: String },
    #[error("{0}: second stage infeasible, complete recourse violated")]
    RecourseInfeasible(String),
    #[error("scenario domain violation: {0}")]
    DomainViolation(String),
    #[error("invalid scenario set: {0}")]
    InvalidScenarios(String),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("subproblem ({row}, {col}): {source}")]
    Subproblem { row: usize, col: usize, source: Box<ModelError> },
}

/// Value domain shared by every entry of a scenario matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioDomain {
    Real,
    NonNegativeInteger,
    Binary,
}

impl ScenarioDomain {
    pub fn admits(self, v: f64) -> bool {
        match self {
            ScenarioDomain::Real => v.is_finite(),
            ScenarioDomain::NonNegativeInteger => v.is_finite() && v >= 0.0 && v.fract() == 0.0,
            ScenarioDomain::Binary => v == 0.0 || v == 1.0,
        }
    }
}

/// `N` scenarios of dimension `d` with their probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    values: Vec<Vec<f64>>,
    probabilities: Vec<f64>,
    domain: ScenarioDomain,
}

impl ScenarioSet {
    pub fn new(values: Vec<Vec<f64>>, probabilities: Vec<f64>, domain: ScenarioDomain) -> Result<Self, ModelError> {
        let set = Self { values, probabilities, domain };
        set.validate()?;
        Ok(set)
    }

    pub fn equiprobable(values: Vec<Vec<f64>>, domain: ScenarioDomain) -> Result<Self, ModelError> {
        let n = values.len();
        Self::new(values, vec![1.0 / n.max(1) as f64; n], domain)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.values.len();
        if n == 0 {
            return Err(ModelError::InvalidScenarios("at least one scenario is required".into()));
        }
        if self.probabilities.len() != n {
            return Err(ModelError::InvalidScenarios(format!(
                "{} probabilities for {n} scenarios",
                self.probabilities.len()
            )));
        }
        let d = self.values[0].len();
        for (i, row) in self.values.iter().enumerate() {
            if row.len() != d {
                return Err(ModelError::InvalidScenarios(format!("scenario {i} has dimension {} not {d}", row.len())));
            }
            if let Some(v) = row.iter().find(|v| !self.domain.admits(**v)) {
                return Err(ModelError::DomainViolation(format!("scenario {i} entry {v} outside {:?}", self.domain)));
            }
        }
        check_probabilities(&self.probabilities)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn domain(&self) -> ScenarioDomain {
        self.domain
    }

    pub fn scenario(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    pub fn scenarios(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn probability(&self, i: usize) -> f64 {
        self.probabilities[i]
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn is_equiprobable(&self) -> bool {
        let p = 1.0 / self.len() as f64;
        self.probabilities.iter().all(|q| (q - p).abs() <= PROBABILITY_TOL)
    }

    /// A copy with the scenario matrix replaced; used when appending or
    /// permuting scenarios in tests and experiments.
    pub fn with_rows(&self, values: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        Self::equiprobable(values, self.domain)
    }
}

pub(crate) fn check_probabilities(p: &[f64]) -> Result<(), ModelError> {
    if let Some(q) = p.iter().find(|q| !q.is_finite() || **q < 0.0) {
        return Err(ModelError::InvalidScenarios(format!("invalid probability {q}")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > PROBABILITY_TOL * p.len().max(1) as f64 {
        return Err(ModelError::InvalidScenarios(format!("probabilities sum to {total}")));
    }
    Ok(())
}

/// One scenario of a reduced set. `origin` names the source row when the
/// scenario is copied from the original set; synthetic scenarios (cluster
/// means, medians, modes) carry `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedScenario {
    pub values: Vec<f64>,
    pub origin: Option<usize>,
}

/// `K` weighted scenarios standing in for an original [`ScenarioSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedScenarioSet {
    pub method: String,
    pub scenarios: Vec<ReducedScenario>,
    pub probabilities: Vec<f64>,
}

impl ReducedScenarioSet {
    pub fn new(
        method: impl Into<String>,
        scenarios: Vec<ReducedScenario>,
        probabilities: Vec<f64>,
    ) -> Result<Self, ModelError> {
        if scenarios.is_empty() || scenarios.len() != probabilities.len() {
            return Err(ModelError::InvalidScenarios(format!(
                "{} reduced scenarios with {} probabilities",
                scenarios.len(),
                probabilities.len()
            )));
        }
        check_probabilities(&probabilities)?;
        Ok(Self { method: method.into(), scenarios, probabilities })
    }

    /// Original rows `indices` with the given probabilities.
    pub fn from_indices(
        method: impl Into<String>,
        source: &ScenarioSet,
        indices: &[usize],
        probabilities: Vec<f64>,
    ) -> Result<Self, ModelError> {
        if let Some(&i) = indices.iter().find(|&&i| i >= source.len()) {
            return Err(ModelError::InvalidScenarios(format!("index {i} out of range for {} scenarios", source.len())));
        }
        let scenarios =
            indices.iter().map(|&i| ReducedScenario { values: source.scenario(i).to_vec(), origin: Some(i) }).collect();
        Self::new(method, scenarios, probabilities)
    }

    /// The original set itself, as a `K = N` reduction.
    pub fn identity(source: &ScenarioSet) -> Self {
        let indices: Vec<usize> = (0..source.len()).collect();
        Self::from_indices("identity", source, &indices, source.probabilities().to_vec())
            .expect("a valid scenario set is a valid reduction of itself")
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    /// Checks `K <= N`, matching dimensions and valid origin indices.
    pub fn validate_against(&self, source: &ScenarioSet) -> Result<(), ModelError> {
        check_probabilities(&self.probabilities)?;
        if self.len() > source.len() {
            return Err(ModelError::InvalidScenarios(format!(
                "{} reduced scenarios exceed {}",
                self.len(),
                source.len()
            )));
        }
        for s in &self.scenarios {
            if s.values.len() != source.dim() {
                return Err(ModelError::InvalidScenarios("reduced scenario dimension mismatch".into()));
            }
            if let Some(i) = s.origin {
                if i >= source.len() || source.scenario(i) != s.values.as_slice() {
                    return Err(ModelError::InvalidScenarios(format!("origin {i} does not match the source row")));
                }
            }
        }
        Ok(())
    }
}

/// A first-stage decision together with the objective of the problem that
/// produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstStageSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Lower bound proven by the solver; equals `objective` when optimal.
    pub best_bound: f64,
    #[serde(with = "status_serde")]
    pub status: SolveStatus,
    pub provenance: String,
    /// The solver saw alternative optima (zero reduced costs at the end).
    #[serde(default)]
    pub degenerate: bool,
}

impl FirstStageSolution {
    pub fn is_proven_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn relative_gap(&self) -> f64 {
        ((self.objective - self.best_bound) / self.objective.abs().max(1.0)).max(0.0)
    }
}

pub(crate) mod status_serde {
    use cssc_solver::SolveStatus;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(status: &SolveStatus, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(status.as_str())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<SolveStatus, D::Error> {
        let text = String::deserialize(d)?;
        parse(&text).ok_or_else(|| serde::de::Error::custom(format!("unknown status {text}")))
    }

    pub fn parse(text: &str) -> Option<SolveStatus> {
        Some(match text {
            "optimal" => SolveStatus::Optimal,
            "infeasible" => SolveStatus::Infeasible,
            "unbounded" => SolveStatus::Unbounded,
            "iteration-limit" => SolveStatus::IterationLimit,
            "node-limit" => SolveStatus::NodeLimit,
            "time-limit" => SolveStatus::TimeLimit,
            _ => return None,
        })
    }
}

/// How one-scenario subproblems are solved when building the
/// opportunity-cost matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMode {
    Exact,
    /// LP relaxation followed by the problem's rounding rule.
    Relaxed,
}

/// A two-stage stochastic program over a finite scenario set, with
/// relatively complete recourse.
pub trait TwoStageProblem: Send + Sync {
    fn family(&self) -> &'static str;

    /// The original scenario set `ξ_1..ξ_N`.
    fn scenarios(&self) -> &ScenarioSet;

    fn first_stage_dim(&self) -> usize;

    /// Mode used for the opportunity-cost matrix unless overridden.
    fn default_mode(&self) -> SolveMode {
        SolveMode::Exact
    }

    /// Rejects scenario vectors the formulation cannot take (e.g. fractional
    /// customer presence).
    fn check_scenario(&self, values: &[f64]) -> Result<(), ModelError>;

    /// `F(x, ξ)`: first-stage cost of `x` plus the optimal second-stage cost
    /// under `scenario`, with the second stage solved exactly.
    fn evaluate(&self, x: &[f64], scenario: &[f64], limits: &SolverLimits) -> Result<f64, ModelError>;

    /// `argmin_x Σ_k weights[k] · F(x, scenarios[k])`.
    fn solve_weighted(
        &self,
        scenarios: &[&[f64]],
        weights: &[f64],
        mode: SolveMode,
        limits: &SolverLimits,
    ) -> Result<FirstStageSolution, ModelError>;
}

/// `f(x) = Σ_i p_i F(x, ξ_i)` over `scenarios`.
pub fn expected_cost<P: TwoStageProblem + ?Sized>(
    problem: &P,
    x: &[f64],
    scenarios: &ScenarioSet,
    limits: &SolverLimits,
) -> Result<f64, ModelError> {
    let mut total = 0.0;
    for i in 0..scenarios.len() {
        total += scenarios.probability(i) * problem.evaluate(x, scenarios.scenario(i), limits)?;
    }
    Ok(total)
}

/// `f̃(x) = Σ_k p_k F(x, ξ̃_k)` over a reduced set.
pub fn reduced_expected_cost<P: TwoStageProblem + ?Sized>(
    problem: &P,
    x: &[f64],
    reduced: &ReducedScenarioSet,
    limits: &SolverLimits,
) -> Result<f64, ModelError> {
    let mut total = 0.0;
    for (s, p) in reduced.scenarios.iter().zip(&reduced.probabilities) {
        total += p * problem.evaluate(x, &s.values, limits)?;
    }
    Ok(total)
}

/// `x_i* ∈ argmin_x F(x, ξ_i)` for scenario `index` of the original set.
pub fn solve_deterministic<P: TwoStageProblem + ?Sized>(
    problem: &P,
    index: usize,
    mode: SolveMode,
    limits: &SolverLimits,
) -> Result<FirstStageSolution, ModelError> {
    let set = problem.scenarios();
    if index >= set.len() {
        return Err(ModelError::InvalidScenarios(format!("scenario {index} out of range for {}", set.len())));
    }
    let mut sol = problem.solve_weighted(&[set.scenario(index)], &[1.0], mode, limits)?;
    sol.provenance = format!("scenario {index} ({})", mode_name(mode));
    Ok(sol)
}

/// `x̃* ∈ argmin_x f̃(x)` over a reduced set; scenarios outside the
/// problem's domain are rejected before any solve.
pub fn solve_extensive<P: TwoStageProblem + ?Sized>(
    problem: &P,
    reduced: &ReducedScenarioSet,
    limits: &SolverLimits,
) -> Result<FirstStageSolution, ModelError> {
    check_probabilities(&reduced.probabilities)?;
    for s in &reduced.scenarios {
        problem.check_scenario(&s.values)?;
    }
    let rows: Vec<&[f64]> = reduced.scenarios.iter().map(|s| s.values.as_slice()).collect();
    let mut sol = problem.solve_weighted(&rows, &reduced.probabilities, SolveMode::Exact, limits)?;
    sol.provenance = format!("{} (K={})", reduced.method, reduced.len());
    Ok(sol)
}

fn mode_name(mode: SolveMode) -> &'static str {
    match mode {
        SolveMode::Exact => "exact",
        SolveMode::Relaxed => "relaxed",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probabilities_must_sum_to_one() {
        let rows = vec![vec![1.0], vec![2.0]];
        assert!(ScenarioSet::new(rows.clone(), vec![0.5, 0.4], ScenarioDomain::Real).is_err());
        assert!(ScenarioSet::new(rows.clone(), vec![1.5, -0.5], ScenarioDomain::Real).is_err());
        assert!(ScenarioSet::new(rows, vec![0.25, 0.75], ScenarioDomain::Real).is_ok());
        assert!(ScenarioSet::equiprobable(Vec::new(), ScenarioDomain::Real).is_err());
    }

    #[test]
    fn domain_tag_is_enforced() {
        let frac = vec![vec![0.5, 1.0]];
        assert!(matches!(
            ScenarioSet::equiprobable(frac.clone(), ScenarioDomain::Binary),
            Err(ModelError::DomainViolation(_))
        ));
        assert!(ScenarioSet::equiprobable(frac, ScenarioDomain::NonNegativeInteger).is_err());
        assert!(ScenarioSet::equiprobable(vec![vec![3.0, 0.0]], ScenarioDomain::NonNegativeInteger).is_ok());
        assert!(ScenarioSet::equiprobable(vec![vec![-3.0]], ScenarioDomain::NonNegativeInteger).is_err());
    }

    #[test]
    fn reduced_origins_are_checked() {
        let set = ScenarioSet::equiprobable(vec![vec![1.0], vec![2.0], vec![3.0]], ScenarioDomain::Real).unwrap();
        let red = ReducedScenarioSet::from_indices("mc", &set, &[2, 0], vec![0.5, 0.5]).unwrap();
        red.validate_against(&set).unwrap();
        assert!(ReducedScenarioSet::from_indices("mc", &set, &[3], vec![1.0]).is_err());
        let mut forged = red.clone();
        forged.scenarios[0].values = vec![9.0];
        assert!(forged.validate_against(&set).is_err());
        assert_eq!(ReducedScenarioSet::identity(&set).len(), 3);
    }
}
