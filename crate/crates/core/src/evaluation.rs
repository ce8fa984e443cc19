//! Quality of a reduction: implementation error, the two-point error bound
//! and moment comparisons of the reduced distribution.

use std::collections::BTreeMap;
use std::time::Instant;

use cssc_solver::{SolveStatus, SolverLimits};
use serde::{Deserialize, Serialize};

use crate::model::{
    expected_cost, reduced_expected_cost, solve_deterministic, solve_extensive, status_serde, FirstStageSolution,
    ModelError, ReducedScenarioSet, ScenarioSet, SolveMode, TwoStageProblem,
};

/// The original problem solved once per instance and reused by every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OriginalOptimum {
    pub solution: FirstStageSolution,
    /// `f(x*)` recomputed by exact second-stage evaluation.
    pub true_cost: f64,
    pub seconds: f64,
}

impl OriginalOptimum {
    pub fn is_proven_optimal(&self) -> bool {
        self.solution.is_proven_optimal()
    }
}

pub fn solve_original<P: TwoStageProblem + ?Sized>(
    problem: &P,
    limits: &SolverLimits,
) -> Result<OriginalOptimum, ModelError> {
    let clock = Instant::now();
    let identity = ReducedScenarioSet::identity(problem.scenarios());
    let mut solution = solve_extensive(problem, &identity, limits)?;
    solution.provenance = "original".into();
    let true_cost = expected_cost(problem, &solution.x, problem.scenarios(), limits)?;
    Ok(OriginalOptimum { solution, true_cost, seconds: clock.elapsed().as_secs_f64() })
}

/// One-scenario solution of a scenario and its true expected cost over the
/// whole set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleScenarioCost {
    pub scenario: usize,
    pub solution: FirstStageSolution,
    pub true_cost: f64,
}

/// Solves every one-scenario problem exactly and prices each solution on
/// the full set: the enumeration oracle for `K = 1` reductions.
pub fn single_scenario_costs<P: TwoStageProblem + ?Sized>(
    problem: &P,
    limits: &SolverLimits,
) -> Result<Vec<SingleScenarioCost>, ModelError> {
    let set = problem.scenarios();
    (0..set.len())
        .map(|i| {
            let solution = solve_deterministic(problem, i, SolveMode::Exact, limits)?;
            let true_cost = expected_cost(problem, &solution.x, set, limits)?;
            Ok(SingleScenarioCost { scenario: i, solution, true_cost })
        })
        .collect()
}

/// 1-based rank of `cost` among `costs` (ties share the better rank).
pub fn rank_of(cost: f64, costs: &[f64], tol: f64) -> usize {
    1 + costs.iter().filter(|&&c| c < cost - tol).count()
}

/// Whether the report measures an error against a proven `v*` or only a
/// gap against the best bound of an unfinished original solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Error,
    Gap,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub reduce_seconds: f64,
    pub solve_seconds: f64,
    pub evaluate_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub instance: String,
    pub family: String,
    pub method: String,
    pub k: usize,
    pub regime: Regime,
    /// `f(x*)` of the original solution (`v*` when proven optimal).
    pub original_objective: f64,
    pub original_bound: f64,
    #[serde(with = "status_serde")]
    pub original_status: SolveStatus,
    pub x_tilde: Vec<f64>,
    /// `f̃(x̃*)`, the reduced problem's optimal value.
    pub approx_objective: f64,
    #[serde(with = "status_serde")]
    pub approx_status: SolveStatus,
    /// `f(x̃*)`, the true cost of implementing the reduced solution.
    pub true_cost: f64,
    /// `f(x̃*) − v*` (error regime only).
    pub absolute_error: Option<f64>,
    /// `100 (f(x̃*) − v*) / v*` (error regime, `v* > 0` only).
    pub relative_error_pct: Option<f64>,
    /// `100 (f(x̃*) − bound) / f(x̃*)`, always reported.
    pub gap_pct: f64,
    /// `2 max_{x ∈ {x*, x̃*}} |f̃(x) − f(x)|`.
    pub two_point_bound: f64,
    pub timings: Timings,
}

impl EvaluationReport {
    /// Relative error in the error regime, gap otherwise.
    pub fn score_pct(&self) -> Option<f64> {
        match self.regime {
            Regime::Error => self.relative_error_pct,
            Regime::Gap => Some(self.gap_pct),
        }
    }

    pub const CSV_HEADER: &'static str =
        "instance,family,method,k,regime,original_status,original_objective,original_bound,\
approx_status,approx_objective,true_cost,absolute_error,relative_error_pct,gap_pct,two_point_bound,\
reduce_seconds,solve_seconds,evaluate_seconds";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|v| format!("{v:?}")).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{:?},{:?},{},{:?},{:?},{},{},{:?},{:?},{:.6},{:.6},{:.6}",
            self.instance,
            self.family,
            self.method,
            self.k,
            match self.regime {
                Regime::Error => "error",
                Regime::Gap => "gap",
            },
            self.original_status.as_str(),
            self.original_objective,
            self.original_bound,
            self.approx_status.as_str(),
            self.approx_objective,
            self.true_cost,
            opt(self.absolute_error),
            opt(self.relative_error_pct),
            self.gap_pct,
            self.two_point_bound,
            self.timings.reduce_seconds,
            self.timings.solve_seconds,
            self.timings.evaluate_seconds,
        )
    }
}

/// Solves the reduced problem, evaluates `x̃*` on the original scenarios and
/// compares with the cached original solve. Without a proven `v*` the
/// report falls back to the gap regime.
pub fn implementation_error<P: TwoStageProblem + ?Sized>(
    problem: &P,
    original: &OriginalOptimum,
    reduced: &ReducedScenarioSet,
    limits: &SolverLimits,
) -> Result<EvaluationReport, ModelError> {
    let set = problem.scenarios();
    reduced.validate_against(set)?;
    let clock = Instant::now();
    let approx = solve_extensive(problem, reduced, limits)?;
    let solve_seconds = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let true_cost = expected_cost(problem, &approx.x, set, limits)?;
    let bound = two_point_bound(problem, set, reduced, &original.solution.x, &approx.x, limits)?;
    let evaluate_seconds = clock.elapsed().as_secs_f64();

    let proven = original.is_proven_optimal();
    let v_star = original.true_cost;
    let absolute_error = proven.then_some(true_cost - v_star);
    let relative_error_pct = absolute_error.filter(|_| v_star > 0.0).map(|e| 100.0 * e / v_star);
    let lower = original.solution.best_bound;
    let gap_pct = if true_cost.abs() > 0.0 { 100.0 * (true_cost - lower) / true_cost.abs() } else { 0.0 };
    Ok(EvaluationReport {
        instance: String::new(),
        family: problem.family().to_string(),
        method: reduced.method.clone(),
        k: reduced.len(),
        regime: if proven { Regime::Error } else { Regime::Gap },
        original_objective: v_star,
        original_bound: lower,
        original_status: original.solution.status,
        x_tilde: approx.x,
        approx_objective: approx.objective,
        approx_status: approx.status,
        true_cost,
        absolute_error,
        relative_error_pct,
        gap_pct,
        two_point_bound: bound,
        timings: Timings { reduce_seconds: 0.0, solve_seconds, evaluate_seconds },
    })
}

/// `2 max_{x ∈ {x*, x̃*}} |f̃(x) − f(x)|`, which bounds `f(x̃*) − v*` when
/// both solutions are exact minimizers of their problems.
pub fn two_point_bound<P: TwoStageProblem + ?Sized>(
    problem: &P,
    original: &ScenarioSet,
    reduced: &ReducedScenarioSet,
    x_star: &[f64],
    x_tilde: &[f64],
    limits: &SolverLimits,
) -> Result<f64, ModelError> {
    let mut worst: f64 = 0.0;
    for x in [x_star, x_tilde] {
        let f = expected_cost(problem, x, original, limits)?;
        let f_tilde = reduced_expected_cost(problem, x, reduced, limits)?;
        worst = worst.max((f_tilde - f).abs());
    }
    Ok(2.0 * worst)
}

/// Probability-weighted population moments. Skewness and kurtosis are
/// `None` for a distribution without spread.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub std: f64,
    pub skewness: Option<f64>,
    pub kurtosis: Option<f64>,
}

/// Below this variance (relative to the squared mean) the distribution is
/// treated as a point mass.
const DEGENERATE_VARIANCE: f64 = 1e-24;

pub fn weighted_moments(values: &[f64], weights: &[f64]) -> Moments {
    let mass: f64 = weights.iter().sum();
    let mean = values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / mass;
    let central = |p: i32| values.iter().zip(weights).map(|(v, w)| w * (v - mean).powi(p)).sum::<f64>() / mass;
    let var = central(2);
    if var <= DEGENERATE_VARIANCE * mean.powi(2).max(1.0) {
        return Moments { mean, std: 0.0, skewness: None, kurtosis: None };
    }
    Moments {
        mean,
        std: var.sqrt(),
        skewness: Some(central(3) / var.powf(1.5)),
        kurtosis: Some(central(4) / (var * var)),
    }
}

/// Reduced minus original moments of the per-scenario total
/// `T = Σ_d ξ_d` (total demand for network design).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentDelta {
    pub mean: f64,
    pub std: f64,
    pub skewness: Option<f64>,
    pub kurtosis: Option<f64>,
}

pub fn moment_deltas(original: &ScenarioSet, reduced: &ReducedScenarioSet) -> MomentDelta {
    let totals: Vec<f64> = original.scenarios().iter().map(|s| s.iter().sum()).collect();
    let before = weighted_moments(&totals, original.probabilities());
    let totals: Vec<f64> = reduced.scenarios.iter().map(|s| s.values.iter().sum()).collect();
    let after = weighted_moments(&totals, &reduced.probabilities);
    let diff = |a: Option<f64>, b: Option<f64>| Some(a? - b?);
    MomentDelta {
        mean: after.mean - before.mean,
        std: after.std - before.std,
        skewness: diff(after.skewness, before.skewness),
        kurtosis: diff(after.kurtosis, before.kurtosis),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub method: String,
    pub k: usize,
    pub instances: usize,
    /// Percentage of instances with score at most each threshold.
    pub within: Vec<f64>,
}

/// Per `(method, K)`, the share of reports whose relative error (or gap)
/// is at most each threshold, in percent. Reports without a score count as
/// misses.
pub fn threshold_table(reports: &[EvaluationReport], thresholds_pct: &[f64]) -> Vec<ThresholdRow> {
    let mut groups: BTreeMap<(String, usize), Vec<Option<f64>>> = BTreeMap::new();
    for r in reports {
        groups.entry((r.method.clone(), r.k)).or_default().push(r.score_pct());
    }
    groups
        .into_iter()
        .map(|((method, k), scores)| {
            let within = thresholds_pct
                .iter()
                .map(|&t| {
                    100.0 * scores.iter().filter(|s| s.is_some_and(|s| s <= t)).count() as f64 / scores.len() as f64
                })
                .collect();
            ThresholdRow { method, k, instances: scores.len(), within }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ReducedScenario, ScenarioDomain};

    fn report(method: &str, k: usize, err: f64) -> EvaluationReport {
        EvaluationReport {
            instance: String::new(),
            family: "test".into(),
            method: method.into(),
            k,
            regime: Regime::Error,
            original_objective: 1.0,
            original_bound: 1.0,
            original_status: SolveStatus::Optimal,
            x_tilde: vec![],
            approx_objective: 1.0,
            approx_status: SolveStatus::Optimal,
            true_cost: 1.0 + err / 100.0,
            absolute_error: Some(err / 100.0),
            relative_error_pct: Some(err),
            gap_pct: 0.0,
            two_point_bound: 0.0,
            timings: Timings::default(),
        }
    }

    #[test]
    fn threshold_counting() {
        let reports: Vec<_> = [1.0, 3.0, 9.0, 30.0].iter().map(|&e| report("m", 2, e)).collect();
        let t = threshold_table(&reports, &[10.0, 2.0]);
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].within, vec![75.0, 25.0]);
        let zeros: Vec<_> = (0..3).map(|_| report("m", 2, 0.0)).collect();
        assert_eq!(threshold_table(&zeros, &[10.0, 2.0])[0].within, vec![100.0, 100.0]);
    }

    #[test]
    fn identity_moments_vanish() {
        let set = ScenarioSet::equiprobable(vec![vec![1.0, 2.0], vec![0.0, 7.0], vec![3.0, 3.0]], ScenarioDomain::Real)
            .unwrap();
        let d = moment_deltas(&set, &ReducedScenarioSet::identity(&set));
        assert_eq!((d.mean, d.std, d.skewness, d.kurtosis), (0.0, 0.0, Some(0.0), Some(0.0)));
    }

    #[test]
    fn single_scenario_loses_all_spread() {
        let set = ScenarioSet::equiprobable(vec![vec![1.0], vec![3.0]], ScenarioDomain::Real).unwrap();
        let one = ReducedScenarioSet::new("x", vec![ReducedScenario { values: vec![1.0], origin: Some(0) }], vec![1.0])
            .unwrap();
        let d = moment_deltas(&set, &one);
        assert_eq!(d.std, -1.0);
        assert_eq!(d.mean, -1.0);
        assert!(d.skewness.is_none() && d.kurtosis.is_none());
    }

    #[test]
    fn ranks_share_ties() {
        let costs = [3.0, 1.0, 2.0, 2.0];
        assert_eq!(rank_of(1.0, &costs, 1e-9), 1);
        assert_eq!(rank_of(2.0, &costs, 1e-9), 2);
        assert_eq!(rank_of(3.0, &costs, 1e-9), 4);
    }

    #[test]
    fn known_moments() {
        let m = weighted_moments(&[0.0, 0.0, 0.0, 4.0], &[0.25; 4]);
        assert_eq!(m.mean, 1.0);
        assert!((m.std - 3.0_f64.sqrt()).abs() < 1e-15);
        // central moments 3, 6, 21 → skew 6/3^1.5, kurt 21/9
        assert!((m.skewness.unwrap() - 6.0 / 3.0_f64.powf(1.5)).abs() < 1e-12);
        assert!((m.kurtosis.unwrap() - 21.0 / 9.0).abs() < 1e-12);
    }
}
