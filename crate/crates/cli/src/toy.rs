//! End-to-end run of the four-scenario toy problem.

use std::fmt;

use cssc_core::cssc::{build_matrix, OpportunityCostMatrix};
use cssc_core::evaluation::{implementation_error, solve_original};
use cssc_core::model::{ModelError, SolveMode};
use cssc_core::problems::{Instance, ToyProblem};
use cssc_solver::SolverLimits;
use serde::{Deserialize, Serialize};

use crate::methods::{reduce, Method, ReduceOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyMethod {
    pub method: String,
    /// Zero-based scenario indices per cluster.
    pub clusters: Vec<Vec<usize>>,
    pub scenarios: Vec<Vec<f64>>,
    pub origins: Vec<Option<usize>>,
    pub probabilities: Vec<f64>,
    pub x_tilde: f64,
    pub approx_objective: f64,
    pub true_cost: f64,
    pub absolute_error: f64,
    pub relative_error_pct: f64,
    pub two_point_bound: f64,
    /// Discrepancy for CSSC, the clustering cost for the baselines.
    pub partition_objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToySummary {
    pub matrix: Vec<Vec<f64>>,
    pub x_star: f64,
    pub v_star: f64,
    pub k: usize,
    pub methods: Vec<ToyMethod>,
}

pub fn run_toy(k: usize, seed: u64, limits: &SolverLimits) -> Result<ToySummary, ModelError> {
    let instance = Instance::Toy(ToyProblem::new());
    let matrix: OpportunityCostMatrix = build_matrix(instance.problem(), SolveMode::Exact, limits)?;
    let original = solve_original(instance.problem(), limits)?;
    let mut methods = Vec::new();
    for method in [Method::Cssc, Method::Kmeans, Method::Kmedians, Method::Kmedoids, Method::Mc] {
        let mut opts = ReduceOptions::new(k, seed);
        opts.limits = limits.clone();
        let red = reduce(&instance, method, &opts, Some(&matrix))?;
        let rep = implementation_error(instance.problem(), &original, &red.reduced, limits)?;
        let clusters = match &red.partition {
            Some(p) => p.clusters.clone(),
            None => red.reduced.scenarios.iter().filter_map(|s| s.origin).map(|i| vec![i]).collect(),
        };
        methods.push(ToyMethod {
            method: method.name().to_string(),
            clusters,
            scenarios: red.reduced.scenarios.iter().map(|s| s.values.clone()).collect(),
            origins: red.reduced.scenarios.iter().map(|s| s.origin).collect(),
            probabilities: red.reduced.probabilities.clone(),
            x_tilde: rep.x_tilde[0],
            approx_objective: rep.approx_objective,
            true_cost: rep.true_cost,
            absolute_error: rep.absolute_error.unwrap_or(f64::NAN),
            relative_error_pct: rep.relative_error_pct.unwrap_or(f64::NAN),
            two_point_bound: rep.two_point_bound,
            partition_objective: red.partition.as_ref().map(|p| p.objective),
        });
    }
    Ok(ToySummary {
        matrix: matrix.values,
        x_star: original.solution.x[0],
        v_star: original.solution.objective,
        k,
        methods,
    })
}

/// Rounds away solver noise for display (`-0.0` and `1e-12` print as 0).
fn clean(v: f64) -> f64 {
    let r = (v * 1e9).round() / 1e9;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

impl fmt::Display for ToySummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "opportunity-cost matrix V[i][j] = F(x_i*, xi_j):")?;
        for row in &self.matrix {
            let cells: Vec<String> = row.iter().map(|v| format!("{:>6}", clean(*v))).collect();
            writeln!(f, "  {}", cells.join(" "))?;
        }
        writeln!(f, "original problem: x* = {}, v* = {}", clean(self.x_star), clean(self.v_star))?;
        writeln!(f, "K = {}", self.k)?;
        for m in &self.methods {
            let clusters: Vec<String> = m
                .clusters
                .iter()
                .map(|c| format!("{{{}}}", c.iter().map(|i| format!("xi{}", i + 1)).collect::<Vec<_>>().join(",")))
                .collect();
            let reps: Vec<String> = m
                .scenarios
                .iter()
                .zip(&m.origins)
                .zip(&m.probabilities)
                .map(|((s, o), p)| {
                    let label = match o {
                        Some(i) => format!("xi{}", i + 1),
                        None => format!("({})", s.iter().map(|v| clean(*v).to_string()).collect::<Vec<_>>().join(", ")),
                    };
                    format!("{label} p={}", clean(*p))
                })
                .collect();
            writeln!(f, "{}:", m.method)?;
            writeln!(f, "  clusters {}", clusters.join(" "))?;
            writeln!(f, "  reduced  {}", reps.join("; "))?;
            if let Some(obj) = m.partition_objective {
                writeln!(f, "  partition objective {}", clean(obj))?;
            }
            writeln!(
                f,
                "  x~* = {}, f~(x~*) = {}, f(x~*) = {}, error = {} ({}%), two-point bound = {}",
                clean(m.x_tilde),
                clean(m.approx_objective),
                clean(m.true_cost),
                clean(m.absolute_error),
                clean(m.relative_error_pct),
                clean(m.two_point_bound)
            )?;
        }
        Ok(())
    }
}
