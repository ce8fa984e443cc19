//! Concrete problem families and the instance file format.

mod flp;
mod ndp;
mod toy;

use cssc_solver::{SolveResult, SolveStatus};
use serde::{Deserialize, Serialize};

pub use flp::{flp_build_extensive, generate_flp, CostProfile, FacilityLocationInstance, FlpSpec};
pub use ndp::{generate_ndp, ndp_build_extensive, DemandLaw, NdpSpec, NetworkDesignInstance};
pub use toy::{ToyProblem, TOY_SCENARIOS};

use crate::lshaped;
use crate::model::{FirstStageSolution, ModelError, ScenarioSet, TwoStageProblem};

/// Any problem the toolkit can read from or write to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Instance {
    Toy(ToyProblem),
    Ndp(NetworkDesignInstance),
    Flp(FacilityLocationInstance),
}

impl Instance {
    pub fn family(&self) -> &'static str {
        self.problem().family()
    }

    pub fn problem(&self) -> &dyn TwoStageProblem {
        match self {
            Instance::Toy(p) => p,
            Instance::Ndp(p) => p,
            Instance::Flp(p) => p,
        }
    }

    pub fn scenarios(&self) -> &ScenarioSet {
        self.problem().scenarios()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instances serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let inst: Instance = serde_json::from_str(text).map_err(|e| ModelError::InvalidInstance(e.to_string()))?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            Instance::Toy(p) => p.scenarios().validate(),
            Instance::Ndp(p) => p.validate(),
            Instance::Flp(p) => p.validate(),
        }
    }
}

/// Turns a finished MIP solve into a first-stage solution over the leading
/// `dim` columns.
pub(crate) fn solution_from_mip(res: SolveResult, dim: usize, context: &str) -> Result<FirstStageSolution, ModelError> {
    match res.status {
        SolveStatus::Infeasible => Err(ModelError::RecourseInfeasible(context.to_string())),
        SolveStatus::Unbounded => Err(ModelError::InvalidInstance(format!("{context}: unbounded"))),
        status if !res.has_solution() => Err(ModelError::Limit { status, context: context.to_string() }),
        status => Ok(FirstStageSolution {
            x: res.x[..dim].to_vec(),
            objective: res.objective,
            best_bound: res.best_bound,
            status,
            provenance: context.to_string(),
            degenerate: res.degenerate,
        }),
    }
}

pub(crate) fn solution_from_lshaped(out: lshaped::Outcome, context: &str) -> FirstStageSolution {
    FirstStageSolution {
        x: out.x,
        objective: out.objective,
        best_bound: out.best_bound,
        status: out.status,
        provenance: context.to_string(),
        degenerate: out.degenerate,
    }
}

/// Fails unless an exact second-stage solve finished.
pub(crate) fn exact_value(res: &SolveResult, context: &str) -> Result<f64, ModelError> {
    match res.status {
        SolveStatus::Optimal => Ok(res.objective),
        SolveStatus::Infeasible => Err(ModelError::RecourseInfeasible(context.to_string())),
        SolveStatus::Unbounded => Err(ModelError::InvalidInstance(format!("{context}: unbounded recourse"))),
        status => Err(ModelError::Limit { status, context: context.to_string() }),
    }
}

pub(crate) fn check_weights(scenarios: &[&[f64]], weights: &[f64]) -> Result<(), ModelError> {
    if scenarios.is_empty() || scenarios.len() != weights.len() {
        return Err(ModelError::InvalidScenarios(format!(
            "{} scenarios with {} weights",
            scenarios.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(ModelError::InvalidScenarios("weights must be non-negative".into()));
    }
    Ok(())
}
