//! The four-scenario toy problem with a scalar first stage.
//!
//! `F(x, ξ) = min 2t₁ + 3t₂ − y₁ξ¹ − y₂ξ²` subject to `t₁ ≥ |x + y₁ξ¹|`,
//! `t₂ ≥ |x − y₂ξ²|`, `y ∈ {−1, 1}²`. Each sign variable is stored as
//! `y = 2b − 1` with `b` binary, and `x` is boxed to `[−100, 100]`.

use cssc_solver::{solve_lp, solve_mip, MixedBinaryProgram, Sense, SolverLimits};
use serde::{Deserialize, Serialize};

use super::{check_weights, exact_value, solution_from_mip};
use crate::model::{FirstStageSolution, ModelError, ScenarioDomain, ScenarioSet, SolveMode, TwoStageProblem};

pub const TOY_SCENARIOS: [[f64; 2]; 4] = [[0.0, 0.9], [0.0, -1.0], [1.1, 0.0], [-1.0, 0.0]];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyProblem {
    pub x_bound: f64,
    pub scenarios: ScenarioSet,
}

impl Default for ToyProblem {
    fn default() -> Self {
        Self::new()
    }
}

impl ToyProblem {
    pub fn new() -> Self {
        let rows = TOY_SCENARIOS.iter().map(|r| r.to_vec()).collect();
        Self::with_scenarios(ScenarioSet::equiprobable(rows, ScenarioDomain::Real).expect("toy scenarios are valid"))
    }

    /// Same cost structure over an arbitrary set of two-dimensional scenarios.
    pub fn with_scenarios(scenarios: ScenarioSet) -> Self {
        Self { x_bound: 100.0, scenarios }
    }

    /// Extensive form over weighted scenarios. Column 0 is `x`; a fixed `x`
    /// collapses its bounds so the program becomes a pure second stage.
    pub fn program(&self, scenarios: &[&[f64]], weights: &[f64], fixed_x: Option<f64>) -> MixedBinaryProgram {
        let mut mip = MixedBinaryProgram::new();
        let (lo, hi) = fixed_x.map_or((-self.x_bound, self.x_bound), |v| (v, v));
        let x = mip.add_named_var("x", 0.0, lo, hi);
        let mut offset = 0.0;
        for (k, (s, &w)) in scenarios.iter().zip(weights).enumerate() {
            let (a, b) = (s[0], s[1]);
            let t1 = mip.add_named_var(format!("t1_{k}"), 2.0 * w, 0.0, f64::INFINITY);
            let t2 = mip.add_named_var(format!("t2_{k}"), 3.0 * w, 0.0, f64::INFINITY);
            let b1 = mip.add_named_binary(format!("b1_{k}"), -2.0 * a * w);
            let b2 = mip.add_named_binary(format!("b2_{k}"), -2.0 * b * w);
            offset += w * (a + b);
            mip.add_row(&[(x, 1.0), (b1, 2.0 * a), (t1, -1.0)], Sense::Le, a);
            mip.add_row(&[(x, 1.0), (b1, 2.0 * a), (t1, 1.0)], Sense::Ge, a);
            mip.add_row(&[(x, 1.0), (b2, -2.0 * b), (t2, -1.0)], Sense::Le, -b);
            mip.add_row(&[(x, 1.0), (b2, -2.0 * b), (t2, 1.0)], Sense::Ge, -b);
        }
        mip.lp.set_objective_offset(offset);
        mip
    }
}

impl TwoStageProblem for ToyProblem {
    fn family(&self) -> &'static str {
        "toy"
    }

    fn scenarios(&self) -> &ScenarioSet {
        &self.scenarios
    }

    fn first_stage_dim(&self) -> usize {
        1
    }

    fn check_scenario(&self, values: &[f64]) -> Result<(), ModelError> {
        if values.len() != 2 || values.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::DomainViolation(format!("toy scenarios are finite pairs, got {values:?}")));
        }
        Ok(())
    }

    fn evaluate(&self, x: &[f64], scenario: &[f64], limits: &SolverLimits) -> Result<f64, ModelError> {
        self.check_scenario(scenario)?;
        if x.len() != 1 || x[0].abs() > self.x_bound {
            return Err(ModelError::InvalidInstance(format!("toy first stage out of range: {x:?}")));
        }
        let mip = self.program(&[scenario], &[1.0], Some(x[0]));
        exact_value(&solve_mip(&mip, limits)?, "toy second stage")
    }

    fn solve_weighted(
        &self,
        scenarios: &[&[f64]],
        weights: &[f64],
        mode: SolveMode,
        limits: &SolverLimits,
    ) -> Result<FirstStageSolution, ModelError> {
        check_weights(scenarios, weights)?;
        for s in scenarios {
            self.check_scenario(s)?;
        }
        let mip = self.program(scenarios, weights, None);
        let res = match mode {
            SolveMode::Exact => solve_mip(&mip, limits)?,
            SolveMode::Relaxed => solve_lp(&mip.lp, limits)?,
        };
        solution_from_mip(res, 1, "toy extensive form")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Closed form of the second stage by enumerating both signs.
    fn oracle(x: f64, a: f64, b: f64) -> f64 {
        let first = [-1.0, 1.0].iter().map(|y| 2.0 * (x + y * a).abs() - y * a).fold(f64::INFINITY, f64::min);
        let second = [-1.0, 1.0].iter().map(|y| 3.0 * (x - y * b).abs() - y * b).fold(f64::INFINITY, f64::min);
        first + second
    }

    #[test]
    fn evaluation_matches_closed_form() {
        let toy = ToyProblem::new();
        let limits = SolverLimits::default();
        for x in [-1.3, -0.5, 0.0, 0.25, 0.9, 1.0, 2.0] {
            for s in TOY_SCENARIOS {
                let got = toy.evaluate(&[x], &s, &limits).unwrap();
                assert!((got - oracle(x, s[0], s[1])).abs() < 1e-9, "x={x} s={s:?}");
            }
        }
    }

    #[test]
    fn rejects_out_of_box_first_stage() {
        let toy = ToyProblem::new();
        assert!(toy.evaluate(&[101.0], &[0.0, 0.0], &SolverLimits::default()).is_err());
    }
}
