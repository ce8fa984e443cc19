//! Two-stage stochastic facility location with random customer presence.
//!
//! First stage opens at most `v` facilities. Once the set of present
//! customers is known, each one is matched to exactly one open facility;
//! load above the capacity `u` is bought at the overflow penalty `b_f`, up to
//! the big-M cap.

use cssc_solver::{solve_mip, MixedBinaryProgram, Sense, SolverLimits, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_weights, exact_value, solution_from_lshaped, solution_from_mip};
use crate::lshaped::{self, Recourse, RecourseOracle};
use crate::model::{
    FirstStageSolution, ModelError, ReducedScenario, ReducedScenarioSet, ScenarioDomain, ScenarioSet, SolveMode,
    TwoStageProblem,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostProfile {
    pub open_cost_min: f64,
    pub open_cost_max: f64,
    /// Matching cost per unit of Euclidean distance.
    pub distance_scale: f64,
    pub consumption: f64,
    pub overflow_penalty: f64,
    /// Capacity is `ceil(load_factor · |C| / v)` unless given explicitly.
    pub load_factor: f64,
}

impl Default for CostProfile {
    fn default() -> Self {
        Self {
            open_cost_min: 40.0,
            open_cost_max: 80.0,
            distance_scale: 10.0,
            consumption: 1.0,
            overflow_penalty: 1000.0,
            load_factor: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlpSpec {
    pub facilities: usize,
    pub customers: usize,
    pub scenarios: usize,
    /// Facility budget `v`.
    pub budget: usize,
    #[serde(default)]
    pub capacity: Option<u64>,
    pub seed: u64,
    #[serde(default)]
    pub profile: CostProfile,
}

impl FlpSpec {
    /// Budget defaults to a third of the candidate sites, rounded up.
    pub fn new(facilities: usize, customers: usize, scenarios: usize, seed: u64) -> Self {
        Self {
            facilities,
            customers,
            scenarios,
            budget: facilities.div_ceil(3).max(1),
            capacity: None,
            seed,
            profile: CostProfile::default(),
        }
    }

    pub fn resolved_capacity(&self) -> f64 {
        match self.capacity {
            Some(u) => u as f64,
            None => (self.profile.load_factor * self.customers as f64 / self.budget as f64).ceil().max(1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacilityLocationInstance {
    #[serde(default)]
    pub generator: Option<FlpSpec>,
    pub facility_positions: Vec<[f64; 2]>,
    pub customer_positions: Vec<[f64; 2]>,
    pub open_cost: Vec<f64>,
    /// `matching_cost[c][f]`.
    pub matching_cost: Vec<Vec<f64>>,
    /// `consumption[c][f]`.
    pub consumption: Vec<Vec<f64>>,
    pub capacity: f64,
    pub budget: usize,
    pub overflow_penalty: Vec<f64>,
    pub big_m: f64,
    /// Presence `h_c` per customer, one row per scenario.
    pub scenarios: ScenarioSet,
}

pub fn generate_flp(spec: &FlpSpec) -> Result<FacilityLocationInstance, ModelError> {
    if spec.facilities == 0 || spec.customers == 0 || spec.scenarios == 0 || spec.budget == 0 {
        return Err(ModelError::InvalidInstance("facilities, customers, scenarios and budget must be positive".into()));
    }
    let p = &spec.profile;
    if !(p.open_cost_min > 0.0 && p.open_cost_min <= p.open_cost_max) {
        return Err(ModelError::InvalidInstance("invalid opening-cost range".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let point = |rng: &mut ChaCha8Rng| [rng.random::<f64>(), rng.random::<f64>()];
    let facility_positions: Vec<[f64; 2]> = (0..spec.facilities).map(|_| point(&mut rng)).collect();
    let customer_positions: Vec<[f64; 2]> = (0..spec.customers).map(|_| point(&mut rng)).collect();
    let open_cost = (0..spec.facilities)
        .map(|_| {
            if p.open_cost_min == p.open_cost_max {
                p.open_cost_min
            } else {
                rng.random_range(p.open_cost_min..p.open_cost_max)
            }
        })
        .collect();
    let presence: Vec<Vec<f64>> = (0..spec.scenarios)
        .map(|_| {
            let pi = rng.random_range(0.2..0.8);
            (0..spec.customers).map(|_| if rng.random_bool(pi) { 1.0 } else { 0.0 }).collect()
        })
        .collect();
    let matching_cost = customer_positions
        .iter()
        .map(|c| facility_positions.iter().map(|f| p.distance_scale * (c[0] - f[0]).hypot(c[1] - f[1])).collect())
        .collect();
    let consumption = vec![vec![p.consumption; spec.facilities]; spec.customers];
    let scenarios = ScenarioSet::equiprobable(presence, ScenarioDomain::Binary)?;
    let mut inst = FacilityLocationInstance::new(
        facility_positions,
        customer_positions,
        open_cost,
        matching_cost,
        consumption,
        spec.resolved_capacity(),
        spec.budget,
        vec![p.overflow_penalty; spec.facilities],
        scenarios,
    )?;
    inst.generator = Some(spec.clone());
    Ok(inst)
}

impl FacilityLocationInstance {
    /// Sets `M` to the largest total consumption any facility could face.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        facility_positions: Vec<[f64; 2]>,
        customer_positions: Vec<[f64; 2]>,
        open_cost: Vec<f64>,
        matching_cost: Vec<Vec<f64>>,
        consumption: Vec<Vec<f64>>,
        capacity: f64,
        budget: usize,
        overflow_penalty: Vec<f64>,
        scenarios: ScenarioSet,
    ) -> Result<Self, ModelError> {
        let nf = open_cost.len();
        let big_m = (0..nf).map(|f| consumption.iter().map(|row| row[f]).sum::<f64>()).fold(0.0, f64::max);
        let inst = Self {
            generator: None,
            facility_positions,
            customer_positions,
            open_cost,
            matching_cost,
            consumption,
            capacity,
            budget,
            overflow_penalty,
            big_m,
            scenarios,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn num_facilities(&self) -> usize {
        self.open_cost.len()
    }

    pub fn num_customers(&self) -> usize {
        self.matching_cost.len()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidInstance(m.to_string()));
        let (nf, nc) = (self.num_facilities(), self.num_customers());
        if nf == 0 || self.overflow_penalty.len() != nf || self.facility_positions.len() != nf {
            return bad("per-facility vectors disagree");
        }
        if self.customer_positions.len() != nc || self.consumption.len() != nc {
            return bad("per-customer vectors disagree");
        }
        if self.matching_cost.iter().chain(&self.consumption).any(|row| row.len() != nf) {
            return bad("customer-facility matrices must be |C| x |F|");
        }
        if self.budget == 0 || self.capacity <= 0.0 || self.capacity.fract() != 0.0 {
            return bad("capacity and budget must be positive integers");
        }
        for f in 0..nf {
            let load: f64 = self.consumption.iter().map(|row| row[f]).sum();
            if self.big_m < load {
                return bad("big-M is below a facility's total consumption");
            }
        }
        self.scenarios.validate()?;
        if self.scenarios.domain() != ScenarioDomain::Binary || self.scenarios.dim() != nc {
            return bad("presence scenarios must be binary with one entry per customer");
        }
        Ok(())
    }

    /// True when some original scenario has a present customer, in which
    /// case at least one facility must be open for the recourse to exist.
    pub fn needs_open_facility(&self) -> bool {
        self.scenarios.scenarios().iter().flatten().any(|h| *h > 0.5)
    }

    fn present(scenario: &[f64]) -> Vec<usize> {
        (0..scenario.len()).filter(|&c| scenario[c] > 0.5).collect()
    }

    /// Second stage at a fixed (possibly fractional) `x`. Columns are `y_cf`
    /// for present customers (customer-major), capped by `x_f`, then `z_f`.
    fn second_stage(&self, x: &[f64], present: &[usize]) -> (MixedBinaryProgram, Vec<usize>) {
        let nf = self.num_facilities();
        let mut mip = MixedBinaryProgram::new();
        let y: Vec<Vec<Var>> = present
            .iter()
            .map(|&c| {
                (0..nf)
                    .map(|f| {
                        let v = mip.add_binary(self.matching_cost[c][f]);
                        mip.lp.set_bounds(v, 0.0, x[f]);
                        v
                    })
                    .collect()
            })
            .collect();
        let z: Vec<Var> = (0..nf).map(|f| mip.add_var(self.overflow_penalty[f], 0.0, self.big_m * x[f])).collect();
        for row in &y {
            let terms: Vec<_> = row.iter().map(|&v| (v, 1.0)).collect();
            mip.add_row(&terms, Sense::Eq, 1.0);
        }
        let mut cap_rows = Vec::with_capacity(nf);
        for f in 0..nf {
            let mut terms: Vec<_> = present.iter().zip(&y).map(|(&c, row)| (row[f], self.consumption[c][f])).collect();
            terms.push((z[f], -1.0));
            cap_rows.push(mip.lp.num_rows());
            mip.add_row(&terms, Sense::Le, self.capacity * x[f]);
        }
        (mip, cap_rows)
    }

    fn check_design(&self, x: &[f64]) -> Result<(), ModelError> {
        if x.len() != self.num_facilities() || x.iter().any(|v| *v != 0.0 && *v != 1.0) {
            return Err(ModelError::InvalidInstance(format!(
                "facility decision must be {} binary entries",
                self.num_facilities()
            )));
        }
        if x.iter().sum::<f64>() > self.budget as f64 {
            return Err(ModelError::InvalidInstance("more facilities open than the budget allows".into()));
        }
        Ok(())
    }

    /// Opens the (at most `v`) facilities with the largest positive values,
    /// lowest index first among ties.
    pub fn round_largest(&self, x: &[f64]) -> Vec<f64> {
        let mut order: Vec<usize> = (0..x.len()).filter(|&f| x[f] > 1e-9).collect();
        order.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
        let mut out = vec![0.0; x.len()];
        for &f in order.iter().take(self.budget) {
            out[f] = 1.0;
        }
        out
    }
}

impl RecourseOracle for FacilityLocationInstance {
    fn first_stage_costs(&self) -> &[f64] {
        &self.open_cost
    }

    fn first_stage_rows(&self) -> Vec<(Vec<(usize, f64)>, Sense, f64)> {
        let all: Vec<(usize, f64)> = (0..self.num_facilities()).map(|f| (f, 1.0)).collect();
        let mut rows = vec![(all.clone(), Sense::Le, self.budget as f64)];
        if self.needs_open_facility() {
            rows.push((all, Sense::Ge, 1.0));
        }
        rows
    }

    fn recourse(&self, x: &[f64], scenario: &[f64], limits: &SolverLimits) -> Result<Recourse, ModelError> {
        let nf = self.num_facilities();
        let present = Self::present(scenario);
        if present.is_empty() {
            return Ok(Recourse { value: 0.0, gradient: vec![0.0; nf] });
        }
        let (mip, cap_rows) = self.second_stage(x, &present);
        let res = cssc_solver::solve_lp(&mip.lp, limits)?;
        let value = exact_value(&res, "facility location recourse")?;
        let mut gradient: Vec<f64> = (0..nf).map(|f| res.duals[cap_rows[f]] * self.capacity).collect();
        for (f, g) in gradient.iter_mut().enumerate() {
            for k in 0..present.len() {
                *g += res.reduced_costs[k * nf + f].min(0.0);
            }
            *g += res.reduced_costs[present.len() * nf + f].min(0.0) * self.big_m;
        }
        Ok(Recourse { value, gradient })
    }

    fn exact_recourse(&self, x: &[f64], scenario: &[f64], limits: &SolverLimits) -> Result<f64, ModelError> {
        let present = Self::present(scenario);
        if present.is_empty() {
            return Ok(0.0);
        }
        let (mip, _) = self.second_stage(x, &present);
        exact_value(&solve_mip(&mip, limits)?, "facility location second stage")
    }

    fn round(&self, x: &[f64]) -> Option<Vec<f64>> {
        let mut out: Vec<f64> = x.iter().map(|v| if *v >= 0.5 { 1.0 } else { 0.0 }).collect();
        if out.iter().sum::<f64>() > self.budget as f64 || (self.needs_open_facility() && out.iter().all(|v| *v == 0.0))
        {
            out = self.round_largest(x);
        }
        Some(out)
    }
}

impl TwoStageProblem for FacilityLocationInstance {
    fn family(&self) -> &'static str {
        "flp"
    }

    fn scenarios(&self) -> &ScenarioSet {
        &self.scenarios
    }

    fn first_stage_dim(&self) -> usize {
        self.num_facilities()
    }

    fn check_scenario(&self, values: &[f64]) -> Result<(), ModelError> {
        if values.len() != self.num_customers() || values.iter().any(|v| *v != 0.0 && *v != 1.0) {
            return Err(ModelError::DomainViolation(
                "facility location needs binary presence scenarios; fractional presence makes the assignment \
                 constraints infeasible, so only methods whose scenarios stay binary apply"
                    .into(),
            ));
        }
        Ok(())
    }

    fn evaluate(&self, x: &[f64], scenario: &[f64], limits: &SolverLimits) -> Result<f64, ModelError> {
        self.check_design(x)?;
        self.check_scenario(scenario)?;
        let first: f64 = self.open_cost.iter().zip(x).map(|(c, v)| c * v).sum();
        Ok(first + self.exact_recourse(x, scenario, limits)?)
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
        match mode {
            SolveMode::Exact => {
                if scenarios.len() <= EXTENSIVE_MAX_SCENARIOS {
                    if let Some(sol) = self.solve_extensive_form(scenarios, weights, limits)? {
                        return Ok(sol);
                    }
                }
                let out = lshaped::solve(self, scenarios, weights, limits, false)?;
                Ok(solution_from_lshaped(out, "facility location"))
            }
            SolveMode::Relaxed => {
                let out = lshaped::solve(self, scenarios, weights, limits, true)?;
                let mut x = self.round_largest(&out.x);
                if self.needs_open_facility() && x.iter().all(|v| *v == 0.0) {
                    let cheapest =
                        (0..x.len()).min_by(|&a, &b| self.open_cost[a].total_cmp(&self.open_cost[b])).unwrap_or(0);
                    x[cheapest] = 1.0;
                }
                let mut objective = 0.0;
                for (s, w) in scenarios.iter().zip(weights) {
                    objective += w * self.evaluate(&x, s, limits)?;
                }
                let mut sol = solution_from_lshaped(out, "facility location (relaxed)");
                sol.x = x;
                sol.objective = objective;
                Ok(sol)
            }
        }
    }
}

/// Up to this many scenarios, exact solves first try the extensive MIP.
const EXTENSIVE_MAX_SCENARIOS: usize = 2;
/// Node budget of that first attempt before falling back to branch-and-cut.
const EXTENSIVE_MAX_NODES: usize = 20_000;

impl FacilityLocationInstance {
    /// The extensive MIP under a node budget; `None` unless proven optimal.
    fn solve_extensive_form(
        &self,
        scenarios: &[&[f64]],
        weights: &[f64],
        limits: &SolverLimits,
    ) -> Result<Option<FirstStageSolution>, ModelError> {
        let rows = scenarios.iter().map(|s| ReducedScenario { values: s.to_vec(), origin: None }).collect();
        let reduced = ReducedScenarioSet::new("extensive", rows, weights.to_vec())?;
        let mip = flp_build_extensive(self, &reduced)?;
        let capped = SolverLimits { max_nodes: limits.max_nodes.min(EXTENSIVE_MAX_NODES), ..limits.clone() };
        let res = solve_mip(&mip, &capped)?;
        if !res.status.is_optimal() {
            return Ok(None);
        }
        solution_from_mip(res, self.num_facilities(), "facility location (extensive)").map(Some)
    }
}

/// Extensive form over a binary reduced set: `x_f` binary, then per scenario
/// the binary matches `y_cf` of present customers and the overflow `z_f`.
pub fn flp_build_extensive(
    inst: &FacilityLocationInstance,
    reduced: &ReducedScenarioSet,
) -> Result<MixedBinaryProgram, ModelError> {
    for s in &reduced.scenarios {
        inst.check_scenario(&s.values)?;
    }
    let nf = inst.num_facilities();
    let mut mip = MixedBinaryProgram::new();
    let x: Vec<Var> = (0..nf).map(|f| mip.add_named_binary(format!("x_{f}"), inst.open_cost[f])).collect();
    let all: Vec<_> = x.iter().map(|&v| (v, 1.0)).collect();
    mip.add_row(&all, Sense::Le, inst.budget as f64);
    if inst.needs_open_facility() {
        mip.add_row(&all, Sense::Ge, 1.0);
    }
    for (k, (s, &p)) in reduced.scenarios.iter().zip(&reduced.probabilities).enumerate() {
        let present = FacilityLocationInstance::present(&s.values);
        let y: Vec<Vec<Var>> = present
            .iter()
            .map(|&c| {
                (0..nf).map(|f| mip.add_named_binary(format!("y_{c}_{f}_{k}"), p * inst.matching_cost[c][f])).collect()
            })
            .collect();
        let z: Vec<Var> = (0..nf)
            .map(|f| mip.add_named_var(format!("z_{f}_{k}"), p * inst.overflow_penalty[f], 0.0, f64::INFINITY))
            .collect();
        for f in 0..nf {
            let mut terms: Vec<_> = present.iter().zip(&y).map(|(&c, row)| (row[f], inst.consumption[c][f])).collect();
            terms.push((x[f], -inst.capacity));
            terms.push((z[f], -1.0));
            mip.add_row(&terms, Sense::Le, 0.0);
            mip.add_row(&[(z[f], 1.0), (x[f], -inst.big_m)], Sense::Le, 0.0);
        }
        for row in &y {
            let terms: Vec<_> = row.iter().map(|&v| (v, 1.0)).collect();
            mip.add_row(&terms, Sense::Eq, 1.0);
        }
    }
    Ok(mip)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(presence: Vec<f64>, capacity: f64) -> FacilityLocationInstance {
        let nc = presence.len();
        let set = ScenarioSet::equiprobable(vec![presence], ScenarioDomain::Binary).unwrap();
        FacilityLocationInstance::new(
            vec![[0.0, 0.0]],
            vec![[0.5, 0.5]; nc],
            vec![50.0],
            (0..nc).map(|c| vec![2.0 + c as f64]).collect(),
            vec![vec![1.0]; nc],
            capacity,
            1,
            vec![1000.0],
            set,
        )
        .unwrap()
    }

    fn solve_both(inst: &FacilityLocationInstance) -> (f64, f64) {
        let red = ReducedScenarioSet::identity(&inst.scenarios);
        let mip = flp_build_extensive(inst, &red).unwrap();
        let direct = exact_value(&solve_mip(&mip, &SolverLimits::default()).unwrap(), "test").unwrap();
        let rows: Vec<&[f64]> = inst.scenarios.scenarios().iter().map(|r| r.as_slice()).collect();
        let sol = inst
            .solve_weighted(&rows, inst.scenarios.probabilities(), SolveMode::Exact, &SolverLimits::default())
            .unwrap();
        (direct, sol.objective)
    }

    #[test]
    fn all_absent_opens_nothing() {
        let inst = tiny(vec![0.0, 0.0], 1.0);
        let (direct, decomposed) = solve_both(&inst);
        assert_eq!(direct, 0.0);
        assert_eq!(decomposed, 0.0);
    }

    #[test]
    fn single_customer_within_capacity() {
        let inst = tiny(vec![1.0], 1.0);
        let (direct, decomposed) = solve_both(&inst);
        assert!((direct - 52.0).abs() < 1e-9);
        assert!((decomposed - 52.0).abs() < 1e-9);
    }

    #[test]
    fn overflow_is_penalized() {
        let inst = tiny(vec![1.0, 1.0], 1.0);
        let (direct, decomposed) = solve_both(&inst);
        let expected = 50.0 + 2.0 + 3.0 + 1000.0;
        assert!((direct - expected).abs() < 1e-9);
        assert!((decomposed - expected).abs() < 1e-9);
    }

    #[test]
    fn fractional_presence_is_rejected() {
        let inst = tiny(vec![1.0, 0.0], 1.0);
        let red = ReducedScenarioSet::new(
            "kmeans",
            vec![crate::model::ReducedScenario { values: vec![0.5, 0.0], origin: None }],
            vec![1.0],
        )
        .unwrap();
        assert!(matches!(flp_build_extensive(&inst, &red), Err(ModelError::DomainViolation(_))));
    }

    #[test]
    fn generator_follows_cost_profile() {
        let inst = generate_flp(&FlpSpec::new(15, 75, 20, 3)).unwrap();
        assert_eq!(inst.budget, 5);
        assert_eq!(inst.capacity, 12.0);
        assert_eq!(inst.big_m, 75.0);
        assert!(inst.open_cost.iter().all(|c| (40.0..80.0).contains(c)));
        for (c, pos) in inst.customer_positions.iter().enumerate() {
            for (f, fp) in inst.facility_positions.iter().enumerate() {
                let d = 10.0 * (pos[0] - fp[0]).hypot(pos[1] - fp[1]);
                assert!((inst.matching_cost[c][f] - d).abs() < 1e-12);
            }
        }
        assert_eq!(inst.scenarios.domain(), ScenarioDomain::Binary);
    }
}
