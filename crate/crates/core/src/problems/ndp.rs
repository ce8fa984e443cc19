//! Two-stage stochastic multicommodity capacitated network design.
//!
//! First stage opens arcs; the second stage routes every commodity's demand
//! from origin to destination over open arcs. Each commodity may also be
//! outsourced at a unit cost far above any routing cost, which keeps every
//! design evaluable under every demand vector.

use std::collections::BTreeSet;

use cssc_solver::{LinearProgram, MixedBinaryProgram, Sense, SolverLimits, Var};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use super::{check_weights, exact_value, solution_from_lshaped};
use crate::lshaped::{self, Recourse, RecourseOracle};
use crate::model::{
    FirstStageSolution, ModelError, ReducedScenarioSet, ScenarioDomain, ScenarioSet, SolveMode, TwoStageProblem,
};

/// Outsourcing unit cost as a multiple of the largest transport cost.
pub const OUTSOURCING_FACTOR: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DemandLaw {
    /// Integer uniform on `{0, …, 10}`.
    Uniform,
    /// Lognormal with mean 1 and variance 1, rounded to the nearest integer.
    Lognormal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NdpSpec {
    pub vertices: usize,
    pub commodities: usize,
    pub arcs: usize,
    pub scenarios: usize,
    pub demand: DemandLaw,
    pub seed: u64,
}

impl NdpSpec {
    /// Uses the smallest vertex count whose complete digraph holds `arcs`.
    pub fn new(commodities: usize, arcs: usize, scenarios: usize, demand: DemandLaw, seed: u64) -> Self {
        let mut vertices = 2;
        while vertices * (vertices - 1) < arcs {
            vertices += 1;
        }
        Self { vertices, commodities, arcs, scenarios, demand, seed }
    }

    pub fn with_vertices(mut self, vertices: usize) -> Self {
        self.vertices = vertices;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let pairs = self.vertices * self.vertices.saturating_sub(1);
        let bad = |m: String| Err(ModelError::InvalidInstance(m));
        if self.vertices < 2 {
            return bad("at least two vertices are required".into());
        }
        if self.commodities == 0 || self.scenarios == 0 {
            return bad("commodities and scenarios must be positive".into());
        }
        if self.commodities > pairs {
            return bad(format!("{} commodities exceed the {pairs} ordered vertex pairs", self.commodities));
        }
        if self.arcs > pairs {
            return bad(format!("{} arcs exceed the {pairs} ordered vertex pairs", self.arcs));
        }
        if self.arcs < self.commodities {
            return bad(format!("{} arcs cannot carry a path for each of {} commodities", self.arcs, self.commodities));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkDesignInstance {
    #[serde(default)]
    pub generator: Option<NdpSpec>,
    pub vertices: usize,
    /// `[tail, head]` per arc.
    pub arcs: Vec<[usize; 2]>,
    /// `[origin, destination]` per commodity.
    pub commodities: Vec<[usize; 2]>,
    pub opening_cost: Vec<f64>,
    pub capacity: Vec<f64>,
    /// `transport_cost[a][c]`.
    pub transport_cost: Vec<Vec<f64>>,
    pub outsourcing_cost: f64,
    /// Demand per commodity, one row per scenario.
    pub scenarios: ScenarioSet,
}

pub fn generate_ndp(spec: &NdpSpec) -> Result<NetworkDesignInstance, ModelError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let v = spec.vertices;
    let pairs: Vec<[usize; 2]> = (0..v).flat_map(|i| (0..v).filter(move |&j| j != i).map(move |j| [i, j])).collect();

    let commodities: Vec<[usize; 2]> =
        sample(&mut rng, pairs.len(), spec.commodities).into_iter().map(|k| pairs[k]).collect();

    let mut forced = BTreeSet::new();
    for &[o, d] in &commodities {
        if v >= 3 {
            let mut w = rng.random_range(0..v - 2);
            for skip in [o.min(d), o.max(d)] {
                if w >= skip {
                    w += 1;
                }
            }
            forced.insert([o, w]);
            forced.insert([w, d]);
        } else {
            forced.insert([o, d]);
        }
    }
    if forced.len() > spec.arcs {
        forced = commodities.iter().copied().collect();
    }
    let rest: Vec<[usize; 2]> = pairs.iter().copied().filter(|p| !forced.contains(p)).collect();
    let fill = sample(&mut rng, rest.len(), spec.arcs - forced.len());
    let mut arcs: Vec<[usize; 2]> = forced.into_iter().chain(fill.into_iter().map(|k| rest[k])).collect();
    arcs.sort_unstable();

    let opening_cost = arcs.iter().map(|_| rng.random_range(3..=10) as f64).collect();
    let capacity = arcs.iter().map(|_| rng.random_range(10..=40) as f64).collect();
    let transport_cost: Vec<Vec<f64>> =
        arcs.iter().map(|_| (0..spec.commodities).map(|_| rng.random_range(5..=10) as f64).collect()).collect();

    let lognormal = LogNormal::new(-(2f64.ln()) / 2.0, 2f64.ln().sqrt()).expect("valid lognormal parameters");
    let demands: Vec<Vec<f64>> = (0..spec.scenarios)
        .map(|_| {
            (0..spec.commodities)
                .map(|_| match spec.demand {
                    DemandLaw::Uniform => rng.random_range(0..=10) as f64,
                    DemandLaw::Lognormal => lognormal.sample(&mut rng).round(),
                })
                .collect()
        })
        .collect();
    let scenarios = ScenarioSet::equiprobable(demands, ScenarioDomain::NonNegativeInteger)?;
    let mut inst = NetworkDesignInstance::new(v, arcs, commodities, opening_cost, capacity, transport_cost, scenarios)?;
    inst.generator = Some(spec.clone());
    Ok(inst)
}

impl NetworkDesignInstance {
    pub fn new(
        vertices: usize,
        arcs: Vec<[usize; 2]>,
        commodities: Vec<[usize; 2]>,
        opening_cost: Vec<f64>,
        capacity: Vec<f64>,
        transport_cost: Vec<Vec<f64>>,
        scenarios: ScenarioSet,
    ) -> Result<Self, ModelError> {
        let max_q = transport_cost.iter().flatten().fold(0.0f64, |m, q| m.max(*q));
        let inst = Self {
            generator: None,
            vertices,
            arcs,
            commodities,
            opening_cost,
            capacity,
            transport_cost,
            outsourcing_cost: OUTSOURCING_FACTOR * max_q,
            scenarios,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidInstance(m.to_string()));
        let na = self.arcs.len();
        if self.opening_cost.len() != na || self.capacity.len() != na || self.transport_cost.len() != na {
            return bad("per-arc vectors disagree with the arc count");
        }
        if self.transport_cost.iter().any(|row| row.len() != self.commodities.len()) {
            return bad("transport costs disagree with the commodity count");
        }
        if self.arcs.iter().chain(&self.commodities).any(|&[a, b]| a == b || a >= self.vertices || b >= self.vertices) {
            return bad("arc or commodity endpoints invalid");
        }
        let positive = |v: &f64| v.is_finite() && *v > 0.0;
        if !self.opening_cost.iter().all(positive)
            || !self.capacity.iter().all(positive)
            || !self.transport_cost.iter().flatten().all(positive)
        {
            return bad("costs and capacities must be positive");
        }
        self.scenarios.validate()?;
        if self.scenarios.dim() != self.commodities.len() {
            return bad("demand scenarios disagree with the commodity count");
        }
        Ok(())
    }

    pub fn num_arcs(&self) -> usize {
        self.arcs.len()
    }

    /// Recourse LP at a (possibly fractional) design. Columns: `y_ac` for
    /// every commodity with positive demand, then one outsourcing column per
    /// such commodity. Returns the program, the active commodities and the
    /// row index of each arc's capacity constraint.
    fn recourse_lp(&self, x: &[f64], demand: &[f64]) -> (LinearProgram, Vec<usize>, Vec<usize>) {
        let active: Vec<usize> = (0..self.commodities.len()).filter(|&c| demand[c] > 0.0).collect();
        let na = self.arcs.len();
        let mut lp = LinearProgram::new();
        let mut flow: Vec<Vec<Var>> = Vec::with_capacity(active.len());
        for &c in &active {
            flow.push((0..na).map(|a| lp.add_var(self.transport_cost[a][c], 0.0, demand[c] * x[a])).collect());
        }
        let outsource: Vec<Var> =
            active.iter().map(|_| lp.add_var(self.outsourcing_cost, 0.0, f64::INFINITY)).collect();
        for (k, &c) in active.iter().enumerate() {
            let [origin, destination] = self.commodities[c];
            for v in (0..self.vertices).filter(|&v| v != destination) {
                let mut terms = Vec::new();
                for (a, &[tail, head]) in self.arcs.iter().enumerate() {
                    if tail == v {
                        terms.push((flow[k][a], 1.0));
                    } else if head == v {
                        terms.push((flow[k][a], -1.0));
                    }
                }
                let rhs = if v == origin {
                    terms.push((outsource[k], 1.0));
                    demand[c]
                } else {
                    0.0
                };
                lp.add_row(&terms, Sense::Eq, rhs);
            }
        }
        let mut cap_rows = Vec::with_capacity(na);
        for a in 0..na {
            let terms: Vec<_> = flow.iter().map(|f| (f[a], 1.0)).collect();
            cap_rows.push(lp.num_rows());
            lp.add_row(&terms, Sense::Le, self.capacity[a] * x[a]);
        }
        (lp, active, cap_rows)
    }

    fn check_design(&self, x: &[f64]) -> Result<(), ModelError> {
        if x.len() != self.arcs.len() || x.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(ModelError::InvalidInstance(format!("design must have {} entries in [0, 1]", self.arcs.len())));
        }
        Ok(())
    }

    fn first_stage_cost(&self, x: &[f64]) -> f64 {
        self.opening_cost.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Sum over commodities of the scenario's demand.
    pub fn total_demand(demand: &[f64]) -> f64 {
        demand.iter().sum()
    }
}

impl RecourseOracle for NetworkDesignInstance {
    fn first_stage_costs(&self) -> &[f64] {
        &self.opening_cost
    }

    fn first_stage_rows(&self) -> Vec<(Vec<(usize, f64)>, Sense, f64)> {
        Vec::new()
    }

    fn recourse(&self, x: &[f64], scenario: &[f64], limits: &SolverLimits) -> Result<Recourse, ModelError> {
        let (lp, active, cap_rows) = self.recourse_lp(x, scenario);
        let na = self.arcs.len();
        if active.is_empty() {
            return Ok(Recourse { value: 0.0, gradient: vec![0.0; na] });
        }
        let res = cssc_solver::solve_lp(&lp, limits)?;
        let value = exact_value(&res, "network design recourse")?;
        let mut gradient: Vec<f64> = (0..na).map(|a| res.duals[cap_rows[a]] * self.capacity[a]).collect();
        for (k, &c) in active.iter().enumerate() {
            for (a, g) in gradient.iter_mut().enumerate() {
                let d = res.reduced_costs[k * na + a];
                if d < 0.0 {
                    *g += d * scenario[c];
                }
            }
        }
        Ok(Recourse { value, gradient })
    }
}

impl TwoStageProblem for NetworkDesignInstance {
    fn family(&self) -> &'static str {
        "ndp"
    }

    fn scenarios(&self) -> &ScenarioSet {
        &self.scenarios
    }

    fn first_stage_dim(&self) -> usize {
        self.arcs.len()
    }

    fn check_scenario(&self, values: &[f64]) -> Result<(), ModelError> {
        if values.len() != self.commodities.len() || values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(ModelError::DomainViolation(format!(
                "network design demands must be {} non-negative numbers",
                self.commodities.len()
            )));
        }
        Ok(())
    }

    fn evaluate(&self, x: &[f64], scenario: &[f64], limits: &SolverLimits) -> Result<f64, ModelError> {
        self.check_design(x)?;
        self.check_scenario(scenario)?;
        Ok(self.first_stage_cost(x) + self.recourse(x, scenario, limits)?.value)
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
                let out = lshaped::solve(self, scenarios, weights, limits, false)?;
                Ok(solution_from_lshaped(out, "network design"))
            }
            SolveMode::Relaxed => {
                let out = lshaped::solve(self, scenarios, weights, limits, true)?;
                let x = self.round(&out.x).expect("threshold rounding always succeeds");
                let mut objective = 0.0;
                for (s, w) in scenarios.iter().zip(weights) {
                    objective += w * self.evaluate(&x, s, limits)?;
                }
                let mut sol = solution_from_lshaped(out, "network design (relaxed)");
                sol.x = x;
                sol.objective = objective;
                Ok(sol)
            }
        }
    }
}

/// Extensive form over a reduced set: `x_a` binary, then per scenario the
/// flows `y_ac` (commodity-major) and one outsourcing column per commodity.
pub fn ndp_build_extensive(inst: &NetworkDesignInstance, reduced: &ReducedScenarioSet) -> MixedBinaryProgram {
    let na = inst.arcs.len();
    let nc = inst.commodities.len();
    let mut mip = MixedBinaryProgram::new();
    let x: Vec<Var> = (0..na).map(|a| mip.add_named_binary(format!("x_{a}"), inst.opening_cost[a])).collect();
    for (k, (s, &p)) in reduced.scenarios.iter().zip(&reduced.probabilities).enumerate() {
        let y: Vec<Vec<Var>> = (0..nc)
            .map(|c| {
                (0..na)
                    .map(|a| {
                        let name = format!("y_{a}_{c}_{k}");
                        mip.add_named_var(name, p * inst.transport_cost[a][c], 0.0, f64::INFINITY)
                    })
                    .collect()
            })
            .collect();
        let out: Vec<Var> = (0..nc)
            .map(|c| mip.add_named_var(format!("s_{c}_{k}"), p * inst.outsourcing_cost, 0.0, f64::INFINITY))
            .collect();
        for c in 0..nc {
            let [origin, destination] = inst.commodities[c];
            for v in 0..inst.vertices {
                let mut terms = Vec::new();
                for (a, &[tail, head]) in inst.arcs.iter().enumerate() {
                    if tail == v {
                        terms.push((y[c][a], 1.0));
                    } else if head == v {
                        terms.push((y[c][a], -1.0));
                    }
                }
                let rhs = if v == origin {
                    terms.push((out[c], 1.0));
                    s.values[c]
                } else if v == destination {
                    terms.push((out[c], -1.0));
                    -s.values[c]
                } else {
                    0.0
                };
                mip.add_row(&terms, Sense::Eq, rhs);
            }
        }
        for a in 0..na {
            let mut terms: Vec<_> = (0..nc).map(|c| (y[c][a], 1.0)).collect();
            terms.push((x[a], -inst.capacity[a]));
            mip.add_row(&terms, Sense::Le, 0.0);
        }
    }
    mip
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Solves [`ndp_build_extensive`] directly with branch-and-bound; only
    /// practical for very small instances.
    fn solve_extensive_mip(
        inst: &NetworkDesignInstance,
        reduced: &ReducedScenarioSet,
        limits: &SolverLimits,
    ) -> Result<f64, ModelError> {
        let res = cssc_solver::solve_mip(&ndp_build_extensive(inst, reduced), limits)?;
        exact_value(&res, "network design extensive form")
    }

    fn single_arc(demand: f64) -> NetworkDesignInstance {
        let set = ScenarioSet::equiprobable(vec![vec![demand]], ScenarioDomain::NonNegativeInteger).unwrap();
        NetworkDesignInstance::new(2, vec![[0, 1]], vec![[0, 1]], vec![3.0], vec![10.0], vec![vec![5.0]], set).unwrap()
    }

    #[test]
    fn single_path_instance() {
        let inst = single_arc(5.0);
        let red = ReducedScenarioSet::identity(&inst.scenarios);
        let v = solve_extensive_mip(&inst, &red, &SolverLimits::default()).unwrap();
        assert!((v - 28.0).abs() < 1e-9);
        let sol = inst.solve_weighted(&[&[5.0]], &[1.0], SolveMode::Exact, &SolverLimits::default()).unwrap();
        assert_eq!(sol.x, vec![1.0]);
        assert!((sol.objective - 28.0).abs() < 1e-9);
    }

    #[test]
    fn zero_demand_closes_everything() {
        let inst = single_arc(0.0);
        let sol = inst.solve_weighted(&[&[0.0]], &[1.0], SolveMode::Exact, &SolverLimits::default()).unwrap();
        assert_eq!(sol.x, vec![0.0]);
        assert_eq!(sol.objective, 0.0);
    }

    #[test]
    fn closed_design_pays_outsourcing() {
        let inst = single_arc(5.0);
        let f = inst.evaluate(&[0.0], &[5.0], &SolverLimits::default()).unwrap();
        assert!((f - 5.0 * 500.0).abs() < 1e-9);
    }

    #[test]
    fn generator_respects_spec() {
        let spec = NdpSpec::new(9, 40, 5, DemandLaw::Uniform, 11).with_vertices(7);
        let inst = generate_ndp(&spec).unwrap();
        assert_eq!(inst.arcs.len(), 40);
        assert_eq!(inst.commodities.len(), 9);
        let unique: BTreeSet<_> = inst.arcs.iter().collect();
        assert_eq!(unique.len(), 40);
        let pairs: BTreeSet<_> = inst.commodities.iter().collect();
        assert_eq!(pairs.len(), 9);
        assert!(inst.opening_cost.iter().all(|c| (3.0..=10.0).contains(c) && c.fract() == 0.0));
        assert!(inst.capacity.iter().all(|u| (10.0..=40.0).contains(u)));
        assert!(inst.transport_cost.iter().flatten().all(|q| (5.0..=10.0).contains(q)));
        assert_eq!(inst.outsourcing_cost, 1000.0);
        assert!(inst.scenarios.scenarios().iter().flatten().all(|d| (0.0..=10.0).contains(d) && d.fract() == 0.0));
    }

    #[test]
    fn rejects_impossible_specs() {
        assert!(generate_ndp(&NdpSpec::new(3, 2, 1, DemandLaw::Uniform, 0).with_vertices(2)).is_err());
        assert!(generate_ndp(&NdpSpec::new(1, 50, 1, DemandLaw::Uniform, 0).with_vertices(5)).is_err());
        assert_eq!(NdpSpec::new(9, 132, 75, DemandLaw::Lognormal, 0).vertices, 12);
        assert_eq!(NdpSpec::new(49, 763, 25, DemandLaw::Uniform, 0).vertices, 29);
    }
}
