//! Distribution-driven scenario reduction: k-means, k-medians, k-medoids,
//! k-modes and Monte Carlo sub-sampling.
//!
//! The clustering methods look only at the scenario vectors and their
//! probabilities. Each cluster becomes one reduced scenario weighted by the
//! cluster's probability mass.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use cssc_solver::SolveStatus;

use crate::cssc::Partition;
use crate::model::{ModelError, ReducedScenario, ReducedScenarioSet, ScenarioDomain, ScenarioSet};
use crate::seed::derive_seed;

/// Relative slack allowed when checking that a clustering cost never
/// increases from one iteration to the next.
const MONOTONE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    L2,
    L1,
    Hamming,
}

impl Metric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        let pairs = a.iter().zip(b);
        match self {
            Metric::L2 => pairs.map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
            Metric::L1 => pairs.map(|(x, y)| (x - y).abs()).sum(),
            Metric::Hamming => pairs.filter(|(x, y)| x != y).count() as f64,
        }
    }
}

/// How the first centers of a restart are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Init {
    /// First center uniform, each next one sampled with probability
    /// proportional to the point's weighted distance (squared for k-means)
    /// to the nearest chosen center.
    Spread,
    /// First center uniform, each next one the point farthest from the
    /// chosen centers.
    FarthestPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iterations: usize,
    pub restarts: usize,
    /// Distance used by k-medoids; the other methods fix their own.
    pub metric: Metric,
    pub init: Init,
}

impl ClusteringConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self { k, seed, max_iterations: 100, restarts: 10, metric: Metric::L2, init: Init::Spread }
    }

    pub fn with_metric(mut self, metric: Metric) -> Self {
        self.metric = metric;
        self
    }

    fn validate(&self, n: usize) -> Result<(), ModelError> {
        if self.k == 0 || self.k > n {
            return Err(ModelError::InvalidPartition(format!("K = {} outside 1..={n}", self.k)));
        }
        if self.max_iterations == 0 || self.restarts == 0 {
            return Err(ModelError::InvalidPartition("iterations and restarts must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of one clustering method before it is turned into a reduction.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// Cluster of every scenario.
    pub assignment: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    /// Medoid indices (k-medoids only).
    pub medoids: Option<Vec<usize>>,
    pub cost: f64,
    /// Cost after every improvement step of the winning restart.
    pub trace: Vec<f64>,
    pub converged: bool,
}

impl Clustering {
    pub fn is_monotone(&self) -> bool {
        self.trace.windows(2).all(|w| w[1] <= w[0] + MONOTONE_TOL * w[0].abs().max(1.0))
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Center {
    Mean,
    Median,
    Mode,
}

impl Center {
    fn metric(self) -> Metric {
        match self {
            Center::Mean => Metric::L2,
            Center::Median => Metric::L1,
            Center::Mode => Metric::Hamming,
        }
    }

    /// Per-point cost of the objective each method minimizes.
    fn cost(self, a: &[f64], b: &[f64]) -> f64 {
        let d = self.metric().distance(a, b);
        if self == Center::Mean {
            d * d
        } else {
            d
        }
    }

    fn name(self) -> &'static str {
        match self {
            Center::Mean => "kmeans",
            Center::Median => "kmedians",
            Center::Mode => "kmodes",
        }
    }

    fn update(self, points: &[Vec<f64>], weights: &[f64], members: &[usize]) -> Vec<f64> {
        let dim = points[members[0]].len();
        match self {
            Center::Mean => {
                let mass: f64 = members.iter().map(|&i| weights[i]).sum();
                (0..dim)
                    .map(|d| {
                        if mass > 0.0 {
                            members.iter().map(|&i| weights[i] * points[i][d]).sum::<f64>() / mass
                        } else {
                            members.iter().map(|&i| points[i][d]).sum::<f64>() / members.len() as f64
                        }
                    })
                    .collect()
            }
            Center::Median => (0..dim).map(|d| weighted_lower_median(points, weights, members, d)).collect(),
            Center::Mode => (0..dim).map(|d| weighted_mode(points, weights, members, d)).collect(),
        }
    }
}

/// Smallest value whose cumulative weight reaches half the cluster mass.
fn weighted_lower_median(points: &[Vec<f64>], weights: &[f64], members: &[usize], d: usize) -> f64 {
    let mut vals: Vec<(f64, f64)> = members.iter().map(|&i| (points[i][d], weights[i])).collect();
    vals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mass: f64 = vals.iter().map(|v| v.1).sum();
    if mass <= 0.0 {
        return vals[(vals.len() - 1) / 2].0;
    }
    let mut acc = 0.0;
    for (v, w) in &vals {
        acc += w;
        if acc >= 0.5 * mass * (1.0 - 1e-12) {
            return *v;
        }
    }
    vals[vals.len() - 1].0
}

/// Heaviest category; ties go to the smallest value (0 for binary data).
fn weighted_mode(points: &[Vec<f64>], weights: &[f64], members: &[usize], d: usize) -> f64 {
    let mut vals: Vec<(f64, f64)> = members.iter().map(|&i| (points[i][d], weights[i])).collect();
    vals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best = (vals[0].0, f64::NEG_INFINITY);
    let mut i = 0;
    while i < vals.len() {
        let v = vals[i].0;
        let mut w = 0.0;
        while i < vals.len() && vals[i].0 == v {
            w += vals[i].1;
            i += 1;
        }
        if w > best.1 + 1e-15 {
            best = (v, w);
        }
    }
    best.0
}

fn nearest(center: Center, p: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (k, c) in centers.iter().enumerate() {
        let d = center.cost(p, c);
        if d < best.0 {
            best = (d, k);
        }
    }
    best.1
}

fn initial_centers(
    points: &[Vec<f64>],
    weights: &[f64],
    k: usize,
    init: Init,
    dist: impl Fn(&[f64], &[f64]) -> f64,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let n = points.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut gap: Vec<f64> = points.iter().map(|p| dist(p, &points[chosen[0]])).collect();
    while chosen.len() < k {
        let open: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
        let next = match init {
            Init::FarthestPoint => {
                let mut best = open[0];
                for &i in &open {
                    if gap[i] > gap[best] {
                        best = i;
                    }
                }
                best
            }
            Init::Spread => {
                let score: Vec<f64> = open.iter().map(|&i| gap[i] * weights[i].max(0.0)).collect();
                let total: f64 = score.iter().sum();
                if total > 0.0 {
                    let mut r = rng.random::<f64>() * total;
                    let mut pick = *open.last().expect("K <= N leaves a point");
                    for (&i, s) in open.iter().zip(&score) {
                        if r < *s {
                            pick = i;
                            break;
                        }
                        r -= s;
                    }
                    pick
                } else {
                    open[rng.random_range(0..open.len())]
                }
            }
        };
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            gap[i] = gap[i].min(dist(p, &points[next]));
        }
    }
    chosen
}

/// Gives every empty cluster the point lying farthest from its own center,
/// taken from a cluster that keeps at least one member.
fn repair_empty(center: Center, points: &[Vec<f64>], centers: &mut [Vec<f64>], assignment: &mut [usize]) {
    let k = centers.len();
    loop {
        let mut sizes = vec![0usize; k];
        for &a in assignment.iter() {
            sizes[a] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else { return };
        let mut best: Option<(f64, usize)> = None;
        for (i, &a) in assignment.iter().enumerate() {
            if sizes[a] < 2 {
                continue;
            }
            let d = center.cost(&points[i], &centers[a]);
            if best.is_none_or(|(b, _)| d > b) {
                best = Some((d, i));
            }
        }
        let (_, i) = best.expect("K <= N leaves a cluster with two members");
        assignment[i] = empty;
        centers[empty] = points[i].clone();
    }
}

fn members_of(assignment: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); k];
    for (i, &a) in assignment.iter().enumerate() {
        out[a].push(i);
    }
    out
}

fn total_cost(center: Center, points: &[Vec<f64>], weights: &[f64], centers: &[Vec<f64>], assignment: &[usize]) -> f64 {
    points.iter().zip(weights).zip(assignment).map(|((p, w), &a)| w * center.cost(p, &centers[a])).sum()
}

fn lloyd_run(center: Center, points: &[Vec<f64>], weights: &[f64], cfg: &ClusteringConfig, run: usize) -> Clustering {
    let k = cfg.k;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, center.name(), run as u64));
    let seeds = initial_centers(points, weights, k, cfg.init, |a, b| center.cost(a, b), &mut rng);
    let mut centers: Vec<Vec<f64>> = seeds.iter().map(|&i| points[i].clone()).collect();
    let mut assignment: Vec<usize> = points.iter().map(|p| nearest(center, p, &centers)).collect();
    repair_empty(center, points, &mut centers, &mut assignment);
    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..cfg.max_iterations {
        let members = members_of(&assignment, k);
        centers = members.iter().map(|m| center.update(points, weights, m)).collect();
        trace.push(total_cost(center, points, weights, &centers, &assignment));
        let mut next: Vec<usize> = points
            .iter()
            .zip(&assignment)
            .map(|(p, &a)| {
                // Stay put on ties so the cost cannot cycle.
                let b = nearest(center, p, &centers);
                if center.cost(p, &centers[b]) < center.cost(p, &centers[a]) {
                    b
                } else {
                    a
                }
            })
            .collect();
        repair_empty(center, points, &mut centers, &mut next);
        if next == assignment {
            converged = true;
            break;
        }
        assignment = next;
    }
    let members = members_of(&assignment, k);
    centers = members.iter().map(|m| center.update(points, weights, m)).collect();
    let cost = total_cost(center, points, weights, &centers, &assignment);
    if trace.last() != Some(&cost) {
        trace.push(cost);
    }
    Clustering { assignment, centers, medoids: None, cost, trace, converged }
}

fn best_of(runs: Vec<Clustering>) -> Clustering {
    let mut best: Option<Clustering> = None;
    for r in runs {
        if best.as_ref().is_none_or(|b| r.cost < b.cost) {
            best = Some(r);
        }
    }
    best.expect("at least one restart")
}

fn lloyd(
    center: Center,
    points: &[Vec<f64>],
    weights: &[f64],
    cfg: &ClusteringConfig,
) -> Result<Clustering, ModelError> {
    cfg.validate(points.len())?;
    let runs = (0..cfg.restarts).into_par_iter().map(|r| lloyd_run(center, points, weights, cfg, r)).collect();
    Ok(best_of(runs))
}

pub fn kmeans(points: &[Vec<f64>], weights: &[f64], cfg: &ClusteringConfig) -> Result<Clustering, ModelError> {
    lloyd(Center::Mean, points, weights, cfg)
}

pub fn kmedians(points: &[Vec<f64>], weights: &[f64], cfg: &ClusteringConfig) -> Result<Clustering, ModelError> {
    lloyd(Center::Median, points, weights, cfg)
}

pub fn kmodes(points: &[Vec<f64>], weights: &[f64], cfg: &ClusteringConfig) -> Result<Clustering, ModelError> {
    if points.iter().flatten().any(|v| v.fract() != 0.0) {
        return Err(ModelError::DomainViolation("k-modes needs categorical (integer-coded) scenarios".into()));
    }
    lloyd(Center::Mode, points, weights, cfg)
}

/// Partitioning around medoids: greedy BUILD, then best-improvement SWAP
/// until no exchange of a medoid with a non-medoid lowers the cost. The
/// search is deterministic, so restarts do not apply.
pub fn kmedoids(points: &[Vec<f64>], weights: &[f64], cfg: &ClusteringConfig) -> Result<Clustering, ModelError> {
    let n = points.len();
    cfg.validate(n)?;
    let dist: Vec<Vec<f64>> =
        points.iter().map(|a| points.iter().map(|b| cfg.metric.distance(a, b)).collect()).collect();
    let cost_of = |medoids: &[usize]| -> f64 {
        (0..n).map(|i| weights[i] * medoids.iter().map(|&m| dist[i][m]).fold(f64::INFINITY, f64::min)).sum()
    };
    let mut medoids: Vec<usize> = Vec::with_capacity(cfg.k);
    while medoids.len() < cfg.k {
        let mut best: Option<(f64, usize)> = None;
        for c in (0..n).filter(|c| !medoids.contains(c)) {
            let mut trial = medoids.clone();
            trial.push(c);
            let v = cost_of(&trial);
            if best.is_none_or(|(b, _)| v < b) {
                best = Some((v, c));
            }
        }
        medoids.push(best.expect("K <= N leaves a candidate").1);
    }
    let mut cost = cost_of(&medoids);
    let mut trace = vec![cost];
    let mut converged = false;
    for _ in 0..cfg.max_iterations {
        let mut best: Option<(f64, usize, usize)> = None;
        for slot in 0..medoids.len() {
            for o in (0..n).filter(|o| !medoids.contains(o)) {
                let mut trial = medoids.clone();
                trial[slot] = o;
                let v = cost_of(&trial);
                if v < cost - MONOTONE_TOL * cost.abs().max(1.0) && best.is_none_or(|(b, _, _)| v < b) {
                    best = Some((v, slot, o));
                }
            }
        }
        let Some((v, slot, o)) = best else {
            converged = true;
            break;
        };
        medoids[slot] = o;
        cost = v;
        trace.push(cost);
    }
    let assignment: Vec<usize> = (0..n)
        .map(|i| {
            let mut best = (f64::INFINITY, 0);
            for (k, &m) in medoids.iter().enumerate() {
                if dist[i][m] < best.0 {
                    best = (dist[i][m], k);
                }
            }
            best.1
        })
        .collect();
    let centers = medoids.iter().map(|&m| points[m].clone()).collect();
    Ok(Clustering { assignment, centers, medoids: Some(medoids), cost, trace, converged })
}

/// Turns a clustering into the reduced set and the matching partition. A
/// center equal to one of its members' rows keeps that row as its origin.
fn to_reduction(
    method: &str,
    set: &ScenarioSet,
    c: &Clustering,
) -> Result<(ReducedScenarioSet, Partition), ModelError> {
    let k = c.centers.len();
    let members = members_of(&c.assignment, k);
    let origins: Vec<Option<usize>> = (0..k)
        .map(|j| match &c.medoids {
            Some(m) => Some(m[j]),
            None => members[j].iter().copied().find(|&i| set.scenario(i) == c.centers[j].as_slice()),
        })
        .collect();
    let reps = if c.medoids.is_some() { origins.clone() } else { vec![None; k] };
    let status = if c.converged { SolveStatus::Optimal } else { SolveStatus::IterationLimit };
    let partition = Partition::new(method, members.clone(), reps, set.probabilities(), c.cost, status)?;
    let scenarios =
        c.centers.iter().zip(&origins).map(|(v, &origin)| ReducedScenario { values: v.clone(), origin }).collect();
    let probabilities = members.iter().map(|m| m.iter().map(|&i| set.probability(i)).sum()).collect();
    let reduced = ReducedScenarioSet::new(method, scenarios, probabilities)?;
    Ok((reduced, partition))
}

fn require_real(method: &str, set: &ScenarioSet) -> Result<(), ModelError> {
    if set.domain() == ScenarioDomain::Binary {
        return Err(ModelError::DomainViolation(format!(
            "{method} averages scenarios into non-binary points, which a binary scenario domain cannot accept"
        )));
    }
    Ok(())
}

pub fn reduce_kmeans(set: &ScenarioSet, cfg: &ClusteringConfig) -> Result<(ReducedScenarioSet, Partition), ModelError> {
    require_real("k-means", set)?;
    to_reduction("kmeans", set, &kmeans(set.scenarios(), set.probabilities(), cfg)?)
}

pub fn reduce_kmedians(
    set: &ScenarioSet,
    cfg: &ClusteringConfig,
) -> Result<(ReducedScenarioSet, Partition), ModelError> {
    require_real("k-medians", set)?;
    to_reduction("kmedians", set, &kmedians(set.scenarios(), set.probabilities(), cfg)?)
}

pub fn reduce_kmedoids(
    set: &ScenarioSet,
    cfg: &ClusteringConfig,
) -> Result<(ReducedScenarioSet, Partition), ModelError> {
    to_reduction("kmedoids", set, &kmedoids(set.scenarios(), set.probabilities(), cfg)?)
}

pub fn reduce_kmodes(set: &ScenarioSet, cfg: &ClusteringConfig) -> Result<(ReducedScenarioSet, Partition), ModelError> {
    if set.domain() == ScenarioDomain::Real {
        return Err(ModelError::DomainViolation("k-modes needs categorical scenarios, got real-valued ones".into()));
    }
    to_reduction("kmodes", set, &kmodes(set.scenarios(), set.probabilities(), cfg)?)
}

/// `K` original scenarios drawn uniformly without replacement, each with
/// probability `1/K`.
pub fn reduce_montecarlo(set: &ScenarioSet, k: usize, seed: u64) -> Result<ReducedScenarioSet, ModelError> {
    if k == 0 || k > set.len() {
        return Err(ModelError::InvalidPartition(format!("K = {k} outside 1..={}", set.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "montecarlo", 0));
    let picks = sample(&mut rng, set.len(), k).into_vec();
    ReducedScenarioSet::from_indices("montecarlo", set, &picks, vec![1.0 / k as f64; k])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::TOY_SCENARIOS;

    fn toy() -> Vec<Vec<f64>> {
        TOY_SCENARIOS.iter().map(|r| r.to_vec()).collect()
    }

    #[test]
    fn kmeans_on_toy_finds_a_tied_optimum() {
        let c = kmeans(&toy(), &[0.25; 4], &ClusteringConfig::new(2, 0)).unwrap();
        let ok = [[0, 1, 0, 1], [0, 1, 1, 0]];
        let canon: Vec<usize> = c.assignment.iter().map(|&a| a ^ c.assignment[0]).collect();
        assert!(ok.iter().any(|o| o.as_slice() == canon.as_slice()), "{:?}", c.assignment);
        assert!((c.cost - 0.25 * 2.01).abs() < 1e-12);
        assert!(c.is_monotone());
    }

    #[test]
    fn median_is_robust() {
        let pts = vec![vec![0.0], vec![0.0], vec![10.0]];
        let c = kmedians(&pts, &[1.0 / 3.0; 3], &ClusteringConfig::new(1, 0)).unwrap();
        assert_eq!(c.centers, vec![vec![0.0]]);
    }

    #[test]
    fn mode_breaks_ties_to_zero() {
        let pts = vec![vec![0.0, 0.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 1.0, 1.0]];
        let c = kmodes(&pts, &[1.0 / 3.0; 3], &ClusteringConfig::new(1, 0)).unwrap();
        assert_eq!(c.centers, vec![vec![0.0, 0.0, 1.0]]);
        let pts = vec![vec![0.0], vec![1.0]];
        let c = kmodes(&pts, &[0.5; 2], &ClusteringConfig::new(1, 0)).unwrap();
        assert_eq!(c.centers, vec![vec![0.0]]);
    }

    #[test]
    fn identical_points_keep_k_clusters() {
        let pts = vec![vec![1.0, 2.0]; 5];
        let c = kmeans(&pts, &[0.2; 5], &ClusteringConfig::new(3, 4)).unwrap();
        assert!(c.centers.iter().all(|x| x == &vec![1.0, 2.0]));
        assert_eq!(members_of(&c.assignment, 3).iter().filter(|m| m.is_empty()).count(), 0);
    }

    #[test]
    fn montecarlo_is_seeded() {
        let set = ScenarioSet::equiprobable(toy(), ScenarioDomain::Real).unwrap();
        let a = reduce_montecarlo(&set, 2, 9).unwrap();
        assert_eq!(a, reduce_montecarlo(&set, 2, 9).unwrap());
        assert_eq!(a.probabilities, vec![0.5, 0.5]);
        assert!(a.scenarios.iter().all(|s| s.origin.is_some()));
    }

    #[test]
    fn binary_sets_reject_averaging_methods() {
        let set = ScenarioSet::equiprobable(vec![vec![0.0, 1.0], vec![1.0, 1.0]], ScenarioDomain::Binary).unwrap();
        let cfg = ClusteringConfig::new(1, 0);
        assert!(matches!(reduce_kmeans(&set, &cfg), Err(ModelError::DomainViolation(_))));
        assert!(matches!(reduce_kmedians(&set, &cfg), Err(ModelError::DomainViolation(_))));
        assert!(reduce_kmodes(&set, &cfg).is_ok());
    }
}
