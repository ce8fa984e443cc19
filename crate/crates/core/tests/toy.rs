use cssc_core::baselines::{reduce_kmeans, reduce_kmedoids, reduce_montecarlo, ClusteringConfig};
use cssc_core::cssc::{build_matrix, reduce_cssc, PartitionConfig};
use cssc_core::evaluation::{implementation_error, solve_original, two_point_bound};
use cssc_core::model::{expected_cost, solve_extensive, ReducedScenarioSet, SolveMode, TwoStageProblem};
use cssc_core::problems::{ToyProblem, TOY_SCENARIOS};
use cssc_solver::SolverLimits;

const TOY_V: [[f64; 4]; 4] = [[0.9, 1.1, 4.2, 3.9], [1.4, 1.0, 4.3, 4.0], [1.8, 2.0, 1.1, 1.0], [1.8, 2.0, 1.1, 1.0]];

#[test]
fn opportunity_cost_matrix() {
    let toy = ToyProblem::new();
    let m = build_matrix(&toy, SolveMode::Exact, &SolverLimits::default()).unwrap();
    for i in 0..4 {
        for j in 0..4 {
            assert!((m.get(i, j) - TOY_V[i][j]).abs() < 1e-6, "V[{i}][{j}] = {}", m.get(i, j));
        }
    }
    assert!(m.diagonal_violations(1e-6).is_empty());
}

#[test]
fn original_optimum() {
    let toy = ToyProblem::new();
    let opt = solve_original(&toy, &SolverLimits::default()).unwrap();
    assert!(opt.solution.x[0].abs() < 1e-6);
    assert!((opt.solution.objective - 1.475).abs() < 1e-6);
    assert!((opt.true_cost - 1.475).abs() < 1e-6);
}

#[test]
fn expected_costs_at_known_points() {
    let toy = ToyProblem::new();
    let l = SolverLimits::default();
    assert!((expected_cost(&toy, &[0.0], toy.scenarios(), &l).unwrap() - 1.475).abs() < 1e-9);
    assert!((expected_cost(&toy, &[0.5], toy.scenarios(), &l).unwrap() - 2.475).abs() < 1e-9);
}

#[test]
fn cssc_recovers_the_optimum() {
    let toy = ToyProblem::new();
    let l = SolverLimits::default();
    let r = reduce_cssc(&toy, 2, SolveMode::Exact, &PartitionConfig::default(), &l).unwrap();
    assert_eq!(r.partition.clusters, vec![vec![0, 1], vec![2, 3]]);
    assert!((r.partition.objective - 0.075).abs() < 1e-9);
    let opt = solve_original(&toy, &l).unwrap();
    let rep = implementation_error(&toy, &opt, &r.reduced, &l).unwrap();
    assert!(rep.x_tilde[0].abs() < 1e-6);
    assert!(rep.absolute_error.unwrap().abs() < 1e-6);
    assert!(rep.absolute_error.unwrap().abs() <= rep.two_point_bound + 1e-6);
}

/// Closed-form second stage: the best of the four sign choices.
fn f_closed(x: f64, xi: &[f64]) -> f64 {
    let mut best = f64::INFINITY;
    for y1 in [-1.0, 1.0] {
        for y2 in [-1.0, 1.0] {
            let v = 2.0 * (x + y1 * xi[0]).abs() + 3.0 * (x - y2 * xi[1]).abs() - y1 * xi[0] - y2 * xi[1];
            best = best.min(v);
        }
    }
    best
}

fn weighted_closed(x: f64, red: &ReducedScenarioSet) -> f64 {
    red.scenarios.iter().zip(&red.probabilities).map(|(s, p)| p * f_closed(x, &s.values)).sum()
}

/// Minimizer of the reduced objective on a grid that contains every kink.
fn grid_argmin(red: &ReducedScenarioSet) -> f64 {
    (-4000..=4000)
        .map(|i| i as f64 * 5e-4)
        .min_by(|a, b| weighted_closed(*a, red).total_cmp(&weighted_closed(*b, red)))
        .unwrap()
}

fn true_closed(x: f64) -> f64 {
    TOY_SCENARIOS.iter().map(|s| 0.25 * f_closed(x, s)).sum()
}

#[test]
fn closed_form_matches_the_solver() {
    let toy = ToyProblem::new();
    let l = SolverLimits::default();
    for x in [-1.3, -0.5, 0.0, 0.25, 0.9, 1.0] {
        let f = expected_cost(&toy, &[x], toy.scenarios(), &l).unwrap();
        assert!((f - true_closed(x)).abs() < 1e-9, "x = {x}");
    }
}

#[test]
fn kmeans_true_value() {
    let toy = ToyProblem::new();
    let l = SolverLimits::default();
    let (red, part) = reduce_kmeans(toy.scenarios(), &ClusteringConfig::new(2, 0)).unwrap();
    let tied = [vec![vec![0, 3], vec![1, 2]], vec![vec![0, 2], vec![1, 3]]];
    assert!(tied.contains(&part.clusters), "{:?}", part.clusters);
    let sol = solve_extensive(&toy, &red, &l).unwrap();
    let oracle = grid_argmin(&red);
    assert!((weighted_closed(sol.x[0], &red) - weighted_closed(oracle, &red)).abs() < 1e-9);
    let f = expected_cost(&toy, &sol.x, toy.scenarios(), &l).unwrap();
    assert!((f - true_closed(oracle)).abs() < 1e-9);
    assert!((f - 2.425).abs() < 1e-9);
}

#[test]
fn kmedoids_true_value() {
    let toy = ToyProblem::new();
    let l = SolverLimits::default();
    let (red, part) = reduce_kmedoids(toy.scenarios(), &ClusteringConfig::new(2, 0)).unwrap();
    assert_eq!(part.clusters, vec![vec![0, 2, 3], vec![1]]);
    assert_eq!(part.representatives, vec![Some(0), Some(1)]);
    let sol = solve_extensive(&toy, &red, &l).unwrap();
    let oracle = grid_argmin(&red);
    assert!((sol.x[0] - oracle).abs() < 1e-6);
    assert!((sol.x[0] - 0.9).abs() < 1e-6);
    let f = expected_cost(&toy, &sol.x, toy.scenarios(), &l).unwrap();
    assert!((f - true_closed(oracle)).abs() < 1e-9);
    assert!((f - 2.525).abs() < 1e-9);
}

#[test]
fn monte_carlo_and_identity_bounds() {
    let toy = ToyProblem::new();
    let l = SolverLimits::default();
    let opt = solve_original(&toy, &l).unwrap();
    let identity = ReducedScenarioSet::identity(toy.scenarios());
    let rep = implementation_error(&toy, &opt, &identity, &l).unwrap();
    assert_eq!(rep.absolute_error, Some(0.0));
    for seed in 0..10 {
        let red = reduce_montecarlo(toy.scenarios(), 2, seed).unwrap();
        let rep = implementation_error(&toy, &opt, &red, &l).unwrap();
        let bound = two_point_bound(&toy, toy.scenarios(), &red, &opt.solution.x, &rep.x_tilde, &l).unwrap();
        assert_eq!(bound, rep.two_point_bound);
        assert!(rep.absolute_error.unwrap() >= -1e-9);
        assert!(rep.absolute_error.unwrap() <= bound + 1e-6);
    }
}
