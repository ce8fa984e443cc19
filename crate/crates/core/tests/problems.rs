use cssc_core::baselines::{reduce_kmeans, reduce_kmedians, reduce_kmedoids, reduce_montecarlo, ClusteringConfig};
use cssc_core::cssc::{build_matrix, reduce_from_matrix, OpportunityCostMatrix, PartitionConfig};
use cssc_core::evaluation::{implementation_error, solve_original};
use cssc_core::model::{expected_cost, ReducedScenarioSet, SolveMode, TwoStageProblem};
use cssc_core::problems::{
    flp_build_extensive, generate_flp, generate_ndp, ndp_build_extensive, DemandLaw, FlpSpec, NdpSpec,
};
use cssc_solver::{solve_mip, SolveStatus, SolverLimits};

fn all_rows(p: &dyn TwoStageProblem) -> Vec<&[f64]> {
    p.scenarios().scenarios().iter().map(|r| r.as_slice()).collect()
}

#[test]
fn ndp_decomposition_matches_extensive_mip() {
    let limits = SolverLimits::default();
    for seed in 0..6 {
        let spec = NdpSpec::new(2, 7, 3, DemandLaw::Uniform, seed).with_vertices(4);
        let inst = generate_ndp(&spec).unwrap();
        let red = ReducedScenarioSet::identity(&inst.scenarios);
        let direct = solve_mip(&ndp_build_extensive(&inst, &red), &limits).unwrap();
        assert_eq!(direct.status, SolveStatus::Optimal);
        let sol =
            inst.solve_weighted(&all_rows(&inst), inst.scenarios.probabilities(), SolveMode::Exact, &limits).unwrap();
        assert!(
            (sol.objective - direct.objective).abs() < 1e-6 * direct.objective.max(1.0),
            "seed {seed}: {} vs {}",
            sol.objective,
            direct.objective
        );
        let f = expected_cost(&inst, &sol.x, &inst.scenarios, &limits).unwrap();
        assert!((f - sol.objective).abs() < 1e-6 * f.max(1.0));
    }
}

#[test]
fn flp_decomposition_matches_extensive_mip() {
    let limits = SolverLimits::default();
    for seed in 0..6 {
        let mut spec = FlpSpec::new(4, 8, 3, seed);
        spec.budget = 2;
        let inst = generate_flp(&spec).unwrap();
        let red = ReducedScenarioSet::identity(&inst.scenarios);
        let direct = solve_mip(&flp_build_extensive(&inst, &red).unwrap(), &limits).unwrap();
        assert_eq!(direct.status, SolveStatus::Optimal);
        let sol =
            inst.solve_weighted(&all_rows(&inst), inst.scenarios.probabilities(), SolveMode::Exact, &limits).unwrap();
        assert!(
            (sol.objective - direct.objective).abs() < 1e-6 * direct.objective.max(1.0),
            "seed {seed}: {} vs {}",
            sol.objective,
            direct.objective
        );
    }
}

fn column_minimal(m: &OpportunityCostMatrix) -> bool {
    let n = m.len();
    (0..n).all(|i| (0..n).all(|j| m.get(i, i) <= m.get(j, i) + 1e-6))
}

#[test]
fn exact_diagonals_are_column_minimal() {
    let limits = SolverLimits::default();
    for seed in 0..4 {
        let ndp = generate_ndp(&NdpSpec::new(3, 10, 6, DemandLaw::Lognormal, seed)).unwrap();
        let m = build_matrix(&ndp, SolveMode::Exact, &limits).unwrap();
        assert!(column_minimal(&m), "ndp seed {seed}");
        assert!(m.diagonal_violations(1e-6).is_empty());

        let flp = generate_flp(&FlpSpec::new(5, 10, 5, seed)).unwrap();
        let m = build_matrix(&flp, SolveMode::Exact, &limits).unwrap();
        assert!(column_minimal(&m), "flp seed {seed}");
    }
}

#[test]
fn errors_stay_within_the_two_point_bound() {
    let limits = SolverLimits::default();
    for seed in 0..3 {
        let ndp = generate_ndp(&NdpSpec::new(3, 10, 8, DemandLaw::Uniform, seed)).unwrap();
        let original = solve_original(&ndp, &limits).unwrap();
        assert!(original.is_proven_optimal());
        let matrix = build_matrix(&ndp, SolveMode::Exact, &limits).unwrap();
        for k in 1..=3 {
            let cfg = ClusteringConfig::new(k, seed);
            let mut reductions = vec![
                reduce_from_matrix(&ndp.scenarios, &matrix, k, &PartitionConfig::default()).unwrap().0,
                reduce_kmeans(&ndp.scenarios, &cfg).unwrap().0,
                reduce_kmedians(&ndp.scenarios, &cfg).unwrap().0,
                reduce_kmedoids(&ndp.scenarios, &cfg).unwrap().0,
                reduce_montecarlo(&ndp.scenarios, k, seed).unwrap(),
            ];
            reductions.push(ReducedScenarioSet::identity(&ndp.scenarios));
            for red in &reductions {
                let rep = implementation_error(&ndp, &original, red, &limits).unwrap();
                let err = rep.absolute_error.unwrap();
                assert!(err >= -1e-6, "{} K={k}: negative error {err}", red.method);
                assert!(err <= rep.two_point_bound + 1e-6, "{} K={k}: {err} > {}", red.method, rep.two_point_bound);
            }
        }
    }
}
