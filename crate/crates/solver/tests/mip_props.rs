use cssc_solver::{solve_mip, MixedBinaryProgram, Sense, SolveStatus, SolverLimits};
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct BinaryProgram {
    cost: Vec<i32>,
    rows: Vec<(Vec<i32>, bool, i32)>,
}

fn program() -> impl Strategy<Value = BinaryProgram> {
    (1usize..=8).prop_flat_map(|n| {
        let cost = prop::collection::vec(-9i32..=9, n);
        let row = (prop::collection::vec(-4i32..=6, n), any::<bool>(), -3i32..=12);
        let rows = prop::collection::vec(row, 1..=5);
        (cost, rows).prop_map(|(cost, rows)| BinaryProgram { cost, rows })
    })
}

fn build(p: &BinaryProgram) -> MixedBinaryProgram {
    let mut mip = MixedBinaryProgram::new();
    let vars: Vec<_> = p.cost.iter().map(|&c| mip.add_binary(c as f64)).collect();
    for (coefs, le, rhs) in &p.rows {
        let terms: Vec<_> = vars.iter().zip(coefs).map(|(&v, &a)| (v, a as f64)).collect();
        mip.add_row(&terms, if *le { Sense::Le } else { Sense::Ge }, *rhs as f64);
    }
    mip
}

fn brute_force(p: &BinaryProgram) -> Option<i64> {
    let n = p.cost.len();
    (0u32..1 << n)
        .filter(|mask| {
            p.rows.iter().all(|(a, le, b)| {
                let act: i64 = (0..n).filter(|j| mask >> j & 1 == 1).map(|j| a[j] as i64).sum();
                if *le {
                    act <= *b as i64
                } else {
                    act >= *b as i64
                }
            })
        })
        .map(|mask| (0..n).filter(|j| mask >> j & 1 == 1).map(|j| p.cost[j] as i64).sum())
        .min()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matches_enumeration(p in program()) {
        let res = solve_mip(&build(&p), &SolverLimits::default()).unwrap();
        match brute_force(&p) {
            None => prop_assert_eq!(res.status, SolveStatus::Infeasible),
            Some(best) => {
                prop_assert_eq!(res.status, SolveStatus::Optimal);
                prop_assert!((res.objective - best as f64).abs() < 1e-6);
                prop_assert!(res.x.iter().all(|v| *v == 0.0 || *v == 1.0));
            }
        }
    }

    #[test]
    fn incumbent_never_below_bound(p in program(), nodes in 1usize..6) {
        let limits = SolverLimits::default().with_max_nodes(nodes);
        let res = solve_mip(&build(&p), &limits).unwrap();
        if res.has_solution() {
            prop_assert!(res.objective >= res.best_bound - 1e-9);
            prop_assert!(res.relative_gap() >= 0.0);
        }
    }
}
