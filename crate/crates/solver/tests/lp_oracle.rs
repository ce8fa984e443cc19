//! Random-LP checks against a vertex-enumeration oracle, plus the duality
//! and determinism properties of the final simplex basis.

use cssc_solver::{solve_lp, LinearProgram, Sense, SolveStatus, SolverLimits, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Dense {
    cost: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rows: Vec<(Vec<f64>, Sense, f64)>,
}

fn random_lp(rng: &mut ChaCha8Rng) -> Dense {
    let n = rng.random_range(1..=8);
    let m = rng.random_range(1..=8);
    let cost = (0..n).map(|_| rng.random_range(-10..=10) as f64).collect();
    let lower = (0..n).map(|_| rng.random_range(-3..=0) as f64).collect();
    let upper = (0..n).map(|_| rng.random_range(1..=10) as f64).collect();
    let rows = (0..m)
        .map(|_| {
            let coefs: Vec<f64> =
                (0..n).map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random_range(-5..=5) as f64 }).collect();
            let sense = match rng.random_range(0..10) {
                0 => Sense::Eq,
                1..=6 => Sense::Le,
                _ => Sense::Ge,
            };
            let rhs = rng.random_range(-10..=20) as f64;
            (coefs, sense, rhs)
        })
        .collect();
    Dense { cost, lower, upper, rows }
}

fn to_lp(d: &Dense) -> LinearProgram {
    let mut lp = LinearProgram::new();
    let vars: Vec<Var> = (0..d.cost.len()).map(|j| lp.add_var(d.cost[j], d.lower[j], d.upper[j])).collect();
    for (coefs, sense, rhs) in &d.rows {
        let terms: Vec<_> = vars.iter().zip(coefs).map(|(&v, &a)| (v, a)).collect();
        lp.add_row(&terms, *sense, *rhs);
    }
    lp
}

/// Solves the square system `a x = b` by Gaussian elimination with partial
/// pivoting; `None` when singular.
fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-10 {
            return None;
        }
        a.swap(p, c);
        b.swap(p, c);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

fn next_combination(idx: &mut [usize], total: usize) -> bool {
    let k = idx.len();
    for i in (0..k).rev() {
        if idx[i] < total - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Minimum objective over all vertices of the (bounded) feasible region.
fn vertex_oracle(d: &Dense) -> Option<f64> {
    let n = d.cost.len();
    // Candidate hyperplanes: every row, every lower and upper bound.
    let mut planes: Vec<(Vec<f64>, f64)> = d.rows.iter().map(|(a, _, b)| (a.clone(), *b)).collect();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        planes.push((e.clone(), d.lower[j]));
        planes.push((e, d.upper[j]));
    }
    let feasible = |x: &[f64]| {
        let tol = 1e-9;
        (0..n).all(|j| x[j] >= d.lower[j] - tol && x[j] <= d.upper[j] + tol)
            && d.rows.iter().all(|(a, s, b)| {
                let act: f64 = a.iter().zip(x).map(|(p, q)| p * q).sum();
                match s {
                    Sense::Le => act <= b + tol,
                    Sense::Ge => act >= b - tol,
                    Sense::Eq => (act - b).abs() <= tol,
                }
            })
    };
    let mut best: Option<f64> = None;
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let a = idx.iter().map(|&k| planes[k].0.clone()).collect();
        let b = idx.iter().map(|&k| planes[k].1).collect();
        if let Some(x) = solve_square(a, b) {
            if feasible(&x) {
                let obj: f64 = d.cost.iter().zip(&x).map(|(c, v)| c * v).sum();
                best = Some(best.map_or(obj, |v: f64| v.min(obj)));
            }
        }
        if !next_combination(&mut idx, planes.len()) {
            break;
        }
    }
    best
}

#[test]
fn random_lps_match_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(20240611);
    let mut feasible_count = 0;
    for case in 0..100 {
        let dense = random_lp(&mut rng);
        let lp = to_lp(&dense);
        let res = solve_lp(&lp, &SolverLimits::default()).unwrap();
        match vertex_oracle(&dense) {
            None => assert_eq!(res.status, SolveStatus::Infeasible, "case {case}: oracle says infeasible"),
            Some(best) => {
                feasible_count += 1;
                assert_eq!(res.status, SolveStatus::Optimal, "case {case}");
                assert!(
                    (res.objective - best).abs() <= 1e-6 * best.abs().max(1.0),
                    "case {case}: {} vs {best}",
                    res.objective
                );
                assert!(lp.max_violation(&res.x) <= 1e-7, "case {case}");
            }
        }
    }
    assert!(feasible_count >= 30, "too few feasible samples: {feasible_count}");
}

#[test]
fn final_basis_gives_matching_dual() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut checked = 0;
    for _ in 0..200 {
        let dense = random_lp(&mut rng);
        let lp = to_lp(&dense);
        let res = solve_lp(&lp, &SolverLimits::default()).unwrap();
        if res.status != SolveStatus::Optimal {
            continue;
        }
        checked += 1;
        let mut dual_obj = 0.0;
        for (i, (_, sense, b)) in dense.rows.iter().enumerate() {
            let y = res.duals[i];
            match sense {
                Sense::Le => assert!(y <= 1e-9, "<= row with positive dual {y}"),
                Sense::Ge => assert!(y >= -1e-9, ">= row with negative dual {y}"),
                Sense::Eq => {}
            }
            dual_obj += b * y;
        }
        for (j, &d) in res.reduced_costs.iter().enumerate() {
            dual_obj += if d >= 0.0 { dense.lower[j] * d } else { dense.upper[j] * d };
        }
        let scale = res.objective.abs().max(1.0);
        assert!((dual_obj - res.objective).abs() <= 1e-6 * scale, "dual {dual_obj} vs primal {}", res.objective);
    }
    assert!(checked > 50);
}

#[test]
fn identical_programs_give_identical_results() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let lp = to_lp(&random_lp(&mut rng));
        let a = solve_lp(&lp, &SolverLimits::default()).unwrap();
        let b = solve_lp(&lp.clone(), &SolverLimits::default()).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }
}
