use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn one_var(lower_row: f64) -> LpProblem {
    let mut p = LpProblem::default();
    let x = p.add_variable("x", 0.0, f64::INFINITY);
    p.add_constraint(vec![(x, 1.0)], Relation::Le, 1.0);
    p.add_constraint(vec![(x, 1.0)], Relation::Ge, lower_row);
    p
}

#[test]
fn single_variable_feasibility() {
    let sol = solve(&one_var(0.25), &SolverConfig::default()).unwrap();
    assert_eq!(sol.status, LpStatus::Feasible);
    assert!((0.25..=1.0).contains(&sol.values[0]));
    let check = verify_exact(&one_var(0.25), &snap_to_grid(&sol.values, 3), 3);
    assert!(check.is_ok());
}

#[test]
fn contradictory_bounds_are_infeasible() {
    let mut p = LpProblem::default();
    let x = p.add_variable("x", f64::NEG_INFINITY, f64::INFINITY);
    p.add_constraint(vec![(x, 1.0)], Relation::Ge, 2.0);
    p.add_constraint(vec![(x, 1.0)], Relation::Le, 1.0);
    let sol = solve(&p, &SolverConfig::default()).unwrap();
    assert_eq!(sol.status, LpStatus::Infeasible);
    assert_eq!(sol.certificate, vec![0, 1]);

    let mut p = LpProblem::default();
    p.add_variable("x", 2.0, 1.0);
    assert_eq!(
        solve(&p, &SolverConfig::default()).unwrap().status,
        LpStatus::Infeasible
    );
}

#[test]
fn unbounded_and_optimal() {
    let mut p = LpProblem::default();
    let x = p.add_variable("x", 0.0, f64::INFINITY);
    let y = p.add_variable("y", 0.0, f64::INFINITY);
    p.add_constraint(vec![(x, 1.0), (y, -1.0)], Relation::Le, 1.0);
    p.set_objective(Sense::Maximize, vec![(x, 1.0)]);
    assert_eq!(solve(&p, &SolverConfig::default()).unwrap().status, LpStatus::Unbounded);

    // max x + y s.t. x + 2y <= 4, 3x + y <= 6
    let mut p = LpProblem::default();
    let x = p.add_variable("x", 0.0, f64::INFINITY);
    let y = p.add_variable("y", 0.0, f64::INFINITY);
    p.add_constraint(vec![(x, 1.0), (y, 2.0)], Relation::Le, 4.0);
    p.add_constraint(vec![(x, 3.0), (y, 1.0)], Relation::Le, 6.0);
    p.set_objective(Sense::Maximize, vec![(x, 1.0), (y, 1.0)]);
    let sol = solve(&p, &SolverConfig::default()).unwrap();
    assert_eq!(sol.status, LpStatus::Feasible);
    assert!((sol.objective - 2.8).abs() < 1e-9);
    assert!((sol.values[0] - 1.6).abs() < 1e-9 && (sol.values[1] - 1.2).abs() < 1e-9);
}

#[test]
fn iteration_limit_is_reported() {
    let mut p = LpProblem::default();
    let vars: Vec<usize> = (0..10).map(|k| p.add_variable(format!("x{k}"), 0.0, 1.0)).collect();
    for &v in &vars {
        p.add_constraint(vec![(v, 1.0)], Relation::Ge, 0.5);
    }
    let config = SolverConfig {
        max_iters: 3,
        ..SolverConfig::default()
    };
    assert_eq!(solve(&p, &config).unwrap().status, LpStatus::IterationLimit);
}

#[test]
fn equality_rows_and_free_variables() {
    let mut p = LpProblem::default();
    let x = p.add_variable("x", f64::NEG_INFINITY, f64::INFINITY);
    let y = p.add_variable("y", -5.0, 5.0);
    p.add_constraint(vec![(x, 1.0), (y, 1.0)], Relation::Eq, -3.0);
    p.add_constraint(vec![(x, 1.0), (y, -1.0)], Relation::Eq, 1.0);
    let sol = solve(&p, &SolverConfig::default()).unwrap();
    assert_eq!(sol.status, LpStatus::Feasible);
    assert!((sol.values[0] + 1.0).abs() < 1e-9 && (sol.values[1] + 2.0).abs() < 1e-9);
}

#[test]
fn malformed_problems_are_rejected() {
    let mut p = LpProblem::default();
    p.add_constraint(vec![(3, 1.0)], Relation::Ge, 0.0);
    assert!(matches!(
        solve(&p, &SolverConfig::default()),
        Err(LpError::MalformedProblem(_))
    ));
    let mut p = LpProblem::default();
    let x = p.add_variable("x", 0.0, 1.0);
    p.add_constraint(vec![(x, f64::NAN)], Relation::Ge, 0.0);
    assert!(p.check().is_err());
}

/// Random rows built around a hidden point, so the problem is feasible.
fn planted(seed: u64, n: usize, m: usize) -> (LpProblem, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let point: Vec<f64> = (0..n).map(|_| rng.gen_range(0..=1000) as f64 / 1000.0).collect();
    let mut p = LpProblem::default();
    for j in 0..n {
        p.add_variable(format!("x{j}"), 0.0, 1.0);
    }
    for _ in 0..m {
        let mut coeffs = Vec::new();
        for j in 0..n {
            if rng.gen_bool(0.5) {
                coeffs.push((j, rng.gen_range(-3i32..=3) as f64));
            }
        }
        let lhs: f64 = coeffs.iter().map(|&(j, a)| a * point[j]).sum();
        let (rel, rhs) = match rng.gen_range(0..3) {
            0 => (Relation::Ge, lhs - rng.gen_range(0..3) as f64 / 10.0),
            1 => (Relation::Le, lhs + rng.gen_range(0..3) as f64 / 10.0),
            _ => (Relation::Eq, lhs),
        };
        p.add_constraint(coeffs, rel, rhs);
    }
    (p, point)
}

#[test]
fn planted_problems_are_feasible() {
    for seed in 0..200 {
        let (p, _) = planted(seed, 12, 10);
        for pivot in [PivotRule::Dantzig, PivotRule::Bland] {
            let config = SolverConfig {
                pivot,
                ..SolverConfig::default()
            };
            let sol = solve(&p, &config).unwrap();
            assert_eq!(sol.status, LpStatus::Feasible, "seed {seed}");
            assert!(p.max_violation(&sol.values) <= 1e-9, "seed {seed}");
        }
    }
}

/// Brute force for two variables: best objective over all feasible pairwise
/// intersections of row and bound lines.
fn brute_force_2d(p: &LpProblem) -> Option<f64> {
    let mut lines: Vec<(f64, f64, f64)> = Vec::new();
    for c in &p.constraints {
        let mut a = [0.0; 2];
        for &(j, v) in &c.coeffs {
            a[j] = v;
        }
        lines.push((a[0], a[1], c.rhs));
    }
    for (j, v) in p.variables.iter().enumerate() {
        let a = if j == 0 { (1.0, 0.0) } else { (0.0, 1.0) };
        lines.push((a.0, a.1, v.lower));
        lines.push((a.0, a.1, v.upper));
    }
    let mut best: Option<f64> = None;
    for i in 0..lines.len() {
        for k in i + 1..lines.len() {
            let (a, b, e) = lines[i];
            let (c, d, f) = lines[k];
            let det = a * d - b * c;
            if det.abs() < 1e-12 {
                continue;
            }
            let x = [(e * d - b * f) / det, (a * f - e * c) / det];
            if p.max_violation(&x) <= 1e-9 {
                let v = p.objective_value(&x);
                best = Some(best.map_or(v, |b: f64| b.min(v)));
            }
        }
    }
    best
}

#[test]
fn two_variable_optimum_matches_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..300 {
        let mut p = LpProblem::default();
        p.add_variable("x", 0.0, 1.0);
        p.add_variable("y", 0.0, 1.0);
        for _ in 0..rng.gen_range(1..5) {
            let a = rng.gen_range(-4i32..=4) as f64;
            let b = rng.gen_range(-4i32..=4) as f64;
            let rel = if rng.gen_bool(0.5) { Relation::Ge } else { Relation::Le };
            p.add_constraint(vec![(0, a), (1, b)], rel, rng.gen_range(-4i32..=4) as f64 / 2.0);
        }
        p.set_objective(
            Sense::Minimize,
            vec![
                (0, rng.gen_range(-3i32..=3) as f64),
                (1, rng.gen_range(-3i32..=3) as f64),
            ],
        );
        let sol = solve(&p, &SolverConfig::default()).unwrap();
        match brute_force_2d(&p) {
            None => assert_eq!(sol.status, LpStatus::Infeasible, "{p:?}"),
            Some(best) => {
                assert_eq!(sol.status, LpStatus::Feasible, "{p:?}");
                assert!((sol.objective - best).abs() < 1e-7, "{} vs {best}", sol.objective);
            }
        }
    }
}

#[test]
fn solving_is_deterministic() {
    let (p, _) = planted(77, 30, 25);
    let a = solve(&p, &SolverConfig::default()).unwrap();
    let b = solve(&p, &SolverConfig::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn scaling_a_row_keeps_the_status() {
    for seed in 0..50 {
        let (mut p, _) = planted(seed, 6, 8);
        // make half of them infeasible with a contradictory pair
        if seed % 2 == 0 {
            p.add_constraint(vec![(0, 1.0)], Relation::Ge, 0.9);
            p.add_constraint(vec![(0, 1.0)], Relation::Le, 0.4);
        }
        let base = solve(&p, &SolverConfig::default()).unwrap().status;
        for factor in [0.001, 3.0, 1000.0] {
            let mut q = p.clone();
            for c in &mut q.constraints {
                c.coeffs.iter_mut().for_each(|t| t.1 *= factor);
                c.rhs *= factor;
            }
            assert_eq!(solve(&q, &SolverConfig::default()).unwrap().status, base, "seed {seed}");
        }
    }
}

#[test]
fn lp_text_examples() {
    let mut p = LpProblem::default();
    let x = p.add_variable("x", 0.0, 1.0);
    p.add_constraint(vec![(x, 1.0)], Relation::Ge, 0.25);
    let text = export_lp_format(&p).unwrap();
    assert_eq!(
        text,
        "Minimize\n obj:\nSubject To\n c1: 1 x >= 0.25\nBounds\n 0 <= x <= 1\nEnd\n"
    );
    assert_eq!(parse_lp_format(&text).unwrap(), p);

    p.variables[0].name = "bad name".into();
    assert!(matches!(export_lp_format(&p), Err(LpError::UnsupportedName(_))));
}

#[test]
fn parses_hand_written_files() {
    let text = "\\ a comment\nmaximize\n obj: 2 x + 3 y\n - z\nsubject to\n r1: x + y\n   <= 4\n r2: x - z >= -1\nbounds\n y <= 2\n z free\nend\n";
    let p = parse_lp_format(text).unwrap();
    assert_eq!(p.sense, Sense::Maximize);
    let names: Vec<&str> = p.variables.iter().map(|v| v.name.as_str()).collect();
    assert_eq!(names, ["y", "z", "x"]);
    assert_eq!(p.variables[0].upper, 2.0);
    assert_eq!(p.variables[1].lower, f64::NEG_INFINITY);
    assert_eq!(p.constraints[0].name, "r1");
    assert_eq!(p.constraints[1].rhs, -1.0);
    assert!(parse_lp_format("Subject To\n c: x >= 1\nEnd\n").is_err());
}

fn arb_bound() -> impl Strategy<Value = (f64, f64)> {
    prop_oneof![
        Just((0.0, f64::INFINITY)),
        Just((f64::NEG_INFINITY, f64::INFINITY)),
        (-100i32..100, 0i32..100).prop_map(|(a, w)| (a as f64 / 8.0, (a + w) as f64 / 8.0)),
        (-100i32..100).prop_map(|a| (f64::NEG_INFINITY, a as f64 / 3.0)),
    ]
}

fn arb_problem() -> impl Strategy<Value = LpProblem> {
    (1usize..8).prop_flat_map(|n| {
        let vars = prop::collection::vec(arb_bound(), n);
        let coef = -1000i32..1000;
        let row = (
            prop::collection::btree_map(0..n, coef.clone(), 0..=n),
            0usize..3,
            -1000i32..1000,
        );
        let rows = prop::collection::vec(row, 0..12);
        let obj = prop::collection::btree_map(0..n, coef, 0..=n);
        (vars, rows, obj, any::<bool>()).prop_map(|(vars, rows, obj, max)| {
            let mut p = LpProblem::default();
            for (j, (lo, up)) in vars.into_iter().enumerate() {
                p.add_variable(format!("w_{j}"), lo, up);
            }
            for (terms, rel, rhs) in rows {
                let rel = [Relation::Ge, Relation::Le, Relation::Eq][rel];
                p.add_constraint(
                    terms.into_iter().map(|(j, a)| (j, a as f64 / 7.0)).collect(),
                    rel,
                    rhs as f64 / 1000.0,
                );
            }
            let sense = if max { Sense::Maximize } else { Sense::Minimize };
            p.set_objective(sense, obj.into_iter().map(|(j, a)| (j, a as f64 * 0.1)).collect());
            p
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn export_parse_round_trip(p in arb_problem()) {
        let text = export_lp_format(&p).unwrap();
        let back = parse_lp_format(&text).unwrap();
        prop_assert_eq!(back, p);
    }

    #[test]
    fn feasible_answers_satisfy_rows(p in arb_problem()) {
        let sol = solve(&p, &SolverConfig::default()).unwrap();
        if sol.status == LpStatus::Feasible {
            prop_assert!(p.max_violation(&sol.values) <= 1e-9);
        }
    }
}
