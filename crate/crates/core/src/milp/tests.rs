use std::collections::HashMap;

use proptest::prelude::*;

use super::*;
use crate::rational::{q, qi};

fn lp_value(m: &MilpModel) -> Option<Rational> {
    let r = solve_lp(m);
    assert!(r.status != Status::Optimal || m.relaxed().violations(r.assignment.as_ref().unwrap()).is_empty());
    r.objective
}

#[test]
fn single_bound_lp() {
    let mut m = MilpModel::new("t", ObjSense::Maximize);
    let x = m.add_nonneg("x", None, "").unwrap();
    m.add_constraint("c", [(x, qi(1))], Sense::Le, qi(5));
    m.set_objective([(x, qi(1))]);
    assert_eq!(lp_value(&m), Some(qi(5)));
}

#[test]
fn box_lp() {
    let mut m = MilpModel::new("t", ObjSense::Maximize);
    let x = m.add_nonneg("x", Some(qi(1)), "").unwrap();
    let y = m.add_nonneg("y", Some(qi(1)), "").unwrap();
    m.add_constraint("c", [(x, qi(1)), (y, qi(1))], Sense::Le, qi(1));
    m.set_objective([(x, qi(1)), (y, qi(1))]);
    assert_eq!(lp_value(&m), Some(qi(1)));
}

#[test]
fn phase_one_with_equalities_and_ge() {
    // min 2x + 3y st x + y = 4, x - y >= 1, x <= 3
    let mut m = MilpModel::new("t", ObjSense::Minimize);
    let x = m.add_nonneg("x", Some(qi(3)), "").unwrap();
    let y = m.add_nonneg("y", None, "").unwrap();
    m.add_constraint("e", [(x, qi(1)), (y, qi(1))], Sense::Eq, qi(4));
    m.add_constraint("g", [(x, qi(1)), (y, qi(-1))], Sense::Ge, qi(1));
    m.set_objective([(x, qi(2)), (y, qi(3))]);
    let r = solve_lp(&m);
    assert_eq!(r.status, Status::Optimal);
    assert_eq!(r.objective, Some(qi(9)));
    assert_eq!(r.assignment, Some(vec![qi(3), qi(1)]));
}

#[test]
fn fractional_optimum_is_exact() {
    // max x + y st 3x + y <= 2, x + 3y <= 2
    let mut m = MilpModel::new("t", ObjSense::Maximize);
    let x = m.add_nonneg("x", None, "").unwrap();
    let y = m.add_nonneg("y", None, "").unwrap();
    m.add_constraint("a", [(x, qi(3)), (y, qi(1))], Sense::Le, qi(2));
    m.add_constraint("b", [(x, qi(1)), (y, qi(3))], Sense::Le, qi(2));
    m.set_objective([(x, qi(1)), (y, qi(1))]);
    let r = solve_lp(&m);
    assert_eq!(r.objective, Some(qi(1)));
    assert_eq!(r.assignment, Some(vec![q(1, 2), q(1, 2)]));
}

#[test]
fn free_and_negative_variables() {
    // min x st x >= -7 (as a row), x free; max -y with y <= -2 upper only
    let mut m = MilpModel::new("t", ObjSense::Minimize);
    let x = m.add_var("x", VarKind::Continuous, None, None, "").unwrap();
    let y = m.add_var("y", VarKind::Continuous, None, Some(qi(-2)), "").unwrap();
    m.add_constraint("c", [(x, qi(1))], Sense::Ge, qi(-7));
    m.add_constraint("d", [(y, qi(1))], Sense::Ge, q(-9, 2));
    m.set_objective([(x, qi(1)), (y, qi(1))]);
    let r = solve_lp(&m);
    assert_eq!(r.objective, Some(q(-23, 2)));
}

#[test]
fn infeasible_and_unbounded() {
    let mut m = MilpModel::new("t", ObjSense::Maximize);
    let x = m.add_nonneg("x", None, "").unwrap();
    m.add_constraint("a", [(x, qi(1))], Sense::Ge, qi(3));
    m.add_constraint("b", [(x, qi(1))], Sense::Le, qi(2));
    assert_eq!(solve_lp(&m).status, Status::Infeasible);
    assert_eq!(solve_milp(&m, &SolveOptions::default()).status, Status::Infeasible);

    let mut m = MilpModel::new("t", ObjSense::Maximize);
    let x = m.add_nonneg("x", None, "").unwrap();
    let y = m.add_nonneg("y", None, "").unwrap();
    m.add_constraint("a", [(x, qi(1)), (y, qi(-1))], Sense::Le, qi(1));
    m.set_objective([(x, qi(1))]);
    assert_eq!(solve_lp(&m).status, Status::Unbounded);
}

#[test]
fn degenerate_cycling_example_terminates() {
    // Beale's example: cycles under naive Dantzig with textbook tie breaking
    let mut m = MilpModel::new("beale", ObjSense::Maximize);
    let x: Vec<usize> = (0..4).map(|i| m.add_nonneg(format!("x{i}"), None, "").unwrap()).collect();
    m.add_constraint(
        "r1",
        [(x[0], q(1, 4)), (x[1], qi(-60)), (x[2], q(-1, 25)), (x[3], qi(9))],
        Sense::Le,
        qi(0),
    );
    m.add_constraint(
        "r2",
        [(x[0], q(1, 2)), (x[1], qi(-90)), (x[2], q(-1, 50)), (x[3], qi(3))],
        Sense::Le,
        qi(0),
    );
    m.add_constraint("r3", [(x[2], qi(1))], Sense::Le, qi(1));
    m.set_objective([(x[0], q(3, 4)), (x[1], qi(-150)), (x[2], q(1, 50)), (x[3], qi(-6))]);
    assert_eq!(lp_value(&m), Some(q(1, 20)));
}

#[test]
fn binary_rounding_down() {
    let mut m = MilpModel::new("t", ObjSense::Maximize);
    let x = m.add_binary("x", "").unwrap();
    m.add_constraint("c", [(x, qi(1))], Sense::Le, q(1, 2));
    m.set_objective([(x, qi(1))]);
    let r = solve_milp(&m, &SolveOptions::default());
    assert_eq!(r.status, Status::Optimal);
    assert_eq!(r.objective, Some(qi(0)));
    assert_eq!(r.root_bound, Some(q(1, 2)));
}

fn knapsack() -> MilpModel {
    let mut m = MilpModel::new("knap", ObjSense::Maximize);
    let x = m.add_binary("x", "").unwrap();
    let y = m.add_binary("y", "").unwrap();
    m.add_constraint("cap", [(x, qi(2)), (y, qi(1))], Sense::Le, qi(2));
    m.set_objective([(x, qi(3)), (y, qi(2))]);
    m
}

#[test]
fn small_knapsack() {
    let m = knapsack();
    let r = solve_milp(&m, &SolveOptions::default());
    assert_eq!(r.status, Status::Optimal);
    assert_eq!(r.objective, Some(qi(3)));
    assert_eq!(r.assignment, Some(vec![qi(1), qi(0)]));
    assert_eq!(r.best_bound, r.objective);
}

#[test]
fn warm_start_checks() {
    let m = knapsack();
    let full: HashMap<String, Rational> = [("x".to_string(), qi(1)), ("y".to_string(), qi(1))].into();
    match warm_start(&m, &full) {
        Err(Error::RejectedStart(v)) => assert!(v[0].starts_with("cap"), "{v:?}"),
        other => panic!("{other:?}"),
    }
    let ok: HashMap<String, Rational> = [("x".to_string(), qi(1)), ("y".to_string(), qi(0))].into();
    let ws = warm_start(&m, &ok).unwrap();
    let opts = SolveOptions {
        warm_start: Some(ws),
        ..Default::default()
    };
    let r = solve_milp(&m, &opts);
    assert_eq!(r.objective, Some(qi(3)));
    // the root LP bound 7/2 is not integral, but the start already matches the
    // best possible integer value, so nothing beyond the root is explored
    assert!(r.nodes <= 3, "{}", r.nodes);
}

#[test]
fn warm_start_completes_continuous_part() {
    let mut m = MilpModel::new("t", ObjSense::Maximize);
    let y = m.add_binary("y", "").unwrap();
    let x = m.add_nonneg("x", None, "").unwrap();
    m.add_constraint("link", [(x, qi(1)), (y, qi(-3))], Sense::Le, qi(1));
    m.set_objective([(x, qi(1)), (y, qi(-1))]);
    let start: HashMap<String, Rational> = [("y".to_string(), qi(1))].into();
    let ws = warm_start(&m, &start).unwrap();
    assert_eq!(ws.assignment(), &[qi(1), qi(4)]);
    let missing: HashMap<String, Rational> = HashMap::new();
    assert!(warm_start(&m, &missing).is_err());
    let bad: HashMap<String, Rational> = [("y".to_string(), q(1, 2))].into();
    assert!(warm_start(&m, &bad).is_err());
}

#[test]
fn node_limit_and_snapshots() {
    // many fractional binaries: max sum x_i st sum 2 x_i <= 7
    let mut m = MilpModel::new("t", ObjSense::Maximize);
    let xs: Vec<usize> = (0..6).map(|i| m.add_binary(format!("x{i}"), "").unwrap()).collect();
    m.add_constraint("c", xs.iter().map(|&j| (j, qi(2))), Sense::Le, qi(7));
    m.set_objective(xs.iter().enumerate().map(|(i, &j)| (j, qi(10 + i as i64))));
    let opts = SolveOptions {
        limits: Limits { nodes: Some(3), time: None },
        snapshots: vec![SnapshotTrigger::Nodes(1), SnapshotTrigger::Nodes(1000)],
        warm_start: None,
    };
    let r = solve_milp(&m, &opts);
    assert!(matches!(r.status, Status::FeasibleAtLimit | Status::LimitNoIncumbent));
    assert_eq!(r.snapshots.len(), 2);
    let first = &r.snapshots[0];
    assert_eq!(first.lp_bound, r.root_bound);
    assert_eq!(first.lp_assignment, r.root_assignment);
    assert!(r.best_bound.clone().unwrap() >= r.objective.clone().unwrap_or(qi(0)));
    let full = solve_milp(&m, &SolveOptions::default());
    assert_eq!(full.status, Status::Optimal);
    assert_eq!(full.objective, Some(qi(13 + 14 + 15)));
    assert!(r.best_bound.unwrap() >= full.objective.unwrap());
}

#[test]
fn minimize_milp() {
    // set cover: min x1 + x2 + x3, each element covered
    let mut m = MilpModel::new("cover", ObjSense::Minimize);
    let x: Vec<usize> = (0..3).map(|i| m.add_binary(format!("x{i}"), "").unwrap()).collect();
    m.add_constraint("e1", [(x[0], qi(1)), (x[1], qi(1))], Sense::Ge, qi(1));
    m.add_constraint("e2", [(x[1], qi(1)), (x[2], qi(1))], Sense::Ge, qi(1));
    m.add_constraint("e3", [(x[0], qi(1)), (x[2], qi(1))], Sense::Ge, qi(1));
    m.set_objective(x.iter().map(|&j| (j, qi(1))));
    let r = solve_milp(&m, &SolveOptions::default());
    assert_eq!(r.root_bound, Some(q(3, 2)));
    assert_eq!(r.objective, Some(qi(2)));
    assert_eq!(r.best_bound, Some(qi(2)));
}

#[test]
fn violations_report() {
    let m = knapsack();
    let v = m.violations(&[q(1, 2), qi(2)]);
    assert_eq!(v.len(), 3, "{v:?}");
}

/// Exact LP optimum of a bounded problem by enumerating basic points.
fn vertex_oracle(m: &MilpModel) -> Option<Rational> {
    let n = m.vars().len();
    // hyperplanes a.x = b from constraints and finite bounds
    let mut planes: Vec<(Vec<Rational>, Rational)> = Vec::new();
    for c in m.constraints() {
        let mut a = vec![qi(0); n];
        for (j, v) in &c.coeffs {
            a[*j] = v.clone();
        }
        planes.push((a, c.rhs.clone()));
    }
    for (j, v) in m.vars().iter().enumerate() {
        for b in [&v.lower, &v.upper].into_iter().flatten() {
            let mut a = vec![qi(0); n];
            a[j] = qi(1);
            planes.push((a, b.clone()));
        }
    }
    let mut best: Option<Rational> = None;
    let k = planes.len();
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        if let Some(x) = solve_square(&idx.iter().map(|&i| planes[i].clone()).collect::<Vec<_>>()) {
            if m.relaxed().violations(&x).is_empty() {
                let v = m.objective_value(&x);
                let v = if m.obj_sense() == ObjSense::Minimize { -v } else { v };
                if best.as_ref().is_none_or(|b| v > *b) {
                    best = Some(v);
                }
            }
        }
        // next combination
        let mut i = n;
        loop {
            if i == 0 {
                return best.map(|b| if m.obj_sense() == ObjSense::Minimize { -b } else { b });
            }
            i -= 1;
            if idx[i] < k - n + i {
                idx[i] += 1;
                for t in i + 1..n {
                    idx[t] = idx[t - 1] + 1;
                }
                break;
            }
        }
    }
}

fn solve_square(rows: &[(Vec<Rational>, Rational)]) -> Option<Vec<Rational>> {
    let n = rows.len();
    let mut a: Vec<Vec<Rational>> = rows
        .iter()
        .map(|(r, b)| {
            let mut v = r.clone();
            v.push(b.clone());
            v
        })
        .collect();
    for col in 0..n {
        let p = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, p);
        let inv = a[col][col].recip();
        for v in a[col].iter_mut() {
            *v *= &inv;
        }
        for r in 0..n {
            if r != col && !a[r][col].is_zero() {
                let f = a[r][col].clone();
                for c in 0..=n {
                    let t = &f * &a[col][c];
                    a[r][c] -= t;
                }
            }
        }
    }
    Some(a.into_iter().map(|r| r[n].clone()).collect())
}

fn arb_model(max_bin: usize, max_cont: usize) -> impl Strategy<Value = MilpModel> {
    (
        0..=max_bin,
        0..=max_cont,
        any::<bool>(),
        prop::collection::vec((prop::collection::vec(-4i64..5, 16), 0u8..3, -3i64..12), 1..6),
        prop::collection::vec(-5i64..8, 16),
        prop::collection::vec(1i64..5, 16),
    )
        .prop_map(|(nb, nc, maximize, rows, obj, ubs)| {
            let nb = nb.max(if nc == 0 { 1 } else { 0 });
            let sense = if maximize { ObjSense::Maximize } else { ObjSense::Minimize };
            let mut m = MilpModel::new("rand", sense);
            for i in 0..nb {
                m.add_binary(format!("b{i}"), "").unwrap();
            }
            for i in 0..nc {
                m.add_nonneg(format!("c{i}"), Some(qi(ubs[i])), "").unwrap();
            }
            let n = nb + nc;
            for (k, (coef, s, rhs)) in rows.into_iter().enumerate() {
                let sense = [Sense::Le, Sense::Ge, Sense::Eq][s as usize];
                let sense = if sense == Sense::Eq && k % 2 == 1 { Sense::Le } else { sense };
                m.add_constraint(
                    format!("r{k}"),
                    (0..n).map(|j| (j, q(coef[j], 1 + (j as i64 % 2)))),
                    sense,
                    qi(rhs),
                );
            }
            m.set_objective((0..n).map(|j| (j, qi(obj[j]))));
            m
        })
}

/// Brute force over binaries; each completion solved as an LP.
pub(crate) fn enumerate(m: &MilpModel) -> Option<Rational> {
    let bins = m.binaries();
    let mut best: Option<Rational> = None;
    for mask in 0u32..(1 << bins.len()) {
        let mut f = m.clone();
        for (k, &j) in bins.iter().enumerate() {
            let v = qi(((mask >> k) & 1) as i64);
            f.set_bounds(j, Some(v.clone()), Some(v));
        }
        if let Some(v) = solve_lp(&f).objective {
            let better = match (&best, m.obj_sense()) {
                (None, _) => true,
                (Some(b), ObjSense::Maximize) => v > *b,
                (Some(b), ObjSense::Minimize) => v < *b,
            };
            if better {
                best = Some(v);
            }
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn simplex_matches_vertex_enumeration(m in arb_model(2, 2)) {
        let r = solve_lp(&m);
        let oracle = vertex_oracle(&m);
        prop_assert_eq!(r.objective.clone(), oracle);
        if let Some(x) = r.assignment {
            prop_assert!(m.relaxed().violations(&x).is_empty());
        }
    }

    #[test]
    fn branch_and_bound_matches_enumeration(m in arb_model(7, 3)) {
        let r = solve_milp(&m, &SolveOptions::default());
        let oracle = enumerate(&m);
        prop_assert_eq!(r.objective.clone(), oracle);
        match r.status {
            Status::Optimal => {
                let x = r.assignment.unwrap();
                prop_assert!(m.violations(&x).is_empty());
                prop_assert_eq!(r.best_bound, r.objective);
            }
            s => prop_assert_eq!(s, Status::Infeasible),
        }
    }
}
