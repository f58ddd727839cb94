//! IPF against the Newton oracle and against closed forms.

mod common;

use common::*;
use purfit::constraints::build_constraints;
use purfit::{project, ConstraintMode, JointTable, SolverOptions, SupportMask};

fn reduced(f: &JointTable, mode: ConstraintMode) -> purfit::ConstraintSet {
    build_constraints(f, mode)
        .unwrap()
        .reduce(&SupportMask::full(f.len()))
        .unwrap()
}

#[test]
fn oracle_matches_parity_closed_form() {
    // parity alone: q(y, s, x) = q0(x | y, s) f(y) f(s)
    let mut r = rng(1);
    let schema = schema(2, &[2], &[3]);
    for _ in 0..10 {
        let inst = feasible_instance(&mut r, &schema);
        let q0 = random_positive(&mut r, &schema);
        let set = reduced(&inst.f, ConstraintMode::P);
        let oracle = kl_oracle(&q0, &set, &inst.interior);
        let target = set.constraints()[0].target().values().to_vec();
        let nx = schema.n_unprotected();
        let closed: Vec<f64> = (0..q0.len())
            .map(|i| {
                let ys = i / nx;
                let block: f64 = q0.values()[ys * nx..(ys + 1) * nx].iter().sum();
                q0.values()[i] / block * target[ys]
            })
            .collect();
        assert!(max_abs_diff(&oracle, &closed) < 1e-12, "{}", max_abs_diff(&oracle, &closed));
    }
}

#[test]
fn ipf_matches_oracle_on_small_tables() {
    let mut r = rng(2);
    let opts = SolverOptions::default();
    let mut checked = 0;
    for shape in [[2usize, 2, 2], [2, 2, 3]] {
        let schema = schema(shape[0], &[shape[1]], &[shape[2]]);
        for i in 0..30 {
            let inst = feasible_instance(&mut r, &schema);
            let q0 = if i % 3 == 0 {
                inst.f.clone()
            } else {
                random_positive(&mut r, &schema)
            };
            for mode in [ConstraintMode::P, ConstraintMode::PU, ConstraintMode::PUR] {
                let set = reduced(&inst.f, mode);
                let (q, diag) = project(&q0, &set, &opts).unwrap();
                assert!(diag.converged);
                let oracle = kl_oracle(&q0, &set, &inst.interior);
                let err = max_abs_diff(q.values(), &oracle);
                assert!(err < 1e-6, "{shape:?} {mode}: {err}");
                checked += 1;
            }
        }
    }
    assert!(checked >= 150);
}

#[test]
fn ipf_matches_oracle_on_larger_tables() {
    let mut r = rng(3);
    let schema = schema(3, &[2, 2], &[2, 3]);
    for _ in 0..5 {
        let inst = feasible_instance(&mut r, &schema);
        let q0 = random_positive(&mut r, &schema);
        let set = reduced(&inst.f, ConstraintMode::PUR);
        let (q, _) = project(&q0, &set, &SolverOptions::default()).unwrap();
        let oracle = kl_oracle(&q0, &set, &inst.interior);
        assert!(max_abs_diff(q.values(), &oracle) < 1e-6);
    }
}

#[test]
fn t1_projects_to_uniform() {
    let schema = schema(2, &[2], &[2]);
    let g = [0.1, 0.4, 0.4, 0.1];
    let t1 = JointTable::new(schema.clone(), g.iter().flat_map(|&v| [v / 2.0, v / 2.0]).collect()).unwrap();
    let set = reduced(&t1, ConstraintMode::PUR);
    let (q, _) = project(&t1, &set, &SolverOptions::default()).unwrap();
    assert!(q.max_abs_diff(&JointTable::uniform(schema.clone())) < 1e-10);
    // the uniform table is interior and feasible, so the oracle can start there
    let oracle = kl_oracle(&t1, &set, &JointTable::uniform(schema));
    assert!(max_abs_diff(&oracle, &[0.125; 8]) < 1e-10);
}
