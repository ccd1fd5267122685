mod common;

use common::*;
use nnse::solver::{Assignment, SolverOptions, SolverResult, SolverSession};
use nnse::symexpr::{AffineExpr, Branch, BranchOutcome, LinearConstraint, Provenance, Relation, SymVar, SymVarId};
use nnse::Error;
use proptest::prelude::*;
use rand::Rng;

fn exact_only() -> SolverOptions {
    SolverOptions {
        float_pass: false,
        bound_pass: false,
        ..SolverOptions::default()
    }
}

/// Rows over one variable each, with integral thresholds so that bounds
/// often touch.
fn single_variable_system(seed: u64) -> (Vec<SymVar>, Vec<LinearConstraint>) {
    let mut r = rng(seed);
    let n = r.gen_range(1..=3);
    let vars: Vec<SymVar> = (0..n)
        .map(|i| SymVar {
            id: SymVarId(i as u32),
            name: format!("x{i}"),
            lower: -2.0,
            upper: 2.0,
        })
        .collect();
    let prov = Provenance {
        layer: Some(0),
        index: 0,
        branch: Branch::ReluActive,
    };
    let cs = (0..r.gen_range(0..8))
        .filter_map(|_| {
            let j = r.gen_range(0..n);
            let a = [-2.0, -1.0, 0.5, 1.0, 3.0][r.gen_range(0..5)];
            let e = AffineExpr::new(r.gen_range(-4..=4) as f64, [(SymVarId(j as u32), a)]);
            let rel = if r.gen_bool(0.5) { Relation::Gt } else { Relation::Ge };
            match LinearConstraint::build(e, rel, prov) {
                BranchOutcome::Constraint(c) => Some(c),
                _ => None,
            }
        })
        .collect();
    (vars, cs)
}

fn decide(seed: u64, options: SolverOptions) -> SolverResult {
    let (vars, cs) = random_system(seed);
    decide_system(vars, &cs, options)
}

fn decide_system(vars: Vec<SymVar>, cs: &[LinearConstraint], options: SolverOptions) -> SolverResult {
    let mut s = SolverSession::with_options(vars, options).unwrap();
    s.push(cs).unwrap();
    s.check()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn witnesses_satisfy_every_constraint(seed in any::<u64>()) {
        let (vars, cs) = random_system(seed);
        let mut s = SolverSession::new(vars.clone()).unwrap();
        s.push(&cs).unwrap();
        for r in [s.check(), s.check_interior()] {
            if let SolverResult::Sat(w) = r {
                prop_assert!(cs.iter().all(|c| w.satisfies(c)));
                for (v, x) in vars.iter().zip(w.values()) {
                    let x: f64 = num_traits::ToPrimitive::to_f64(x).unwrap();
                    prop_assert!(v.lower <= x && x <= v.upper);
                }
            }
        }
    }

    #[test]
    fn float_pass_never_changes_the_answer(seed in any::<u64>()) {
        let fast = decide(seed, SolverOptions::default());
        let exact = decide(seed, exact_only());
        prop_assert_eq!(fast.variant_name(), exact.variant_name());
    }

    #[test]
    fn interval_pass_never_changes_the_answer(seed in any::<u64>()) {
        let (vars, cs) = single_variable_system(seed);
        let fast = decide_system(vars.clone(), &cs, SolverOptions::default());
        let exact = decide_system(vars, &cs, exact_only());
        prop_assert_eq!(fast.variant_name(), exact.variant_name());
        if let SolverResult::Sat(w) = fast {
            prop_assert!(cs.iter().all(|c| w.satisfies(c)));
        }
    }

    #[test]
    fn unsat_systems_have_no_sampled_solution(seed in any::<u64>()) {
        let (vars, cs) = random_system(seed);
        let mut s = SolverSession::new(vars.clone()).unwrap();
        s.push(&cs).unwrap();
        if s.check().is_unsat() {
            let steps = [-2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0];
            let n = vars.len();
            let mut idx = vec![0usize; n];
            loop {
                let pt: Vec<f64> = idx.iter().map(|&i| steps[i]).collect();
                let a = Assignment::from_f64(&pt).unwrap();
                prop_assert!(!cs.iter().all(|c| a.satisfies(c)), "grid point {:?} satisfies an unsat system", pt);
                let mut k = 0;
                while k < n && idx[k] == steps.len() - 1 {
                    idx[k] = 0;
                    k += 1;
                }
                if k == n {
                    break;
                }
                idx[k] += 1;
            }
        }
    }

    #[test]
    fn pop_restores_earlier_answers(seed in any::<u64>(), extra in any::<u64>()) {
        let (vars, cs) = random_system(seed);
        let (_, more) = random_system(extra);
        let more: Vec<_> = more.into_iter().filter(|c| c.expr().terms().iter().all(|t| t.0.index() < vars.len())).collect();
        let mut s = SolverSession::new(vars.clone()).unwrap();
        s.push(&cs).unwrap();
        let before = s.check();
        s.push(&more).unwrap();
        let _ = s.check();
        s.pop().unwrap();
        prop_assert_eq!(s.check(), before.clone());

        let mut fresh = SolverSession::new(vars).unwrap();
        fresh.push(&cs).unwrap();
        prop_assert_eq!(fresh.check(), before);
    }
}

#[test]
fn deterministic_witnesses() {
    for seed in 0..50 {
        assert_eq!(
            decide(seed, SolverOptions::default()),
            decide(seed, SolverOptions::default())
        );
        assert_eq!(decide(seed, exact_only()), decide(seed, exact_only()));
    }
}

#[test]
fn underflow_is_an_error() {
    let (vars, _) = random_system(1);
    let mut s = SolverSession::new(vars).unwrap();
    s.push(&[]).unwrap();
    s.pop().unwrap();
    assert!(matches!(s.pop(), Err(Error::StackUnderflow)));
    assert_eq!(s.stats().pushes, 1);
    assert_eq!(s.stats().pops, 1);
}

#[test]
fn agrees_with_z3() {
    let mut compared = 0;
    for seed in 0..40 {
        let (vars, cs) = random_system(seed);
        let mut s = SolverSession::new(vars).unwrap();
        s.push(&cs).unwrap();
        let ours = s.check();
        let Some(theirs) = z3_answer(&s.export_smtlib()) else {
            eprintln!("z3 not found; skipping differential check");
            return;
        };
        assert_eq!(ours.variant_name(), theirs, "seed {seed}\n{}", s.export_smtlib());
        compared += 1;
    }
    assert_eq!(compared, 40);
}
