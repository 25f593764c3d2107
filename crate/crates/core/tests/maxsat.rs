mod common;

use genplan::encoder::WeightedCnf;
use genplan::maxsat::{self, parse_solver_output, parse_wcnf, MaxSatOutcome, SolverOutput};
use proptest::prelude::*;
use proptest::strategy::ValueTree;

fn theory(num_vars: u32, hard: &[Vec<i32>], soft: &[(Vec<i32>, u64)]) -> WeightedCnf {
    let mut cnf = WeightedCnf::new(num_vars);
    for c in hard {
        cnf.add_hard(c);
    }
    for (c, w) in soft {
        cnf.add_soft(c, *w);
    }
    cnf
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn builtin_matches_brute_force(cnf in common::strategies::theory()) {
        let (outcome, _) = maxsat::solve_builtin(&cnf, None).unwrap();
        match (outcome, common::brute_force_optimum(&cnf)) {
            (MaxSatOutcome::Unsatisfiable, None) => {}
            (MaxSatOutcome::Optimal(a), Some(best)) => {
                prop_assert!(cnf.satisfies_hard(&a.values));
                prop_assert_eq!(cnf.cost(&a.values), a.cost);
                prop_assert_eq!(a.cost, best);
            }
            (o, b) => prop_assert!(false, "solver {:?} vs brute force {:?}", o, b),
        }
    }

    #[test]
    fn builtin_is_deterministic(cnf in common::strategies::theory()) {
        let a = maxsat::solve_builtin(&cnf, None).unwrap().0;
        let b = maxsat::solve_builtin(&cnf, None).unwrap().0;
        prop_assert_eq!(a, b);
    }

    #[test]
    fn wcnf_round_trips(cnf in common::strategies::theory()) {
        let text = cnf.to_wcnf_string();
        let back = parse_wcnf(&text).unwrap();
        prop_assert_eq!(back.to_wcnf_string(), text);
    }
}

#[test]
fn unit_soft_clause_is_paid() {
    let cnf = theory(1, &[vec![1]], &[(vec![-1], 3)]);
    let MaxSatOutcome::Optimal(a) = maxsat::solve_builtin(&cnf, None).unwrap().0 else {
        panic!()
    };
    assert!(a.value(1));
    assert_eq!(a.cost, 3);
}

#[test]
fn contradictory_units_are_unsatisfiable() {
    let cnf = theory(1, &[vec![1], vec![-1]], &[]);
    assert_eq!(
        maxsat::solve_builtin(&cnf, None).unwrap().0,
        MaxSatOutcome::Unsatisfiable
    );
}

#[test]
fn header_names_the_variable_count() {
    let cnf = theory(2, &[vec![1, 2]], &[(vec![-1], 1)]);
    assert!(cnf.to_wcnf_string().starts_with("p wcnf 2 2 2\n"));
}

#[test]
fn solver_output_formats() {
    assert_eq!(
        parse_solver_output("s UNSATISFIABLE\n", 3).unwrap(),
        SolverOutput::Unsatisfiable
    );
    let lits = parse_solver_output("c hello\no 4\ns OPTIMUM FOUND\nv 1 -2 3 0\n", 3).unwrap();
    assert_eq!(lits, SolverOutput::Optimum(vec![false, true, false, true]));
    let bits = parse_solver_output("s OPTIMUM FOUND\nv 101\n", 3).unwrap();
    assert_eq!(bits, lits);
    let err = parse_solver_output("s OPTIMUM FOUND\nv 1 x 0\n", 3).unwrap_err();
    assert!(err.to_string().contains("line 2"), "{err}");
    assert!(parse_solver_output("v 1 0\n", 1).is_err());
}

fn rc2() -> Option<maxsat::SolverMode> {
    let script = common::data("../tools/rc2-maxsat.py");
    let ok = std::process::Command::new("python3")
        .args(["-c", "import pysat.examples.rc2"])
        .status()
        .is_ok_and(|s| s.success());
    ok.then(|| maxsat::SolverMode::External {
        path: "python3".into(),
        args: vec![script.display().to_string()],
    })
}

/// Builtin and external agree on small random theories. Skipped without
/// python3 and PySAT.
#[test]
fn builtin_agrees_with_external_solver() {
    let Some(mode) = rc2() else {
        eprintln!("python3 with PySAT not available; skipping");
        return;
    };
    let options = maxsat::SolveOptions {
        mode,
        timeout: None,
    };
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    for _ in 0..10 {
        let cnf = common::strategies::theory()
            .new_tree(&mut runner)
            .unwrap()
            .current();
        let builtin = maxsat::solve_builtin(&cnf, None).unwrap().0;
        let external = maxsat::solve_max_sat(&cnf, &options).unwrap();
        match (builtin, external) {
            (MaxSatOutcome::Unsatisfiable, MaxSatOutcome::Unsatisfiable) => {}
            (MaxSatOutcome::Optimal(a), MaxSatOutcome::Optimal(b)) => assert_eq!(a.cost, b.cost),
            (a, b) => panic!("builtin {a:?}, external {b:?}"),
        }
    }
}
