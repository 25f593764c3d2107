mod common;

use std::sync::Arc;

use genplan::encoder::{bound_formula, build_theory, size_bound, theory_size, GoalScope, Variant};
use genplan::features::{self, PoolConfig};
use genplan::sampler;
use proptest::prelude::*;

use common::strategies;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn full_theory_matches_brute_force(spec in strategies::spec(8, 12)) {
        common::check_theory_exactness(&spec, Variant::Full, GoalScope::All).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn marked_theory_matches_brute_force(spec in strategies::spec(8, 12)) {
        common::check_theory_exactness(&spec, Variant::Marked, GoalScope::All).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn anchored_goal_scope_matches_brute_force(spec in strategies::spec(8, 12)) {
        common::check_theory_exactness(&spec, Variant::Marked, GoalScope::Anchored).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn theory_counts_stay_within_the_bound(spec in strategies::spec(8, 12), full in any::<bool>()) {
        let syn = common::synthetic(&spec);
        let variant = if full { Variant::Full } else { Variant::Marked };
        let (cnf, _) = build_theory(&syn.sample, &syn.features, &syn.values, variant, GoalScope::All);
        let (bv, bc) = size_bound(&syn.sample, syn.features.len());
        prop_assert!(cnf.num_vars as f64 <= bv);
        prop_assert!(cnf.num_clauses() as f64 <= bc);
        let counted = theory_size(&syn.sample, &syn.features, &syn.values, variant, GoalScope::All);
        prop_assert_eq!(counted, (cnf.num_vars as u64, cnf.num_clauses() as u64));
    }

    /// The canonical encoding keeps one D1 per unordered pair. Doubling
    /// every clause for the mirrored pair cannot change satisfiability.
    #[test]
    fn symmetric_pairs_are_encoded_once(spec in strategies::spec(6, 8)) {
        let syn = common::synthetic(&spec);
        let (_, vars) = build_theory(&syn.sample, &syn.features, &syn.values, Variant::Full, GoalScope::All);
        for &(s, t) in vars.d1.keys() {
            prop_assert!(s < t);
            prop_assert!(!vars.d1.contains_key(&(t, s)));
        }
        for &(i, j) in vars.d2.keys() {
            prop_assert!(i <= j);
        }
    }
}

#[test]
fn bound_formula_examples() {
    assert_eq!(bound_formula(1.0, 1.0, 1.0), (3.0, 6.0));
    // 50² · (2 + 100 + 10 + 400 · 101)
    let (_, c) = bound_formula(50.0, 10.0, 400.0);
    assert_eq!(c, 2500.0 * 40512.0);
}

#[test]
fn wcnf_header_and_weights() {
    let spec = common::SyntheticSpec {
        expanded: 2,
        leaves: 0,
        edges: vec![vec![1], vec![0]],
        goals: vec![false, true],
        marked: vec![vec![true], vec![true]],
        features: vec![(false, 2, vec![0, 1]), (true, 0, vec![0, 1])],
    };
    let syn = common::synthetic(&spec);
    let (cnf, _) = build_theory(
        &syn.sample,
        &syn.features,
        &syn.values,
        Variant::Marked,
        GoalScope::All,
    );
    let text = cnf.to_wcnf_string();
    let header = format!(
        "p wcnf {} {} {}",
        cnf.num_vars,
        cnf.num_clauses(),
        cnf.top()
    );
    assert!(text.starts_with(&header));
    // Only the positive-cost feature gets a soft clause.
    assert_eq!(cnf.soft.len(), 1);
    assert_eq!(cnf.soft[0].1, 2);
    assert_eq!(cnf.top(), 3);
}

#[test]
fn no_goal_states_means_no_separation_units() {
    let spec = common::SyntheticSpec {
        expanded: 1,
        leaves: 1,
        edges: vec![vec![1]],
        goals: vec![false, false],
        marked: vec![vec![true]],
        features: vec![(true, 1, vec![1, 0])],
    };
    let syn = common::synthetic(&spec);
    let (cnf, _) = build_theory(
        &syn.sample,
        &syn.features,
        &syn.values,
        Variant::Full,
        GoalScope::All,
    );
    assert!(cnf.hard_clauses().all(|c| c.len() != 1));
    let nothing = vec![false; cnf.num_vars as usize + 1];
    assert!(cnf.satisfies_hard(&nothing));
}

#[test]
fn encoding_is_deterministic_on_a_real_sample() {
    let inst = Arc::new(common::blocks(
        "c",
        &[&["x", "a", "b"], &["c"]],
        "(clear x)",
    ));
    let domain = genplan::strips::parse_domain(&common::blocks_domain()).unwrap();
    let s = sampler::build_sample_set(&[inst], 20).unwrap();
    let pool = features::generate_pool(
        &domain,
        &s,
        &PoolConfig {
            max_complexity: 6,
            distance: false,
        },
    );
    let a = build_theory(
        &s,
        &pool.features,
        &pool.values,
        Variant::Marked,
        GoalScope::Anchored,
    )
    .0
    .to_wcnf_string();
    let b = build_theory(
        &s,
        &pool.features,
        &pool.values,
        Variant::Marked,
        GoalScope::Anchored,
    )
    .0
    .to_wcnf_string();
    assert_eq!(a, b);
}

/// The D1 biconditional: in every satisfying assignment D1(s,t) is true
/// exactly when a selected feature tells s and t apart.
#[test]
fn d1_biconditional_holds_in_optimal_models() {
    let inst = Arc::new(common::blocks("c", &[&["x", "a"], &["b"]], "(clear x)"));
    let domain = genplan::strips::parse_domain(&common::blocks_domain()).unwrap();
    let s = sampler::build_sample_set(&[inst], 12).unwrap();
    let pool = features::generate_pool(
        &domain,
        &s,
        &PoolConfig {
            max_complexity: 5,
            distance: false,
        },
    );
    let (cnf, vars) = build_theory(
        &s,
        &pool.features,
        &pool.values,
        Variant::Full,
        GoalScope::All,
    );
    let genplan::maxsat::MaxSatOutcome::Optimal(a) =
        genplan::maxsat::solve_builtin(&cnf, None).unwrap().0
    else {
        panic!("the 3-block clear sample is separable");
    };
    let selected = vars.selected_features(&a.values);
    for (&(p, q), &v) in &vars.d1 {
        let differ = selected.iter().any(|&f| {
            let num = pool.features[f].is_numeric();
            features::abstract_atom(num, pool.values[f][p])
                != features::abstract_atom(num, pool.values[f][q])
        });
        assert_eq!(a.value(v), differ, "D1({p},{q})");
    }
}
