mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::ops::ControlFlow;

use genplan::abstraction::{assemble_qnp, AbstractAction, Condition, Literal, QnpModel};
use genplan::features::{Feature, QualChange};
use genplan::fond::{
    self, enumerate_policies, qnp_to_fond, solve_qnp, strong_cyclic_solve, terminates, to_bits,
    FondAction, FondError, FondModel, Policy,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{policy_is_strong_cyclic, strong_cyclic_exists};

fn lit(feature: usize, value: bool) -> Literal {
    Literal { feature, value }
}

fn action(name: &str, pre: &[(usize, bool)], eff: &[(usize, QualChange)]) -> AbstractAction {
    AbstractAction {
        name: name.into(),
        pre: pre.iter().copied().collect(),
        eff: eff.iter().copied().collect(),
    }
}

/// Features H, X, n(x) with pick-above-x and put-aside.
fn clear_qnp() -> QnpModel {
    let features = [
        "bool(holding)",
        "bool(and(holding,{x}))",
        "num(exists(plus(on),{x}))",
    ]
    .iter()
    .map(|t| Feature::parse(t).unwrap())
    .collect();
    let actions = vec![
        action(
            "pick-above-x",
            &[(1, false), (0, false), (2, false)],
            &[(0, QualChange::Add), (2, QualChange::Dec)],
        ),
        action(
            "put-aside",
            &[(1, false), (0, true)],
            &[(0, QualChange::Del)],
        ),
    ];
    let n = "num(exists(plus(on),{x}))";
    assemble_qnp(
        features,
        actions,
        &[
            "!bool(holding)".into(),
            "!bool(and(holding,{x}))".into(),
            format!("{n} > 0"),
        ],
        &[format!("{n} = 0")],
    )
    .unwrap()
}

/// One numeric feature `n` and one boolean `p`, with the given actions.
fn counter_qnp(actions: Vec<AbstractAction>, initial: &[&str], goal: &[&str]) -> QnpModel {
    let features = vec![
        Feature::parse("num(clear)").unwrap(),
        Feature::parse("bool(holding)").unwrap(),
    ];
    let s = |xs: &[&str]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    assemble_qnp(features, actions, &s(initial), &s(goal)).unwrap()
}

#[test]
fn translation_of_pick_above_x() {
    let f = qnp_to_fond(&clear_qnp());
    assert_eq!(f.atoms.len(), 3);
    let pick = &f.actions[0];
    assert_eq!(pick.pre, [lit(0, false), lit(1, false), lit(2, false)]);
    assert_eq!(
        pick.outcomes,
        [
            vec![lit(0, true), lit(2, false)],
            vec![lit(0, true), lit(2, true)]
        ]
    );
    // Boolean-only effects give one outcome.
    assert_eq!(f.actions[1].outcomes, [vec![lit(0, false)]]);
}

#[test]
fn increments_are_deterministic() {
    let q = counter_qnp(
        vec![action(
            "grow",
            &[],
            &[(0, QualChange::Inc), (1, QualChange::Add)],
        )],
        &["num(clear) = 0"],
        &["bool(holding)"],
    );
    let f = qnp_to_fond(&q);
    assert_eq!(f.actions[0].outcomes, [vec![lit(0, false), lit(1, true)]]);
}

#[test]
fn atom_count_matches_the_features() {
    let q = clear_qnp();
    assert_eq!(qnp_to_fond(&q).atoms.len(), q.features.len());
}

#[test]
fn clear_policy_has_two_rules_and_terminates() {
    let q = clear_qnp();
    let f = qnp_to_fond(&q);
    let p = strong_cyclic_solve(&f).unwrap();
    let expected = BTreeMap::from([
        (to_bits(&[false, false, false]), 0),
        (to_bits(&[true, false, false]), 1),
    ]);
    assert_eq!(p.rules, expected);
    assert!(policy_is_strong_cyclic(&f, &p));
    assert!(terminates(&p, &q));
    let solution = solve_qnp(&q, 100).unwrap();
    assert_eq!(solution.enumerated, 1);
    assert_eq!(solution.policy, p);
}

#[test]
fn goal_at_the_start_needs_no_rules() {
    let q = counter_qnp(
        vec![action("grow", &[], &[(0, QualChange::Inc)])],
        &["num(clear) = 0"],
        &["num(clear) = 0"],
    );
    let p = strong_cyclic_solve(&qnp_to_fond(&q)).unwrap();
    assert!(p.is_empty());
}

#[test]
fn self_undoing_action_has_no_solution() {
    let f = FondModel {
        atoms: vec!["p".into(), "g".into()],
        initial: vec![lit(0, false), lit(1, false)],
        goal: Condition::Literals(vec![lit(1, true)]),
        actions: vec![
            FondAction {
                name: "on".into(),
                pre: vec![lit(0, false)],
                outcomes: vec![vec![lit(0, true)]],
            },
            FondAction {
                name: "off".into(),
                pre: vec![lit(0, true)],
                outcomes: vec![vec![lit(0, false)]],
            },
        ],
    };
    assert_eq!(strong_cyclic_solve(&f), Err(FondError::NoSolution));
}

#[test]
fn increment_decrement_loop_fails_the_sieve() {
    // p toggles while n goes up and down: strong cyclic, never terminating.
    let q = counter_qnp(
        vec![
            action(
                "up",
                &[(1, false)],
                &[(0, QualChange::Inc), (1, QualChange::Add)],
            ),
            action(
                "down",
                &[(1, true), (0, false)],
                &[(0, QualChange::Dec), (1, QualChange::Del)],
            ),
        ],
        &["num(clear) > 0", "!bool(holding)"],
        &["num(clear) = 0"],
    );
    let f = qnp_to_fond(&q);
    let p = strong_cyclic_solve(&f).unwrap();
    assert!(policy_is_strong_cyclic(&f, &p));
    assert!(!terminates(&p, &q));
    assert!(matches!(
        solve_qnp(&q, 100),
        Err(FondError::NoTerminatingPolicy(_))
    ));
}

#[test]
fn acyclic_policies_terminate() {
    let q = counter_qnp(
        vec![action("grab", &[(1, false)], &[(1, QualChange::Add)])],
        &["!bool(holding)"],
        &["bool(holding)"],
    );
    let p = strong_cyclic_solve(&qnp_to_fond(&q)).unwrap();
    assert_eq!(p.len(), 2);
    assert!(terminates(&p, &q));
}

#[test]
fn increments_only_cannot_reach_zero() {
    let q = counter_qnp(
        vec![action("grow", &[], &[(0, QualChange::Inc)])],
        &["num(clear) > 0"],
        &["num(clear) = 0"],
    );
    assert_eq!(solve_qnp(&q, 100), Err(FondError::NoSolution));
}

#[test]
fn policy_json_round_trip() {
    let q = clear_qnp();
    let p = solve_qnp(&q, 10).unwrap().policy;
    let back = fond::policy_from_json(&fond::policy_to_json(&p, &q), &q).unwrap();
    assert_eq!(back, p);
    assert!(fond::policy_table(&p, &q).lines().count() >= 2);
}

/// Random QNPs over two numeric features and one boolean. Decrements
/// always require the feature to be positive.
fn random_qnp() -> impl Strategy<Value = QnpModel> {
    let change = prop::sample::select(vec![QualChange::None, QualChange::Inc, QualChange::Dec]);
    let bchange = prop::sample::select(vec![QualChange::None, QualChange::Add, QualChange::Del]);
    let act = (
        common::strategies::literals(3, 2),
        change.clone(),
        change,
        bchange,
    );
    (
        prop::collection::vec(act, 1..=5),
        common::strategies::literals(3, 3),
    )
        .prop_map(|(acts, initial)| {
            let features: Vec<Feature> = ["num(clear)", "num(ontable)", "bool(holding)"]
                .iter()
                .map(|t| Feature::parse(t).unwrap())
                .collect();
            let actions = acts
                .into_iter()
                .enumerate()
                .map(|(i, (pre, c0, c1, c2))| {
                    let mut pre: BTreeMap<usize, bool> =
                        pre.into_iter().map(|l| (l.feature, l.value)).collect();
                    let mut eff = BTreeMap::new();
                    for (f, c) in [(0, c0), (1, c1), (2, c2)] {
                        if c == QualChange::Dec {
                            pre.insert(f, false);
                        }
                        if c != QualChange::None {
                            eff.insert(f, c);
                        }
                    }
                    AbstractAction {
                        name: format!("a{i}"),
                        pre,
                        eff,
                    }
                })
                .collect();
            QnpModel {
                features,
                initial,
                goal: Condition::Literals(vec![lit(0, true), lit(1, true)]),
                actions,
            }
        })
}

/// Runs `policy` on concrete counters: increments add 1..=3, decrements
/// subtract 1..=value. Returns whether every run reaches the goal.
fn simulate(q: &QnpModel, policy: &Policy, runs: usize, seed: u64) -> bool {
    let f = qnp_to_fond(q);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let initial = f.initial_states();
    for _ in 0..runs {
        let start = initial[rng.gen_range(0..initial.len())];
        let mut vals: Vec<u32> = (0..q.features.len())
            .map(|i| {
                let bit = (start >> i) & 1 == 1;
                match (q.features[i].is_numeric(), bit) {
                    (true, true) => 0,
                    (true, false) => rng.gen_range(1..=5),
                    (false, b) => b as u32,
                }
            })
            .collect();
        let mut reached = false;
        for _ in 0..10_000 {
            let bits: Vec<bool> = vals
                .iter()
                .zip(&q.features)
                .map(|(&v, f)| if f.is_numeric() { v == 0 } else { v != 0 })
                .collect();
            let s = to_bits(&bits);
            if f.is_goal(s) {
                reached = true;
                break;
            }
            let Some(a) = policy.action(s) else {
                return false;
            };
            for (&feat, &c) in &q.actions[a].eff {
                vals[feat] = match c {
                    QualChange::Add => 1,
                    QualChange::Del => 0,
                    QualChange::Inc => vals[feat] + rng.gen_range(1..=3),
                    QualChange::Dec => vals[feat] - rng.gen_range(1..=vals[feat]),
                    QualChange::None => vals[feat],
                };
            }
        }
        if !reached {
            return false;
        }
    }
    true
}

#[test]
fn clear_policy_reaches_the_goal_on_concrete_counters() {
    let q = clear_qnp();
    let p = solve_qnp(&q, 10).unwrap().policy;
    assert!(simulate(&q, &p, 10_000, 7));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn strong_cyclic_solver_matches_the_reference(f in common::strategies::fond_model()) {
        match strong_cyclic_solve(&f) {
            Ok(p) => {
                prop_assert!(strong_cyclic_exists(&f));
                prop_assert!(policy_is_strong_cyclic(&f, &p));
            }
            Err(FondError::NoSolution) => prop_assert!(!strong_cyclic_exists(&f)),
            Err(e) => prop_assert!(false, "{}", e),
        }
    }

    #[test]
    fn enumerated_policies_are_distinct_and_strong_cyclic(f in common::strategies::fond_model()) {
        let mut seen: BTreeSet<Vec<(u32, usize)>> = BTreeSet::new();
        let mut ok = true;
        let _ = enumerate_policies(&f, 50, |p| {
            ok &= policy_is_strong_cyclic(&f, p);
            ok &= seen.insert(p.rules.iter().map(|(&s, &a)| (s, a)).collect());
            ControlFlow::Continue(())
        });
        prop_assert!(ok);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Accepted policies reach the goal on concrete counter runs.
    #[test]
    fn terminating_policies_reach_the_goal(q in random_qnp(), seed in any::<u64>()) {
        if let Ok(solution) = solve_qnp(&q, 200) {
            prop_assert!(simulate(&q, &solution.policy, 100, seed));
        }
    }
}
