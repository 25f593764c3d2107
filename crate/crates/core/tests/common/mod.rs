//! Fixtures and reference oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::path::PathBuf;
use std::sync::Arc;

use genplan::abstraction::{AbstractAction, Condition, Dnf, Literal};
use genplan::encoder::{lit_true, WeightedCnf};
use genplan::features::{
    abstract_atom, qual_change, Concept, Feature, FeatureKind, QualChange, Value,
};
use genplan::fond::{FondAction, FondModel};
use genplan::sampler::{SampleSet, SampledState, Transition};
use genplan::strips::{self, GroundInstance, State};

pub fn data(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(rel)
}

pub fn read(rel: &str) -> String {
    std::fs::read_to_string(data(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

pub fn instance(domain: &str, problem: &str) -> GroundInstance {
    strips::load(&read(domain), &read(problem))
        .expect("bundled files load")
        .1
}

pub fn blocks_domain() -> String {
    read("blocks/domain.pddl")
}

/// Blocksworld problem text. Towers list blocks bottom to top; `goal` is a
/// conjunction of atoms such as `"(clear x)"`.
pub fn blocks_problem(name: &str, towers: &[&[&str]], goal: &str) -> String {
    let mut objects = Vec::new();
    let mut init = vec!["(handempty)".to_string()];
    for tower in towers {
        for (i, b) in tower.iter().enumerate() {
            objects.push(b.to_string());
            if i == 0 {
                init.push(format!("(ontable {b})"));
            } else {
                init.push(format!("(on {b} {})", tower[i - 1]));
            }
        }
        if let Some(top) = tower.last() {
            init.push(format!("(clear {top})"));
        }
    }
    format!(
        "(define (problem {name}) (:domain blocksworld) (:objects {}) (:init {}) (:goal (and {goal})))",
        objects.join(" "),
        init.join(" ")
    )
}

pub fn blocks(name: &str, towers: &[&[&str]], goal: &str) -> GroundInstance {
    strips::load(&blocks_domain(), &blocks_problem(name, towers, goal))
        .expect("valid blocks problem")
        .1
}

pub fn atom(inst: &GroundInstance, pred: &str, args: &[&str]) -> strips::AtomId {
    let p = inst.predicate_index(pred).expect("predicate");
    let objs: Vec<usize> = args
        .iter()
        .map(|a| inst.object_index(a).expect("object"))
        .collect();
    inst.atom_id(p, &objs)
}

pub fn state(inst: &GroundInstance, atoms: &[(&str, &[&str])]) -> State {
    inst.state_from_atoms(atoms.iter().map(|(p, a)| atom(inst, p, a)))
}

pub fn action_names(inst: &GroundInstance, succ: &[(usize, State)]) -> BTreeSet<String> {
    succ.iter()
        .map(|(a, _)| inst.actions[*a].name.clone())
        .collect()
}

/// Exhaustive Max-SAT: the least falsified soft weight over all models,
/// or `None` when the hard clauses are unsatisfiable.
pub fn brute_force_optimum(cnf: &WeightedCnf) -> Option<u64> {
    let n = cnf.num_vars as usize;
    assert!(n <= 22, "brute force over {n} variables");
    let mut best: Option<u64> = None;
    let mut model = vec![false; n + 1];
    for bits in 0u64..(1 << n) {
        for (v, m) in model.iter_mut().enumerate().skip(1) {
            *m = bits >> (v - 1) & 1 == 1;
        }
        if cnf.satisfies_hard(&model) {
            let c = cnf.cost(&model);
            best = Some(best.map_or(c, |b| b.min(c)));
        }
    }
    best
}

pub fn clause_true(model: &[bool], clause: &[i32]) -> bool {
    clause.iter().any(|&l| lit_true(model, l))
}

// ---------------------------------------------------------------------------
// Synthetic miniature samples

/// A sample whose feature values are drawn directly rather than computed
/// from states. The encoder and the abstraction only look at values.
pub struct Synthetic {
    pub sample: SampleSet,
    pub features: Vec<Feature>,
    pub values: Vec<Vec<Value>>,
}

/// Parameters drawn by the property tests.
#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub expanded: usize,
    pub leaves: usize,
    /// Per expanded state: successor state indices.
    pub edges: Vec<Vec<usize>>,
    pub goals: Vec<bool>,
    pub marked: Vec<Vec<bool>>,
    /// Per feature: (numeric, cost, values per state).
    pub features: Vec<(bool, u32, Vec<Value>)>,
}

fn dummy_instance() -> Arc<GroundInstance> {
    let domain = "(define (domain d) (:predicates (p)) (:action a :parameters () :precondition (p) :effect (not (p))))";
    let problem = "(define (problem q) (:domain d) (:init (p)) (:goal (and (p))))";
    Arc::new(strips::load(domain, problem).expect("dummy instance").1)
}

fn feature_named(i: usize, numeric: bool, cost: u32) -> Feature {
    // Wrap a primitive in conjunctions with the universal concept to reach
    // the requested cost; the expression itself is never evaluated.
    let mut c = Concept::Primitive(format!("c{i}"));
    while c.complexity() + 1 < cost.max(1) {
        c = Concept::And(Arc::new(c), Arc::new(Concept::Universal));
    }
    if cost == 0 {
        return Feature::new(FeatureKind::Nullary(format!("p{i}")));
    }
    let f = if numeric {
        Feature::new(FeatureKind::Numeric(c))
    } else {
        Feature::new(FeatureKind::Boolean(c))
    };
    Feature { cost, ..f }
}

pub fn synthetic(spec: &SyntheticSpec) -> Synthetic {
    let inst = dummy_instance();
    let n = spec.expanded + spec.leaves;
    let states = (0..n)
        .map(|s| SampledState {
            instance: 0,
            state: State::empty(inst.id(), 1),
            expanded: s < spec.expanded,
            goal: spec.goals[s],
        })
        .collect();
    let mut transitions = Vec::new();
    for (s, succ) in spec.edges.iter().enumerate() {
        for (k, &t) in succ.iter().enumerate() {
            transitions.push(Transition {
                source: s,
                target: t,
                marked: spec.marked[s][k],
            });
        }
    }
    let features: Vec<Feature> = spec
        .features
        .iter()
        .enumerate()
        .map(|(i, (numeric, cost, _))| feature_named(i, *numeric, *cost))
        .collect();
    let values = spec
        .features
        .iter()
        .zip(&features)
        .map(|((_, _, v), f)| {
            if f.is_numeric() {
                v.clone()
            } else {
                v.iter().map(|&x| x.min(1)).collect()
            }
        })
        .collect();
    Synthetic {
        sample: SampleSet::from_parts(vec![inst], states, transitions),
        features,
        values,
    }
}

pub mod strategies {
    use super::*;
    use proptest::prelude::*;

    fn clause(n: u32) -> impl Strategy<Value = Vec<i32>> {
        prop::collection::vec(
            (1..=n as i32, any::<bool>()).prop_map(|(v, neg)| if neg { -v } else { v }),
            1..=3,
        )
    }

    /// Weighted CNF with at most 20 variables.
    pub fn theory() -> impl Strategy<Value = WeightedCnf> {
        (1..=20u32).prop_flat_map(|n| {
            let hard = prop::collection::vec(clause(n), 0..(3 * n as usize));
            let soft = prop::collection::vec((clause(n), 1..=9u64), 0..=(n as usize));
            (Just(n), hard, soft).prop_map(|(n, hard, soft)| {
                let mut cnf = WeightedCnf::new(n);
                for c in &hard {
                    cnf.add_hard(c);
                }
                for (c, w) in &soft {
                    cnf.add_soft(c, *w);
                }
                cnf
            })
        })
    }

    /// Consistent partial valuation of at most `max` of `n` atoms.
    pub fn literals(n: usize, max: usize) -> impl Strategy<Value = Vec<Literal>> {
        prop::collection::btree_map(0..n, any::<bool>(), 0..=max.min(n)).prop_map(
            |m: BTreeMap<usize, bool>| {
                m.into_iter()
                    .map(|(feature, value)| Literal { feature, value })
                    .collect()
            },
        )
    }

    /// FOND models with at most 8 atoms and 6 actions of up to 3 outcomes.
    pub fn fond_model() -> impl Strategy<Value = FondModel> {
        (1usize..=8).prop_flat_map(|n| {
            let act = (literals(n, 3), prop::collection::vec(literals(n, 3), 1..=3)).prop_map(
                |(pre, outcomes)| FondAction {
                    name: String::new(),
                    pre,
                    outcomes,
                },
            );
            (
                literals(n, n),
                prop::collection::vec(literals(n, 3), 1..=2),
                prop::collection::vec(act, 1..=6),
            )
                .prop_map(move |(initial, goal_terms, mut actions)| {
                    for (i, a) in actions.iter_mut().enumerate() {
                        a.name = format!("a{i}");
                    }
                    let goal = if goal_terms.len() == 1 {
                        Condition::Literals(goal_terms[0].clone())
                    } else {
                        Condition::Dnf(Dnf { terms: goal_terms })
                    };
                    FondModel {
                        atoms: (0..n).map(|i| format!("p{i}")).collect(),
                        initial,
                        goal,
                        actions,
                    }
                })
        })
    }

    /// Miniature samples: up to `max_expanded` expanded states, a few
    /// leaves, up to `max_features` features with values in 0..3.
    pub fn spec(max_expanded: usize, max_features: usize) -> impl Strategy<Value = SyntheticSpec> {
        (1..=max_expanded, 0..=3usize, 1..=max_features).prop_flat_map(|(expanded, leaves, nf)| {
            let n = expanded + leaves;
            let edges =
                prop::collection::vec(prop::collection::btree_set(0..n, 1..=3.min(n)), expanded)
                    .prop_map(|v| {
                        v.into_iter()
                            .map(|s| s.into_iter().collect::<Vec<_>>())
                            .collect::<Vec<_>>()
                    });
            let goals = prop::collection::vec(prop::bool::weighted(0.3), n);
            let marked = prop::collection::vec(
                prop::collection::vec(prop::bool::weighted(0.4), 3),
                expanded,
            );
            let features = prop::collection::vec(
                (any::<bool>(), 0..=4u32, prop::collection::vec(0..3u32, n)),
                nf,
            );
            (Just(expanded), Just(leaves), edges, goals, marked, features).prop_map(
                |(expanded, leaves, edges, goals, marked, features)| {
                    let marked = edges
                        .iter()
                        .zip(&marked)
                        .map(|(e, m)| m[..e.len()].to_vec())
                        .collect();
                    SyntheticSpec {
                        expanded,
                        leaves,
                        edges,
                        goals,
                        marked,
                        features,
                    }
                },
            )
        })
    }
}

// ---------------------------------------------------------------------------
// Reference semantics of abstractions, written independently of the crate.

pub fn qual(features: &[Feature], values: &[Vec<Value>], fs: &[usize], s: usize) -> Vec<bool> {
    fs.iter()
        .map(|&f| abstract_atom(features[f].is_numeric(), values[f][s]))
        .collect()
}

pub fn changes(
    features: &[Feature],
    values: &[Vec<Value>],
    fs: &[usize],
    s: usize,
    t: usize,
) -> Vec<QualChange> {
    fs.iter()
        .map(|&f| qual_change(features[f].is_numeric(), values[f][s], values[f][t]))
        .collect()
}

/// One action per transition in scope: the full valuation at the source
/// and the observed changes (no merging).
pub fn raw_actions(
    features: &[Feature],
    values: &[Vec<Value>],
    fs: &[usize],
    sample: &SampleSet,
    marked_only: bool,
) -> BTreeSet<(Vec<bool>, Vec<QualChange>)> {
    sample
        .transitions
        .iter()
        .filter(|t| !marked_only || t.marked)
        .map(|t| {
            (
                qual(features, values, fs, t.source),
                changes(features, values, fs, t.source, t.target),
            )
        })
        .collect()
}

/// Sound: in every expanded state where an action's precondition holds,
/// some outgoing transition shows exactly its effects.
pub fn oracle_sound(
    actions: &BTreeSet<(Vec<bool>, Vec<QualChange>)>,
    features: &[Feature],
    values: &[Vec<Value>],
    fs: &[usize],
    sample: &SampleSet,
) -> bool {
    sample.expanded().all(|s| {
        let q = qual(features, values, fs, s);
        actions.iter().filter(|(pre, _)| *pre == q).all(|(_, eff)| {
            sample
                .outgoing(s)
                .iter()
                .any(|&i| changes(features, values, fs, s, sample.transitions[i].target) == *eff)
        })
    })
}

/// Goal and non-goal expanded states never share an abstract state. With
/// `anchors`, only pairs touching an anchor state count.
pub fn oracle_separates_goals(
    features: &[Feature],
    values: &[Vec<Value>],
    fs: &[usize],
    sample: &SampleSet,
    anchors: Option<&HashSet<usize>>,
) -> bool {
    let expanded: Vec<usize> = sample.expanded().collect();
    let touches = |s: usize, t: usize| anchors.is_none_or(|a| a.contains(&s) || a.contains(&t));
    expanded.iter().all(|&s| {
        expanded.iter().all(|&t| {
            sample.states[s].goal == sample.states[t].goal
                || !touches(s, t)
                || qual(features, values, fs, s) != qual(features, values, fs, t)
        })
    })
}

/// Expanded states with a marked outgoing transition.
pub fn marked_sources(sample: &SampleSet) -> HashSet<usize> {
    sample
        .marked()
        .map(|i| sample.transitions[i].source)
        .collect()
}

/// Whether some feature subset admits a sound abstraction complete over
/// the transitions in scope that also separates goals. Subset enumeration.
pub fn brute_force_abstraction_exists(
    syn: &Synthetic,
    marked_only: bool,
    anchors: Option<&HashSet<usize>>,
) -> bool {
    let n = syn.features.len();
    (0u32..1 << n).any(|mask| {
        let fs: Vec<usize> = (0..n).filter(|&f| mask >> f & 1 == 1).collect();
        let acts = raw_actions(&syn.features, &syn.values, &fs, &syn.sample, marked_only);
        oracle_sound(&acts, &syn.features, &syn.values, &fs, &syn.sample)
            && oracle_separates_goals(&syn.features, &syn.values, &fs, &syn.sample, anchors)
    })
}

/// Captured: some action applicable at the source shows the transition's effects.
pub fn captured(actions: &[AbstractAction], q_source: &[bool], change: &[QualChange]) -> bool {
    actions
        .iter()
        .any(|a| a.applicable(q_source) && a.same_effects(change))
}

/// The assignment a feature subset induces on the theory: `selected` from
/// the subset, `D1` and `D2` from their definitions.
pub fn induced_model(
    syn: &Synthetic,
    vars: &genplan::encoder::TheoryVars,
    fs: &[usize],
) -> Vec<bool> {
    let mut model = vec![false; vars.num_vars as usize + 1];
    for &f in fs {
        if let Some(v) = vars.selected[f] {
            model[v as usize] = true;
        }
    }
    let (feats, vals, sample) = (&syn.features, &syn.values, &syn.sample);
    for (&(s, t), &v) in &vars.d1 {
        model[v as usize] = qual(feats, vals, fs, s) != qual(feats, vals, fs, t);
    }
    for (&(i, j), &v) in &vars.d2 {
        let (a, b) = (sample.transitions[i], sample.transitions[j]);
        let (qs, qt) = (
            qual(feats, vals, fs, a.source),
            qual(feats, vals, fs, b.source),
        );
        let (ca, cb) = (
            changes(feats, vals, fs, a.source, a.target),
            changes(feats, vals, fs, b.source, b.target),
        );
        model[v as usize] = (0..fs.len()).any(|k| qs[k] == qt[k] && ca[k] != cb[k]);
    }
    model
}

// ---------------------------------------------------------------------------
// Reference FOND semantics

/// Checks a policy against the definition of strong-cyclic solutions by
/// plain graph search: closed over its reachable states, and a goal is
/// reachable from each of them.
pub fn policy_is_strong_cyclic(f: &genplan::fond::FondModel, p: &genplan::fond::Policy) -> bool {
    let mut reach: HashSet<u32> = HashSet::new();
    let mut queue: VecDeque<u32> = f.initial_states().into_iter().collect();
    reach.extend(queue.iter().copied());
    let mut succ: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    while let Some(s) = queue.pop_front() {
        if f.is_goal(s) {
            continue;
        }
        let Some(a) = p.action(s) else { return false };
        if !f.applicable(a, s) {
            return false;
        }
        let next = f.successors(a, s);
        for &t in &next {
            if reach.insert(t) {
                queue.push_back(t);
            }
        }
        succ.insert(s, next);
    }
    reach.iter().all(|&s| {
        let mut seen = HashSet::from([s]);
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            if f.is_goal(u) {
                return true;
            }
            for &v in succ.get(&u).into_iter().flatten() {
                if seen.insert(v) {
                    q.push_back(v);
                }
            }
        }
        false
    })
}

/// Whether any strong-cyclic policy exists: the standard nested fixpoint
/// over explicit states, independent of the crate's rank computation.
pub fn strong_cyclic_exists(f: &genplan::fond::FondModel) -> bool {
    let n = f.num_states() as u32;
    let mut alive: HashSet<u32> = (0..n).collect();
    loop {
        // States that reach a goal using actions whose outcomes stay alive.
        let mut good: HashSet<u32> = (0..n)
            .filter(|&s| alive.contains(&s) && f.is_goal(s))
            .collect();
        loop {
            let before = good.len();
            for s in 0..n {
                if good.contains(&s) || !alive.contains(&s) {
                    continue;
                }
                let ok = (0..f.actions.len()).any(|a| {
                    f.applicable(a, s) && {
                        let next = f.successors(a, s);
                        next.iter().all(|t| alive.contains(t))
                            && next.iter().any(|t| good.contains(t))
                    }
                });
                if ok {
                    good.insert(s);
                }
            }
            if good.len() == before {
                break;
            }
        }
        if good.len() == alive.len() {
            break;
        }
        alive = good;
    }
    f.initial_states().iter().all(|s| alive.contains(s))
}

// ---------------------------------------------------------------------------
// Exactness harness on synthetic samples

/// Checks one miniature sample against the theory of `variant`:
/// every feature subset's induced assignment satisfies the hard clauses
/// iff the subset admits a sound, complete, goal-separating abstraction;
/// every satisfying subset's extracted actions verify; and the solver's
/// optimum equals the cheapest such subset.
pub fn check_theory_exactness(
    spec: &SyntheticSpec,
    variant: genplan::encoder::Variant,
    scope: genplan::encoder::GoalScope,
) -> Result<(), String> {
    use genplan::abstraction::{extract_actions, learn_goal_dnf, verify_sound_complete};
    use genplan::encoder::{build_theory, GoalScope, Variant};
    use genplan::maxsat::{solve_builtin, MaxSatOutcome};

    let syn = synthetic(spec);
    let marked_only = variant == Variant::Marked;
    let (cnf, vars) = build_theory(&syn.sample, &syn.features, &syn.values, variant, scope);
    let anchors =
        (marked_only && scope == GoalScope::Anchored).then(|| marked_sources(&syn.sample));
    let n = syn.features.len();
    let mut cheapest: Option<u64> = None;
    for mask in 0u32..1 << n {
        let fs: Vec<usize> = (0..n).filter(|&f| mask >> f & 1 == 1).collect();
        let model = induced_model(&syn, &vars, &fs);
        let sat = cnf.satisfies_hard(&model);
        let acts = raw_actions(&syn.features, &syn.values, &fs, &syn.sample, marked_only);
        let oracle = oracle_sound(&acts, &syn.features, &syn.values, &fs, &syn.sample)
            && oracle_separates_goals(
                &syn.features,
                &syn.values,
                &fs,
                &syn.sample,
                anchors.as_ref(),
            );
        if sat != oracle {
            return Err(format!(
                "subset {fs:?}: theory says {sat}, brute force says {oracle}"
            ));
        }
        if !sat {
            continue;
        }
        let cost = cnf.cost(&model);
        cheapest = Some(cheapest.map_or(cost, |c| c.min(cost)));
        let sel: Vec<Feature> = fs.iter().map(|&f| syn.features[f].clone()).collect();
        let vals: Vec<Vec<Value>> = fs.iter().map(|&f| syn.values[f].clone()).collect();
        let actions = extract_actions(&sel, &vals, &syn.sample, marked_only);
        let report = verify_sound_complete(&actions, &sel, &vals, &syn.sample, marked_only);
        if !report.sound || !report.complete {
            return Err(format!(
                "subset {fs:?}: extracted actions not sound and complete: {report:?}"
            ));
        }
        if anchors.is_none() {
            if let Ok(dnf) = learn_goal_dnf(&sel, &vals, &syn.sample) {
                for s in syn.sample.expanded() {
                    let q = qual(&syn.features, &syn.values, &fs, s);
                    if !syn.sample.states[s].goal && dnf.holds(&q) {
                        return Err(format!(
                            "subset {fs:?}: goal formula holds on non-goal state {s}"
                        ));
                    }
                }
            }
        }
    }
    let (outcome, _) = solve_builtin(&cnf, None).map_err(|e| e.to_string())?;
    match (outcome, cheapest) {
        (MaxSatOutcome::Unsatisfiable, None) => Ok(()),
        (MaxSatOutcome::Optimal(a), Some(c)) if a.cost == c && cnf.satisfies_hard(&a.values) => {
            Ok(())
        }
        (o, c) => Err(format!("solver returned {o:?}, brute-force optimum {c:?}")),
    }
}
