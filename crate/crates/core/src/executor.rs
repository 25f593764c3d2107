//! Running a policy on concrete instances.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::abstraction::{AbstractAction, QnpModel};
use crate::features::{abstract_atom, qual_change, Feature, QualChange, StateEvaluator, Value};
use crate::fond::{to_bits, Policy};
use crate::strips::{GroundInstance, State};

pub fn feature_values(
    features: &[Feature],
    instance: &GroundInstance,
    state: &State,
) -> Vec<Value> {
    let mut ev = StateEvaluator::new(instance, state);
    features.iter().map(|f| ev.feature(f)).collect()
}

fn abstract_of(features: &[Feature], values: &[Value]) -> Vec<bool> {
    features
        .iter()
        .zip(values)
        .map(|(f, &v)| abstract_atom(f.is_numeric(), v))
        .collect()
}

fn changes(features: &[Feature], before: &[Value], after: &[Value]) -> Vec<QualChange> {
    features
        .iter()
        .enumerate()
        .map(|(i, f)| qual_change(f.is_numeric(), before[i], after[i]))
        .collect()
}

/// Truth of `p` / `n = 0` for every feature in `state`.
pub fn abstract_state(features: &[Feature], instance: &GroundInstance, state: &State) -> Vec<bool> {
    abstract_of(features, &feature_values(features, instance, state))
}

/// Concrete actions applicable in `state` whose transition has the same
/// qualitative effects on `features` as `action`.
pub fn instantiations(
    action: &AbstractAction,
    features: &[Feature],
    instance: &GroundInstance,
    state: &State,
) -> Vec<usize> {
    let before = feature_values(features, instance, state);
    if !action.applicable(&abstract_of(features, &before)) {
        return Vec::new();
    }
    instance
        .successors(state)
        .into_iter()
        .filter(|(_, next)| {
            action.same_effects(&changes(
                features,
                &before,
                &feature_values(features, instance, next),
            ))
        })
        .map(|(a, _)| a)
        .collect()
}

/// Whether the instance's initial state satisfies the QNP's initial condition.
pub fn initial_condition_holds(q: &QnpModel, instance: &GroundInstance) -> bool {
    let s = abstract_state(&q.features, instance, &instance.init);
    q.initial.iter().all(|l| s[l.feature] == l.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Outcome {
    GoalReached,
    PolicyUndefined,
    NoInstantiation,
    CycleDetected,
    StepLimit,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub state: State,
    pub abstract_action: usize,
    pub concrete_action: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutionTrace {
    pub steps: Vec<Step>,
    pub last: State,
    pub outcome: Outcome,
}

impl ExecutionTrace {
    pub fn to_json(&self, q: &QnpModel, instance: &GroundInstance) -> serde_json::Value {
        let atoms = |s: &State| s.atoms().map(|a| instance.atom_name(a)).collect::<Vec<_>>();
        serde_json::json!({
            "instance": instance.name,
            "outcome": self.outcome,
            "steps": self.steps.iter().map(|st| serde_json::json!({
                "state": atoms(&st.state),
                "abstract_action": q.actions[st.abstract_action].name,
                "action": instance.actions[st.concrete_action].name,
            })).collect::<Vec<_>>(),
            "last": atoms(&self.last),
        })
    }

    /// One line per step: abstract action, then the concrete action.
    pub fn log(&self, q: &QnpModel, instance: &GroundInstance) -> String {
        let mut out = String::new();
        for (i, st) in self.steps.iter().enumerate() {
            out.push_str(&format!(
                "{:>4}  {:<24} {}\n",
                i, q.actions[st.abstract_action].name, instance.actions[st.concrete_action].name
            ));
        }
        out.push_str(&format!("outcome: {:?}\n", self.outcome));
        out
    }
}

fn policy_choice(policy: &Policy, q: &QnpModel, values: &[Value]) -> Option<usize> {
    policy.action(to_bits(&abstract_of(&q.features, values)))
}

/// Follows the policy from the initial state, picking uniformly among
/// instantiations. Revisiting a (state, abstract action) pair is a cycle.
pub fn run_one(
    instance: &GroundInstance,
    policy: &Policy,
    q: &QnpModel,
    seed: u64,
    max_steps: usize,
) -> ExecutionTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = instance.init.clone();
    let mut steps = Vec::new();
    let mut seen: HashMap<(State, usize), ()> = HashMap::new();
    let outcome = loop {
        if instance.is_goal(&state) {
            break Outcome::GoalReached;
        }
        if steps.len() >= max_steps {
            break Outcome::StepLimit;
        }
        let values = feature_values(&q.features, instance, &state);
        let Some(a) = policy_choice(policy, q, &values) else {
            break Outcome::PolicyUndefined;
        };
        if seen.insert((state.clone(), a), ()).is_some() {
            break Outcome::CycleDetected;
        }
        let options = instantiations(&q.actions[a], &q.features, instance, &state);
        let Some(&c) = options.choose(&mut rng) else {
            break Outcome::NoInstantiation;
        };
        let next = instance.apply(&instance.actions[c], &state);
        steps.push(Step {
            state: std::mem::replace(&mut state, next),
            abstract_action: a,
            concrete_action: c,
        });
    };
    ExecutionTrace {
        steps,
        last: state,
        outcome,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    /// Every maximal path reaches a goal; `states` were explored.
    Solves {
        states: usize,
    },
    /// A path ending in a dead end or closing a cycle.
    Fails(ExecutionTrace),
    LimitExceeded {
        limit: usize,
    },
}

struct Node {
    state: State,
    /// (abstract action, concrete action, successor node), or the failure.
    edges: Result<Vec<(usize, usize, usize)>, Outcome>,
}

/// Explores every instantiation choice with memoization. The policy solves
/// the instance iff the explored graph has no dead end and no cycle.
pub fn run_exhaustive(
    instance: &GroundInstance,
    policy: &Policy,
    q: &QnpModel,
    limit: usize,
) -> Verdict {
    let mut index: HashMap<State, usize> = HashMap::new();
    let mut nodes: Vec<Node> = Vec::new();
    // 0 = unvisited, 1 = on the DFS path, 2 = done.
    let mut color: Vec<u8> = Vec::new();

    let mut intern = |s: State, nodes: &mut Vec<Node>, color: &mut Vec<u8>| -> usize {
        *index.entry(s.clone()).or_insert_with(|| {
            nodes.push(Node {
                state: s,
                edges: Ok(Vec::new()),
            });
            color.push(0);
            nodes.len() - 1
        })
    };
    let expand = |node: &mut Node, fresh: &mut Vec<State>| {
        if instance.is_goal(&node.state) {
            return;
        }
        let values = feature_values(&q.features, instance, &node.state);
        let Some(a) = policy_choice(policy, q, &values) else {
            node.edges = Err(Outcome::PolicyUndefined);
            return;
        };
        let abs = abstract_of(&q.features, &values);
        if !q.actions[a].applicable(&abs) {
            node.edges = Err(Outcome::NoInstantiation);
            return;
        }
        let mut found = false;
        for (c, next) in instance.successors(&node.state) {
            let after = feature_values(&q.features, instance, &next);
            if q.actions[a].same_effects(&changes(&q.features, &values, &after)) {
                found = true;
                fresh.push(next);
                if let Ok(e) = node.edges.as_mut() {
                    e.push((a, c, usize::MAX));
                }
            }
        }
        if !found {
            node.edges = Err(Outcome::NoInstantiation);
        }
    };

    let root = intern(instance.init.clone(), &mut nodes, &mut color);
    // Path of (node, next edge index).
    let mut path: Vec<(usize, usize)> = Vec::new();
    let mut open =
        |n: usize, nodes: &mut Vec<Node>, color: &mut Vec<u8>, path: &mut Vec<(usize, usize)>| {
            let mut fresh = Vec::new();
            expand(&mut nodes[n], &mut fresh);
            let targets: Vec<usize> = fresh.into_iter().map(|s| intern(s, nodes, color)).collect();
            if let Ok(e) = nodes[n].edges.as_mut() {
                for (edge, t) in e.iter_mut().zip(targets) {
                    edge.2 = t;
                }
            }
            color[n] = 1;
            path.push((n, 0));
        };
    open(root, &mut nodes, &mut color, &mut path);

    let trace_of = |path: &[(usize, usize)], nodes: &[Node], last: usize, outcome: Outcome| {
        let steps = path[..path.len() - 1]
            .iter()
            .map(|&(n, i)| {
                let (a, c, _) = nodes[n].edges.as_ref().expect("expanded")[i - 1];
                Step {
                    state: nodes[n].state.clone(),
                    abstract_action: a,
                    concrete_action: c,
                }
            })
            .collect();
        ExecutionTrace {
            steps,
            last: nodes[last].state.clone(),
            outcome,
        }
    };

    while let Some(&(n, i)) = path.last() {
        if nodes.len() > limit {
            return Verdict::LimitExceeded { limit };
        }
        let edges = match &nodes[n].edges {
            Err(outcome) => return Verdict::Fails(trace_of(&path, &nodes, n, *outcome)),
            Ok(e) => e,
        };
        if i == edges.len() {
            color[n] = 2;
            path.pop();
            continue;
        }
        let t = edges[i].2;
        path.last_mut().expect("non-empty").1 += 1;
        match color[t] {
            0 => open(t, &mut nodes, &mut color, &mut path),
            1 => {
                path.push((t, 0));
                return Verdict::Fails(trace_of(&path, &nodes, t, Outcome::CycleDetected));
            }
            _ => {}
        }
    }
    Verdict::Solves {
        states: nodes.len(),
    }
}
