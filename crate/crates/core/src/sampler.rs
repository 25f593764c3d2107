//! Closed sample sets of state transitions drawn from training instances.

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::strips::{GroundInstance, State};

/// Upper bound on states explored when computing an optimal plan.
pub const PLAN_STATE_LIMIT: usize = 2_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SampleError {
    #[error("instance '{0}' is unsolvable")]
    Unsolvable(String),
    #[error("instance '{instance}' exceeded the search budget of {limit} states")]
    SearchLimit { instance: String, limit: usize },
    #[error("no training instances given")]
    NoInstances,
    #[error("malformed sample: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone)]
pub struct SampledState {
    /// Index of the owning instance in [`SampleSet::instances`].
    pub instance: usize,
    pub state: State,
    pub expanded: bool,
    pub goal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Transition {
    pub source: usize,
    pub target: usize,
    pub marked: bool,
}

/// A closed set of labeled transitions.
#[derive(Debug, Clone)]
pub struct SampleSet {
    pub instances: Vec<Arc<GroundInstance>>,
    pub states: Vec<SampledState>,
    /// Sorted by (source, first-occurrence order of targets in successor enumeration).
    pub transitions: Vec<Transition>,
    /// `outgoing[s]` = indices into `transitions` with source `s`.
    outgoing: Vec<Vec<usize>>,
}

/// Breadth-first order of the first `m` distinct states reachable from the
/// initial state.
pub fn bfs_prefix(instance: &GroundInstance, m: usize) -> Vec<State> {
    let m = m.max(1);
    let mut order = vec![instance.init.clone()];
    let mut seen: HashMap<State, ()> = HashMap::new();
    seen.insert(instance.init.clone(), ());
    let mut head = 0;
    while head < order.len() && order.len() < m {
        let s = order[head].clone();
        head += 1;
        for (_, t) in instance.successors(&s) {
            if order.len() >= m {
                break;
            }
            if seen.insert(t.clone(), ()).is_none() {
                order.push(t);
            }
        }
    }
    order
}

/// A shortest plan as (action ids, visited states including the initial one).
pub fn optimal_plan(instance: &GroundInstance) -> Result<(Vec<usize>, Vec<State>), SampleError> {
    optimal_plan_limited(instance, PLAN_STATE_LIMIT)
}

pub fn optimal_plan_limited(
    instance: &GroundInstance,
    limit: usize,
) -> Result<(Vec<usize>, Vec<State>), SampleError> {
    let init = instance.init.clone();
    if instance.is_goal(&init) {
        return Ok((Vec::new(), vec![init]));
    }
    let mut nodes: Vec<(State, usize, usize)> = vec![(init.clone(), usize::MAX, usize::MAX)];
    let mut index: HashMap<State, usize> = HashMap::new();
    index.insert(init, 0);
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        let s = nodes[i].0.clone();
        for (a, t) in instance.successors(&s) {
            if index.contains_key(&t) {
                continue;
            }
            let j = nodes.len();
            index.insert(t.clone(), j);
            let goal = instance.is_goal(&t);
            nodes.push((t, i, a));
            if goal {
                let mut actions = Vec::new();
                let mut states = Vec::new();
                let mut k = j;
                while k != 0 {
                    actions.push(nodes[k].2);
                    states.push(nodes[k].0.clone());
                    k = nodes[k].1;
                }
                states.push(nodes[0].0.clone());
                actions.reverse();
                states.reverse();
                return Ok((actions, states));
            }
            if nodes.len() > limit {
                return Err(SampleError::SearchLimit {
                    instance: instance.name.clone(),
                    limit,
                });
            }
            queue.push_back(j);
        }
    }
    Err(SampleError::Unsolvable(instance.name.clone()))
}

struct Builder {
    states: Vec<SampledState>,
    index: HashMap<State, usize>,
}

impl Builder {
    fn intern(&mut self, instance_idx: usize, instance: &GroundInstance, s: &State) -> usize {
        if let Some(&i) = self.index.get(s) {
            return i;
        }
        let i = self.states.len();
        self.states.push(SampledState {
            instance: instance_idx,
            state: s.clone(),
            expanded: false,
            goal: instance.is_goal(s),
        });
        self.index.insert(s.clone(), i);
        i
    }
}

/// BFS prefixes of length `m` plus one optimal plan per instance, every
/// selected state fully expanded. Plan transitions are marked.
pub fn build_sample_set(
    instances: &[Arc<GroundInstance>],
    m: usize,
) -> Result<SampleSet, SampleError> {
    if instances.is_empty() {
        return Err(SampleError::NoInstances);
    }
    let mut b = Builder {
        states: Vec::new(),
        index: HashMap::new(),
    };
    let mut transitions: Vec<Transition> = Vec::new();
    let mut marked_pairs: Vec<(usize, usize)> = Vec::new();
    let mut marked_sources: Vec<usize> = Vec::new();
    for (ii, inst) in instances.iter().enumerate() {
        let (_, plan_states) = optimal_plan(inst)?;
        let mut selected: Vec<usize> = bfs_prefix(inst, m)
            .iter()
            .map(|s| b.intern(ii, inst, s))
            .collect();
        let plan_ids: Vec<usize> = plan_states.iter().map(|s| b.intern(ii, inst, s)).collect();
        for &p in &plan_ids {
            if !selected.contains(&p) {
                selected.push(p);
            }
        }
        if plan_ids.len() == 1 {
            // Empty plan: the initial state's expansion stands in for goal-relevant material.
            marked_sources.push(plan_ids[0]);
        }
        for w in plan_ids.windows(2) {
            marked_pairs.push((w[0], w[1]));
        }
        for sid in selected {
            if b.states[sid].expanded {
                continue;
            }
            b.states[sid].expanded = true;
            let s = b.states[sid].state.clone();
            let mut targets: Vec<usize> = Vec::new();
            for (_, t) in inst.successors(&s) {
                let tid = b.intern(ii, inst, &t);
                if !targets.contains(&tid) {
                    targets.push(tid);
                }
            }
            transitions.extend(targets.into_iter().map(|target| Transition {
                source: sid,
                target,
                marked: false,
            }));
        }
    }
    for t in transitions.iter_mut() {
        if marked_pairs.contains(&(t.source, t.target)) || marked_sources.contains(&t.source) {
            t.marked = true;
        }
    }
    // Stable order: by source id, keeping successor enumeration order.
    transitions.sort_by_key(|t| t.source);
    Ok(SampleSet::from_parts(
        instances.to_vec(),
        b.states,
        transitions,
    ))
}

/// Smallest BFS prefix length whose sample reaches `budget` transitions
/// (or all reachable states), found by doubling and then bisection.
pub fn prefix_for_budget(
    instances: &[Arc<GroundInstance>],
    budget: usize,
) -> Result<usize, SampleError> {
    let size = |m: usize| build_sample_set(instances, m).map(|s| s.transitions.len());
    let exhausted = |m: usize| instances.iter().all(|i| bfs_prefix(i, m).len() < m);
    let mut hi = 1usize;
    while size(hi)? < budget {
        if exhausted(hi) {
            return Ok(hi);
        }
        hi *= 2;
    }
    let mut lo = hi / 2;
    // Invariant: size(lo) < budget <= size(hi), or lo == 0.
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if size(mid)? >= budget {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

impl SampleSet {
    pub fn from_parts(
        instances: Vec<Arc<GroundInstance>>,
        states: Vec<SampledState>,
        transitions: Vec<Transition>,
    ) -> Self {
        let mut outgoing = vec![Vec::new(); states.len()];
        for (i, t) in transitions.iter().enumerate() {
            outgoing[t.source].push(i);
        }
        SampleSet {
            instances,
            states,
            transitions,
            outgoing,
        }
    }

    pub fn instance_of(&self, state: usize) -> &GroundInstance {
        &self.instances[self.states[state].instance]
    }

    pub fn expanded(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.states.len()).filter(move |&s| self.states[s].expanded)
    }

    pub fn num_expanded(&self) -> usize {
        self.states.iter().filter(|s| s.expanded).count()
    }

    /// Transitions leaving `state`, as indices into `transitions`.
    pub fn outgoing(&self, state: usize) -> &[usize] {
        &self.outgoing[state]
    }

    pub fn marked(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.transitions.len()).filter(move |&t| self.transitions[t].marked)
    }

    pub fn num_goal_states(&self) -> usize {
        self.states.iter().filter(|s| s.goal).count()
    }

    /// Non-empty and closed: every source is fully expanded in the sample.
    pub fn check_closure(&self) -> bool {
        if self.transitions.is_empty() {
            return false;
        }
        for s in 0..self.states.len() {
            let out = &self.outgoing[s];
            if out.is_empty() && !self.states[s].expanded {
                continue;
            }
            if !self.states[s].expanded {
                return false;
            }
            let inst = self.instance_of(s);
            let present: Vec<&State> = out
                .iter()
                .map(|&t| &self.states[self.transitions[t].target].state)
                .collect();
            for (_, succ) in inst.successors(&self.states[s].state) {
                if !present.contains(&&succ) {
                    return false;
                }
            }
        }
        self.transitions
            .iter()
            .all(|t| t.target < self.states.len())
    }

    pub fn to_json(&self) -> serde_json::Value {
        let states: Vec<serde_json::Value> = self
            .states
            .iter()
            .enumerate()
            .map(|(i, s)| {
                serde_json::json!({
                    "id": i,
                    "instance": s.instance,
                    "atoms": s.state.atoms().collect::<Vec<_>>(),
                    "expanded": s.expanded,
                    "goal": s.goal,
                })
            })
            .collect();
        serde_json::json!({
            "instances": self.instances.iter().map(|i| i.name.clone()).collect::<Vec<_>>(),
            "states": states,
            "transitions": self.transitions,
        })
    }

    /// Rebuilds a sample from its JSON form against freshly grounded instances.
    pub fn from_json(
        value: &serde_json::Value,
        instances: Vec<Arc<GroundInstance>>,
    ) -> Result<Self, SampleError> {
        #[derive(Deserialize)]
        struct RawState {
            instance: usize,
            atoms: Vec<u32>,
            expanded: bool,
            goal: bool,
        }
        #[derive(Deserialize)]
        struct Raw {
            states: Vec<RawState>,
            transitions: Vec<Transition>,
        }
        let raw: Raw = serde_json::from_value(value.clone())
            .map_err(|e| SampleError::Malformed(e.to_string()))?;
        let mut states = Vec::with_capacity(raw.states.len());
        for s in raw.states {
            let inst = instances.get(s.instance).ok_or_else(|| {
                SampleError::Malformed(format!("instance index {} out of range", s.instance))
            })?;
            if let Some(&a) = s.atoms.iter().find(|&&a| a as usize >= inst.num_atoms) {
                return Err(SampleError::Malformed(format!("atom {a} out of range")));
            }
            states.push(SampledState {
                instance: s.instance,
                state: inst.state_from_atoms(s.atoms),
                expanded: s.expanded,
                goal: s.goal,
            });
        }
        if let Some(t) = raw
            .transitions
            .iter()
            .find(|t| t.source >= states.len() || t.target >= states.len())
        {
            return Err(SampleError::Malformed(format!(
                "transition {t:?} references a missing state"
            )));
        }
        Ok(SampleSet::from_parts(instances, states, raw.transitions))
    }
}
