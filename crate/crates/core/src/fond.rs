//! Boolean FOND translation of a QNP, strong-cyclic policies over the
//! explicit abstract state space, and the termination sieve.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abstraction::{literal_text, Condition, Literal, Notation, QnpModel};
use crate::features::QualChange;

/// Abstract states are bit sets: bit `f` holds the truth of feature `f`'s atom.
pub type AbstractStateBits = u32;

/// Most atoms the explicit state space supports.
pub const MAX_ATOMS: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FondAction {
    pub name: String,
    pub pre: Vec<Literal>,
    /// Alternative outcomes; each is a consistent literal set.
    pub outcomes: Vec<Vec<Literal>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FondModel {
    /// One atom per feature: `p` or `n=0`.
    pub atoms: Vec<String>,
    /// Partial valuation; every consistent state is initial.
    pub initial: Vec<Literal>,
    pub goal: Condition,
    pub actions: Vec<FondAction>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FondError {
    #[error("no strong-cyclic policy exists")]
    NoSolution,
    #[error("no terminating policy among the {0} strong-cyclic policies enumerated")]
    NoTerminatingPolicy(usize),
    #[error("{0} atoms exceed the supported maximum of {MAX_ATOMS}")]
    TooManyAtoms(usize),
}

/// Numeric literals become the atom `n=0`; `n↑` sets it false, and `n↓`
/// splits every outcome into one where it stays false and one where it
/// becomes true.
pub fn qnp_to_fond(q: &QnpModel) -> FondModel {
    let atoms = q
        .features
        .iter()
        .map(|f| {
            if f.is_numeric() {
                format!("{f}=0")
            } else {
                f.to_string()
            }
        })
        .collect();
    let actions = q
        .actions
        .iter()
        .map(|a| {
            let mut base = Vec::new();
            let mut decrements = Vec::new();
            for (&f, &c) in &a.eff {
                match c {
                    QualChange::Add => base.push(Literal {
                        feature: f,
                        value: true,
                    }),
                    QualChange::Del | QualChange::Inc => base.push(Literal {
                        feature: f,
                        value: false,
                    }),
                    QualChange::Dec => decrements.push(f),
                    QualChange::None => {}
                }
            }
            let mut outcomes = vec![base];
            for f in decrements {
                outcomes = outcomes
                    .into_iter()
                    .flat_map(|o| {
                        [false, true].map(|value| {
                            let mut o = o.clone();
                            o.push(Literal { feature: f, value });
                            o.sort();
                            o
                        })
                    })
                    .collect();
            }
            FondAction {
                name: a.name.clone(),
                pre: a
                    .pre
                    .iter()
                    .map(|(&feature, &value)| Literal { feature, value })
                    .collect(),
                outcomes,
            }
        })
        .collect();
    FondModel {
        atoms,
        initial: q.initial.clone(),
        goal: q.goal.clone(),
        actions,
    }
}

fn lit_holds(l: &Literal, s: AbstractStateBits) -> bool {
    ((s >> l.feature) & 1 == 1) == l.value
}

pub fn condition_holds(c: &Condition, s: AbstractStateBits) -> bool {
    match c {
        Condition::Literals(ls) => ls.iter().all(|l| lit_holds(l, s)),
        Condition::Dnf(d) => d.terms.iter().any(|t| t.iter().all(|l| lit_holds(l, s))),
    }
}

pub fn to_bits(state: &[bool]) -> AbstractStateBits {
    state
        .iter()
        .enumerate()
        .fold(0, |acc, (i, &b)| acc | ((b as u32) << i))
}

pub fn from_bits(s: AbstractStateBits, n: usize) -> Vec<bool> {
    (0..n).map(|i| (s >> i) & 1 == 1).collect()
}

fn apply(outcome: &[Literal], s: AbstractStateBits) -> AbstractStateBits {
    outcome.iter().fold(s, |acc, l| {
        if l.value {
            acc | (1 << l.feature)
        } else {
            acc & !(1 << l.feature)
        }
    })
}

impl FondModel {
    pub fn num_states(&self) -> usize {
        1usize << self.atoms.len()
    }

    pub fn applicable(&self, a: usize, s: AbstractStateBits) -> bool {
        self.actions[a].pre.iter().all(|l| lit_holds(l, s))
    }

    /// Distinct successor states of `a` in `s`.
    pub fn successors(&self, a: usize, s: AbstractStateBits) -> Vec<AbstractStateBits> {
        let set: BTreeSet<AbstractStateBits> = self.actions[a]
            .outcomes
            .iter()
            .map(|o| apply(o, s))
            .collect();
        set.into_iter().collect()
    }

    pub fn is_goal(&self, s: AbstractStateBits) -> bool {
        condition_holds(&self.goal, s)
    }

    pub fn initial_states(&self) -> Vec<AbstractStateBits> {
        (0..self.num_states() as u32)
            .filter(|&s| self.initial.iter().all(|l| lit_holds(l, s)))
            .collect()
    }
}

/// Partial map from abstract states to action indices.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Policy {
    pub rules: BTreeMap<AbstractStateBits, usize>,
}

impl Policy {
    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn action(&self, s: AbstractStateBits) -> Option<usize> {
        self.rules.get(&s).copied()
    }
}

/// States from which the goal can be reached by actions whose outcomes all
/// stay inside the set, with the BFS layer of each. Unsolvable states map to
/// `None`.
pub fn strong_cyclic_ranks(f: &FondModel) -> Vec<Option<u32>> {
    let n = f.num_states();
    let succ: Vec<Vec<Vec<AbstractStateBits>>> = (0..n as u32)
        .map(|s| {
            (0..f.actions.len())
                .map(|a| {
                    if f.applicable(a, s) {
                        f.successors(a, s)
                    } else {
                        Vec::new()
                    }
                })
                .collect()
        })
        .collect();
    let mut alive = vec![true; n];
    loop {
        let mut rank: Vec<Option<u32>> = vec![None; n];
        let mut layer: Vec<usize> = (0..n)
            .filter(|&s| alive[s] && f.is_goal(s as u32))
            .collect();
        for &s in &layer {
            rank[s] = Some(0);
        }
        let mut r = 0;
        while !layer.is_empty() {
            r += 1;
            let mut next = Vec::new();
            for s in 0..n {
                if !alive[s] || rank[s].is_some() {
                    continue;
                }
                let good = succ[s].iter().any(|out| {
                    !out.is_empty()
                        && out.iter().all(|&t| alive[t as usize])
                        && out.iter().any(|&t| rank[t as usize].is_some_and(|x| x < r))
                });
                if good {
                    next.push(s);
                }
            }
            for &s in &next {
                rank[s] = Some(r);
            }
            layer = next;
        }
        let pruned: Vec<bool> = rank.iter().map(Option::is_some).collect();
        if pruned == alive {
            return rank;
        }
        alive = pruned;
    }
}

/// Enumerates strong-cyclic policies restricted to the states they reach,
/// calling `visit` on each until it breaks or `cap` candidate leaves have
/// been examined. Returns the number of policies visited.
///
/// Choices are made for the lowest-numbered unassigned reachable state.
/// Actions reaching a lower rank come first, each group in index order.
pub fn enumerate_policies(
    f: &FondModel,
    cap: usize,
    mut visit: impl FnMut(&Policy) -> ControlFlow<()>,
) -> Result<usize, FondError> {
    if f.atoms.len() > MAX_ATOMS {
        return Err(FondError::TooManyAtoms(f.atoms.len()));
    }
    let rank = strong_cyclic_ranks(f);
    let initial = f.initial_states();
    if initial.iter().any(|&s| rank[s as usize].is_none()) {
        return Err(FondError::NoSolution);
    }
    let n = f.num_states();
    let mut candidates: Vec<Vec<usize>> = vec![Vec::new(); n];
    for s in 0..n as u32 {
        let Some(r) = rank[s as usize] else { continue };
        if r == 0 {
            continue;
        }
        let mut progress = Vec::new();
        let mut other = Vec::new();
        for a in 0..f.actions.len() {
            if !f.applicable(a, s) {
                continue;
            }
            let succ = f.successors(a, s);
            if succ.iter().any(|&t| rank[t as usize].is_none()) {
                continue;
            }
            if succ
                .iter()
                .any(|&t| rank[t as usize].is_some_and(|x| x < r))
            {
                progress.push(a);
            } else {
                other.push(a);
            }
        }
        progress.extend(other);
        candidates[s as usize] = progress;
    }
    let mut search = Search {
        f,
        initial,
        candidates,
        policy: Policy::default(),
        leaves: 0,
        visited: 0,
        cap,
    };
    let _ = search.dfs(&mut visit);
    Ok(search.visited)
}

struct Search<'a> {
    f: &'a FondModel,
    initial: Vec<AbstractStateBits>,
    candidates: Vec<Vec<usize>>,
    policy: Policy,
    leaves: usize,
    visited: usize,
    cap: usize,
}

impl Search<'_> {
    /// States reachable under the current partial policy; the first
    /// unassigned non-goal one, if any.
    fn frontier(&self) -> (BTreeSet<AbstractStateBits>, Option<AbstractStateBits>) {
        let mut seen: BTreeSet<AbstractStateBits> = self.initial.iter().copied().collect();
        let mut queue: VecDeque<AbstractStateBits> = seen.iter().copied().collect();
        let mut open = None::<AbstractStateBits>;
        while let Some(s) = queue.pop_front() {
            if self.f.is_goal(s) {
                continue;
            }
            match self.policy.action(s) {
                Some(a) => {
                    for t in self.f.successors(a, s) {
                        if seen.insert(t) {
                            queue.push_back(t);
                        }
                    }
                }
                None => open = Some(open.map_or(s, |o| o.min(s))),
            }
        }
        (seen, open)
    }

    fn dfs(&mut self, visit: &mut impl FnMut(&Policy) -> ControlFlow<()>) -> ControlFlow<()> {
        let (reach, open) = self.frontier();
        let Some(s) = open else {
            self.leaves += 1;
            if reaches_goal_everywhere(self.f, &self.policy, &reach) {
                self.visited += 1;
                visit(&self.policy)?;
            }
            if self.leaves >= self.cap {
                return ControlFlow::Break(());
            }
            return ControlFlow::Continue(());
        };
        for a in self.candidates[s as usize].clone() {
            self.policy.rules.insert(s, a);
            let flow = self.dfs(visit);
            self.policy.rules.remove(&s);
            flow?;
        }
        ControlFlow::Continue(())
    }
}

/// Every state in `reach` can reach a goal state following `policy`.
fn reaches_goal_everywhere(
    f: &FondModel,
    policy: &Policy,
    reach: &BTreeSet<AbstractStateBits>,
) -> bool {
    let mut solved: BTreeSet<AbstractStateBits> =
        reach.iter().copied().filter(|&s| f.is_goal(s)).collect();
    loop {
        let before = solved.len();
        for &s in reach {
            if solved.contains(&s) {
                continue;
            }
            if let Some(a) = policy.action(s) {
                if f.successors(a, s).iter().any(|t| solved.contains(t)) {
                    solved.insert(s);
                }
            }
        }
        if solved.len() == before {
            return solved.len() == reach.len();
        }
    }
}

/// The first strong-cyclic policy.
pub fn strong_cyclic_solve(f: &FondModel) -> Result<Policy, FondError> {
    let mut found = None;
    enumerate_policies(f, usize::MAX, |p| {
        found = Some(p.clone());
        ControlFlow::Break(())
    })?;
    found.ok_or(FondError::NoSolution)
}

/// States reachable from the initial states under `policy`, with the edges
/// `(source, action, target)` it induces.
pub fn policy_graph(
    f: &FondModel,
    policy: &Policy,
) -> (
    Vec<AbstractStateBits>,
    Vec<(AbstractStateBits, usize, AbstractStateBits)>,
) {
    let mut seen: BTreeSet<AbstractStateBits> = f.initial_states().into_iter().collect();
    let mut queue: VecDeque<AbstractStateBits> = seen.iter().copied().collect();
    let mut edges = Vec::new();
    while let Some(s) = queue.pop_front() {
        if f.is_goal(s) {
            continue;
        }
        if let Some(a) = policy.action(s) {
            for t in f.successors(a, s) {
                edges.push((s, a, t));
                if seen.insert(t) {
                    queue.push_back(t);
                }
            }
        }
    }
    (seen.into_iter().collect(), edges)
}

/// Tarjan's algorithm; returns the component id of each node.
fn scc(n: usize, adj: &[Vec<usize>]) -> Vec<usize> {
    struct T<'a> {
        adj: &'a [Vec<usize>],
        index: Vec<Option<usize>>,
        low: Vec<usize>,
        on_stack: Vec<bool>,
        stack: Vec<usize>,
        comp: Vec<usize>,
        next: usize,
        comps: usize,
    }
    impl T<'_> {
        fn visit(&mut self, v: usize) {
            self.index[v] = Some(self.next);
            self.low[v] = self.next;
            self.next += 1;
            self.stack.push(v);
            self.on_stack[v] = true;
            for i in 0..self.adj[v].len() {
                let w = self.adj[v][i];
                match self.index[w] {
                    None => {
                        self.visit(w);
                        self.low[v] = self.low[v].min(self.low[w]);
                    }
                    Some(iw) if self.on_stack[w] => self.low[v] = self.low[v].min(iw),
                    _ => {}
                }
            }
            if Some(self.low[v]) == self.index[v] {
                while let Some(w) = self.stack.pop() {
                    self.on_stack[w] = false;
                    self.comp[w] = self.comps;
                    if w == v {
                        break;
                    }
                }
                self.comps += 1;
            }
        }
    }
    let mut t = T {
        adj,
        index: vec![None; n],
        low: vec![0; n],
        on_stack: vec![false; n],
        stack: Vec::new(),
        comp: vec![0; n],
        next: 0,
        comps: 0,
    };
    for v in 0..n {
        if t.index[v].is_none() {
            t.visit(v);
        }
    }
    t.comp
}

/// Termination sieve over the policy graph: inside each strongly connected
/// component, drop edges whose action decrements a numeric feature that no
/// edge of the component increments; repeat until nothing changes. The
/// policy terminates iff no cycle is left.
pub fn terminates(policy: &Policy, q: &QnpModel) -> bool {
    let f = qnp_to_fond(q);
    let (nodes, edges) = policy_graph(&f, policy);
    let id: BTreeMap<AbstractStateBits, usize> =
        nodes.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let mut live: Vec<(usize, usize, usize)> =
        edges.iter().map(|&(s, a, t)| (id[&s], a, id[&t])).collect();
    loop {
        let mut adj = vec![Vec::new(); nodes.len()];
        for &(s, _, t) in &live {
            adj[s].push(t);
        }
        let comp = scc(nodes.len(), &adj);
        let mut increased: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        for &(s, a, t) in &live {
            if comp[s] == comp[t] {
                for (&feat, &c) in &q.actions[a].eff {
                    if c == QualChange::Inc {
                        increased.entry(comp[s]).or_default().insert(feat);
                    }
                }
            }
        }
        let before = live.len();
        live.retain(|&(s, a, t)| {
            if comp[s] != comp[t] {
                return true;
            }
            let inc = increased.get(&comp[s]);
            !q.actions[a].eff.iter().any(|(feat, &c)| {
                c == QualChange::Dec && !inc.is_some_and(|set| set.contains(feat))
            })
        });
        if live.len() == before {
            return !live.iter().any(|&(s, _, t)| comp[s] == comp[t]);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QnpSolution {
    pub policy: Policy,
    /// Strong-cyclic policies examined, including the accepted one.
    pub enumerated: usize,
}

/// First strong-cyclic policy that passes [`terminates`], examining at most
/// `cap` candidates.
pub fn solve_qnp(q: &QnpModel, cap: usize) -> Result<QnpSolution, FondError> {
    let f = qnp_to_fond(q);
    let mut found = None;
    let mut count = 0;
    enumerate_policies(&f, cap, |p| {
        count += 1;
        if terminates(p, q) {
            found = Some(p.clone());
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })?;
    match found {
        Some(policy) => Ok(QnpSolution {
            policy,
            enumerated: count,
        }),
        None if count == 0 => Err(FondError::NoSolution),
        None => Err(FondError::NoTerminatingPolicy(count)),
    }
}

/// Rules `condition → action`, one per mapped abstract state.
pub fn policy_table(policy: &Policy, q: &QnpModel) -> String {
    let n = Notation::new(&q.features);
    let mut out = String::new();
    for (&s, &a) in &policy.rules {
        let cond: Vec<String> = (0..q.features.len())
            .map(|f| {
                n.literal(Literal {
                    feature: f,
                    value: (s >> f) & 1 == 1,
                })
            })
            .collect();
        let _ = writeln!(
            out,
            "⟨{}⟩ → {} = {}",
            cond.join(", "),
            q.actions[a].name,
            n.action(&q.actions[a])
        );
    }
    out
}

pub fn policy_to_json(policy: &Policy, q: &QnpModel) -> serde_json::Value {
    let rules: Vec<serde_json::Value> = policy
        .rules
        .iter()
        .map(|(&s, &a)| {
            let state: Vec<String> = (0..q.features.len())
                .map(|f| {
                    literal_text(
                        Literal {
                            feature: f,
                            value: (s >> f) & 1 == 1,
                        },
                        &q.features,
                    )
                })
                .collect();
            serde_json::json!({ "state": state, "action": q.actions[a].name })
        })
        .collect();
    serde_json::json!({ "rules": rules })
}

/// Reads rules written by [`policy_to_json`] against the model's features
/// and action names.
pub fn policy_from_json(
    value: &serde_json::Value,
    q: &QnpModel,
) -> Result<Policy, crate::abstraction::AbstractionError> {
    use crate::abstraction::{parse_literal, AbstractionError};
    let bad = |m: &str| AbstractionError::BadLiteral {
        literal: String::new(),
        message: m.to_string(),
    };
    let mut policy = Policy::default();
    for rule in value["rules"]
        .as_array()
        .ok_or_else(|| bad("missing rules"))?
    {
        let mut s: AbstractStateBits = 0;
        for l in rule["state"]
            .as_array()
            .ok_or_else(|| bad("rule without state"))?
        {
            let lit = parse_literal(
                l.as_str().ok_or_else(|| bad("literal is not a string"))?,
                &q.features,
            )?;
            if lit.value {
                s |= 1 << lit.feature;
            }
        }
        let name = rule["action"]
            .as_str()
            .ok_or_else(|| bad("rule without action"))?;
        let a = q
            .actions
            .iter()
            .position(|x| x.name == name)
            .ok_or_else(|| bad(&format!("unknown action '{name}'")))?;
        policy.rules.insert(s, a);
    }
    Ok(policy)
}
