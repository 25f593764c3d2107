//! Denotations and feature values on single states.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::expr::{Concept, Feature, FeatureKind, Role};
use crate::strips::{GroundInstance, State};

/// Feature value: booleans are 0/1, numeric features are counts.
pub type Value = u32;

/// Distance between sets that no chain connects; compares above every count.
pub const UNREACHABLE: Value = Value::MAX;

/// Set of object indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ObjSet {
    words: Vec<u64>,
}

impl ObjSet {
    pub fn empty(n: usize) -> Self {
        ObjSet {
            words: vec![0; n.div_ceil(64)],
        }
    }

    pub fn full(n: usize) -> Self {
        let mut s = Self::empty(n);
        for i in 0..n {
            s.insert(i);
        }
        s
    }

    pub fn insert(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn contains(&self, i: usize) -> bool {
        self.words[i / 64] & (1 << (i % 64)) != 0
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn intersects(&self, other: &ObjSet) -> bool {
        self.words.iter().zip(&other.words).any(|(a, b)| a & b != 0)
    }

    pub fn is_subset(&self, other: &ObjSet) -> bool {
        self.words
            .iter()
            .zip(&other.words)
            .all(|(a, b)| a & !b == 0)
    }

    pub fn union_with(&mut self, other: &ObjSet) -> bool {
        let mut changed = false;
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            let n = *a | b;
            changed |= n != *a;
            *a = n;
        }
        changed
    }

    pub fn intersect(&self, other: &ObjSet) -> ObjSet {
        ObjSet {
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(a, b)| a & b)
                .collect(),
        }
    }

    pub fn difference(&self, other: &ObjSet) -> ObjSet {
        ObjSet {
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(a, b)| a & !b)
                .collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(w, &word)| {
            (0..64)
                .filter(move |b| word & (1u64 << b) != 0)
                .map(move |b| w * 64 + b)
        })
    }
}

/// Binary relation as one successor set per object.
pub type Relation = Vec<ObjSet>;

/// Transitive closure by repeated breadth-first expansion from each object.
pub fn transitive_closure(rel: &Relation) -> Relation {
    let n = rel.len();
    let mut out = Vec::with_capacity(n);
    for a in 0..n {
        let mut reach = rel[a].clone();
        let mut frontier: Vec<usize> = reach.iter().collect();
        while let Some(b) = frontier.pop() {
            for c in rel[b].iter() {
                if !reach.contains(c) {
                    reach.insert(c);
                    frontier.push(c);
                }
            }
        }
        out.push(reach);
    }
    out
}

pub fn inverse(rel: &Relation) -> Relation {
    let n = rel.len();
    let mut out = vec![ObjSet::empty(n); n];
    for (a, row) in rel.iter().enumerate() {
        for b in row.iter() {
            out[b].insert(a);
        }
    }
    out
}

/// Length of the shortest chain `from ∋ x1 → … → xn ∈ to` along `rel`.
pub fn chain_distance(from: &ObjSet, rel: &Relation, to: &ObjSet) -> Value {
    if from.intersects(to) {
        return 0;
    }
    let mut visited = from.clone();
    let mut frontier = from.clone();
    let mut d = 0;
    loop {
        let mut next = ObjSet::empty(rel.len());
        for a in frontier.iter() {
            next.union_with(&rel[a]);
        }
        let next = next.difference(&visited);
        if next.is_empty() {
            return UNREACHABLE;
        }
        d += 1;
        if next.intersects(to) {
            return d;
        }
        visited.union_with(&next);
        frontier = next;
    }
}

/// Evaluates expressions on one state, caching concept denotations.
pub struct StateEvaluator<'a> {
    instance: &'a GroundInstance,
    state: &'a State,
    cache: HashMap<Concept, ObjSet>,
}

impl<'a> StateEvaluator<'a> {
    pub fn new(instance: &'a GroundInstance, state: &'a State) -> Self {
        StateEvaluator {
            instance,
            state,
            cache: HashMap::new(),
        }
    }

    fn n(&self) -> usize {
        self.instance.num_objects()
    }

    fn primitive_concept(&self, name: &str) -> ObjSet {
        let mut out = ObjSet::empty(self.n());
        if let Some(p) = self.instance.predicate_index(name) {
            if self.instance.predicates[p].arity == 1 {
                for o in 0..self.n() {
                    if self.state.holds(self.instance.atom_id(p, &[o])) {
                        out.insert(o);
                    }
                }
            }
        }
        out
    }

    fn primitive_role(&self, name: &str) -> Relation {
        let n = self.n();
        let mut out = vec![ObjSet::empty(n); n];
        if let Some(p) = self.instance.predicate_index(name) {
            if self.instance.predicates[p].arity == 2 {
                for (a, row) in out.iter_mut().enumerate() {
                    for b in 0..n {
                        if self.state.holds(self.instance.atom_id(p, &[a, b])) {
                            row.insert(b);
                        }
                    }
                }
            }
        }
        out
    }

    pub fn role(&self, r: &Role) -> Relation {
        let base = self.primitive_role(r.predicate());
        match r {
            Role::Primitive(_) => base,
            Role::Inverse(_) => inverse(&base),
            Role::Plus(_) => transitive_closure(&base),
            Role::PlusInverse(_) => transitive_closure(&inverse(&base)),
        }
    }

    pub fn concept(&mut self, c: &Concept) -> ObjSet {
        if let Some(d) = self.cache.get(c) {
            return d.clone();
        }
        let n = self.n();
        let d = match c {
            Concept::Primitive(p) => self.primitive_concept(p),
            Concept::Universal => ObjSet::full(n),
            Concept::Nominal(x) => {
                let mut s = ObjSet::empty(n);
                if let Some(o) = self.instance.parameter(x) {
                    s.insert(o);
                }
                s
            }
            Concept::Not(inner) => ObjSet::full(n).difference(&self.concept(inner)),
            Concept::And(a, b) => {
                let a = self.concept(a);
                a.intersect(&self.concept(b))
            }
            Concept::Exists(r, inner) => {
                let rel = self.role(r);
                let target = self.concept(inner);
                let mut s = ObjSet::empty(n);
                for (x, row) in rel.iter().enumerate() {
                    if row.intersects(&target) {
                        s.insert(x);
                    }
                }
                s
            }
            Concept::Forall(r, inner) => {
                // Guarded reading: every R-successor is in C.
                let rel = self.role(r);
                let target = self.concept(inner);
                let mut s = ObjSet::empty(n);
                for (x, row) in rel.iter().enumerate() {
                    if row.is_subset(&target) {
                        s.insert(x);
                    }
                }
                s
            }
            Concept::RoleEq(r1, r2) => {
                let a = self.role(r1);
                let b = self.role(r2);
                let mut s = ObjSet::empty(n);
                for x in 0..n {
                    if a[x] == b[x] {
                        s.insert(x);
                    }
                }
                s
            }
        };
        self.cache.insert(c.clone(), d.clone());
        d
    }

    pub fn feature(&mut self, f: &Feature) -> Value {
        match &f.kind {
            FeatureKind::Nullary(p) => match self.instance.predicate_index(p) {
                Some(i) if self.instance.predicates[i].arity == 0 => {
                    self.state.holds(self.instance.atom_id(i, &[])) as Value
                }
                _ => 0,
            },
            FeatureKind::Boolean(c) => (!self.concept(c).is_empty()) as Value,
            FeatureKind::Numeric(c) => self.concept(c).len() as Value,
            FeatureKind::Distance {
                from,
                role,
                restrict,
                to,
            } => {
                let from = self.concept(from);
                let to = self.concept(to);
                let keep = self.concept(restrict);
                let rel: Relation = self
                    .role(role)
                    .iter()
                    .map(|row| row.intersect(&keep))
                    .collect();
                chain_distance(&from, &rel, &to)
            }
        }
    }
}

pub fn denote_concept(c: &Concept, instance: &GroundInstance, state: &State) -> ObjSet {
    StateEvaluator::new(instance, state).concept(c)
}

pub fn denote_role(r: &Role, instance: &GroundInstance, state: &State) -> Relation {
    StateEvaluator::new(instance, state).role(r)
}

pub fn eval_feature(f: &Feature, instance: &GroundInstance, state: &State) -> Value {
    StateEvaluator::new(instance, state).feature(f)
}

/// Qualitative change of a feature along a transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QualChange {
    /// Boolean false → true.
    Add,
    /// Boolean true → false.
    Del,
    /// Numeric increase.
    Inc,
    /// Numeric decrease.
    Dec,
    /// Unchanged.
    None,
}

impl QualChange {
    pub fn symbol(self) -> &'static str {
        match self {
            QualChange::Add => "+",
            QualChange::Del => "-",
            QualChange::Inc => "↑",
            QualChange::Dec => "↓",
            QualChange::None => "⊥",
        }
    }
}

pub fn qual_change(numeric: bool, before: Value, after: Value) -> QualChange {
    use std::cmp::Ordering::*;
    if numeric {
        match after.cmp(&before) {
            Greater => QualChange::Inc,
            Less => QualChange::Dec,
            Equal => QualChange::None,
        }
    } else {
        match (before != 0, after != 0) {
            (false, true) => QualChange::Add,
            (true, false) => QualChange::Del,
            _ => QualChange::None,
        }
    }
}

pub fn delta(f: &Feature, instance: &GroundInstance, s: &State, t: &State) -> QualChange {
    qual_change(
        f.is_numeric(),
        eval_feature(f, instance, s),
        eval_feature(f, instance, t),
    )
}

/// Truth of the abstract atom of a value: `p` for booleans, `n = 0` for numerics.
pub fn abstract_atom(numeric: bool, v: Value) -> bool {
    if numeric {
        v == 0
    } else {
        v != 0
    }
}
