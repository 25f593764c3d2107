//! Bottom-up generation of the candidate feature pool over a sample.
//!
//! Denotations are computed column-wise: one bitset block per sampled
//! state, concatenated, so that pruning by "same denotation on every
//! sampled state" is a single hash lookup.

use std::collections::HashMap;
use std::sync::Arc;

use super::eval::{chain_distance, inverse, transitive_closure, ObjSet, Relation, Value};
use super::expr::{Concept, Feature, FeatureKind, Role};
use crate::sampler::SampleSet;
use crate::strips::DomainModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolConfig {
    /// Bound `k` on expression complexity and feature cost.
    pub max_complexity: u32,
    pub distance: bool,
}

impl Default for PoolConfig {
    fn default() -> Self {
        PoolConfig {
            max_complexity: 8,
            distance: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PoolStats {
    pub roles: usize,
    pub concepts_generated: usize,
    pub concepts_retained: usize,
    pub features_before_dedup: usize,
}

#[derive(Debug, Clone)]
pub struct Pool {
    pub features: Vec<Feature>,
    /// `values[f][s]`: value of feature `f` on sampled state `s`.
    pub values: Vec<Vec<Value>>,
    pub stats: PoolStats,
}

/// Per-state word layout of column-wise denotations.
struct Layout {
    objects: Vec<usize>,
    words: Vec<usize>,
    offset: Vec<usize>,
    total: usize,
}

impl Layout {
    fn new(sample: &SampleSet) -> Self {
        let mut objects = Vec::new();
        let mut words = Vec::new();
        let mut offset = Vec::new();
        let mut total = 0;
        for s in 0..sample.states.len() {
            let n = sample.instance_of(s).num_objects();
            objects.push(n);
            words.push(n.div_ceil(64).max(1));
            offset.push(total);
            total += n.div_ceil(64).max(1);
        }
        Layout {
            objects,
            words,
            offset,
            total,
        }
    }

    fn block<'a>(&self, den: &'a [u64], s: usize) -> &'a [u64] {
        &den[self.offset[s]..self.offset[s] + self.words[s]]
    }

    fn to_set(&self, den: &[u64], s: usize) -> ObjSet {
        let mut set = ObjSet::empty(self.objects[s]);
        for (w, &word) in self.block(den, s).iter().enumerate() {
            for b in 0..64 {
                if word & (1 << b) != 0 {
                    set.insert(w * 64 + b);
                }
            }
        }
        set
    }

    fn full_mask(&self, s: usize, w: usize) -> u64 {
        let n = self.objects[s];
        let lo = w * 64;
        if n >= lo + 64 {
            u64::MAX
        } else if n <= lo {
            0
        } else {
            (1u64 << (n - lo)) - 1
        }
    }
}

struct RoleNode {
    role: Role,
    /// Relation per sampled state.
    den: Vec<Relation>,
}

struct ConceptNode {
    concept: Arc<Concept>,
    complexity: u32,
    den: Vec<u64>,
}

struct Generator<'a> {
    sample: &'a SampleSet,
    layout: Layout,
    concepts: Vec<ConceptNode>,
    layers: Vec<Vec<usize>>,
    seen: HashMap<Vec<u64>, usize>,
    generated: usize,
}

impl Generator<'_> {
    /// Keeps `concept` unless an earlier concept has the same denotation.
    fn offer(&mut self, concept: Concept, den: Vec<u64>) {
        self.generated += 1;
        if self.seen.contains_key(&den) {
            return;
        }
        let complexity = concept.complexity();
        let idx = self.concepts.len();
        self.seen.insert(den.clone(), idx);
        self.concepts.push(ConceptNode {
            concept: Arc::new(concept),
            complexity,
            den,
        });
        while self.layers.len() <= complexity as usize {
            self.layers.push(Vec::new());
        }
        self.layers[complexity as usize].push(idx);
    }

    fn primitive(&self, name: &str) -> Vec<u64> {
        let mut den = vec![0u64; self.layout.total];
        for (s, st) in self.sample.states.iter().enumerate() {
            let inst = self.sample.instance_of(s);
            let Some(p) = inst.predicate_index(name) else {
                continue;
            };
            for o in 0..inst.num_objects() {
                if st.state.holds(inst.atom_id(p, &[o])) {
                    den[self.layout.offset[s] + o / 64] |= 1 << (o % 64);
                }
            }
        }
        den
    }

    fn universal(&self) -> Vec<u64> {
        let mut den = vec![0u64; self.layout.total];
        for s in 0..self.sample.states.len() {
            for w in 0..self.layout.words[s] {
                den[self.layout.offset[s] + w] = self.layout.full_mask(s, w);
            }
        }
        den
    }

    fn nominal(&self, x: &str) -> Vec<u64> {
        let mut den = vec![0u64; self.layout.total];
        for s in 0..self.sample.states.len() {
            if let Some(o) = self.sample.instance_of(s).parameter(x) {
                den[self.layout.offset[s] + o / 64] |= 1 << (o % 64);
            }
        }
        den
    }

    fn negation(&self, c: &[u64]) -> Vec<u64> {
        let mut den = vec![0u64; self.layout.total];
        for s in 0..self.sample.states.len() {
            for w in 0..self.layout.words[s] {
                let i = self.layout.offset[s] + w;
                den[i] = !c[i] & self.layout.full_mask(s, w);
            }
        }
        den
    }

    fn quantified(&self, role: &RoleNode, c: &[u64], existential: bool) -> Vec<u64> {
        let mut den = vec![0u64; self.layout.total];
        for s in 0..self.sample.states.len() {
            let target = self.layout.to_set(c, s);
            for (x, row) in role.den[s].iter().enumerate() {
                let hit = if existential {
                    row.intersects(&target)
                } else {
                    row.is_subset(&target)
                };
                if hit {
                    den[self.layout.offset[s] + x / 64] |= 1 << (x % 64);
                }
            }
        }
        den
    }

    fn role_equality(&self, r1: &RoleNode, r2: &RoleNode) -> Vec<u64> {
        let mut den = vec![0u64; self.layout.total];
        for s in 0..self.sample.states.len() {
            for x in 0..self.layout.objects[s] {
                if r1.den[s][x] == r2.den[s][x] {
                    den[self.layout.offset[s] + x / 64] |= 1 << (x % 64);
                }
            }
        }
        den
    }

    fn max_cardinality(&self, den: &[u64]) -> usize {
        (0..self.sample.states.len())
            .map(|s| {
                self.layout
                    .block(den, s)
                    .iter()
                    .map(|w| w.count_ones() as usize)
                    .sum()
            })
            .max()
            .unwrap_or(0)
    }

    fn cardinalities(&self, den: &[u64]) -> Vec<Value> {
        (0..self.sample.states.len())
            .map(|s| {
                self.layout
                    .block(den, s)
                    .iter()
                    .map(|w| w.count_ones())
                    .sum()
            })
            .collect()
    }
}

fn primitive_role_den(sample: &SampleSet, name: &str) -> Vec<Relation> {
    sample
        .states
        .iter()
        .enumerate()
        .map(|(s, st)| {
            let inst = sample.instance_of(s);
            let n = inst.num_objects();
            let mut rel = vec![ObjSet::empty(n); n];
            if let Some(p) = inst.predicate_index(name) {
                for (a, row) in rel.iter_mut().enumerate() {
                    for b in 0..n {
                        if st.state.holds(inst.atom_id(p, &[a, b])) {
                            row.insert(b);
                        }
                    }
                }
            }
            rel
        })
        .collect()
}

fn roles(domain: &DomainModel, sample: &SampleSet) -> Vec<RoleNode> {
    let mut out: Vec<RoleNode> = Vec::new();
    let binary: Vec<&str> = domain
        .predicates
        .iter()
        .filter(|p| p.arity == 2)
        .map(|p| p.name.as_str())
        .collect();
    let base: Vec<Vec<Relation>> = binary
        .iter()
        .map(|p| primitive_role_den(sample, p))
        .collect();
    let mut candidates: Vec<RoleNode> = Vec::new();
    for (p, den) in binary.iter().zip(&base) {
        candidates.push(RoleNode {
            role: Role::Primitive(p.to_string()),
            den: den.clone(),
        });
    }
    for (p, den) in binary.iter().zip(&base) {
        candidates.push(RoleNode {
            role: Role::Inverse(p.to_string()),
            den: den.iter().map(inverse).collect(),
        });
    }
    for (p, den) in binary.iter().zip(&base) {
        candidates.push(RoleNode {
            role: Role::Plus(p.to_string()),
            den: den.iter().map(transitive_closure).collect(),
        });
    }
    for (p, den) in binary.iter().zip(&base) {
        candidates.push(RoleNode {
            role: Role::PlusInverse(p.to_string()),
            den: den
                .iter()
                .map(|r| transitive_closure(&inverse(r)))
                .collect(),
        });
    }
    for c in candidates {
        if !out.iter().any(|r| r.den == c.den) {
            out.push(c);
        }
    }
    out
}

/// Generates the feature pool `F^k` for `domain` over the states of `sample`.
pub fn generate_pool(domain: &DomainModel, sample: &SampleSet, config: &PoolConfig) -> Pool {
    let k = config.max_complexity.max(1);
    let roles = roles(domain, sample);
    let mut g = Generator {
        sample,
        layout: Layout::new(sample),
        concepts: Vec::new(),
        layers: vec![Vec::new()],
        seen: HashMap::new(),
        generated: 0,
    };

    let mut unary: Vec<&str> = domain
        .predicates
        .iter()
        .filter(|p| p.arity == 1)
        .map(|p| p.name.as_str())
        .collect();
    unary.sort_unstable();
    let mut params: Vec<String> = Vec::new();
    for inst in &sample.instances {
        for (x, _) in &inst.parameters {
            if !params.contains(x) {
                params.push(x.clone());
            }
        }
    }

    for p in unary {
        let den = g.primitive(p);
        g.offer(Concept::Primitive(p.to_string()), den);
    }
    let den = g.universal();
    g.offer(Concept::Universal, den);
    for x in &params {
        let den = g.nominal(x);
        g.offer(Concept::Nominal(x.clone()), den);
    }

    for c in 2..=k {
        let c_us = c as usize;
        // Negation of atomic concepts.
        if c == 2 {
            let atoms: Vec<usize> = g.layers[1].clone();
            for i in atoms {
                if g.concepts[i].concept.is_atomic() {
                    let den = g.negation(&g.concepts[i].den);
                    let concept = Concept::Not(g.concepts[i].concept.clone());
                    g.offer(concept, den);
                }
            }
        }
        // Conjunctions.
        for c1 in 1..c_us {
            let c2 = c_us - 1 - c1;
            if c2 < c1 || c2 == 0 || c2 >= g.layers.len() {
                continue;
            }
            let left: Vec<usize> = g.layers[c1].clone();
            let right: Vec<usize> = g.layers[c2].clone();
            for (ai, &a) in left.iter().enumerate() {
                for &b in right.iter().skip(if c1 == c2 { ai + 1 } else { 0 }) {
                    let den: Vec<u64> = g.concepts[a]
                        .den
                        .iter()
                        .zip(&g.concepts[b].den)
                        .map(|(x, y)| x & y)
                        .collect();
                    let concept =
                        Concept::And(g.concepts[a].concept.clone(), g.concepts[b].concept.clone());
                    g.offer(concept, den);
                }
            }
        }
        // Quantified restrictions.
        for existential in [true, false] {
            for r in &roles {
                let rc = r.role.complexity() as usize;
                if rc + 1 >= c_us {
                    continue;
                }
                let cc = c_us - 1 - rc;
                if cc >= g.layers.len() {
                    continue;
                }
                let inner: Vec<usize> = g.layers[cc].clone();
                for i in inner {
                    let den = g.quantified(r, &g.concepts[i].den, existential);
                    let concept = if existential {
                        Concept::Exists(r.role.clone(), g.concepts[i].concept.clone())
                    } else {
                        Concept::Forall(r.role.clone(), g.concepts[i].concept.clone())
                    };
                    g.offer(concept, den);
                }
            }
        }
        // Role equalities.
        for (i, r1) in roles.iter().enumerate() {
            for r2 in roles.iter().skip(i + 1) {
                if 1 + r1.role.complexity() + r2.role.complexity() == c {
                    let den = g.role_equality(r1, r2);
                    g.offer(Concept::RoleEq(r1.role.clone(), r2.role.clone()), den);
                }
            }
        }
    }

    // Features in generation order, then stable-sorted by cost.
    let mut features: Vec<(Feature, Vec<Value>)> = Vec::new();
    let mut nullary: Vec<&str> = domain
        .predicates
        .iter()
        .filter(|p| p.arity == 0)
        .map(|p| p.name.as_str())
        .collect();
    nullary.sort_unstable();
    for p in nullary {
        let values = sample
            .states
            .iter()
            .enumerate()
            .map(|(s, st)| {
                let inst = sample.instance_of(s);
                inst.predicate_index(p)
                    .map_or(0, |i| st.state.holds(inst.atom_id(i, &[])) as Value)
            })
            .collect();
        features.push((Feature::new(FeatureKind::Nullary(p.to_string())), values));
    }
    for node in &g.concepts {
        let counts = g.cardinalities(&node.den);
        if g.max_cardinality(&node.den) <= 1 {
            features.push((
                Feature::new(FeatureKind::Boolean((*node.concept).clone())),
                counts,
            ));
        } else {
            features.push((
                Feature::new(FeatureKind::Numeric((*node.concept).clone())),
                counts,
            ));
        }
    }
    if config.distance {
        features.extend(distance_features(&g, &roles, k));
    }
    features.retain(|(f, _)| f.cost <= k);
    let before = features.len();
    features.sort_by_key(|(f, _)| f.cost);

    // Features with identical valuations on every sampled state are interchangeable
    // in the theory; keep the cheapest.
    let mut seen_values: HashMap<(bool, Vec<Value>), ()> = HashMap::new();
    let mut kept_features = Vec::new();
    let mut kept_values = Vec::new();
    for (f, v) in features {
        if seen_values
            .insert((f.is_numeric(), v.clone()), ())
            .is_none()
        {
            kept_features.push(f);
            kept_values.push(v);
        }
    }

    Pool {
        features: kept_features,
        values: kept_values,
        stats: PoolStats {
            roles: roles.len(),
            concepts_generated: g.generated,
            concepts_retained: g.concepts.len(),
            features_before_dedup: before,
        },
    }
}

/// `dist(C1, R:C, C2)` candidates with `C1` denoting a single object in
/// every sampled state.
fn distance_features(g: &Generator<'_>, roles: &[RoleNode], k: u32) -> Vec<(Feature, Vec<Value>)> {
    let states = g.sample.states.len();
    let singleton = |den: &[u64]| {
        (0..states).all(|s| {
            g.layout
                .block(den, s)
                .iter()
                .map(|w| w.count_ones())
                .sum::<u32>()
                == 1
        })
    };
    let sources: Vec<&ConceptNode> = g.concepts.iter().filter(|n| singleton(&n.den)).collect();
    let mut out = Vec::new();
    for src in &sources {
        for r in roles {
            let base = src.complexity + r.role.complexity();
            if base + 2 > k {
                continue;
            }
            for restrict in &g.concepts {
                if base + restrict.complexity + 1 > k {
                    continue;
                }
                // Restricted relation per state.
                let rels: Vec<Relation> = (0..states)
                    .map(|s| {
                        let keep = g.layout.to_set(&restrict.den, s);
                        r.den[s].iter().map(|row| row.intersect(&keep)).collect()
                    })
                    .collect();
                for target in &g.concepts {
                    if base + restrict.complexity + target.complexity > k
                        || Arc::ptr_eq(&target.concept, &src.concept)
                    {
                        continue;
                    }
                    let values: Vec<Value> = (0..states)
                        .map(|s| {
                            chain_distance(
                                &g.layout.to_set(&src.den, s),
                                &rels[s],
                                &g.layout.to_set(&target.den, s),
                            )
                        })
                        .collect();
                    let f = Feature::new(FeatureKind::Distance {
                        from: (*src.concept).clone(),
                        role: r.role.clone(),
                        restrict: (*restrict.concept).clone(),
                        to: (*target.concept).clone(),
                    });
                    out.push((f, values));
                }
            }
        }
    }
    out
}
