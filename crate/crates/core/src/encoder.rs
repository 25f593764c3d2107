//! Weighted Max-SAT theories whose models are feature sets that yield a
//! sound and complete abstraction of a sample.
//!
//! Variables: `selected(f)` per feature, `D1(s,t)` for pairs of expanded
//! states that some selected feature tells apart, `D2(s,s',t,t')` for pairs
//! of transitions that some selected feature tells apart by its
//! qualitative change. Both pair kinds are symmetric and stored once.

use std::collections::HashMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::features::{abstract_atom, qual_change, Feature, QualChange, Value};
use crate::sampler::SampleSet;

/// DIMACS-style literal: positive or negated 1-based variable id.
pub type Lit = i32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Constraints over every pair of expanded states and transitions.
    #[serde(rename = "T")]
    Full,
    /// Constraints anchored at marked (goal-relevant) transitions only.
    #[serde(rename = "T_G")]
    Marked,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Full => "T",
            Variant::Marked => "T_G",
        })
    }
}

/// Which pairs receive the goal-separation units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GoalScope {
    /// Every pair of expanded states with exactly one goal state.
    All,
    /// Only pairs whose first state is in the constraint scope of the variant.
    Anchored,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WeightedCnf {
    pub num_vars: u32,
    lits: Vec<Lit>,
    starts: Vec<usize>,
    pub soft: Vec<(Vec<Lit>, u64)>,
}

impl WeightedCnf {
    pub fn new(num_vars: u32) -> Self {
        WeightedCnf {
            num_vars,
            ..Default::default()
        }
    }

    pub fn add_hard(&mut self, clause: &[Lit]) {
        debug_assert!(clause
            .iter()
            .all(|l| *l != 0 && l.unsigned_abs() <= self.num_vars));
        self.starts.push(self.lits.len());
        self.lits.extend_from_slice(clause);
    }

    pub fn add_soft(&mut self, clause: &[Lit], weight: u64) {
        assert!(weight >= 1, "soft clause weights must be positive");
        self.soft.push((clause.to_vec(), weight));
    }

    pub fn num_hard(&self) -> usize {
        self.starts.len()
    }

    pub fn hard(&self, i: usize) -> &[Lit] {
        let end = self.starts.get(i + 1).copied().unwrap_or(self.lits.len());
        &self.lits[self.starts[i]..end]
    }

    pub fn hard_clauses(&self) -> impl Iterator<Item = &[Lit]> + '_ {
        (0..self.num_hard()).map(move |i| self.hard(i))
    }

    pub fn num_clauses(&self) -> usize {
        self.num_hard() + self.soft.len()
    }

    /// One more than the total soft weight.
    pub fn top(&self) -> u64 {
        1 + self.soft.iter().map(|(_, w)| w).sum::<u64>()
    }

    /// Total weight of soft clauses falsified by `model` (indexed by variable id).
    pub fn cost(&self, model: &[bool]) -> u64 {
        self.soft
            .iter()
            .filter(|(c, _)| !c.iter().any(|&l| lit_true(model, l)))
            .map(|(_, w)| w)
            .sum()
    }

    pub fn satisfies_hard(&self, model: &[bool]) -> bool {
        self.hard_clauses()
            .all(|c| c.iter().any(|&l| lit_true(model, l)))
    }

    pub fn write_wcnf<W: Write>(&self, mut out: W) -> io::Result<()> {
        let top = self.top();
        writeln!(
            out,
            "p wcnf {} {} {}",
            self.num_vars,
            self.num_clauses(),
            top
        )?;
        let mut line = String::new();
        for c in self.hard_clauses() {
            line.clear();
            line.push_str(&top.to_string());
            for l in c {
                line.push(' ');
                line.push_str(&l.to_string());
            }
            line.push_str(" 0\n");
            out.write_all(line.as_bytes())?;
        }
        for (c, w) in &self.soft {
            line.clear();
            line.push_str(&w.to_string());
            for l in c {
                line.push(' ');
                line.push_str(&l.to_string());
            }
            line.push_str(" 0\n");
            out.write_all(line.as_bytes())?;
        }
        out.flush()
    }

    pub fn to_wcnf_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_wcnf(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }
}

/// `model[v]` is the value of variable `v`; index 0 is unused.
pub fn lit_true(model: &[bool], l: Lit) -> bool {
    let v = model
        .get(l.unsigned_abs() as usize)
        .copied()
        .unwrap_or(false);
    if l > 0 {
        v
    } else {
        !v
    }
}

/// Symbolic meaning of the theory's variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TheoryVars {
    pub variant: Variant,
    /// Per pool feature: its `selected` variable, or `None` when pre-filtered.
    pub selected: Vec<Option<u32>>,
    /// Canonical expanded-state pair `(s, t)` with `s < t`.
    pub d1: HashMap<(usize, usize), u32>,
    /// Canonical transition pair `(i, j)` with `i <= j`.
    pub d2: HashMap<(usize, usize), u32>,
    pub num_vars: u32,
}

impl TheoryVars {
    /// Variable names indexed by `id - 1`.
    pub fn names(&self, features: &[Feature], sample: &SampleSet) -> Vec<String> {
        let mut names = vec![String::new(); self.num_vars as usize];
        for (f, v) in self.selected.iter().enumerate() {
            if let Some(v) = v {
                names[*v as usize - 1] = format!("selected({})", features[f]);
            }
        }
        for (&(s, t), &v) in &self.d1 {
            names[v as usize - 1] = format!("D1({s},{t})");
        }
        for (&(i, j), &v) in &self.d2 {
            let (a, b) = (&sample.transitions[i], &sample.transitions[j]);
            names[v as usize - 1] =
                format!("D2({},{},{},{})", a.source, a.target, b.source, b.target);
        }
        names
    }

    pub fn names_json(&self, features: &[Feature], sample: &SampleSet) -> serde_json::Value {
        let map: serde_json::Map<String, serde_json::Value> = self
            .names(features, sample)
            .into_iter()
            .enumerate()
            .map(|(i, n)| ((i + 1).to_string(), serde_json::Value::String(n)))
            .collect();
        serde_json::json!({ "variant": self.variant.to_string(), "vars": map })
    }

    /// Indices of pool features selected in `model`.
    pub fn selected_features(&self, model: &[bool]) -> Vec<usize> {
        self.selected
            .iter()
            .enumerate()
            .filter_map(|(f, v)| v.filter(|&v| lit_true(model, v as Lit)).map(|_| f))
            .collect()
    }
}

trait Sink {
    fn hard(&mut self, clause: &[Lit]);
}

impl Sink for WeightedCnf {
    fn hard(&mut self, clause: &[Lit]) {
        // Variables are allocated while clauses stream in.
        let top = clause.iter().map(|l| l.unsigned_abs()).max().unwrap_or(0);
        self.num_vars = self.num_vars.max(top);
        self.add_hard(clause);
    }
}

#[derive(Default)]
struct Counter {
    clauses: usize,
}

impl Sink for Counter {
    fn hard(&mut self, _: &[Lit]) {
        self.clauses += 1;
    }
}

struct Builder<'a> {
    sample: &'a SampleSet,
    /// Features surviving the pre-filter, as pool indices.
    kept: Vec<usize>,
    /// `qual[s][k]`: abstract atom of kept feature `k` at state `s`.
    qual: Vec<Vec<bool>>,
    /// `change[i][k]`: qualitative change of kept feature `k` along transition `i`.
    change: Vec<Vec<QualChange>>,
    vars: TheoryVars,
    scratch: Vec<Lit>,
}

impl Builder<'_> {
    fn fresh(&mut self) -> u32 {
        self.vars.num_vars += 1;
        self.vars.num_vars
    }

    fn sel(&self, k: usize) -> Lit {
        self.vars.selected[self.kept[k]].expect("kept feature has a variable") as Lit
    }

    /// Emits `D ⇔ ⋁ selected(f)` for the given kept features.
    fn biconditional<S: Sink>(&mut self, d: u32, disjuncts: &[usize], sink: &mut S) {
        self.scratch.clear();
        self.scratch.push(-(d as Lit));
        for &k in disjuncts {
            let l = self.sel(k);
            self.scratch.push(l);
        }
        let clause = std::mem::take(&mut self.scratch);
        sink.hard(&clause);
        self.scratch = clause;
        for &k in disjuncts {
            sink.hard(&[-self.sel(k), d as Lit]);
        }
    }

    fn d1<S: Sink>(&mut self, s: usize, t: usize, sink: &mut S) -> u32 {
        let key = (s.min(t), s.max(t));
        if let Some(&v) = self.vars.d1.get(&key) {
            return v;
        }
        let v = self.fresh();
        self.vars.d1.insert(key, v);
        let differ: Vec<usize> = (0..self.kept.len())
            .filter(|&k| self.qual[s][k] != self.qual[t][k])
            .collect();
        self.biconditional(v, &differ, sink);
        v
    }

    fn d2<S: Sink>(&mut self, i: usize, j: usize, sink: &mut S) -> u32 {
        let key = (i.min(j), i.max(j));
        if let Some(&v) = self.vars.d2.get(&key) {
            return v;
        }
        let v = self.fresh();
        self.vars.d2.insert(key, v);
        let (s, t) = (
            self.sample.transitions[i].source,
            self.sample.transitions[j].source,
        );
        let differ: Vec<usize> = (0..self.kept.len())
            .filter(|&k| {
                self.qual[s][k] == self.qual[t][k] && self.change[i][k] != self.change[j][k]
            })
            .collect();
        self.biconditional(v, &differ, sink);
        v
    }
}

fn qualitative_tables(
    sample: &SampleSet,
    features: &[Feature],
    values: &[Vec<Value>],
    kept: &[usize],
) -> (Vec<Vec<bool>>, Vec<Vec<QualChange>>) {
    let qual = (0..sample.states.len())
        .map(|s| {
            kept.iter()
                .map(|&f| abstract_atom(features[f].is_numeric(), values[f][s]))
                .collect()
        })
        .collect();
    let change = sample
        .transitions
        .iter()
        .map(|t| {
            kept.iter()
                .map(|&f| {
                    qual_change(
                        features[f].is_numeric(),
                        values[f][t.source],
                        values[f][t.target],
                    )
                })
                .collect()
        })
        .collect();
    (qual, change)
}

/// Pool indices of features that tell apart some pair of expanded states or
/// change along some transition.
pub fn prefilter(sample: &SampleSet, features: &[Feature], values: &[Vec<Value>]) -> Vec<usize> {
    let expanded: Vec<usize> = sample.expanded().collect();
    (0..features.len())
        .filter(|&f| {
            let numeric = features[f].is_numeric();
            let splits = expanded.first().is_some_and(|&s0| {
                expanded.iter().any(|&s| {
                    abstract_atom(numeric, values[f][s]) != abstract_atom(numeric, values[f][s0])
                })
            });
            splits
                || sample.transitions.iter().any(|t| {
                    qual_change(numeric, values[f][t.source], values[f][t.target])
                        != QualChange::None
                })
        })
        .collect()
}

fn build<S: Sink>(
    sample: &SampleSet,
    features: &[Feature],
    values: &[Vec<Value>],
    variant: Variant,
    goals: GoalScope,
    sink: &mut S,
) -> TheoryVars {
    let kept = prefilter(sample, features, values);
    let (qual, change) = qualitative_tables(sample, features, values, &kept);
    let mut b = Builder {
        sample,
        kept,
        qual,
        change,
        vars: TheoryVars {
            variant,
            selected: vec![None; features.len()],
            d1: HashMap::new(),
            d2: HashMap::new(),
            num_vars: 0,
        },
        scratch: Vec::new(),
    };
    for k in 0..b.kept.len() {
        let v = b.fresh();
        b.vars.selected[b.kept[k]] = Some(v);
    }

    let expanded: Vec<usize> = sample.expanded().collect();
    let in_scope = |i: usize| variant == Variant::Full || sample.transitions[i].marked;
    let mut sources: Vec<usize> = expanded
        .iter()
        .copied()
        .filter(|&s| sample.outgoing(s).iter().any(|&i| in_scope(i)))
        .collect();
    if variant == Variant::Full {
        sources = expanded.clone();
    }

    let mut clause: Vec<Lit> = Vec::new();
    for &s in &sources {
        for &t in &expanded {
            if t == s {
                continue;
            }
            let d1 = b.d1(s, t, sink);
            for &i in sample.outgoing(s) {
                if !in_scope(i) {
                    continue;
                }
                clause.clear();
                clause.push(d1 as Lit);
                for &j in sample.outgoing(t) {
                    let d2 = b.d2(i, j, sink);
                    clause.push(-(d2 as Lit));
                }
                sink.hard(&clause);
            }
        }
    }

    let goal_sources: &[usize] = match (variant, goals) {
        (Variant::Full, _) | (_, GoalScope::All) => &expanded,
        (Variant::Marked, GoalScope::Anchored) => &sources,
    };
    let mut separated = std::collections::HashSet::new();
    for &s in goal_sources {
        for &t in &expanded {
            if sample.states[s].goal != sample.states[t].goal
                && separated.insert((s.min(t), s.max(t)))
            {
                let d1 = b.d1(s, t, sink);
                sink.hard(&[d1 as Lit]);
            }
        }
    }
    b.vars
}

/// Builds the theory for `sample` over the pool `features` with per-state
/// values `values[f][s]`.
pub fn build_theory(
    sample: &SampleSet,
    features: &[Feature],
    values: &[Vec<Value>],
    variant: Variant,
    goals: GoalScope,
) -> (WeightedCnf, TheoryVars) {
    let mut cnf = WeightedCnf::new(0);
    let vars = build(sample, features, values, variant, goals, &mut cnf);
    cnf.num_vars = vars.num_vars;
    for (f, v) in vars.selected.iter().enumerate() {
        if let Some(v) = v {
            if features[f].cost > 0 {
                cnf.add_soft(&[-(*v as Lit)], features[f].cost as u64);
            }
        }
    }
    (cnf, vars)
}

/// Variable and clause counts of the theory without materializing it.
pub fn theory_size(
    sample: &SampleSet,
    features: &[Feature],
    values: &[Vec<Value>],
    variant: Variant,
    goals: GoalScope,
) -> (u64, u64) {
    let mut counter = Counter::default();
    let vars = build(sample, features, values, variant, goals, &mut counter);
    let soft = vars
        .selected
        .iter()
        .enumerate()
        .filter(|(f, v)| v.is_some() && features[*f].cost > 0)
        .count();
    (vars.num_vars as u64, (counter.clauses + soft) as u64)
}

/// Closed-form bounds on variables and clauses with `m` expanded states and
/// average branching factor `b`.
pub fn size_bound(sample: &SampleSet, pool_size: usize) -> (f64, f64) {
    let m = sample.num_expanded() as f64;
    let b = if m > 0.0 {
        sample.transitions.len() as f64 / m
    } else {
        0.0
    };
    bound_formula(m, b, pool_size as f64)
}

pub fn bound_formula(m: f64, b: f64, f: f64) -> (f64, f64) {
    let vars = f + m * m * (b * b + 1.0);
    let clauses = m * m * (2.0 + b * b + b + f * (b * b + 1.0));
    (vars, clauses)
}
