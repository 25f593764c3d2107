//! Abstract actions over selected features and the resulting QNP.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{abstract_atom, qual_change, ExprError, Feature, QualChange, Value};
use crate::sampler::SampleSet;

/// Truth of the atom of feature `feature`: `p` for booleans, `n = 0` for numerics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Literal {
    pub feature: usize,
    pub value: bool,
}

/// `⟨Pre; Eff⟩` over feature indices. Both maps are keyed by feature.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AbstractAction {
    pub name: String,
    pub pre: BTreeMap<usize, bool>,
    pub eff: BTreeMap<usize, QualChange>,
}

impl AbstractAction {
    pub fn applicable(&self, state: &[bool]) -> bool {
        self.pre.iter().all(|(&f, &v)| state[f] == v)
    }

    /// True when the qualitative changes `changes` (one per feature) are
    /// exactly this action's effects.
    pub fn same_effects(&self, changes: &[QualChange]) -> bool {
        changes
            .iter()
            .enumerate()
            .all(|(f, c)| self.eff.get(&f).copied().unwrap_or(QualChange::None) == *c)
    }

    fn signature(&self) -> (&BTreeMap<usize, bool>, &BTreeMap<usize, QualChange>) {
        (&self.pre, &self.eff)
    }
}

/// Renders literals and actions with short feature labels.
pub struct Notation<'a> {
    pub features: &'a [Feature],
    pub labels: Vec<String>,
}

impl<'a> Notation<'a> {
    pub fn new(features: &'a [Feature]) -> Self {
        Notation {
            features,
            labels: (0..features.len()).map(|i| format!("F{i}")).collect(),
        }
    }

    pub fn literal(&self, l: Literal) -> String {
        let name = &self.labels[l.feature];
        match (self.features[l.feature].is_numeric(), l.value) {
            (true, true) => format!("{name}=0"),
            (true, false) => format!("{name}>0"),
            (false, true) => name.clone(),
            (false, false) => format!("¬{name}"),
        }
    }

    pub fn effect(&self, f: usize, c: QualChange) -> String {
        let name = &self.labels[f];
        match c {
            QualChange::Add => name.clone(),
            QualChange::Del => format!("¬{name}"),
            QualChange::Inc => format!("{name}↑"),
            QualChange::Dec => format!("{name}↓"),
            QualChange::None => format!("{name}⊥"),
        }
    }

    pub fn action(&self, a: &AbstractAction) -> String {
        let pre: Vec<String> = a
            .pre
            .iter()
            .map(|(&f, &v)| {
                self.literal(Literal {
                    feature: f,
                    value: v,
                })
            })
            .collect();
        let eff: Vec<String> = a.eff.iter().map(|(&f, &c)| self.effect(f, c)).collect();
        format!("⟨{}; {}⟩", pre.join(", "), eff.join(", "))
    }
}

/// Abstract state of every sampled state: `table[s][f]`.
pub fn abstract_states(
    features: &[Feature],
    values: &[Vec<Value>],
    sample: &SampleSet,
) -> Vec<Vec<bool>> {
    (0..sample.states.len())
        .map(|s| {
            features
                .iter()
                .zip(values)
                .map(|(f, v)| abstract_atom(f.is_numeric(), v[s]))
                .collect()
        })
        .collect()
}

fn changes(
    features: &[Feature],
    values: &[Vec<Value>],
    source: usize,
    target: usize,
) -> Vec<QualChange> {
    features
        .iter()
        .zip(values)
        .map(|(f, v)| qual_change(f.is_numeric(), v[source], v[target]))
        .collect()
}

fn action_name(a: &AbstractAction) -> String {
    let mut name = String::from("act");
    for (f, c) in &a.eff {
        name.push_str(&format!(
            "-{}{}",
            f,
            match c {
                QualChange::Add => "add",
                QualChange::Del => "del",
                QualChange::Inc => "inc",
                QualChange::Dec => "dec",
                QualChange::None => "nop",
            }
        ));
    }
    name
}

/// Drops one precondition from pairs of actions that differ only in its
/// sign, until no such pair is left. Scans pairs in canonical order.
pub fn merge_actions(actions: Vec<AbstractAction>) -> Vec<AbstractAction> {
    let mut set: BTreeSet<AbstractAction> = actions.into_iter().collect();
    'outer: loop {
        let list: Vec<&AbstractAction> = set.iter().collect();
        for (i, a) in list.iter().enumerate() {
            for b in &list[i + 1..] {
                if a.eff != b.eff || a.pre.len() != b.pre.len() || !a.pre.keys().eq(b.pre.keys()) {
                    continue;
                }
                let diff: Vec<usize> = a
                    .pre
                    .iter()
                    .filter(|(f, v)| b.pre[f] != **v)
                    .map(|(f, _)| *f)
                    .collect();
                if diff.len() == 1 {
                    let mut merged = (*a).clone();
                    merged.pre.remove(&diff[0]);
                    let (a, b) = ((*a).clone(), (*b).clone());
                    set.remove(&a);
                    set.remove(&b);
                    set.insert(merged);
                    continue 'outer;
                }
            }
        }
        break;
    }
    let mut out: Vec<AbstractAction> = set.into_iter().collect();
    out.sort_by(|a, b| a.signature().cmp(&b.signature()));
    for a in out.iter_mut() {
        a.name = action_name(a);
    }
    // Disambiguate equal effect signatures.
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for a in out.iter_mut() {
        let n = seen.entry(a.name.clone()).or_insert(0);
        *n += 1;
        if *n > 1 {
            a.name = format!("{}-{}", a.name, n);
        }
    }
    out
}

/// One action per transition in scope with the full valuation at its source
/// as precondition; duplicates removed and pairs merged.
pub fn extract_actions(
    features: &[Feature],
    values: &[Vec<Value>],
    sample: &SampleSet,
    marked_only: bool,
) -> Vec<AbstractAction> {
    let states = abstract_states(features, values, sample);
    let mut raw = Vec::new();
    for t in &sample.transitions {
        if marked_only && !t.marked {
            continue;
        }
        let pre: BTreeMap<usize, bool> = states[t.source].iter().copied().enumerate().collect();
        let eff: BTreeMap<usize, QualChange> = changes(features, values, t.source, t.target)
            .into_iter()
            .enumerate()
            .filter(|(_, c)| *c != QualChange::None)
            .collect();
        raw.push(AbstractAction {
            name: String::new(),
            pre,
            eff,
        });
    }
    merge_actions(raw)
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct VerifyReport {
    pub sound: bool,
    pub complete: bool,
    /// (action index, expanded state) where the action is applicable but
    /// no sampled transition has its effects.
    pub unsound: Vec<(usize, usize)>,
    /// Transitions in scope that no applicable action captures.
    pub uncaptured: Vec<usize>,
}

/// Soundness over every expanded state; completeness over all transitions
/// or only marked ones.
pub fn verify_sound_complete(
    actions: &[AbstractAction],
    features: &[Feature],
    values: &[Vec<Value>],
    sample: &SampleSet,
    marked_only: bool,
) -> VerifyReport {
    let states = abstract_states(features, values, sample);
    let deltas: Vec<Vec<QualChange>> = sample
        .transitions
        .iter()
        .map(|t| changes(features, values, t.source, t.target))
        .collect();
    let mut report = VerifyReport::default();
    for s in sample.expanded() {
        for (ai, a) in actions.iter().enumerate() {
            if a.applicable(&states[s])
                && !sample
                    .outgoing(s)
                    .iter()
                    .any(|&i| a.same_effects(&deltas[i]))
            {
                report.unsound.push((ai, s));
            }
        }
    }
    for (i, t) in sample.transitions.iter().enumerate() {
        if marked_only && !t.marked {
            continue;
        }
        if !actions
            .iter()
            .any(|a| a.applicable(&states[t.source]) && a.same_effects(&deltas[i]))
        {
            report.uncaptured.push(i);
        }
    }
    report.sound = report.unsound.is_empty();
    report.complete = report.uncaptured.is_empty();
    report
}

/// Disjunction of conjunctions of literals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dnf {
    pub terms: Vec<Vec<Literal>>,
}

impl Dnf {
    pub fn holds(&self, state: &[bool]) -> bool {
        self.terms
            .iter()
            .any(|t| t.iter().all(|l| state[l.feature] == l.value))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AbstractionError {
    #[error("the sample has no goal state")]
    NoGoalState,
    #[error("literal '{0}' names a feature that was not selected")]
    UnknownFeature(String),
    #[error("cannot read literal '{literal}': {message}")]
    BadLiteral { literal: String, message: String },
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Goal formula whose terms are the abstract states of the sampled goal
/// states. Goal separation covers expanded states only, so the abstract
/// state of an unexpanded goal state is left out when a non-goal expanded
/// state shares it.
pub fn learn_goal_dnf(
    features: &[Feature],
    values: &[Vec<Value>],
    sample: &SampleSet,
) -> Result<Dnf, AbstractionError> {
    let states = abstract_states(features, values, sample);
    let non_goal: BTreeSet<&Vec<bool>> = sample
        .expanded()
        .filter(|&s| !sample.states[s].goal)
        .map(|s| &states[s])
        .collect();
    let mut terms: BTreeSet<Vec<Literal>> = BTreeSet::new();
    for (s, st) in sample.states.iter().enumerate() {
        if st.goal && (st.expanded || !non_goal.contains(&states[s])) {
            terms.insert(
                states[s]
                    .iter()
                    .enumerate()
                    .map(|(feature, &value)| Literal { feature, value })
                    .collect(),
            );
        }
    }
    if terms.is_empty() {
        return Err(AbstractionError::NoGoalState);
    }
    Ok(Dnf {
        terms: terms.into_iter().collect(),
    })
}

/// Initial and goal conditions of a QNP.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Condition {
    Literals(Vec<Literal>),
    Dnf(Dnf),
}

impl Condition {
    pub fn holds(&self, state: &[bool]) -> bool {
        match self {
            Condition::Literals(ls) => ls.iter().all(|l| state[l.feature] == l.value),
            Condition::Dnf(d) => d.holds(state),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QnpModel {
    pub features: Vec<Feature>,
    pub initial: Vec<Literal>,
    pub goal: Condition,
    pub actions: Vec<AbstractAction>,
}

/// Reads `F`, `!F`, `F = 0` or `F > 0`, where `F` is a feature's canonical text.
pub fn parse_literal(text: &str, features: &[Feature]) -> Result<Literal, AbstractionError> {
    let bad = |m: &str| AbstractionError::BadLiteral {
        literal: text.to_string(),
        message: m.to_string(),
    };
    let t = text.trim();
    let (expr, numeric, value) =
        if let Some(rest) = t.strip_prefix('!').or_else(|| t.strip_prefix('¬')) {
            (rest.trim(), false, false)
        } else if let Some(rest) = t.strip_suffix('0').map(str::trim_end) {
            if let Some(e) = rest.strip_suffix('=') {
                (e.trim(), true, true)
            } else if let Some(e) = rest.strip_suffix('>') {
                (e.trim(), true, false)
            } else {
                return Err(bad("expected '= 0' or '> 0'"));
            }
        } else {
            (t, false, true)
        };
    let parsed = Feature::parse(expr)?;
    let idx = features
        .iter()
        .position(|f| f.kind == parsed.kind)
        .ok_or_else(|| AbstractionError::UnknownFeature(text.to_string()))?;
    if features[idx].is_numeric() != numeric {
        return Err(bad(if numeric {
            "comparison applied to a boolean feature"
        } else {
            "numeric feature needs '= 0' or '> 0'"
        }));
    }
    Ok(Literal {
        feature: idx,
        value,
    })
}

pub fn literal_text(l: Literal, features: &[Feature]) -> String {
    let f = &features[l.feature];
    match (f.is_numeric(), l.value) {
        (true, true) => format!("{f} = 0"),
        (true, false) => format!("{f} > 0"),
        (false, true) => f.to_string(),
        (false, false) => format!("!{f}"),
    }
}

pub fn assemble_qnp(
    features: Vec<Feature>,
    actions: Vec<AbstractAction>,
    initial: &[String],
    goal: &[String],
) -> Result<QnpModel, AbstractionError> {
    let initial = initial
        .iter()
        .map(|l| parse_literal(l, &features))
        .collect::<Result<Vec<_>, _>>()?;
    let goal = goal
        .iter()
        .map(|l| parse_literal(l, &features))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(QnpModel {
        features,
        initial,
        goal: Condition::Literals(goal),
        actions,
    })
}

impl QnpModel {
    pub fn to_json(&self) -> serde_json::Value {
        let lits = |ls: &[Literal]| {
            ls.iter()
                .map(|&l| literal_text(l, &self.features))
                .collect::<Vec<_>>()
        };
        let goal = match &self.goal {
            Condition::Literals(ls) => serde_json::json!(lits(ls)),
            Condition::Dnf(d) => {
                serde_json::json!({ "dnf": d.terms.iter().map(|t| lits(t)).collect::<Vec<_>>() })
            }
        };
        let actions: Vec<serde_json::Value> = self
            .actions
            .iter()
            .map(|a| {
                serde_json::json!({
                    "name": a.name,
                    "pre": a.pre.iter().map(|(&f, &v)| literal_text(Literal { feature: f, value: v }, &self.features)).collect::<Vec<_>>(),
                    "eff": a.eff.iter().map(|(&f, c)| serde_json::json!({ "feature": self.features[f].to_string(), "change": c.symbol() })).collect::<Vec<_>>(),
                })
            })
            .collect();
        serde_json::json!({
            "features": self.features.iter().map(|f| serde_json::json!({ "expr": f.to_string(), "kind": f.kind_name(), "cost": f.cost })).collect::<Vec<_>>(),
            "initial": lits(&self.initial),
            "goal": goal,
            "actions": actions,
        })
    }

    pub fn from_json(value: &serde_json::Value) -> Result<QnpModel, AbstractionError> {
        let bad = |m: &str| AbstractionError::BadLiteral {
            literal: String::new(),
            message: m.to_string(),
        };
        let features = crate::features::features_from_json(&value["features"])?;
        let strings = |v: &serde_json::Value| -> Result<Vec<String>, AbstractionError> {
            v.as_array()
                .ok_or_else(|| bad("expected a list of literals"))?
                .iter()
                .map(|x| {
                    x.as_str()
                        .map(str::to_string)
                        .ok_or_else(|| bad("literal is not a string"))
                })
                .collect()
        };
        let lits = |v: &serde_json::Value| -> Result<Vec<Literal>, AbstractionError> {
            strings(v)?
                .iter()
                .map(|s| parse_literal(s, &features))
                .collect()
        };
        let initial = lits(&value["initial"])?;
        let goal = if let Some(d) = value["goal"].get("dnf") {
            let terms = d
                .as_array()
                .ok_or_else(|| bad("dnf must be a list of terms"))?
                .iter()
                .map(lits)
                .collect::<Result<Vec<_>, _>>()?;
            Condition::Dnf(Dnf { terms })
        } else {
            Condition::Literals(lits(&value["goal"])?)
        };
        let mut actions = Vec::new();
        for a in value["actions"]
            .as_array()
            .ok_or_else(|| bad("missing actions"))?
        {
            let pre = lits(&a["pre"])?
                .into_iter()
                .map(|l| (l.feature, l.value))
                .collect();
            let mut eff = BTreeMap::new();
            for e in a["eff"].as_array().ok_or_else(|| bad("missing effects"))? {
                let f = Feature::parse(
                    e["feature"]
                        .as_str()
                        .ok_or_else(|| bad("effect without feature"))?,
                )?;
                let idx = features
                    .iter()
                    .position(|g| g.kind == f.kind)
                    .ok_or_else(|| AbstractionError::UnknownFeature(f.to_string()))?;
                let c = match e["change"].as_str() {
                    Some("+") => QualChange::Add,
                    Some("-") => QualChange::Del,
                    Some("↑") => QualChange::Inc,
                    Some("↓") => QualChange::Dec,
                    _ => return Err(bad("unknown effect symbol")),
                };
                eff.insert(idx, c);
            }
            actions.push(AbstractAction {
                name: a["name"].as_str().unwrap_or_default().to_string(),
                pre,
                eff,
            });
        }
        Ok(QnpModel {
            features,
            initial,
            goal,
            actions,
        })
    }
}

impl fmt::Display for QnpModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = Notation::new(&self.features);
        writeln!(f, "features:")?;
        for (i, feat) in self.features.iter().enumerate() {
            writeln!(
                f,
                "  {} = {}  [{}, cost {}]",
                n.labels[i],
                feat,
                feat.kind_name(),
                feat.cost
            )?;
        }
        let lits = |ls: &[Literal]| {
            ls.iter()
                .map(|&l| n.literal(l))
                .collect::<Vec<_>>()
                .join(", ")
        };
        writeln!(f, "initial: {{{}}}", lits(&self.initial))?;
        match &self.goal {
            Condition::Literals(ls) => writeln!(f, "goal: {{{}}}", lits(ls))?,
            Condition::Dnf(d) => {
                let terms: Vec<String> = d.terms.iter().map(|t| format!("({})", lits(t))).collect();
                writeln!(f, "goal: {}", terms.join(" ∨ "))?
            }
        }
        writeln!(f, "actions:")?;
        for a in &self.actions {
            writeln!(f, "  {} = {}", a.name, n.action(a))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn act(pre: &[(usize, bool)], eff: &[(usize, QualChange)]) -> AbstractAction {
        AbstractAction {
            name: String::new(),
            pre: pre.iter().copied().collect(),
            eff: eff.iter().copied().collect(),
        }
    }

    #[test]
    fn merges_pair_differing_in_one_sign() {
        let a = act(&[(0, true), (1, false)], &[(1, QualChange::Dec)]);
        let b = act(&[(0, false), (1, false)], &[(1, QualChange::Dec)]);
        let merged = merge_actions(vec![a, b]);
        assert_eq!(merged.len(), 1);
        assert_eq!(merged[0].pre, [(1, false)].into_iter().collect());
    }

    #[test]
    fn merging_reaches_fixpoint() {
        let all: Vec<AbstractAction> = (0..4)
            .map(|i| act(&[(0, i & 1 == 1), (1, i & 2 == 2)], &[(2, QualChange::Inc)]))
            .collect();
        let merged = merge_actions(all);
        assert_eq!(merged.len(), 1);
        assert!(merged[0].pre.is_empty());
    }

    #[test]
    fn different_effects_never_merge() {
        let a = act(&[(0, true)], &[(1, QualChange::Dec)]);
        let b = act(&[(0, false)], &[(1, QualChange::Inc)]);
        assert_eq!(merge_actions(vec![a, b]).len(), 2);
    }

    #[test]
    fn literal_syntax() {
        let fs = vec![
            Feature::parse("bool(holding)").unwrap(),
            Feature::parse("num(exists(plus(on),{x}))").unwrap(),
        ];
        assert_eq!(
            parse_literal("!bool(holding)", &fs).unwrap(),
            Literal {
                feature: 0,
                value: false
            }
        );
        assert_eq!(
            parse_literal("num(exists(plus(on),{x})) > 0", &fs).unwrap(),
            Literal {
                feature: 1,
                value: false
            }
        );
        assert_eq!(
            parse_literal("num(exists(plus(on),{x}))=0", &fs).unwrap(),
            Literal {
                feature: 1,
                value: true
            }
        );
        assert!(matches!(
            parse_literal("bool(clear)", &fs),
            Err(AbstractionError::UnknownFeature(_))
        ));
        assert!(parse_literal("bool(holding) = 0", &fs).is_err());
    }
}
