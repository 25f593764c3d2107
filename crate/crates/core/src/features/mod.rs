//! Description-logic features over STRIPS states.

mod eval;
mod expr;
mod pool;

pub use eval::{
    abstract_atom, chain_distance, delta, denote_concept, denote_role, eval_feature, inverse,
    qual_change, transitive_closure, ObjSet, QualChange, Relation, StateEvaluator, Value,
    UNREACHABLE,
};
pub use expr::{Concept, ExprError, Feature, FeatureKind, Role};
pub use pool::{generate_pool, Pool, PoolConfig, PoolStats};

use crate::sampler::SampleSet;
use crate::strips::{DomainModel, Predicate, ProblemDescription};

/// Adds a static copy `p_G` of every predicate that occurs positively in
/// some goal. Grounding then sets `p_G(u)` true exactly when `p(u)` is a
/// goal atom.
pub fn add_goal_predicates(domain: &DomainModel, problems: &[ProblemDescription]) -> DomainModel {
    let mut out = domain.clone();
    for problem in problems {
        for g in problem.goal.iter().filter(|g| g.positive) {
            let p = &g.atom.predicate;
            if out.goal_predicates.contains(p) {
                continue;
            }
            let Some(arity) = domain.predicate(p).map(|q| q.arity) else {
                continue;
            };
            out.goal_predicates.push(p.clone());
            out.predicates.push(Predicate {
                name: DomainModel::goal_copy_name(p),
                arity,
            });
        }
    }
    out
}

/// Value of every feature on every sampled state, `values[f][s]`.
pub fn feature_matrix(features: &[Feature], sample: &SampleSet) -> Vec<Vec<Value>> {
    let mut values = vec![Vec::with_capacity(sample.states.len()); features.len()];
    for (s, st) in sample.states.iter().enumerate() {
        let mut ev = StateEvaluator::new(sample.instance_of(s), &st.state);
        for (f, row) in features.iter().zip(values.iter_mut()) {
            row.push(ev.feature(f));
        }
    }
    values
}

/// JSON form of a feature list: canonical text, kind and cost per id.
pub fn features_to_json(features: &[Feature]) -> serde_json::Value {
    serde_json::Value::Array(
        features
            .iter()
            .enumerate()
            .map(|(i, f)| {
                serde_json::json!({
                    "id": i,
                    "expr": f.to_string(),
                    "kind": f.kind_name(),
                    "cost": f.cost,
                })
            })
            .collect(),
    )
}

pub fn features_from_json(value: &serde_json::Value) -> Result<Vec<Feature>, ExprError> {
    let bad = |m: &str| ExprError {
        text: value.to_string().chars().take(80).collect(),
        message: m.to_string(),
    };
    let items = value
        .as_array()
        .ok_or_else(|| bad("expected an array of features"))?;
    items
        .iter()
        .map(|item| {
            let text = item
                .get("expr")
                .and_then(|e| e.as_str())
                .ok_or_else(|| bad("feature without 'expr'"))?;
            let mut f = Feature::parse(text)?;
            if let Some(c) = item.get("cost").and_then(|c| c.as_u64()) {
                f.cost = c as u32;
            }
            Ok(f)
        })
        .collect()
}
