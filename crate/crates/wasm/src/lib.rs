//! WebAssembly bindings for the browser demo.
//!
//! Everything crosses the boundary as strings: PDDL text in, JSON or plain
//! text out.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use wasm_bindgen::prelude::*;

use genplan::abstraction::{self, Condition, QnpModel};
use genplan::encoder::{self, GoalScope, Variant};
use genplan::executor::{self, Outcome};
use genplan::features::{self, Feature, PoolConfig, Value};
use genplan::maxsat::{self, MaxSatOutcome};
use genplan::{fond, generators, pipeline, sampler, strips};

const BLOCKS_DOMAIN: &str = include_str!("../../../data/blocks/domain.pddl");
const CLEAR_TRAIN: &str = include_str!("../../../data/blocks/clear/train-5.pddl");
const GRIPPER_DOMAIN: &str = include_str!("../../../data/gripper/domain.pddl");
const GRIPPER_TRAIN: [&str; 2] = [
    include_str!("../../../data/gripper/train-1.pddl"),
    include_str!("../../../data/gripper/train-2.pddl"),
];
const REWARD_DOMAIN: &str = include_str!("../../../data/reward/domain.pddl");
const REWARD_TRAIN: [&str; 2] = [
    include_str!("../../../data/reward/train-1.pddl"),
    include_str!("../../../data/reward/train-2.pddl"),
];

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Bundled domain, training problems and settings for `clear`, `gripper`
/// or `reward`, as JSON.
#[wasm_bindgen]
pub fn preset(name: &str) -> Result<String, String> {
    let (domain, training, budget, distance): (&str, Vec<&str>, usize, bool) = match name {
        "clear" => (BLOCKS_DOMAIN, vec![CLEAR_TRAIN], 800, false),
        "gripper" => (GRIPPER_DOMAIN, GRIPPER_TRAIN.to_vec(), 400, false),
        "reward" => (REWARD_DOMAIN, REWARD_TRAIN.to_vec(), 568, true),
        other => return Err(format!("unknown preset '{other}'")),
    };
    Ok(
        json!({ "domain": domain, "training": training, "budget": budget, "distance": distance })
            .to_string(),
    )
}

/// A random problem of one of the bundled families. `size` counts blocks,
/// balls or the side of the reward grid.
#[wasm_bindgen]
pub fn generate(family: &str, size: usize, seed: u32) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
    let name = format!("{family}-{size}-{seed}");
    let problem = match family {
        "clear" if size >= 2 => generators::clear_instance(&name, size, &mut rng),
        "on" if size >= 4 => generators::on_instance(&name, size, &mut rng),
        "gripper" if size >= 1 => {
            generators::gripper_instance(&name, size, 1 + (seed as usize) % 3)
        }
        "reward" if size >= 2 => {
            let blocked = size * size / 6;
            generators::reward_instance(&name, size, size, 1 + size / 3, blocked, &mut rng)
        }
        "clear" | "on" | "gripper" | "reward" => {
            return Err(format!("size {size} is too small for {family}"))
        }
        other => return Err(format!("unknown family '{other}'")),
    };
    Ok(generators::to_pddl(&problem))
}

/// Learns features, abstract actions and a policy from the training
/// problems. Returns JSON with the QNP, the policy and sizes of the
/// intermediate objects.
#[wasm_bindgen]
pub fn learn(
    domain: &str,
    training: Vec<String>,
    budget: usize,
    max_complexity: u32,
    distance: bool,
) -> Result<String, String> {
    if training.is_empty() {
        return Err("at least one training problem is required".into());
    }
    let model = strips::parse_domain(domain).map_err(err)?;
    let instances = training
        .iter()
        .map(|text| {
            let p = strips::parse_problem(text, &model).map_err(err)?;
            strips::ground(&model, &p).map(Arc::new).map_err(err)
        })
        .collect::<Result<Vec<_>, String>>()?;

    let m = sampler::prefix_for_budget(&instances, budget.max(1)).map_err(err)?;
    let sample = sampler::build_sample_set(&instances, m).map_err(err)?;
    let pool = features::generate_pool(
        &model,
        &sample,
        &PoolConfig {
            max_complexity: max_complexity.max(1),
            distance,
        },
    );
    let (cnf, vars) = encoder::build_theory(
        &sample,
        &pool.features,
        &pool.values,
        Variant::Marked,
        GoalScope::Anchored,
    );
    let (outcome, _) = maxsat::solve_builtin(&cnf, None).map_err(err)?;
    let MaxSatOutcome::Optimal(assignment) = outcome else {
        return Err(
            "the theory is unsatisfiable: no feature set in the pool separates the sample".into(),
        );
    };
    let selected = vars.selected_features(&assignment.values);
    let fs: Vec<Feature> = selected.iter().map(|&f| pool.features[f].clone()).collect();
    let vs: Vec<Vec<Value>> = selected.iter().map(|&f| pool.values[f].clone()).collect();

    let actions = abstraction::extract_actions(&fs, &vs, &sample, true);
    let verify = abstraction::verify_sound_complete(&actions, &fs, &vs, &sample, true);
    let mut q = abstraction::assemble_qnp(fs.clone(), actions, &[], &[]).map_err(err)?;
    q.initial = pipeline::common_initial_literals(&fs, &instances);
    q.goal = Condition::Dnf(abstraction::learn_goal_dnf(&fs, &vs, &sample).map_err(err)?);

    let policy = if verify.sound && verify.complete {
        fond::solve_qnp(&q, 10_000).ok()
    } else {
        None
    };
    Ok(json!({
        "transitions": sample.transitions.len(),
        "states": sample.states.len(),
        "pool": pool.features.len(),
        "vars": cnf.num_vars,
        "clauses": cnf.num_clauses(),
        "cost": assignment.cost,
        "features": fs.iter().map(|f| json!({ "text": f.to_string(), "cost": f.cost })).collect::<Vec<_>>(),
        "sound": verify.sound,
        "complete": verify.complete,
        "qnp_text": q.to_string(),
        "qnp": q.to_json(),
        "policy_text": policy.as_ref().map(|p| fond::policy_table(&p.policy, &q)),
        "policy": policy.as_ref().map(|p| fond::policy_to_json(&p.policy, &q)),
    })
    .to_string())
}

/// Runs a learned policy (the JSON returned by [`learn`]) once on `problem`,
/// choosing among instantiations with `seed`. Returns a step log.
#[wasm_bindgen]
pub fn execute(
    domain: &str,
    problem: &str,
    learned: &str,
    seed: u32,
    max_steps: usize,
) -> Result<String, String> {
    let v: serde_json::Value = serde_json::from_str(learned).map_err(err)?;
    let q = QnpModel::from_json(&v["qnp"]).map_err(err)?;
    if v["policy"].is_null() {
        return Err("the learned model has no policy".into());
    }
    let policy = fond::policy_from_json(&v["policy"], &q).map_err(err)?;
    let (_, instance) = strips::load(domain, problem).map_err(err)?;
    let mut out = String::new();
    if !executor::initial_condition_holds(&q, &instance) {
        out.push_str("warning: the initial state violates the abstract initial condition\n");
    }
    let trace = executor::run_one(&instance, &policy, &q, seed as u64, max_steps);
    out.push_str(&trace.log(&q, &instance));
    if trace.outcome == Outcome::GoalReached {
        out.push_str(&format!("goal reached in {} steps\n", trace.steps.len()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn learns_and_runs_clear() {
        let p: serde_json::Value = serde_json::from_str(&preset("clear").unwrap()).unwrap();
        let training: Vec<String> = p["training"]
            .as_array()
            .unwrap()
            .iter()
            .map(|t| t.as_str().unwrap().to_string())
            .collect();
        let domain = p["domain"].as_str().unwrap();
        let learned = learn(domain, training, 800, 8, false).unwrap();
        let v: serde_json::Value = serde_json::from_str(&learned).unwrap();
        assert_eq!(v["cost"], 4);
        assert!(v["policy"].is_object() || v["policy"].is_array());
        let problem = generate("clear", 7, 3).unwrap();
        let log = execute(domain, &problem, &learned, 1, 1000).unwrap();
        assert!(log.contains("goal reached"), "{log}");
    }

    #[test]
    fn rejects_unknown_names() {
        assert!(preset("sokoban").is_err());
        assert!(generate("sokoban", 4, 0).is_err());
        assert!(generate("on", 3, 0).is_err());
    }
}
