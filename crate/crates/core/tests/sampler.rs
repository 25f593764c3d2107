mod common;

use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::Arc;

use genplan::generators;
use genplan::sampler::{self, SampleSet};
use genplan::strips::{GroundInstance, State};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{blocks, instance};

/// Reference BFS: distance from the initial state of every reachable state.
fn reachable(inst: &GroundInstance) -> HashMap<State, usize> {
    let mut dist = HashMap::from([(inst.init.clone(), 0)]);
    let mut queue = VecDeque::from([inst.init.clone()]);
    while let Some(s) = queue.pop_front() {
        let d = dist[&s];
        for (_, t) in inst.successors(&s) {
            if !dist.contains_key(&t) {
                dist.insert(t.clone(), d + 1);
                queue.push_back(t);
            }
        }
    }
    dist
}

fn goal_distance(inst: &GroundInstance) -> usize {
    let dist = reachable(inst);
    dist.iter()
        .filter(|(s, _)| inst.is_goal(s))
        .map(|(_, &d)| d)
        .min()
        .expect("solvable")
}

fn plan_names(inst: &GroundInstance) -> Vec<String> {
    let (plan, _) = sampler::optimal_plan(inst).unwrap();
    plan.iter().map(|&a| inst.actions[a].name.clone()).collect()
}

#[test]
fn prefix_of_one_is_the_initial_state() {
    let inst = blocks("c", &[&["x", "a", "b"]], "(clear x)");
    assert_eq!(sampler::bfs_prefix(&inst, 1), vec![inst.init.clone()]);
}

#[test]
fn small_instance_prefix_is_exhaustive() {
    let inst = blocks("c", &[&["x", "a"]], "(clear x)");
    let prefix = sampler::bfs_prefix(&inst, 10);
    let all = reachable(&inst);
    assert!(all.len() <= 10);
    assert_eq!(prefix.len(), all.len());
    assert_eq!(
        prefix.iter().cloned().collect::<HashSet<_>>(),
        all.keys().cloned().collect()
    );
}

#[test]
fn optimal_plan_examples() {
    let done = blocks("c", &[&["x"], &["a"]], "(clear x)");
    let (plan, states) = sampler::optimal_plan(&done).unwrap();
    assert!(plan.is_empty());
    assert_eq!(states, vec![done.init.clone()]);

    // With goal clear(x) alone the unstack already reaches the goal; the
    // put-down appears once the hand must be empty too.
    let one = blocks("c", &[&["x", "a"]], "(clear x)");
    assert_eq!(plan_names(&one), ["unstack(a,x)"]);
    let one = blocks("c", &[&["x", "a"]], "(clear x) (handempty)");
    assert_eq!(plan_names(&one), ["unstack(a,x)", "put-down(a)"]);

    let on = blocks("o", &[&["x"], &["y"], &["z"]], "(on x y)");
    assert_eq!(plan_names(&on), ["pick-up(x)", "stack(x,y)"]);
}

#[test]
fn unsolvable_instances_are_reported() {
    let inst = blocks("o", &[&["x"]], "(on x x)");
    assert!(sampler::optimal_plan(&inst).is_err());
}

#[test]
fn goal_initial_state_marks_its_expansion() {
    let inst = Arc::new(blocks("c", &[&["x"], &["a"]], "(clear x)"));
    let s = sampler::build_sample_set(std::slice::from_ref(&inst), 1).unwrap();
    let init = s
        .states
        .iter()
        .position(|st| st.state == inst.init)
        .unwrap();
    assert!(s.states[init].goal);
    let marked: HashSet<usize> = s.marked().collect();
    let outgoing: HashSet<usize> = s.outgoing(init).iter().copied().collect();
    assert!(!marked.is_empty());
    assert_eq!(marked, outgoing);
}

#[test]
fn gripper_training_sample_size() {
    let insts: Vec<_> = ["gripper/train-1.pddl", "gripper/train-2.pddl"]
        .iter()
        .map(|p| Arc::new(instance("gripper/domain.pddl", p)))
        .collect();
    let m = sampler::prefix_for_budget(&insts, 400).unwrap();
    let s = sampler::build_sample_set(&insts, m).unwrap();
    assert_eq!(s.transitions.len(), 403);
    assert!(s.num_goal_states() >= 1);
    assert!(s.check_closure());
}

#[test]
fn clear_training_sample_has_goal_states() {
    let inst = Arc::new(instance("blocks/domain.pddl", "blocks/clear/train-5.pddl"));
    let m = sampler::prefix_for_budget(std::slice::from_ref(&inst), 800).unwrap();
    let s = sampler::build_sample_set(&[inst], m).unwrap();
    assert!(s.transitions.len() >= 800);
    assert!(s.num_goal_states() >= 1);
}

#[test]
fn removing_a_transition_breaks_closure() {
    let inst = Arc::new(blocks("c", &[&["x", "a"], &["b"]], "(clear x)"));
    let s = sampler::build_sample_set(std::slice::from_ref(&inst), 6).unwrap();
    assert!(s.check_closure());
    let victim = s
        .expanded()
        .find(|&st| s.outgoing(st).len() >= 2)
        .expect("a branching state");
    let drop = s.outgoing(victim)[0];
    let mut transitions = s.transitions.clone();
    transitions.remove(drop);
    let broken = SampleSet::from_parts(s.instances.clone(), s.states.clone(), transitions);
    assert!(!broken.check_closure());
}

#[test]
fn empty_transition_set_is_not_closed() {
    let inst = Arc::new(blocks("c", &[&["x"]], "(clear x)"));
    let s = sampler::build_sample_set(&[inst], 1).unwrap();
    let empty = SampleSet::from_parts(s.instances.clone(), s.states.clone(), Vec::new());
    assert!(!empty.check_closure());
}

#[test]
fn json_round_trip() {
    let inst = Arc::new(blocks("c", &[&["x", "a"], &["b"]], "(clear x)"));
    let s = sampler::build_sample_set(std::slice::from_ref(&inst), 5).unwrap();
    let back = SampleSet::from_json(&s.to_json(), vec![inst]).unwrap();
    assert_eq!(back.to_json(), s.to_json());
}

fn random_clear(blocks: usize, seed: u64) -> Arc<GroundInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = generators::clear_instance("c", blocks, &mut rng);
    Arc::new(
        genplan::strips::load(&common::blocks_domain(), &generators::to_pddl(&p))
            .unwrap()
            .1,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn sample_sets_are_closed_and_counted(sizes in prop::collection::vec(2usize..5, 1..3), seed in 0u64..500, m in 1usize..40) {
        let insts: Vec<_> = sizes.iter().enumerate().map(|(i, &n)| random_clear(n, seed + i as u64)).collect();
        let s = sampler::build_sample_set(&insts, m).unwrap();
        prop_assert!(s.check_closure());

        // |S| is the sum of out-degrees over distinct successor states.
        let mut total = 0;
        for st in s.expanded() {
            let inst = s.instance_of(st);
            let distinct: HashSet<State> = inst.successors(&s.states[st].state).into_iter().map(|(_, t)| t).collect();
            prop_assert_eq!(s.outgoing(st).len(), distinct.len());
            total += distinct.len();
        }
        prop_assert_eq!(s.transitions.len(), total);

        // Goal labels cover every sampled goal state.
        for st in &s.states {
            prop_assert_eq!(st.goal, s.instances[st.instance].is_goal(&st.state));
        }

        // Marked transitions are exactly the plan steps.
        let mut plan_steps: HashSet<(usize, State, State)> = HashSet::new();
        let mut initial_goal: HashSet<usize> = HashSet::new();
        for (i, inst) in insts.iter().enumerate() {
            let (_, states) = sampler::optimal_plan(inst).unwrap();
            prop_assert_eq!(states.len() - 1, goal_distance(inst));
            if states.len() == 1 {
                initial_goal.insert(i);
            }
            for w in states.windows(2) {
                plan_steps.insert((i, w[0].clone(), w[1].clone()));
            }
        }
        for t in &s.transitions {
            let src = &s.states[t.source];
            let key = (src.instance, src.state.clone(), s.states[t.target].state.clone());
            let expected = plan_steps.contains(&key)
                || (initial_goal.contains(&src.instance) && src.state == s.instances[src.instance].init);
            prop_assert_eq!(t.marked, expected);
        }
    }
}
