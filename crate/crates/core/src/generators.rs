//! Random instance generators for the bundled domains.
//!
//! Every generator is a pure function of its size arguments and the RNG,
//! so a seed fully determines the produced problem.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::strips::{GoalLiteral, GroundAtomSpec, ProblemDescription};

fn atom(predicate: &str, args: &[&str]) -> GroundAtomSpec {
    GroundAtomSpec {
        predicate: predicate.to_string(),
        args: args.iter().map(|a| a.to_string()).collect(),
    }
}

fn goal(positive: bool, predicate: &str, args: &[&str]) -> GoalLiteral {
    GoalLiteral {
        positive,
        atom: atom(predicate, args),
    }
}

fn block_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("b{i}")).collect()
}

/// Random partition of `blocks` into towers, each listed bottom to top.
fn random_towers<R: Rng>(blocks: &[String], rng: &mut R) -> Vec<Vec<String>> {
    let mut order = blocks.to_vec();
    order.shuffle(rng);
    let mut towers: Vec<Vec<String>> = Vec::new();
    for b in order {
        if towers.is_empty() || rng.gen_bool(0.35) {
            towers.push(vec![b]);
        } else {
            let i = rng.gen_range(0..towers.len());
            towers[i].push(b);
        }
    }
    towers
}

fn tower_atoms(towers: &[Vec<String>]) -> Vec<GroundAtomSpec> {
    let mut init = Vec::new();
    for t in towers {
        init.push(atom("ontable", &[&t[0]]));
        for w in t.windows(2) {
            init.push(atom("on", &[&w[1], &w[0]]));
        }
        init.push(atom("clear", &[t.last().unwrap()]));
    }
    init.push(atom("handempty", &[]));
    init
}

/// Blocks above `b` in its tower.
fn above(towers: &[Vec<String>], b: &str) -> usize {
    towers
        .iter()
        .find_map(|t| t.iter().position(|c| c == b).map(|i| t.len() - 1 - i))
        .unwrap_or(0)
}

/// Blocksworld instance with goal `clear(x)` where `x` starts covered.
pub fn clear_instance<R: Rng>(name: &str, blocks: usize, rng: &mut R) -> ProblemDescription {
    assert!(blocks >= 2, "clear(x) instances need at least two blocks");
    let names = block_names(blocks);
    let towers = loop {
        let t = random_towers(&names, rng);
        if t.iter().any(|t| t.len() >= 2) {
            break t;
        }
    };
    let candidates: Vec<&String> = names.iter().filter(|b| above(&towers, b) > 0).collect();
    let x = candidates[rng.gen_range(0..candidates.len())].clone();
    ProblemDescription {
        name: name.to_string(),
        domain: "blocksworld".to_string(),
        objects: names,
        object_types: BTreeMap::new(),
        init: tower_atoms(&towers),
        goal: vec![goal(true, "clear", &[&x])],
    }
}

/// Blocksworld instance with goal `on(x,y)`, `x` and `y` in different
/// towers and both covered.
pub fn on_instance<R: Rng>(name: &str, blocks: usize, rng: &mut R) -> ProblemDescription {
    assert!(
        blocks >= 4,
        "on(x,y) instances with covered x and y need at least four blocks"
    );
    let names = block_names(blocks);
    loop {
        let towers = random_towers(&names, rng);
        let mut pairs = Vec::new();
        for (i, ti) in towers.iter().enumerate() {
            for (j, tj) in towers.iter().enumerate() {
                if i == j {
                    continue;
                }
                for x in &ti[..ti.len() - 1] {
                    for y in &tj[..tj.len() - 1] {
                        pairs.push((x.clone(), y.clone()));
                    }
                }
            }
        }
        if pairs.is_empty() {
            continue;
        }
        let (x, y) = pairs[rng.gen_range(0..pairs.len())].clone();
        return ProblemDescription {
            name: name.to_string(),
            domain: "blocksworld".to_string(),
            objects: names,
            object_types: BTreeMap::new(),
            init: tower_atoms(&towers),
            goal: vec![goal(true, "on", &[&x, &y])],
        };
    }
}

/// Gripper instance: two rooms, every ball starts away from the target room
/// `roomb`, where the robot is not.
pub fn gripper_instance(name: &str, balls: usize, grippers: usize) -> ProblemDescription {
    let mut objects = vec!["rooma".to_string(), "roomb".to_string()];
    let mut object_types = BTreeMap::new();
    object_types.insert("rooma".to_string(), "room".to_string());
    object_types.insert("roomb".to_string(), "room".to_string());
    let mut init = vec![atom("at-robby", &["rooma"])];
    let mut goals = Vec::new();
    for i in 1..=balls {
        let b = format!("ball{i}");
        object_types.insert(b.clone(), "ball".to_string());
        init.push(atom("at", &[&b, "rooma"]));
        goals.push(goal(true, "at", &[&b, "roomb"]));
        objects.push(b);
    }
    for i in 1..=grippers {
        let g = format!("gripper{i}");
        object_types.insert(g.clone(), "gripper".to_string());
        init.push(atom("free", &[&g]));
        objects.push(g);
    }
    ProblemDescription {
        name: name.to_string(),
        domain: "gripper".to_string(),
        objects,
        object_types,
        init,
        goal: goals,
    }
}

/// Reward grid of `width × height` cells with randomly blocked cells and
/// `rewards` rewards, all reachable from the agent's start cell.
pub fn reward_instance<R: Rng>(
    name: &str,
    width: usize,
    height: usize,
    rewards: usize,
    blocked: usize,
    rng: &mut R,
) -> ProblemDescription {
    let cells = width * height;
    assert!(cells > rewards + blocked, "grid too small");
    let cell = |i: usize| format!("c{}-{}", i % width, i / width);
    let neighbours = |i: usize| {
        let (x, y) = (i % width, i / width);
        let mut out = Vec::new();
        if x > 0 {
            out.push(i - 1);
        }
        if x + 1 < width {
            out.push(i + 1);
        }
        if y > 0 {
            out.push(i - width);
        }
        if y + 1 < height {
            out.push(i + width);
        }
        out
    };
    loop {
        let mut order: Vec<usize> = (0..cells).collect();
        order.shuffle(rng);
        let start = order[0];
        let blocked_cells: Vec<usize> = order[1..=blocked].to_vec();
        // Cells reachable from the start through unblocked cells.
        let mut reach = vec![false; cells];
        reach[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(c) = queue.pop_front() {
            for n in neighbours(c) {
                if !reach[n] && !blocked_cells.contains(&n) {
                    reach[n] = true;
                    queue.push_back(n);
                }
            }
        }
        let reward_cells: Vec<usize> = order[blocked + 1..]
            .iter()
            .copied()
            .filter(|&c| reach[c])
            .take(rewards)
            .collect();
        if reward_cells.len() < rewards {
            continue;
        }
        let objects: Vec<String> = (0..cells).map(cell).collect();
        let mut init = vec![atom("at", &[&cell(start)])];
        for c in 0..cells {
            for n in neighbours(c) {
                init.push(atom("adjacent", &[&cell(c), &cell(n)]));
            }
        }
        let mut sorted_blocked = blocked_cells.clone();
        sorted_blocked.sort_unstable();
        for &b in &sorted_blocked {
            init.push(atom("blocked", &[&cell(b)]));
        }
        let mut sorted_rewards = reward_cells.clone();
        sorted_rewards.sort_unstable();
        let mut goals = Vec::new();
        for &r in &sorted_rewards {
            init.push(atom("reward", &[&cell(r)]));
            goals.push(goal(false, "reward", &[&cell(r)]));
        }
        return ProblemDescription {
            name: name.to_string(),
            domain: "reward".to_string(),
            objects,
            object_types: BTreeMap::new(),
            init,
            goal: goals,
        };
    }
}

fn write_atom(out: &mut String, a: &GroundAtomSpec) {
    out.push('(');
    out.push_str(&a.predicate);
    for arg in &a.args {
        out.push(' ');
        out.push_str(arg);
    }
    out.push(')');
}

/// PDDL text of a problem description.
pub fn to_pddl(problem: &ProblemDescription) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "(define (problem {})", problem.name);
    let _ = writeln!(out, "  (:domain {})", problem.domain);
    out.push_str("  (:objects");
    for o in &problem.objects {
        out.push(' ');
        out.push_str(o);
        if let Some(t) = problem.object_types.get(o) {
            let _ = write!(out, " - {t}");
        }
    }
    out.push_str(")\n  (:init");
    for a in &problem.init {
        out.push_str("\n    ");
        write_atom(&mut out, a);
    }
    out.push_str(")\n  (:goal (and");
    for g in &problem.goal {
        out.push_str("\n    ");
        if g.positive {
            write_atom(&mut out, &g.atom);
        } else {
            out.push_str("(not ");
            write_atom(&mut out, &g.atom);
            out.push(')');
        }
    }
    out.push_str(")))\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn clear_target_is_covered() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for i in 0..20 {
            let p = clear_instance(&format!("c{i}"), 2 + i % 6, &mut rng);
            let x = &p.goal[0].atom.args[0];
            assert!(p
                .init
                .iter()
                .any(|a| a.predicate == "on" && &a.args[1] == x));
        }
    }

    #[test]
    fn same_seed_same_instance() {
        let a = reward_instance("r", 4, 4, 3, 2, &mut ChaCha8Rng::seed_from_u64(3));
        let b = reward_instance("r", 4, 4, 3, 2, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(to_pddl(&a), to_pddl(&b));
    }

    #[test]
    fn on_targets_in_different_towers() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for i in 0..20 {
            let p = on_instance(&format!("o{i}"), 4 + i % 5, &mut rng);
            let (x, y) = (&p.goal[0].atom.args[0], &p.goal[0].atom.args[1]);
            assert_ne!(x, y);
            assert!(!p
                .init
                .iter()
                .any(|a| a.predicate == "on" && (&a.args[0] == x && &a.args[1] == y)));
        }
    }
}
