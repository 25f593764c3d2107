//! Grounding of lifted models into dense atom/action tables.

use std::collections::HashSet;
use std::sync::atomic::{AtomicU32, Ordering};

use serde::Serialize;

use super::pddl::{DomainModel, LiftedAtom, Predicate, ProblemDescription, Term};
use super::state::State;
use super::GroundError;

static NEXT_INSTANCE_ID: AtomicU32 = AtomicU32::new(1);

pub type AtomId = u32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroundAction {
    pub name: String,
    pub pre: Vec<AtomId>,
    pub pre_neg: Vec<AtomId>,
    pub add: Vec<AtomId>,
    pub del: Vec<AtomId>,
}

#[derive(Debug, Clone)]
pub struct GroundInstance {
    id: u32,
    pub name: String,
    pub objects: Vec<String>,
    pub predicates: Vec<Predicate>,
    pred_offset: Vec<usize>,
    pub num_atoms: usize,
    pub init: State,
    pub goal_pos: Vec<AtomId>,
    pub goal_neg: Vec<AtomId>,
    pub actions: Vec<GroundAction>,
    /// Goal parameters as (name, object index), e.g. `x ↦ b3`.
    pub parameters: Vec<(String, usize)>,
}

fn parameter_name(i: usize) -> String {
    match i {
        0 => "x".into(),
        1 => "y".into(),
        2 => "z".into(),
        _ => format!("x{i}"),
    }
}

impl GroundInstance {
    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn num_objects(&self) -> usize {
        self.objects.len()
    }

    pub fn object_index(&self, name: &str) -> Option<usize> {
        self.objects.iter().position(|o| o == name)
    }

    pub fn predicate_index(&self, name: &str) -> Option<usize> {
        self.predicates.iter().position(|p| p.name == name)
    }

    pub fn parameter(&self, name: &str) -> Option<usize> {
        self.parameters
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, o)| *o)
    }

    /// Dense id of predicate `pred` applied to object indices `args`.
    pub fn atom_id(&self, pred: usize, args: &[usize]) -> AtomId {
        let n = self.objects.len();
        let mut idx = 0usize;
        for &a in args {
            idx = idx * n + a;
        }
        (self.pred_offset[pred] + idx) as AtomId
    }

    /// Inverse of [`atom_id`](Self::atom_id).
    pub fn decode_atom(&self, atom: AtomId) -> (usize, Vec<usize>) {
        let atom = atom as usize;
        let n = self.objects.len();
        let pred = (0..self.predicates.len())
            .rev()
            .find(|&p| self.pred_offset[p] <= atom && n.pow(self.predicates[p].arity as u32) > 0)
            .expect("atom id out of range");
        let arity = self.predicates[pred].arity;
        let mut rest = atom - self.pred_offset[pred];
        let mut args = vec![0; arity];
        for slot in args.iter_mut().rev() {
            *slot = rest % n;
            rest /= n;
        }
        (pred, args)
    }

    pub fn atom_name(&self, atom: AtomId) -> String {
        let (pred, args) = self.decode_atom(atom);
        let args: Vec<&str> = args.iter().map(|&a| self.objects[a].as_str()).collect();
        format!("{}({})", self.predicates[pred].name, args.join(","))
    }

    pub fn state_from_atoms(&self, atoms: impl IntoIterator<Item = AtomId>) -> State {
        State::from_atoms(self.id, self.num_atoms, atoms)
    }

    pub fn is_applicable(&self, action: &GroundAction, s: &State) -> bool {
        action.pre.iter().all(|&a| s.holds(a)) && action.pre_neg.iter().all(|&a| !s.holds(a))
    }

    pub fn apply(&self, action: &GroundAction, s: &State) -> State {
        s.apply(&action.del, &action.add)
    }

    /// Applicable actions and their successor states, ordered by action id.
    pub fn successors(&self, s: &State) -> Vec<(usize, State)> {
        debug_assert_eq!(s.instance(), self.id);
        self.actions
            .iter()
            .enumerate()
            .filter(|(_, a)| self.is_applicable(a, s))
            .map(|(i, a)| (i, self.apply(a, s)))
            .collect()
    }

    pub fn is_goal(&self, s: &State) -> bool {
        self.goal_pos.iter().all(|&a| s.holds(a)) && self.goal_neg.iter().all(|&a| !s.holds(a))
    }

    pub fn to_json(&self) -> serde_json::Value {
        let atoms: Vec<String> = (0..self.num_atoms as AtomId)
            .map(|a| self.atom_name(a))
            .collect();
        serde_json::json!({
            "name": self.name,
            "objects": self.objects,
            "atoms": atoms,
            "init": self.init.atoms().collect::<Vec<_>>(),
            "goal": { "positive": self.goal_pos, "negative": self.goal_neg },
            "parameters": self.parameters.iter().map(|(n, o)| (n.clone(), self.objects[*o].clone())).collect::<Vec<_>>(),
            "actions": self.actions,
        })
    }
}

struct Binder<'a> {
    objects: &'a [String],
    instance: &'a GroundInstance,
    static_preds: &'a HashSet<String>,
}

impl Binder<'_> {
    fn resolve(&self, t: &Term, params: &[String], binding: &[usize]) -> Option<usize> {
        match t {
            Term::Var(v) => params
                .iter()
                .position(|p| p == v)
                .and_then(|i| binding.get(i).copied()),
            Term::Const(c) => self.objects.iter().position(|o| o == c),
        }
    }

    fn atom(&self, a: &LiftedAtom, params: &[String], binding: &[usize]) -> Option<AtomId> {
        let pred = self.instance.predicate_index(&a.predicate)?;
        let args: Option<Vec<usize>> = a
            .args
            .iter()
            .map(|t| self.resolve(t, params, binding))
            .collect();
        Some(self.instance.atom_id(pred, &args?))
    }
}

/// Index of the last parameter a lifted atom mentions, so it can be checked
/// as soon as that parameter is bound.
fn last_var(a: &LiftedAtom, params: &[String]) -> Option<usize> {
    a.args
        .iter()
        .filter_map(|t| match t {
            Term::Var(v) => params.iter().position(|p| p == v),
            Term::Const(_) => None,
        })
        .max()
}

pub fn ground(
    domain: &DomainModel,
    problem: &ProblemDescription,
) -> Result<GroundInstance, GroundError> {
    let mut objects: Vec<String> = Vec::new();
    for o in domain.constants.iter().chain(problem.objects.iter()) {
        if !objects.contains(o) {
            objects.push(o.clone());
        }
    }
    let n = objects.len();
    let mut pred_offset = Vec::with_capacity(domain.predicates.len());
    let mut num_atoms = 0usize;
    for p in &domain.predicates {
        pred_offset.push(num_atoms);
        num_atoms = num_atoms
            .checked_add(n.checked_pow(p.arity as u32).ok_or(GroundError::TooLarge)?)
            .ok_or(GroundError::TooLarge)?;
    }
    if num_atoms > u32::MAX as usize / 2 {
        return Err(GroundError::TooLarge);
    }
    let mut instance = GroundInstance {
        id: NEXT_INSTANCE_ID.fetch_add(1, Ordering::Relaxed),
        name: problem.name.clone(),
        objects: objects.clone(),
        predicates: domain.predicates.clone(),
        pred_offset,
        num_atoms,
        init: State::empty(0, 0),
        goal_pos: Vec::new(),
        goal_neg: Vec::new(),
        actions: Vec::new(),
        parameters: Vec::new(),
    };

    let obj = |name: &str| -> Result<usize, GroundError> {
        objects
            .iter()
            .position(|o| o == name)
            .ok_or_else(|| GroundError::UnknownObject(name.to_string()))
    };
    let spec_atom =
        |inst: &GroundInstance, pred: &str, args: &[String]| -> Result<AtomId, GroundError> {
            let p = inst
                .predicate_index(pred)
                .ok_or_else(|| GroundError::UnknownPredicate(pred.to_string()))?;
            let idx = args.iter().map(|a| obj(a)).collect::<Result<Vec<_>, _>>()?;
            Ok(inst.atom_id(p, &idx))
        };

    let mut init_atoms: Vec<AtomId> = Vec::new();
    for a in &problem.init {
        init_atoms.push(spec_atom(&instance, &a.predicate, &a.args)?);
    }
    // Type predicates for typed objects.
    let typed = domain
        .constant_types
        .iter()
        .chain(problem.object_types.iter());
    for (o, ty) in typed {
        for t in domain.type_closure(ty) {
            if let Some(p) = instance.predicate_index(&t) {
                init_atoms.push(instance.atom_id(p, &[obj(o)?]));
            }
        }
    }
    for g in &problem.goal {
        let id = spec_atom(&instance, &g.atom.predicate, &g.atom.args)?;
        if g.positive {
            instance.goal_pos.push(id);
        } else {
            instance.goal_neg.push(id);
        }
        if g.positive && domain.goal_predicates.contains(&g.atom.predicate) {
            init_atoms.push(spec_atom(
                &instance,
                &DomainModel::goal_copy_name(&g.atom.predicate),
                &g.atom.args,
            )?);
        }
    }
    init_atoms.sort_unstable();
    init_atoms.dedup();
    instance.init = State::from_atoms(instance.id, num_atoms, init_atoms.iter().copied());

    // Goal parameters: objects shared by every goal literal, by first occurrence.
    if let Some(first) = problem.goal.first() {
        let mut seen: Vec<&String> = Vec::new();
        for a in &first.atom.args {
            if !seen.contains(&a) && problem.goal.iter().all(|g| g.atom.args.contains(a)) {
                seen.push(a);
            }
        }
        for (i, o) in seen.into_iter().enumerate() {
            instance.parameters.push((parameter_name(i), obj(o)?));
        }
    }

    let mut static_preds: HashSet<String> =
        domain.predicates.iter().map(|p| p.name.clone()).collect();
    for a in &domain.actions {
        for e in a.add.iter().chain(a.delete.iter()) {
            static_preds.remove(&e.predicate);
        }
    }

    // Relaxed reachability over add lists, then instantiate with the fixpoint.
    let mut reachable = vec![false; num_atoms];
    for &a in &init_atoms {
        reachable[a as usize] = true;
    }
    let binder = Binder {
        objects: &objects,
        instance: &instance,
        static_preds: &static_preds,
    };
    let init_state = instance.init.clone();
    loop {
        let mut changed = false;
        for schema in &domain.actions {
            for binding in bindings(&binder, schema, &reachable, &init_state, n) {
                for a in &schema.add {
                    let id = binder
                        .atom(a, &schema.parameters, &binding)
                        .expect("bound atom");
                    if !reachable[id as usize] {
                        reachable[id as usize] = true;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut actions = Vec::new();
    for schema in &domain.actions {
        for binding in bindings(&binder, schema, &reachable, &init_state, n) {
            let params = &schema.parameters;
            let mut pre = Vec::new();
            let mut pre_neg = Vec::new();
            for l in &schema.precondition {
                let id = binder.atom(&l.atom, params, &binding).expect("bound atom");
                if l.positive {
                    pre.push(id);
                } else if !static_preds.contains(&l.atom.predicate) {
                    pre_neg.push(id);
                }
            }
            let mut add: Vec<AtomId> = schema
                .add
                .iter()
                .map(|a| binder.atom(a, params, &binding).expect("bound atom"))
                .collect();
            let mut del: Vec<AtomId> = schema
                .delete
                .iter()
                .map(|a| binder.atom(a, params, &binding).expect("bound atom"))
                .collect();
            for v in [&mut pre, &mut pre_neg, &mut add, &mut del] {
                v.sort_unstable();
                v.dedup();
            }
            del.retain(|d| add.binary_search(d).is_err());
            let args: Vec<&str> = binding.iter().map(|&o| objects[o].as_str()).collect();
            actions.push(GroundAction {
                name: format!("{}({})", schema.name, args.join(",")),
                pre,
                pre_neg,
                add,
                del,
            });
        }
    }
    instance.actions = actions;
    Ok(instance)
}

/// All parameter bindings of `schema` whose positive preconditions are in
/// `reachable` and whose static negative preconditions are false initially.
fn bindings(
    binder: &Binder<'_>,
    schema: &super::pddl::ActionSchema,
    reachable: &[bool],
    init: &State,
    n: usize,
) -> Vec<Vec<usize>> {
    let params = &schema.parameters;
    let k = params.len();
    // Literals grouped by the depth at which they become fully bound.
    let mut checks: Vec<Vec<usize>> = vec![Vec::new(); k.max(1)];
    let mut ground_checks = Vec::new();
    for (i, l) in schema.precondition.iter().enumerate() {
        match last_var(&l.atom, params) {
            Some(d) => checks[d].push(i),
            None => ground_checks.push(i),
        }
    }
    let holds = |i: usize, binding: &[usize]| -> bool {
        let l = &schema.precondition[i];
        let Some(id) = binder.atom(&l.atom, params, binding) else {
            return false;
        };
        if l.positive {
            reachable[id as usize]
        } else if binder.static_preds.contains(&l.atom.predicate) {
            !init.holds(id)
        } else {
            true
        }
    };
    let mut out = Vec::new();
    if !ground_checks.iter().all(|&i| holds(i, &[])) {
        return out;
    }
    if k == 0 {
        out.push(Vec::new());
        return out;
    }
    let mut binding = Vec::with_capacity(k);
    fn rec(
        depth: usize,
        k: usize,
        n: usize,
        binding: &mut Vec<usize>,
        checks: &[Vec<usize>],
        holds: &dyn Fn(usize, &[usize]) -> bool,
        out: &mut Vec<Vec<usize>>,
    ) {
        for o in 0..n {
            binding.push(o);
            if checks[depth].iter().all(|&i| holds(i, binding)) {
                if depth + 1 == k {
                    out.push(binding.clone());
                } else {
                    rec(depth + 1, k, n, binding, checks, holds, out);
                }
            }
            binding.pop();
        }
    }
    rec(0, k, n, &mut binding, &checks, &holds, &mut out);
    out
}
