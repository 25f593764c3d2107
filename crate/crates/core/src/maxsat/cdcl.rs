//! Conflict-driven clause learning with one native pseudo-Boolean bound.
//!
//! The bound `Σ w_i·x_i ≤ B` over the objective literals is propagated by
//! a running sum; its reasons are built on demand during conflict
//! analysis. Tightening `B` keeps every learned clause valid, which makes
//! linear cost descent incremental.

use std::time::Instant;

/// Internal literal: `var << 1 | negated`.
type ILit = u32;

const NONE: u32 = u32::MAX;

fn ilit(l: i32) -> ILit {
    let v = l.unsigned_abs() - 1;
    (v << 1) | (l < 0) as u32
}

fn var(l: ILit) -> usize {
    (l >> 1) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveResult {
    Sat,
    Unsat,
    /// The deadline passed before an answer was found.
    Unknown,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Reason {
    Decision,
    Clause(u32),
    Bound,
}

#[derive(Clone, Copy)]
enum Conflict {
    Clause(u32),
    Bound,
}

#[derive(Clone, Copy)]
struct Watcher {
    cref: u32,
    blocker: ILit,
    binary: bool,
}

struct Clause {
    lits: Vec<ILit>,
    learnt: bool,
    deleted: bool,
    lbd: u32,
    activity: f64,
}

/// Max-heap of variables by activity, ties broken towards lower indices.
struct VarHeap {
    heap: Vec<u32>,
    pos: Vec<u32>,
}

impl VarHeap {
    fn new(n: usize) -> Self {
        VarHeap {
            heap: Vec::new(),
            pos: vec![NONE; n],
        }
    }

    fn better(act: &[f64], a: u32, b: u32) -> bool {
        let (x, y) = (act[a as usize], act[b as usize]);
        x > y || (x == y && a < b)
    }

    fn contains(&self, v: usize) -> bool {
        self.pos[v] != NONE
    }

    fn up(&mut self, mut i: usize, act: &[f64]) {
        let v = self.heap[i];
        while i > 0 {
            let parent = (i - 1) / 2;
            if !Self::better(act, v, self.heap[parent]) {
                break;
            }
            self.heap[i] = self.heap[parent];
            self.pos[self.heap[i] as usize] = i as u32;
            i = parent;
        }
        self.heap[i] = v;
        self.pos[v as usize] = i as u32;
    }

    fn down(&mut self, mut i: usize, act: &[f64]) {
        let v = self.heap[i];
        let n = self.heap.len();
        loop {
            let l = 2 * i + 1;
            if l >= n {
                break;
            }
            let r = l + 1;
            let c = if r < n && Self::better(act, self.heap[r], self.heap[l]) {
                r
            } else {
                l
            };
            if !Self::better(act, self.heap[c], v) {
                break;
            }
            self.heap[i] = self.heap[c];
            self.pos[self.heap[i] as usize] = i as u32;
            i = c;
        }
        self.heap[i] = v;
        self.pos[v as usize] = i as u32;
    }

    fn insert(&mut self, v: usize, act: &[f64]) {
        if self.contains(v) {
            return;
        }
        self.heap.push(v as u32);
        let i = self.heap.len() - 1;
        self.pos[v] = i as u32;
        self.up(i, act);
    }

    fn pop(&mut self, act: &[f64]) -> Option<usize> {
        let top = *self.heap.first()?;
        let last = self.heap.pop().unwrap();
        self.pos[top as usize] = NONE;
        if !self.heap.is_empty() {
            self.heap[0] = last;
            self.pos[last as usize] = 0;
            self.down(0, act);
        }
        Some(top as usize)
    }

    fn bumped(&mut self, v: usize, act: &[f64]) {
        if self.contains(v) {
            self.up(self.pos[v] as usize, act);
        }
    }
}

fn luby(mut i: u64) -> u64 {
    // Finite subsequence containing index i, then its position within.
    let mut size = 1u64;
    let mut seq = 0u32;
    while size < i + 1 {
        seq += 1;
        size = 2 * size + 1;
    }
    while size - 1 != i {
        size = (size - 1) >> 1;
        seq -= 1;
        i %= size;
    }
    1u64 << seq
}

pub struct Solver {
    num_vars: usize,
    clauses: Vec<Clause>,
    watches: Vec<Vec<Watcher>>,
    value: Vec<i8>,
    level: Vec<u32>,
    reason: Vec<Reason>,
    trail_pos: Vec<u32>,
    trail: Vec<ILit>,
    trail_lim: Vec<usize>,
    qhead: usize,
    activity: Vec<f64>,
    var_inc: f64,
    clause_inc: f64,
    heap: VarHeap,
    phase: Vec<bool>,
    seen: Vec<bool>,
    unsat: bool,
    // Objective bound.
    obj_weight: Vec<u64>,
    /// Objective literal per variable, `NONE` if the variable is not in the objective.
    obj_lit: Vec<ILit>,
    /// Objective variables by decreasing weight, then index.
    obj_order: Vec<u32>,
    obj_sum: u64,
    bound: Option<u64>,
    bound_dirty: bool,
    conflicts: u64,
    learnts: usize,
    next_reduce: u64,
}

impl Solver {
    pub fn new(num_vars: usize) -> Self {
        let mut s = Solver {
            num_vars,
            clauses: Vec::new(),
            watches: vec![Vec::new(); 2 * num_vars],
            value: vec![0; num_vars],
            level: vec![0; num_vars],
            reason: vec![Reason::Decision; num_vars],
            trail_pos: vec![0; num_vars],
            trail: Vec::with_capacity(num_vars),
            trail_lim: Vec::new(),
            qhead: 0,
            activity: vec![0.0; num_vars],
            var_inc: 1.0,
            clause_inc: 1.0,
            heap: VarHeap::new(num_vars),
            phase: vec![false; num_vars],
            seen: vec![false; num_vars],
            unsat: false,
            obj_weight: vec![0; num_vars],
            obj_lit: vec![NONE; num_vars],
            obj_order: Vec::new(),
            obj_sum: 0,
            bound: None,
            bound_dirty: false,
            conflicts: 0,
            learnts: 0,
            next_reduce: 4000,
        };
        for v in 0..num_vars {
            s.heap.insert(v, &s.activity);
        }
        s
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn conflicts(&self) -> u64 {
        self.conflicts
    }

    fn lit_value(&self, l: ILit) -> i8 {
        let v = self.value[var(l)];
        if l & 1 == 1 {
            -v
        } else {
            v
        }
    }

    fn decision_level(&self) -> u32 {
        self.trail_lim.len() as u32
    }

    fn assign(&mut self, l: ILit, reason: Reason) {
        let v = var(l);
        self.value[v] = if l & 1 == 1 { -1 } else { 1 };
        self.level[v] = self.decision_level();
        self.reason[v] = reason;
        self.trail_pos[v] = self.trail.len() as u32;
        self.trail.push(l);
        if self.obj_lit[v] == l {
            self.obj_sum += self.obj_weight[v];
            self.bound_dirty = true;
        }
    }

    /// Adds a clause of DIMACS literals. Must be called at decision level 0.
    pub fn add_clause(&mut self, clause: &[i32]) -> bool {
        debug_assert_eq!(self.decision_level(), 0);
        if self.unsat {
            return false;
        }
        let mut lits: Vec<ILit> = clause.iter().map(|&l| ilit(l)).collect();
        lits.sort_unstable();
        lits.dedup();
        if lits.windows(2).any(|w| w[0] ^ 1 == w[1]) {
            return true;
        }
        if lits.iter().any(|&l| self.lit_value(l) == 1) {
            return true;
        }
        lits.retain(|&l| self.lit_value(l) == 0);
        match lits.len() {
            0 => {
                self.unsat = true;
                false
            }
            1 => {
                self.assign(lits[0], Reason::Decision);
                if self.propagate().is_some() {
                    self.unsat = true;
                }
                !self.unsat
            }
            _ => {
                self.attach(lits, false, 0);
                true
            }
        }
    }

    fn attach(&mut self, lits: Vec<ILit>, learnt: bool, lbd: u32) -> u32 {
        let cref = self.clauses.len() as u32;
        let binary = lits.len() == 2;
        self.watches[lits[0] as usize].push(Watcher {
            cref,
            blocker: lits[1],
            binary,
        });
        self.watches[lits[1] as usize].push(Watcher {
            cref,
            blocker: lits[0],
            binary,
        });
        if learnt {
            self.learnts += 1;
        }
        self.clauses.push(Clause {
            lits,
            learnt,
            deleted: false,
            lbd,
            activity: 0.0,
        });
        cref
    }

    /// Declares the objective `Σ weight·[lit true]`; each variable at most once.
    pub fn set_objective(&mut self, terms: &[(i32, u64)]) {
        for &(l, w) in terms {
            let il = ilit(l);
            let v = var(il);
            assert_eq!(
                self.obj_lit[v],
                NONE,
                "variable {} appears twice in the objective",
                v + 1
            );
            self.obj_lit[v] = il;
            self.obj_weight[v] = w;
            if self.lit_value(il) == 1 {
                self.obj_sum += w;
            }
            self.obj_order.push(v as u32);
        }
        let w = &self.obj_weight;
        self.obj_order
            .sort_by(|&a, &b| w[b as usize].cmp(&w[a as usize]).then(a.cmp(&b)));
    }

    /// Requires the objective to be at most `bound` from now on.
    pub fn set_bound(&mut self, bound: u64) {
        self.backtrack(0);
        self.bound = Some(bound);
        self.bound_dirty = true;
        if self.propagate().is_some() {
            self.unsat = true;
        }
    }

    fn bound_propagate(&mut self) -> Option<Conflict> {
        let bound = self.bound?;
        if self.obj_sum > bound {
            return Some(Conflict::Bound);
        }
        let slack = bound - self.obj_sum;
        for i in 0..self.obj_order.len() {
            let v = self.obj_order[i] as usize;
            if self.obj_weight[v] <= slack {
                break;
            }
            let l = self.obj_lit[v];
            if self.lit_value(l) == 0 {
                self.assign(l ^ 1, Reason::Bound);
            }
        }
        None
    }

    fn propagate(&mut self) -> Option<Conflict> {
        loop {
            if self.bound_dirty {
                self.bound_dirty = false;
                if let Some(c) = self.bound_propagate() {
                    return Some(c);
                }
            }
            if self.qhead >= self.trail.len() {
                return None;
            }
            let p = self.trail[self.qhead];
            self.qhead += 1;
            let false_lit = p ^ 1;
            let mut ws = std::mem::take(&mut self.watches[false_lit as usize]);
            let mut i = 0;
            let mut j = 0;
            let mut conflict = None;
            while i < ws.len() {
                let w = ws[i];
                i += 1;
                let bv = self.lit_value(w.blocker);
                if bv == 1 {
                    ws[j] = w;
                    j += 1;
                    continue;
                }
                if w.binary {
                    ws[j] = w;
                    j += 1;
                    if bv == -1 {
                        conflict = Some(Conflict::Clause(w.cref));
                        break;
                    }
                    self.assign(w.blocker, Reason::Clause(w.cref));
                    continue;
                }
                let cref = w.cref as usize;
                let lits = &mut self.clauses[cref].lits;
                if lits[0] == false_lit {
                    lits.swap(0, 1);
                }
                let first = lits[0];
                let w_new = Watcher {
                    cref: w.cref,
                    blocker: first,
                    binary: false,
                };
                if first != w.blocker && self.lit_value(first) == 1 {
                    ws[j] = w_new;
                    j += 1;
                    continue;
                }
                let mut moved = false;
                for k in 2..self.clauses[cref].lits.len() {
                    let lk = self.clauses[cref].lits[k];
                    if self.lit_value(lk) != -1 {
                        self.clauses[cref].lits.swap(1, k);
                        self.watches[lk as usize].push(w_new);
                        moved = true;
                        break;
                    }
                }
                if moved {
                    continue;
                }
                ws[j] = w_new;
                j += 1;
                if self.lit_value(first) == -1 {
                    conflict = Some(Conflict::Clause(w.cref));
                    break;
                }
                self.assign(first, Reason::Clause(w.cref));
            }
            while i < ws.len() {
                ws[j] = ws[i];
                i += 1;
                j += 1;
            }
            ws.truncate(j);
            self.watches[false_lit as usize] = ws;
            if conflict.is_some() {
                return conflict;
            }
        }
    }

    /// Negated objective literals, heaviest first, true before trail position
    /// `before`, whose weights exceed `need`.
    fn bound_reason(&self, before: usize, need: u64) -> Vec<ILit> {
        let mut out = Vec::new();
        let mut sum = 0u64;
        for &v in &self.obj_order {
            let v = v as usize;
            let l = self.obj_lit[v];
            if self.lit_value(l) == 1 && (self.trail_pos[v] as usize) < before {
                out.push(l ^ 1);
                sum += self.obj_weight[v];
                if sum > need {
                    break;
                }
            }
        }
        out
    }

    /// Literals of the reason for `v` other than its own literal.
    fn reason_lits(&self, v: usize) -> Vec<ILit> {
        match self.reason[v] {
            Reason::Decision => Vec::new(),
            Reason::Clause(c) => self.clauses[c as usize]
                .lits
                .iter()
                .copied()
                .filter(|&l| var(l) != v)
                .collect(),
            Reason::Bound => {
                let bound = self.bound.expect("bound reason without a bound");
                self.bound_reason(self.trail_pos[v] as usize, bound - self.obj_weight[v])
            }
        }
    }

    fn conflict_lits(&self, c: Conflict) -> Vec<ILit> {
        match c {
            Conflict::Clause(c) => self.clauses[c as usize].lits.clone(),
            Conflict::Bound => {
                self.bound_reason(self.trail.len(), self.bound.expect("bound conflict"))
            }
        }
    }

    fn bump_var(&mut self, v: usize) {
        self.activity[v] += self.var_inc;
        if self.activity[v] > 1e100 {
            for a in self.activity.iter_mut() {
                *a *= 1e-100;
            }
            self.var_inc *= 1e-100;
        }
        self.heap.bumped(v, &self.activity);
    }

    fn bump_clause(&mut self, c: u32) {
        let cl = &mut self.clauses[c as usize];
        if !cl.learnt {
            return;
        }
        cl.activity += self.clause_inc;
        if cl.activity > 1e20 {
            for cl in self.clauses.iter_mut().filter(|c| c.learnt) {
                cl.activity *= 1e-20;
            }
            self.clause_inc *= 1e-20;
        }
    }

    fn analyze(&mut self, conflict: Conflict) -> (Vec<ILit>, u32) {
        let mut learnt: Vec<ILit> = vec![0];
        let mut path = 0usize;
        let mut idx = self.trail.len();
        let mut lits = self.conflict_lits(conflict);
        if let Conflict::Clause(c) = conflict {
            self.bump_clause(c);
        }
        let current = self.decision_level();
        let p = loop {
            for &q in &lits {
                let v = var(q);
                if !self.seen[v] && self.level[v] > 0 {
                    self.seen[v] = true;
                    self.bump_var(v);
                    if self.level[v] >= current {
                        path += 1;
                    } else {
                        learnt.push(q);
                    }
                }
            }
            loop {
                idx -= 1;
                if self.seen[var(self.trail[idx])] {
                    break;
                }
            }
            let p = self.trail[idx];
            let v = var(p);
            self.seen[v] = false;
            path -= 1;
            if path == 0 {
                break p;
            }
            if let Reason::Clause(c) = self.reason[v] {
                self.bump_clause(c);
            }
            lits = self.reason_lits(v);
        };
        learnt[0] = p ^ 1;

        // Drop literals implied by the rest of the clause.
        let mut keep = vec![learnt[0]];
        for &q in &learnt[1..] {
            let v = var(q);
            let redundant = self.reason[v] != Reason::Decision
                && self
                    .reason_lits(v)
                    .iter()
                    .all(|&r| self.seen[var(r)] || self.level[var(r)] == 0);
            if !redundant {
                keep.push(q);
            }
        }
        for &q in &learnt[1..] {
            self.seen[var(q)] = false;
        }
        let mut learnt = keep;

        let mut back = 0;
        if learnt.len() > 1 {
            let mut max_i = 1;
            for i in 2..learnt.len() {
                if self.level[var(learnt[i])] > self.level[var(learnt[max_i])] {
                    max_i = i;
                }
            }
            learnt.swap(1, max_i);
            back = self.level[var(learnt[1])];
        }
        (learnt, back)
    }

    fn lbd(&mut self, lits: &[ILit]) -> u32 {
        let mut levels: Vec<u32> = lits.iter().map(|&l| self.level[var(l)]).collect();
        levels.sort_unstable();
        levels.dedup();
        levels.len() as u32
    }

    fn backtrack(&mut self, level: u32) {
        if self.decision_level() <= level {
            return;
        }
        let lim = self.trail_lim[level as usize];
        for i in (lim..self.trail.len()).rev() {
            let l = self.trail[i];
            let v = var(l);
            if self.obj_lit[v] == l {
                self.obj_sum -= self.obj_weight[v];
            }
            self.phase[v] = l & 1 == 0;
            self.value[v] = 0;
            self.heap.insert(v, &self.activity);
        }
        self.trail.truncate(lim);
        self.trail_lim.truncate(level as usize);
        self.qhead = lim;
        self.bound_dirty = false;
    }

    fn locked(&self, c: u32) -> bool {
        let lits = &self.clauses[c as usize].lits;
        lits[..2].iter().any(|&l| {
            let v = var(l);
            self.value[v] != 0 && self.reason[v] == Reason::Clause(c)
        })
    }

    fn reduce_db(&mut self) {
        let mut cands: Vec<u32> = (0..self.clauses.len() as u32)
            .filter(|&c| {
                let cl = &self.clauses[c as usize];
                cl.learnt && !cl.deleted && cl.lbd > 2 && cl.lits.len() > 2
            })
            .filter(|&c| !self.locked(c))
            .collect();
        cands.sort_by(|&a, &b| {
            let (x, y) = (&self.clauses[a as usize], &self.clauses[b as usize]);
            y.lbd
                .cmp(&x.lbd)
                .then(x.activity.total_cmp(&y.activity))
                .then(a.cmp(&b))
        });
        let remove = cands.len() / 2;
        for &c in &cands[..remove] {
            let cl = &mut self.clauses[c as usize];
            cl.deleted = true;
            cl.lits = Vec::new();
            self.learnts -= 1;
        }
        for ws in self.watches.iter_mut() {
            ws.retain(|w| !self.clauses[w.cref as usize].deleted);
        }
    }

    fn pick_branch(&mut self) -> Option<ILit> {
        while let Some(v) = self.heap.pop(&self.activity) {
            if self.value[v] == 0 {
                return Some(((v as u32) << 1) | (!self.phase[v]) as u32);
            }
        }
        None
    }

    /// Searches for a model of the clauses within the current bound.
    pub fn solve(&mut self, deadline: Option<Instant>) -> SolveResult {
        if self.unsat {
            return SolveResult::Unsat;
        }
        self.backtrack(0);
        self.bound_dirty = true;
        if self.propagate().is_some() {
            self.unsat = true;
            return SolveResult::Unsat;
        }
        let mut restart = 0u64;
        loop {
            let budget = 100 * luby(restart);
            restart += 1;
            let mut local = 0u64;
            loop {
                if let Some(conflict) = self.propagate() {
                    self.conflicts += 1;
                    local += 1;
                    if self.decision_level() == 0 {
                        self.unsat = true;
                        return SolveResult::Unsat;
                    }
                    let (learnt, back) = self.analyze(conflict);
                    self.backtrack(back);
                    if learnt.len() == 1 {
                        self.assign(learnt[0], Reason::Decision);
                    } else {
                        let lbd = self.lbd(&learnt);
                        let first = learnt[0];
                        let cref = self.attach(learnt, true, lbd);
                        self.bump_clause(cref);
                        self.assign(first, Reason::Clause(cref));
                    }
                    self.var_inc /= 0.95;
                    self.clause_inc /= 0.999;
                    if self.conflicts.is_multiple_of(1024)
                        && deadline.is_some_and(|d| Instant::now() >= d)
                    {
                        self.backtrack(0);
                        return SolveResult::Unknown;
                    }
                    if self.conflicts >= self.next_reduce {
                        self.next_reduce = self.conflicts + 4000 + self.learnts as u64 / 2;
                        self.reduce_db();
                    }
                } else {
                    if local >= budget {
                        self.backtrack(0);
                        break;
                    }
                    match self.pick_branch() {
                        None => return SolveResult::Sat,
                        Some(l) => {
                            self.trail_lim.push(self.trail.len());
                            self.assign(l, Reason::Decision);
                        }
                    }
                }
            }
        }
    }

    /// Model of the last `Sat` answer, indexed by DIMACS variable (index 0 unused).
    pub fn model(&self) -> Vec<bool> {
        let mut m = vec![false; self.num_vars + 1];
        for v in 0..self.num_vars {
            m[v + 1] = self.value[v] == 1;
        }
        m
    }
}
