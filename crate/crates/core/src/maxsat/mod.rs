//! Weighted partial Max-SAT: a built-in complete solver and a bridge to
//! external solvers through DIMACS WCNF files.

pub mod cdcl;
mod external;

use std::path::PathBuf;
use std::time::{Duration, Instant};

use thiserror::Error;

pub use external::{parse_solver_output, parse_wcnf, solve_external, SolverOutput};

use crate::encoder::{Lit, WeightedCnf};
use cdcl::{SolveResult, Solver};

#[derive(Debug, Error)]
pub enum MaxSatError {
    #[error("failed to run external solver '{path}': {message}")]
    Invocation { path: String, message: String },
    #[error("malformed solver output at line {line}: {text}")]
    Malformed { line: usize, text: String },
    #[error("solver time limit of {0:?} exceeded")]
    Timeout(Duration),
}

/// A model together with the weight of the soft clauses it falsifies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    /// Indexed by variable id; index 0 is unused.
    pub values: Vec<bool>,
    pub cost: u64,
}

impl Assignment {
    pub fn value(&self, var: u32) -> bool {
        self.values.get(var as usize).copied().unwrap_or(false)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MaxSatOutcome {
    Optimal(Assignment),
    Unsatisfiable,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolverMode {
    Builtin,
    /// Executable reading a WCNF file path as its last argument.
    External {
        path: PathBuf,
        args: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolveOptions {
    pub mode: SolverMode,
    pub timeout: Option<Duration>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            mode: SolverMode::Builtin,
            timeout: None,
        }
    }
}

/// Statistics of a built-in solve.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SolveStats {
    pub sat_calls: u32,
    pub conflicts: u64,
}

pub fn solve_max_sat(
    cnf: &WeightedCnf,
    options: &SolveOptions,
) -> Result<MaxSatOutcome, MaxSatError> {
    match &options.mode {
        SolverMode::Builtin => solve_builtin(cnf, options.timeout).map(|(o, _)| o),
        SolverMode::External { path, args } => solve_external(cnf, path, args, options.timeout),
    }
}

/// Linear SAT-UNSAT descent on the soft cost with a pseudo-Boolean bound.
pub fn solve_builtin(
    cnf: &WeightedCnf,
    timeout: Option<Duration>,
) -> Result<(MaxSatOutcome, SolveStats), MaxSatError> {
    let deadline = timeout.map(|t| Instant::now() + t);
    let n = cnf.num_vars as usize;

    // Soft units over fresh variables go straight into the objective; other
    // soft clauses get a relaxation variable.
    let mut used = vec![false; n + 1];
    let mut objective: Vec<(Lit, u64)> = Vec::new();
    let mut relaxed: Vec<(Vec<Lit>, Lit)> = Vec::new();
    let mut extra = 0u32;
    for (clause, w) in &cnf.soft {
        if clause.len() == 1 && !used[clause[0].unsigned_abs() as usize] {
            used[clause[0].unsigned_abs() as usize] = true;
            objective.push((-clause[0], *w));
        } else {
            extra += 1;
            let r = (cnf.num_vars + extra) as Lit;
            relaxed.push((clause.clone(), r));
            objective.push((r, *w));
        }
    }
    let mut solver = Solver::new(n + extra as usize);
    for c in cnf.hard_clauses() {
        if !solver.add_clause(c) {
            return Ok((MaxSatOutcome::Unsatisfiable, SolveStats::default()));
        }
    }
    for (clause, r) in &relaxed {
        let mut c = clause.clone();
        c.push(*r);
        solver.add_clause(&c);
    }
    solver.set_objective(&objective);

    let mut stats = SolveStats::default();
    let mut best: Option<Assignment> = None;
    loop {
        stats.sat_calls += 1;
        let result = solver.solve(deadline);
        stats.conflicts = solver.conflicts();
        match result {
            SolveResult::Sat => {
                let mut values = solver.model();
                values.truncate(n + 1);
                let cost = cnf.cost(&values);
                best = Some(Assignment { values, cost });
                if cost == 0 {
                    break;
                }
                solver.set_bound(cost - 1);
            }
            SolveResult::Unsat => break,
            SolveResult::Unknown => return Err(MaxSatError::Timeout(timeout.unwrap_or_default())),
        }
    }
    Ok((
        best.map_or(MaxSatOutcome::Unsatisfiable, MaxSatOutcome::Optimal),
        stats,
    ))
}

/// Environment variable naming an external solver executable.
pub const SOLVER_ENV: &str = "GENPLAN_MAXSAT_SOLVER";

/// External solver from [`SOLVER_ENV`], if set. Extra arguments follow the
/// path, separated by whitespace.
pub fn solver_from_env() -> Option<SolverMode> {
    let spec = std::env::var(SOLVER_ENV).ok()?;
    let mut parts = spec.split_whitespace();
    let path = PathBuf::from(parts.next()?);
    Some(SolverMode::External {
        path,
        args: parts.map(str::to_string).collect(),
    })
}
