use std::io::Read;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use super::{Assignment, MaxSatError, MaxSatOutcome};
use crate::encoder::{Lit, WeightedCnf};

/// What a solver printed: status plus the `v` line, if any.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolverOutput {
    Optimum(Vec<bool>),
    Unsatisfiable,
}

fn malformed(line: usize, text: &str) -> MaxSatError {
    MaxSatError::Malformed {
        line,
        text: text.to_string(),
    }
}

/// Parses standard Max-SAT solver output over `num_vars` variables.
/// The `v` line may list literals or be a single 0/1 string.
pub fn parse_solver_output(text: &str, num_vars: u32) -> Result<SolverOutput, MaxSatError> {
    let mut status: Option<&str> = None;
    let mut values: Option<Vec<bool>> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = i + 1;
        if line.is_empty() || line.starts_with('c') || line.starts_with('o') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("s ") {
            status = Some(match rest.trim() {
                "OPTIMUM FOUND" => "optimum",
                "UNSATISFIABLE" => "unsat",
                _ => return Err(malformed(lineno, raw)),
            });
        } else if let Some(rest) = line.strip_prefix('v') {
            let rest = rest.trim();
            let vals = values.get_or_insert_with(|| vec![false; num_vars as usize + 1]);
            let tokens: Vec<&str> = rest.split_whitespace().collect();
            if tokens.len() == 1
                && tokens[0].len() > 1
                && tokens[0].chars().all(|c| c == '0' || c == '1')
            {
                for (k, c) in tokens[0].chars().enumerate() {
                    if k + 1 < vals.len() {
                        vals[k + 1] = c == '1';
                    }
                }
                continue;
            }
            for tok in tokens {
                let l: i64 = tok.parse().map_err(|_| malformed(lineno, raw))?;
                if l == 0 {
                    continue;
                }
                let v = l.unsigned_abs() as usize;
                if v > num_vars as usize {
                    return Err(malformed(lineno, raw));
                }
                vals[v] = l > 0;
            }
        } else {
            return Err(malformed(lineno, raw));
        }
    }
    match status {
        Some("unsat") => Ok(SolverOutput::Unsatisfiable),
        Some(_) => values
            .map(SolverOutput::Optimum)
            .ok_or_else(|| malformed(text.lines().count(), "missing 'v' line")),
        None => Err(malformed(text.lines().count(), "missing 's' line")),
    }
}

/// Reads DIMACS WCNF, both the `p wcnf` header form and the `h`-prefixed
/// header-less form.
pub fn parse_wcnf(text: &str) -> Result<WeightedCnf, MaxSatError> {
    let mut top: Option<u64> = None;
    let mut cnf = WeightedCnf::new(0);
    let mut hard: Vec<Vec<Lit>> = Vec::new();
    let mut soft: Vec<(Vec<Lit>, u64)> = Vec::new();
    let mut max_var = 0u32;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('c') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks[0] == "p" {
            if toks.len() < 4 || toks[1] != "wcnf" {
                return Err(malformed(i + 1, raw));
            }
            cnf.num_vars = toks[2].parse().map_err(|_| malformed(i + 1, raw))?;
            top = toks
                .get(4)
                .map(|t| t.parse())
                .transpose()
                .map_err(|_| malformed(i + 1, raw))?;
            continue;
        }
        let (weight, lits) = if toks[0] == "h" {
            (None, &toks[1..])
        } else {
            let w: u64 = toks[0].parse().map_err(|_| malformed(i + 1, raw))?;
            (if Some(w) == top { None } else { Some(w) }, &toks[1..])
        };
        let mut clause = Vec::new();
        for t in lits {
            let l: Lit = t.parse().map_err(|_| malformed(i + 1, raw))?;
            if l == 0 {
                break;
            }
            max_var = max_var.max(l.unsigned_abs());
            clause.push(l);
        }
        match weight {
            None => hard.push(clause),
            Some(w) => soft.push((clause, w)),
        }
    }
    cnf.num_vars = cnf.num_vars.max(max_var);
    for c in &hard {
        cnf.add_hard(c);
    }
    for (c, w) in soft {
        cnf.add_soft(&c, w);
    }
    Ok(cnf)
}

/// Runs `path args... <wcnf file>` and reads its answer.
pub fn solve_external(
    cnf: &WeightedCnf,
    path: &Path,
    args: &[String],
    timeout: Option<Duration>,
) -> Result<MaxSatOutcome, MaxSatError> {
    let fail = |message: String| MaxSatError::Invocation {
        path: path.display().to_string(),
        message,
    };
    let mut file = tempfile::Builder::new()
        .suffix(".wcnf")
        .tempfile()
        .map_err(|e| fail(e.to_string()))?;
    cnf.write_wcnf(std::io::BufWriter::new(file.as_file_mut()))
        .map_err(|e| fail(e.to_string()))?;
    let mut child = Command::new(path)
        .args(args)
        .arg(file.path())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| fail(e.to_string()))?;
    let mut stdout = child.stdout.take().expect("piped stdout");
    let reader = std::thread::spawn(move || {
        let mut s = String::new();
        stdout.read_to_string(&mut s).map(|_| s)
    });
    let deadline = timeout.map(|t| Instant::now() + t);
    loop {
        match child.try_wait().map_err(|e| fail(e.to_string()))? {
            Some(_) => break,
            None => {
                if deadline.is_some_and(|d| Instant::now() >= d) {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(MaxSatError::Timeout(timeout.unwrap_or_default()));
                }
                std::thread::sleep(Duration::from_millis(5));
            }
        }
    }
    let text = reader
        .join()
        .map_err(|_| fail("output reader panicked".into()))?
        .map_err(|e| fail(e.to_string()))?;
    match parse_solver_output(&text, cnf.num_vars)? {
        SolverOutput::Unsatisfiable => Ok(MaxSatOutcome::Unsatisfiable),
        SolverOutput::Optimum(values) => {
            if !cnf.satisfies_hard(&values) {
                return Err(malformed(0, "external model violates a hard clause"));
            }
            let cost = cnf.cost(&values);
            Ok(MaxSatOutcome::Optimal(Assignment { values, cost }))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_and_bitstring_models() {
        let a = parse_solver_output("c hi\no 1\ns OPTIMUM FOUND\nv 1 -2 3 0\n", 3).unwrap();
        let b = parse_solver_output("s OPTIMUM FOUND\nv 101\n", 3).unwrap();
        assert_eq!(a, SolverOutput::Optimum(vec![false, true, false, true]));
        assert_eq!(a, b);
    }

    #[test]
    fn unsat_status() {
        assert_eq!(
            parse_solver_output("s UNSATISFIABLE\n", 2).unwrap(),
            SolverOutput::Unsatisfiable
        );
    }

    #[test]
    fn garbage_line_is_reported() {
        match parse_solver_output("s OPTIMUM FOUND\nv 1 x\n", 2) {
            Err(MaxSatError::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wcnf_round_trip() {
        let mut cnf = WeightedCnf::new(2);
        cnf.add_hard(&[1, -2]);
        cnf.add_soft(&[-1], 4);
        let text = cnf.to_wcnf_string();
        assert!(text.starts_with("p wcnf 2 2 5\n"));
        assert_eq!(parse_wcnf(&text).unwrap(), cnf);
    }
}
