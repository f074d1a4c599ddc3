//! DIMACS CNF reading/writing and parsing of solver-competition output
//! (`s SATISFIABLE` plus `v ...` value lines).

use std::io::{BufRead, Write};

use crate::cnf::{Cnf, Lit};
use crate::solver::{SolveResult, SolveStats, Status};
use crate::SatError;

/// Writes comment lines, the `p cnf` header and one zero-terminated clause
/// per line.
pub fn write_dimacs<W: Write>(cnf: &Cnf, mut out: W) -> std::io::Result<()> {
    for c in &cnf.comments {
        writeln!(out, "c {c}")?;
    }
    writeln!(out, "p cnf {} {}", cnf.num_vars, cnf.clauses.len())?;
    let mut line = String::new();
    for clause in &cnf.clauses {
        line.clear();
        for l in clause {
            line.push_str(&l.to_dimacs().to_string());
            line.push(' ');
        }
        line.push('0');
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn parse_dimacs<R: BufRead>(input: R) -> Result<Cnf, SatError> {
    let mut cnf: Option<Cnf> = None;
    let mut declared_clauses = 0usize;
    let mut pending: Vec<Lit> = Vec::new();
    let mut early_comments: Vec<String> = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(rest) = t.strip_prefix('c') {
            match cnf.as_mut() {
                Some(c) => c.comments.push(rest.trim_start().to_string()),
                None => early_comments.push(rest.trim_start().to_string()),
            }
            continue;
        }
        if t.starts_with('p') {
            let parts: Vec<&str> = t.split_whitespace().collect();
            if parts.len() != 4 || parts[1] != "cnf" {
                return Err(SatError::Parse { line: lineno, msg: format!("bad header `{t}`") });
            }
            let nv = parts[2]
                .parse::<usize>()
                .map_err(|e| SatError::Parse { line: lineno, msg: e.to_string() })?;
            declared_clauses = parts[3]
                .parse::<usize>()
                .map_err(|e| SatError::Parse { line: lineno, msg: e.to_string() })?;
            let mut fresh = Cnf::new(nv);
            fresh.comments = std::mem::take(&mut early_comments);
            cnf = Some(fresh);
            continue;
        }
        let c = cnf
            .as_mut()
            .ok_or_else(|| SatError::Parse { line: lineno, msg: "clause before header".into() })?;
        for tok in t.split_whitespace() {
            let x: i64 = tok
                .parse()
                .map_err(|_| SatError::Parse { line: lineno, msg: format!("bad literal `{tok}`") })?;
            if x == 0 {
                c.clauses.push(std::mem::take(&mut pending));
            } else {
                let l = Lit::from_dimacs(x)
                    .ok_or_else(|| SatError::Parse { line: lineno, msg: format!("bad literal `{tok}`") })?;
                if l.var().index() >= c.num_vars {
                    return Err(SatError::MalformedCnf(format!(
                        "literal {x} exceeds declared variable count {}",
                        c.num_vars
                    )));
                }
                pending.push(l);
            }
        }
    }
    let mut cnf = cnf.ok_or_else(|| SatError::Parse { line: 0, msg: "missing `p cnf` header".into() })?;
    if !pending.is_empty() {
        cnf.clauses.push(pending);
    }
    if cnf.clauses.len() != declared_clauses {
        return Err(SatError::MalformedCnf(format!(
            "header declares {declared_clauses} clauses, found {}",
            cnf.clauses.len()
        )));
    }
    Ok(cnf)
}

/// What an external solver printed.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExternalOutput {
    pub status: Option<Status>,
    /// Signed literals from the `v` lines, terminating 0 removed.
    pub values: Vec<i64>,
}

pub fn parse_solver_output(text: &str) -> Result<ExternalOutput, SatError> {
    let mut out = ExternalOutput::default();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if let Some(rest) = t.strip_prefix("s ") {
            out.status = Some(match rest.trim() {
                "SATISFIABLE" => Status::Sat,
                "UNSATISFIABLE" => Status::Unsat,
                "UNKNOWN" | "TIMEOUT" => Status::Timeout,
                other => {
                    return Err(SatError::Parse { line: i + 1, msg: format!("unknown status `{other}`") })
                }
            });
        } else if let Some(rest) = t.strip_prefix("v") {
            for tok in rest.split_whitespace() {
                let x: i64 = tok
                    .parse()
                    .map_err(|_| SatError::Parse { line: i + 1, msg: format!("bad value `{tok}`") })?;
                if x != 0 {
                    out.values.push(x);
                }
            }
        }
    }
    Ok(out)
}

/// Turns external solver output into a `SolveResult`, verifying any model
/// against `cnf` before accepting it.
pub fn import_external_model(cnf: &Cnf, text: &str) -> Result<SolveResult, SatError> {
    let parsed = parse_solver_output(text)?;
    let stats = SolveStats::default();
    match parsed.status {
        None => Err(SatError::ModelRejected("no `s` status line".into())),
        Some(Status::Unsat) => Ok(SolveResult { status: Status::Unsat, model: None, stats }),
        Some(Status::Timeout) => Ok(SolveResult { status: Status::Timeout, model: None, stats }),
        Some(Status::Sat) => {
            let mut assigned: Vec<Option<bool>> = vec![None; cnf.num_vars];
            for &x in &parsed.values {
                let v = (x.unsigned_abs() - 1) as usize;
                if v >= cnf.num_vars {
                    return Err(SatError::ModelRejected(format!("value for unknown variable {}", v + 1)));
                }
                if assigned[v].replace(x > 0).is_some_and(|prev| prev != (x > 0)) {
                    return Err(SatError::ModelRejected(format!("variable {} assigned both ways", v + 1)));
                }
            }
            if let Some(missing) = assigned.iter().position(|a| a.is_none()) {
                return Err(SatError::ModelRejected(format!("variable {} has no value", missing + 1)));
            }
            let model: Vec<bool> = assigned.into_iter().map(|a| a.unwrap_or(false)).collect();
            if let Some(ci) = cnf.first_violated(&model) {
                return Err(SatError::ModelRejected(format!("model falsifies clause {ci}")));
            }
            Ok(SolveResult { status: Status::Sat, model: Some(model), stats })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Cnf {
        let mut c = Cnf::new(3);
        c.comments.push("legend x1".into());
        for cl in [vec![1, -2], vec![2, 3], vec![-3]] {
            c.add_clause(cl.into_iter().map(|x| Lit::from_dimacs(x).unwrap()).collect());
        }
        c
    }

    #[test]
    fn writes_header_and_zero_terminated_clauses() {
        let mut buf = Vec::new();
        write_dimacs(&sample(), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "c legend x1\np cnf 3 3\n1 -2 0\n2 3 0\n-3 0\n");
    }

    #[test]
    fn export_then_import_is_identical() {
        let mut buf = Vec::new();
        write_dimacs(&sample(), &mut buf).unwrap();
        let back = parse_dimacs(buf.as_slice()).unwrap();
        assert_eq!(back, sample());
    }

    #[test]
    fn accepts_hand_written_model() {
        let r = import_external_model(&sample(), "s SATISFIABLE\nv 1 2 -3 0\n").unwrap();
        assert_eq!(r.status, Status::Sat);
        assert_eq!(r.model.unwrap(), vec![true, true, false]);
    }

    #[test]
    fn rejects_model_missing_a_variable() {
        let e = import_external_model(&sample(), "s SATISFIABLE\nv 1 2 0\n").unwrap_err();
        assert!(matches!(e, SatError::ModelRejected(_)));
    }

    #[test]
    fn rejects_falsifying_model() {
        let e = import_external_model(&sample(), "s SATISFIABLE\nv -1 2 -3 0\n").unwrap_err();
        assert!(matches!(e, SatError::ModelRejected(_)));
    }

    #[test]
    fn unsat_status_carries_no_model() {
        let r = import_external_model(&sample(), "c solver banner\ns UNSATISFIABLE\n").unwrap();
        assert_eq!(r.status, Status::Unsat);
        assert!(r.model.is_none());
    }

    #[test]
    fn clause_count_mismatch_is_malformed() {
        let e = parse_dimacs("p cnf 2 2\n1 2 0\n".as_bytes()).unwrap_err();
        assert!(matches!(e, SatError::MalformedCnf(_)));
    }
}
