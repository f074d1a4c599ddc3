//! Solves a DIMACS CNF file with varisat and prints the result in the
//! usual competition format: an `s` status line, then one `v` line with a
//! value for every variable declared in the header.
//!
//! Used as an independent solver when cross-checking exported formulas:
//! `wmbmc check prog.litmus --mm tso --solver varisat-dimacs`.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};

fn declared_vars(path: &str) -> Result<usize> {
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        let mut words = line.split_whitespace();
        if words.next() == Some("p") {
            if words.next() != Some("cnf") {
                bail!("unsupported problem line `{line}`");
            }
            return words.next().context("missing variable count")?.parse().context("bad variable count");
        }
    }
    bail!("no `p cnf` header")
}

fn run(path: &str) -> Result<bool> {
    let num_vars = declared_vars(path)?;
    let mut solver = varisat::Solver::new();
    solver.add_dimacs_cnf(File::open(path)?).context("reading formula")?;
    let sat = solver.solve().context("solver failed")?;
    let mut out = std::io::stdout().lock();
    if !sat {
        writeln!(out, "s UNSATISFIABLE")?;
        return Ok(false);
    }
    let mut values = vec![false; num_vars];
    for lit in solver.model().context("no model")? {
        let x = lit.to_dimacs();
        if let Some(v) = values.get_mut(x.unsigned_abs() - 1) {
            *v = x > 0;
        }
    }
    writeln!(out, "s SATISFIABLE")?;
    let lits: Vec<String> =
        values.iter().enumerate().map(|(i, &b)| if b { format!("{}", i + 1) } else { format!("-{}", i + 1) }).collect();
    writeln!(out, "v {} 0", lits.join(" "))?;
    Ok(true)
}

fn main() -> ExitCode {
    let Some(path) = std::env::args().nth(1) else {
        eprintln!("usage: varisat-dimacs FILE.cnf");
        return ExitCode::from(1);
    };
    match run(&path) {
        Ok(true) => ExitCode::from(10),
        Ok(false) => ExitCode::from(20),
        Err(e) => {
            eprintln!("varisat-dimacs: {e:#}");
            ExitCode::from(1)
        }
    }
}
