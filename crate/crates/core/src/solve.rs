//! Satisfiability back ends: the embedded CDCL solver, or an external
//! command that takes a DIMACS file and prints `s`/`v` lines.

use std::io::Read;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use thiserror::Error;
use wmbmc_sat::{import_external_model, write_dimacs, Cnf, SatError, SolveResult, SolveStats, Solver, Status};

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Sat(#[from] SatError),
    #[error("external solver `{cmd}` failed: {msg}")]
    External { cmd: String, msg: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Backend {
    #[default]
    Internal,
    /// Whitespace-separated command line; the DIMACS path is appended as
    /// the last argument.
    External(String),
}

impl std::str::FromStr for Backend {
    type Err = std::convert::Infallible;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(if s == "internal" { Backend::Internal } else { Backend::External(s.to_string()) })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolveOptions {
    pub backend: Backend,
    pub timeout: Duration,
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { backend: Backend::Internal, timeout: Duration::from_secs(900), seed: 0 }
    }
}

pub fn solve(cnf: &Cnf, opts: &SolveOptions) -> Result<SolveResult, SolveError> {
    match &opts.backend {
        Backend::Internal => Ok(Solver::new(cnf, opts.seed)?.solve(opts.timeout)?),
        Backend::External(cmd) => solve_external(cnf, cmd, opts.timeout),
    }
}

fn solve_external(cnf: &Cnf, cmd: &str, timeout: Duration) -> Result<SolveResult, SolveError> {
    let fail = |msg: String| SolveError::External { cmd: cmd.to_string(), msg };
    let mut parts = cmd.split_whitespace();
    let program = parts.next().ok_or_else(|| fail("empty command".into()))?;
    let mut file = tempfile::Builder::new().suffix(".cnf").tempfile().map_err(SatError::Io)?;
    write_dimacs(cnf, &mut file).map_err(SatError::Io)?;
    let start = Instant::now();
    let mut child = Command::new(program)
        .args(parts)
        .arg(file.path())
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| fail(e.to_string()))?;
    let mut stdout = child.stdout.take().expect("piped stdout");
    let reader = std::thread::spawn(move || {
        let mut text = String::new();
        stdout.read_to_string(&mut text).map(|_| text)
    });
    loop {
        if child.try_wait().map_err(|e| fail(e.to_string()))?.is_some() {
            break;
        }
        if start.elapsed() >= timeout {
            let _ = child.kill();
            let _ = child.wait();
            let stats = SolveStats { time_s: start.elapsed().as_secs_f64(), ..Default::default() };
            return Ok(SolveResult { status: Status::Timeout, model: None, stats });
        }
        std::thread::sleep(Duration::from_millis(2));
    }
    let text = reader.join().map_err(|_| fail("output reader panicked".into()))?.map_err(SatError::Io)?;
    let mut result = import_external_model(cnf, &text)?;
    result.stats.time_s = start.elapsed().as_secs_f64();
    Ok(result)
}
