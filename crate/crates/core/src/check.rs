//! The end-to-end checker: parse, unroll, build SSA and orderings, encode,
//! solve and decode.

use std::fmt;
use std::time::{Duration, Instant};

use thiserror::Error;
use wmbmc_sat::{Cnf, SolveStats, Status};

use crate::encode::{encode, EncodeError, Encoding, EncodingStats};
use crate::frontend::{parse, unroll, Ast, FrontendError};
use crate::matches::{build_potmat, MatchError, MatchSet};
use crate::memmodel::{build_ppo, MemModelError, MemoryModel, PpoGraph};
use crate::solve::{solve, Backend, SolveError, SolveOptions};
use crate::ssa::{build_ssa, SsaError, SsaSystem};
use crate::witness::{reconstruct, replay_validate, Trace, WitnessError};

#[derive(Debug, Error)]
pub enum CheckError {
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error(transparent)]
    Ssa(#[from] SsaError),
    #[error(transparent)]
    MemModel(#[from] MemModelError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Witness(#[from] WitnessError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckConfig {
    pub mm: MemoryModel,
    /// Loop unwinding bound.
    pub unwind: usize,
    pub value_bits: u32,
    pub timeout: Duration,
    pub backend: Backend,
    pub seed: u64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            mm: MemoryModel::Sc,
            unwind: 6,
            value_bits: 8,
            timeout: Duration::from_secs(900),
            backend: Backend::Internal,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Safe,
    Violation,
    Timeout,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Safe => "SAFE",
            Verdict::Violation => "VIOLATION",
            Verdict::Timeout => "TIMEOUT",
        })
    }
}

impl std::str::FromStr for Verdict {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_uppercase().as_str() {
            "SAFE" => Ok(Verdict::Safe),
            "VIOLATION" => Ok(Verdict::Violation),
            "TIMEOUT" => Ok(Verdict::Timeout),
            other => Err(format!("unknown verdict `{other}`")),
        }
    }
}

/// Everything derived from a program before solving.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub unrolled: Ast,
    pub ssa: SsaSystem,
    pub ppo: PpoGraph,
    pub matches: MatchSet,
    /// `None` when the program has no assertion to violate.
    pub encoding: Option<Encoding>,
}

impl Analysis {
    pub fn cnf(&self) -> Option<&Cnf> {
        self.encoding.as_ref().map(|e| &e.cnf)
    }
}

pub fn analyse(ast: &Ast, cfg: &CheckConfig) -> Result<Analysis, CheckError> {
    let unrolled = unroll(ast, cfg.unwind)?;
    let ssa = build_ssa(&unrolled, cfg.value_bits)?;
    let ppo = build_ppo(&ssa, cfg.mm)?;
    let matches = build_potmat(&ssa, &ppo)?;
    let encoding = match encode(&ssa, &ppo, &matches) {
        Ok(e) => Some(e),
        Err(EncodeError::EmptyAssertSet) => None,
        Err(e) => return Err(e.into()),
    };
    Ok(Analysis { unrolled, ssa, ppo, matches, encoding })
}

#[derive(Debug, Clone)]
pub struct CheckReport {
    pub verdict: Verdict,
    pub mm: MemoryModel,
    pub unwind: usize,
    pub encoding: Option<EncodingStats>,
    pub solve: Option<SolveStats>,
    pub trace: Option<Trace>,
    /// Whether the trace replays on the store-buffer machine.
    pub replayed: Option<bool>,
    pub time_s: f64,
}

/// Solves an analysed program.
pub fn check_analysis(a: &Analysis, cfg: &CheckConfig) -> Result<CheckReport, CheckError> {
    let start = Instant::now();
    let mut report = CheckReport {
        verdict: Verdict::Safe,
        mm: cfg.mm,
        unwind: cfg.unwind,
        encoding: a.encoding.as_ref().map(|e| e.stats.clone()),
        solve: None,
        trace: None,
        replayed: None,
        time_s: 0.0,
    };
    if let Some(enc) = &a.encoding {
        let opts = SolveOptions { backend: cfg.backend.clone(), timeout: cfg.timeout, seed: cfg.seed };
        let result = solve(&enc.cnf, &opts)?;
        report.verdict = match result.status {
            Status::Sat => {
                let model = result.model.as_ref().expect("satisfiable result carries a model");
                let trace = reconstruct(model, &enc.vars, &a.ssa, &a.matches)?;
                report.replayed = Some(replay_validate(&trace, &a.ssa, &a.unrolled, cfg.mm));
                report.trace = Some(trace);
                Verdict::Violation
            }
            Status::Unsat => Verdict::Safe,
            Status::Timeout => Verdict::Timeout,
        };
        report.solve = Some(result.stats);
    }
    report.time_s = start.elapsed().as_secs_f64();
    Ok(report)
}

pub fn check(ast: &Ast, cfg: &CheckConfig) -> Result<CheckReport, CheckError> {
    let start = Instant::now();
    let mut report = check_analysis(&analyse(ast, cfg)?, cfg)?;
    report.time_s = start.elapsed().as_secs_f64();
    Ok(report)
}

pub fn check_source(src: &str, cfg: &CheckConfig) -> Result<CheckReport, CheckError> {
    check(&parse(src)?, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn verdict(src: &str, mm: MemoryModel) -> Verdict {
        check_source(src, &CheckConfig { mm, ..Default::default() }).unwrap().verdict
    }

    #[test]
    fn store_buffering_by_model() {
        let sb = "var x = 0; var y = 0;
            thread t1 { local r1; x = 1; r1 = y; }
            thread t2 { local r2; y = 1; r2 = x; }
            assert(!(r1 == 0 && r2 == 0));";
        assert_eq!(verdict(sb, MemoryModel::Sc), Verdict::Safe);
        assert_eq!(verdict(sb, MemoryModel::Tso), Verdict::Violation);
        assert_eq!(verdict(sb, MemoryModel::Pso), Verdict::Violation);
    }

    #[test]
    fn violation_reports_a_replayable_trace() {
        let src = "var x = 0; thread t { x = 1; assert(x == 0); }";
        let r = check_source(src, &CheckConfig::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Violation);
        assert_eq!(r.replayed, Some(true));
        assert!(r.trace.is_some() && r.solve.is_some());
    }

    #[test]
    fn no_assertion_is_safe_without_solving() {
        let r = check_source("var x; thread t { x = 1; }", &CheckConfig::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Safe);
        assert!(r.encoding.is_none() && r.solve.is_none());
    }

    #[test]
    fn loops_are_unwound() {
        let src = "var x = 0; thread t { local i; while (i < 3) { x = x + 1; i = i + 1; } } assert(x != 3);";
        assert_eq!(verdict(src, MemoryModel::Sc), Verdict::Violation);
        let cfg = CheckConfig { unwind: 2, ..Default::default() };
        assert_eq!(check_source(src, &cfg).unwrap().verdict, Verdict::Safe);
    }

    #[test]
    fn verdict_text_round_trips() {
        for v in [Verdict::Safe, Verdict::Violation, Verdict::Timeout] {
            assert_eq!(v.to_string().parse::<Verdict>().unwrap(), v);
        }
    }
}
