//! `wmbmc` — bounded model checking of litmus-style programs under SC, TSO
//! and PSO.
//!
//! Exit codes: 0 safe, 10 violation, 2 parse or configuration error,
//! 3 solver error, 4 timeout, 5 disagreement with the explicit-state oracle.

mod bench;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use wmbmc_core::check::{analyse, check_analysis, CheckConfig, CheckError, Verdict};
use wmbmc_core::frontend::{parse, unroll, Ast};
use wmbmc_core::matches::to_dot;
use wmbmc_core::memmodel::MemoryModel;
use wmbmc_core::oracle::{explore, OracleConfig, OracleError};
use wmbmc_core::solve::Backend;
use wmbmc_sat::{write_dimacs, Cnf};

pub const EXIT_SAFE: u8 = 0;
pub const EXIT_VIOLATION: u8 = 10;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_SOLVER: u8 = 3;
pub const EXIT_TIMEOUT: u8 = 4;
pub const EXIT_DISAGREE: u8 = 5;

#[derive(Parser)]
#[command(name = "wmbmc", version, about = "Bounded model checker for SC, TSO and PSO programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check one program with the SAT encoding.
    Check(CheckArgs),
    /// Decide one program by explicit-state exploration.
    Oracle(OracleArgs),
    /// Check every `.litmus` file of a directory and write a CSV report.
    Bench(BenchArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// Memory model: sc, tso or pso.
    #[arg(long)]
    mm: MemoryModel,
    /// Loop unwinding bound.
    #[arg(long, default_value_t = 6)]
    unwind: usize,
    /// Width of program integers in bits.
    #[arg(long, default_value_t = 8)]
    value_bits: u32,
}

#[derive(Args)]
struct CheckArgs {
    file: PathBuf,
    #[command(flatten)]
    common: Common,
    /// Solver time limit in seconds.
    #[arg(long, default_value_t = 900.0)]
    timeout: f64,
    /// Also write the formula in DIMACS format.
    #[arg(long)]
    dimacs: Option<PathBuf>,
    /// `internal`, or a command that takes a DIMACS file as its last
    /// argument and prints `s`/`v` lines.
    #[arg(long, default_value = "internal")]
    solver: Backend,
    /// Print the counterexample trace.
    #[arg(long)]
    trace: bool,
    /// Print the SSA listing.
    #[arg(long)]
    dump_ssa: bool,
    /// Write the event graph in Graphviz format.
    #[arg(long)]
    dump_dot: Option<PathBuf>,
    /// Confirm the verdict by explicit-state exploration.
    #[arg(long)]
    oracle: bool,
    /// Solver seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct OracleArgs {
    file: PathBuf,
    #[command(flatten)]
    common: Common,
    /// Values tried for shared variables without an initialiser.
    #[arg(long, value_delimiter = ',', default_values_t = [0i64, 1])]
    domain: Vec<i64>,
    /// Maximum number of states to visit.
    #[arg(long, default_value_t = 10_000_000)]
    budget: usize,
}

#[derive(Args)]
pub struct BenchArgs {
    dir: PathBuf,
    /// Memory models, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = MemoryModel::ALL)]
    mm: Vec<MemoryModel>,
    #[arg(long)]
    csv: PathBuf,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, default_value_t = 6)]
    unwind: usize,
    #[arg(long, default_value_t = 8)]
    value_bits: u32,
    /// Per-instance solver time limit in seconds.
    #[arg(long, default_value_t = 900.0)]
    timeout: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// A failure with the exit code that reports it.
struct Failure(u8, anyhow::Error);

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(EXIT_USAGE, e.into())
    }
}

fn exit_code_for(e: &CheckError) -> u8 {
    match e {
        CheckError::Solve(_) | CheckError::Witness(_) => EXIT_SOLVER,
        _ => EXIT_USAGE,
    }
}

fn timeout(secs: f64) -> Result<Duration, Failure> {
    Duration::try_from_secs_f64(secs).map_err(|e| Failure(EXIT_USAGE, anyhow::anyhow!("invalid timeout: {e}")))
}

fn read_program(path: &PathBuf) -> Result<Ast, Failure> {
    let src = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(parse(&src).with_context(|| format!("in {}", path.display()))?)
}

fn oracle_verdict(unrolled: &Ast, mm: MemoryModel, cfg: &OracleConfig) -> Result<(Verdict, usize), Failure> {
    match explore(unrolled, mm, cfg) {
        Ok(x) => Ok((if x.violation { Verdict::Violation } else { Verdict::Safe }, x.states)),
        Err(e @ OracleError::StateSpaceBudgetExceeded(_)) => Err(Failure(EXIT_TIMEOUT, e.into())),
        Err(e) => Err(e.into()),
    }
}

fn run_check(args: CheckArgs) -> Result<u8, Failure> {
    let ast = read_program(&args.file)?;
    let cfg = CheckConfig {
        mm: args.common.mm,
        unwind: args.common.unwind,
        value_bits: args.common.value_bits,
        timeout: timeout(args.timeout)?,
        backend: args.solver,
        seed: args.seed,
    };
    let analysis = analyse(&ast, &cfg).map_err(|e| Failure(exit_code_for(&e), e.into()))?;
    if args.dump_ssa {
        print!("{}", analysis.ssa.dump());
    }
    if let Some(path) = &args.dump_dot {
        std::fs::write(path, to_dot(&analysis.ssa, &analysis.ppo, &analysis.matches))
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    if let Some(path) = &args.dimacs {
        let unsat;
        let cnf = match analysis.cnf() {
            Some(cnf) => cnf,
            None => {
                // nothing can be violated: export the empty clause
                let mut c = Cnf::new(0);
                c.add_clause(Vec::new());
                unsat = c;
                &unsat
            }
        };
        let file = std::fs::File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
        write_dimacs(cnf, std::io::BufWriter::new(file))?;
    }

    let report = check_analysis(&analysis, &cfg).map_err(|e| Failure(exit_code_for(&e), e.into()))?;
    if let Some(stats) = &report.encoding {
        println!("encoding: {stats}");
    }
    if let Some(s) = &report.solve {
        println!(
            "solver: decisions={} propagations={} conflicts={} rho={}",
            s.decisions,
            s.propagations,
            s.conflicts,
            wmbmc_sat::exploration_efficacy(s)
        );
    }
    let code = match report.verdict {
        Verdict::Safe => {
            println!("VERDICT: SAFE(bound={})", cfg.unwind);
            EXIT_SAFE
        }
        Verdict::Violation => {
            println!("VERDICT: VIOLATION");
            if args.trace {
                if let Some(t) = &report.trace {
                    print!("{t}");
                }
            }
            if report.replayed == Some(false) {
                eprintln!("error: the counterexample does not replay on the store-buffer machine");
                return Ok(EXIT_DISAGREE);
            }
            EXIT_VIOLATION
        }
        Verdict::Timeout => {
            println!("VERDICT: TIMEOUT");
            return Ok(EXIT_TIMEOUT);
        }
    };
    if args.oracle {
        let ocfg = OracleConfig { value_width: cfg.value_bits, ..Default::default() };
        let (expected, states) = oracle_verdict(&analysis.unrolled, cfg.mm, &ocfg)?;
        println!("oracle: {expected} ({states} states)");
        if expected != report.verdict {
            eprintln!("error: oracle says {expected}, SAT encoding says {}", report.verdict);
            return Ok(EXIT_DISAGREE);
        }
    }
    Ok(code)
}

fn run_oracle(args: OracleArgs) -> Result<u8, Failure> {
    let ast = read_program(&args.file)?;
    let unrolled = unroll(&ast, args.common.unwind)?;
    let cfg = OracleConfig { value_width: args.common.value_bits, domain: args.domain, budget: args.budget };
    if !(2..=64).contains(&cfg.value_width) {
        return Err(anyhow::anyhow!("value width must be in 2..=64, got {}", cfg.value_width).into());
    }
    let (verdict, states) = oracle_verdict(&unrolled, args.common.mm, &cfg)?;
    println!("states: {states}");
    Ok(match verdict {
        Verdict::Violation => {
            println!("VERDICT: VIOLATION");
            EXIT_VIOLATION
        }
        _ => {
            println!("VERDICT: SAFE(bound={})", args.common.unwind);
            EXIT_SAFE
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Check(a) => run_check(a),
        Command::Oracle(a) => run_oracle(a),
        Command::Bench(a) => bench::run(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
