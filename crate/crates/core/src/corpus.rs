//! Test programs: the curated corpus with its manifest of expected
//! verdicts, and a seeded generator of small random programs for
//! differential testing.
//!
//! Manifest lines read `path,sc_verdict,tso_verdict,pso_verdict`; `#`
//! starts a comment line. Paths are relative to the manifest's directory.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::check::Verdict;
use crate::frontend::{Ast, BinOp, Expr, SharedDecl, Stmt, Thread, UnOp};
use crate::memmodel::MemoryModel;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}:{line}: {msg}")]
    Manifest { path: PathBuf, line: usize, msg: String },
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    /// Expected verdicts in `MemoryModel::ALL` order.
    pub expected: [Verdict; 3],
}

impl ManifestEntry {
    pub fn expected(&self, mm: MemoryModel) -> Verdict {
        self.expected[MemoryModel::ALL.iter().position(|&m| m == mm).expect("known model")]
    }
}

/// The curated corpus shipped with this crate.
pub fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus")
}

/// Reads and validates a manifest. Every line must name an existing file
/// and give exactly one SAFE or VIOLATION verdict for each of sc, tso and
/// pso, in that order; the verdicts must not contradict the inclusion of
/// weaker models' behaviours (a violation under a stronger model is also a
/// violation under every weaker one).
pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.into(), source })?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut entries: Vec<ManifestEntry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let err = |msg: String| CorpusError::Manifest { path: path.into(), line: i + 1, msg };
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(err(format!("expected 4 fields (path and one verdict per model), found {}", fields.len())));
        }
        let file = dir.join(fields[0]);
        if !file.is_file() {
            return Err(err(format!("no such program `{}`", fields[0])));
        }
        if entries.iter().any(|e| e.path == file) {
            return Err(err(format!("duplicate entry `{}`", fields[0])));
        }
        let mut expected = [Verdict::Safe; 3];
        for (slot, (field, mm)) in expected.iter_mut().zip(fields[1..].iter().zip(MemoryModel::ALL)) {
            *slot = match field.parse::<Verdict>() {
                Ok(v @ (Verdict::Safe | Verdict::Violation)) => v,
                _ => return Err(err(format!("`{field}` is not a verdict for {mm}"))),
            };
        }
        if expected.windows(2).any(|w| w[0] == Verdict::Violation && w[1] == Verdict::Safe) {
            return Err(err("a violation under a stronger model must persist under weaker ones".into()));
        }
        entries.push(ManifestEntry { path: file, expected });
    }
    Ok(entries)
}

/// Size limits for generated programs. Statement counts include nested
/// statements but not `local` declarations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub threads: usize,
    pub shared_vars: usize,
    pub stmts_per_thread: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { threads: 3, shared_vars: 3, stmts_per_thread: 5 }
    }
}

struct Gen<'a> {
    rng: ChaCha8Rng,
    vars: &'a [String],
    locals: Vec<String>,
    prefix: String,
    /// Thread index; each thread favours writing one variable and reading
    /// the next, which makes store-buffering and message-passing shapes
    /// common.
    home: usize,
    /// `(local, variable)` for every plain load.
    loads: Vec<(String, String)>,
    /// `(variable, value)` for every store of a constant.
    stores: Vec<(String, i64)>,
}

impl Gen<'_> {
    fn constant(&mut self) -> Expr {
        Expr::Int(self.rng.gen_range(0..=2))
    }

    fn shared(&mut self) -> String {
        self.vars.choose(&mut self.rng).expect("at least one variable").clone()
    }

    fn favoured(&mut self, offset: usize) -> String {
        if self.rng.gen_bool(0.85) {
            self.vars[(self.home + offset) % self.vars.len()].clone()
        } else {
            self.shared()
        }
    }

    fn local(&mut self, fresh: bool) -> String {
        if fresh || self.locals.is_empty() || self.rng.gen_bool(0.3) {
            let name = format!("{}{}", self.prefix, self.locals.len());
            self.locals.push(name.clone());
            name
        } else {
            self.locals.choose(&mut self.rng).unwrap().clone()
        }
    }

    fn atom(&mut self) -> Expr {
        match self.rng.gen_range(0..3) {
            0 => self.constant(),
            1 if !self.locals.is_empty() => Expr::Ident(self.locals.choose(&mut self.rng).unwrap().clone()),
            _ => Expr::Ident(self.shared()),
        }
    }

    fn expr(&mut self) -> Expr {
        match self.rng.gen_range(0..4) {
            0 => Expr::bin(BinOp::Add, self.atom(), self.atom()),
            1 => Expr::bin(BinOp::Sub, self.atom(), self.constant()),
            _ => self.atom(),
        }
    }

    fn cond(&mut self) -> Expr {
        let op = *[BinOp::Eq, BinOp::Ne, BinOp::Lt].choose(&mut self.rng).unwrap();
        let lhs = self.atom();
        Expr::bin(op, lhs, self.constant())
    }

    fn stmt(&mut self, budget: usize, depth: usize) -> (Stmt, usize) {
        // stores of distinct constants and loads into fresh locals dominate,
        // so that the final assertion can observe reorderings
        match self.rng.gen_range(0..10) {
            0..=3 => {
                let (x, v) = (self.favoured(0), self.rng.gen_range(1..=2));
                self.stores.push((x.clone(), v));
                (Stmt::Assign(x, Expr::Int(v)), 1)
            }
            4 => (Stmt::Assign(self.favoured(0), self.expr()), 1),
            5..=7 => self.load(),
            8 if self.rng.gen_bool(0.5) => {
                let rhs = self.expr();
                (Stmt::Assign(self.local(false), rhs), 1)
            }
            8 => (Stmt::Fence, 1),
            _ if budget >= 2 && depth == 0 => {
                let cond = self.cond();
                let size = self.rng.gen_range(1..=(budget - 1).min(2));
                let (then, used) = self.block(size, depth + 1);
                let rest = budget - 1 - used;
                let (els, used_else) =
                    if rest > 0 && self.rng.gen_bool(0.5) { self.block(1, depth + 1) } else { (Vec::new(), 0) };
                (Stmt::If(cond, then, els), 1 + used + used_else)
            }
            _ => self.load(),
        }
    }

    fn load(&mut self) -> (Stmt, usize) {
        let x = self.favoured(1);
        let r = self.local(true);
        self.loads.push((r.clone(), x.clone()));
        (Stmt::Assign(r, Expr::Ident(x)), 1)
    }

    fn block(&mut self, budget: usize, depth: usize) -> (Vec<Stmt>, usize) {
        let mut out = Vec::new();
        let mut used = 0;
        while used < budget {
            let (s, n) = self.stmt(budget - used, depth);
            out.push(s);
            used += n;
        }
        (out, used)
    }
}

#[derive(Clone, Copy)]
enum Op {
    W(usize, i64),
    R(usize),
}

/// What the final assertion looks at: the n-th skeleton load of a thread,
/// or the final value of a variable.
#[derive(Clone, Copy)]
enum Obs {
    Load(usize, usize),
    Final(usize),
}

struct Shape {
    threads: &'static [&'static [Op]],
    /// The outcome the assertion forbids; it distinguishes the memory
    /// models for most skeletons.
    outcome: &'static [(Obs, i64)],
}

/// Classic two-variable litmus skeletons: store buffering, message
/// passing, load buffering, 2+2W, S, R and write-to-read causality.
/// Thread bodies are later padded with fences and random statements.
const SHAPES: &[Shape] = {
    use Obs::*;
    use Op::*;
    &[
        Shape { threads: &[&[W(0, 1), R(1)], &[W(1, 1), R(0)]], outcome: &[(Load(0, 0), 0), (Load(1, 0), 0)] },
        Shape { threads: &[&[W(0, 1), W(1, 1)], &[R(1), R(0)]], outcome: &[(Load(1, 0), 1), (Load(1, 1), 0)] },
        Shape { threads: &[&[R(0), W(1, 1)], &[R(1), W(0, 1)]], outcome: &[(Load(0, 0), 1), (Load(1, 0), 1)] },
        Shape { threads: &[&[W(0, 1), W(1, 2)], &[W(1, 1), W(0, 2)]], outcome: &[(Final(0), 1), (Final(1), 1)] },
        Shape { threads: &[&[W(0, 2), W(1, 1)], &[R(1), W(0, 1)]], outcome: &[(Load(1, 0), 1), (Final(0), 2)] },
        Shape { threads: &[&[W(0, 1), W(1, 1)], &[W(1, 2), R(0)]], outcome: &[(Final(1), 2), (Load(1, 0), 0)] },
        Shape {
            threads: &[&[W(0, 1)], &[R(0), W(1, 1)], &[R(1), R(0)]],
            outcome: &[(Load(1, 0), 1), (Load(2, 0), 1), (Load(2, 1), 0)],
        },
    ]
};

impl Gen<'_> {
    /// A thread following `ops`, with a fence or a random statement
    /// sometimes slipped in between, within `budget` statements.
    fn shaped(&mut self, ops: &[Op], budget: usize) -> (Vec<Stmt>, Vec<String>) {
        let mut out = Vec::new();
        let mut skeleton_loads = Vec::new();
        let mut spare = budget.saturating_sub(ops.len());
        for (i, op) in ops.iter().enumerate() {
            if i > 0 && spare > 0 && self.rng.gen_bool(0.25) {
                spare -= 1;
                out.push(if self.rng.gen_bool(0.6) { Stmt::Fence } else { self.stmt(1, 1).0 });
            }
            out.push(match *op {
                Op::W(x, v) => {
                    let x = self.vars[x % self.vars.len()].clone();
                    self.stores.push((x.clone(), v));
                    Stmt::Assign(x, Expr::Int(v))
                }
                Op::R(x) => {
                    let x = self.vars[x % self.vars.len()].clone();
                    let r = self.local(true);
                    self.loads.push((r.clone(), x.clone()));
                    skeleton_loads.push(r.clone());
                    Stmt::Assign(r, Expr::Ident(x))
                }
            });
        }
        if spare > 0 && self.rng.gen_bool(0.3) {
            out.push(self.stmt(1, 1).0);
        }
        (out, skeleton_loads)
    }
}

/// A loop-free random program. The same seed and limits always give the
/// same text.
pub fn generate_random_program(seed: u64, limits: Limits) -> String {
    generate_random_ast(seed, limits).to_string()
}

pub fn generate_random_ast(seed: u64, limits: Limits) -> Ast {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // most programs grow from a litmus skeleton, the rest are free-form
    let shape = SHAPES
        .choose(&mut rng)
        .filter(|sh| rng.gen_bool(0.6) && sh.threads.len() <= limits.threads && limits.shared_vars >= 2 && limits.stmts_per_thread >= 3);
    let nvars = match shape {
        Some(_) => rng.gen_range(2..=limits.shared_vars.min(3)),
        None => rng.gen_range(1..=limits.shared_vars.max(1)),
    };
    // weak-memory effects need at least two threads
    let min_threads = shape.map_or(limits.threads.clamp(1, 2), |sh| sh.threads.len());
    let nthreads = rng.gen_range(min_threads..=limits.threads.max(min_threads));
    let vars: Vec<String> = ["x", "y", "z", "w", "v"].iter().cycle().take(nvars).map(|s| s.to_string()).collect();
    // name clashes past five variables are avoided with a numeric suffix
    let vars: Vec<String> =
        vars.iter().enumerate().map(|(i, v)| if i < 5 { v.clone() } else { format!("{v}{i}") }).collect();
    let shared: Vec<SharedDecl> = vars.iter().map(|v| SharedDecl { name: v.clone(), init: Some(if shape.is_some() || rng.gen_bool(0.8) { 0 } else { 1 }) }).collect();

    let mut threads = Vec::new();
    let mut thread_loads: Vec<Vec<(String, String)>> = Vec::new();
    let mut stores: Vec<(usize, String, i64)> = Vec::new();
    let mut skeleton_loads: Vec<Vec<String>> = Vec::new();
    for t in 0..nthreads {
        let mut g = Gen { rng: rng.clone(), vars: &vars, locals: Vec::new(), prefix: format!("r{t}_"), home: t, loads: Vec::new(), stores: Vec::new() };
        let n = g.rng.gen_range(limits.stmts_per_thread.clamp(1, 2)..=limits.stmts_per_thread.max(1));
        let body = match shape.and_then(|sh| sh.threads.get(t)) {
            Some(ops) => {
                let (body, loads) = g.shaped(ops, limits.stmts_per_thread);
                skeleton_loads.push(loads);
                body
            }
            None => g.block(n, 0).0,
        };
        rng = g.rng;
        let mut stmts: Vec<Stmt> = g.locals.iter().map(|l| Stmt::Local(l.clone())).collect();
        stmts.extend(body);
        thread_loads.push(g.loads);
        stores.extend(g.stores.into_iter().map(|(x, v)| (t, x, v)));
        threads.push(Thread { name: format!("t{t}"), body: stmts });
    }

    // the assertion forbids one combination of observed values: loads by
    // different threads, each seeing either the initial value or a value
    // another thread stores
    if let Some(sh) = shape.filter(|_| rng.gen_bool(0.7)) {
        let conj = sh
            .outcome
            .iter()
            .map(|&(obs, v)| {
                let name = match obs {
                    Obs::Load(t, i) => skeleton_loads[t][i].clone(),
                    Obs::Final(x) => vars[x].clone(),
                };
                Expr::bin(BinOp::Eq, Expr::Ident(name), Expr::Int(v))
            })
            .reduce(|a, b| Expr::bin(BinOp::And, a, b))
            .expect("outcomes are non-empty");
        return Ast { shared, threads, final_assert: Some(Expr::not(conj)) };
    }
    let init_of = |x: &str| shared.iter().find(|d: &&SharedDecl| d.name == x).and_then(|d| d.init).unwrap_or(0);
    let terms = rng.gen_range(2..=3);
    let mut conj: Option<Expr> = None;
    let mut used_threads: Vec<usize> = Vec::new();
    for _ in 0..terms {
        let candidates: Vec<usize> =
            (0..nthreads).filter(|t| !thread_loads[*t].is_empty() && !used_threads.contains(t)).collect();
        let (name, var, reader) = match candidates.choose(&mut rng) {
            Some(&t) if rng.gen_bool(0.9) => {
                used_threads.push(t);
                let (r, x) = thread_loads[t].choose(&mut rng).unwrap().clone();
                (r, x, Some(t))
            }
            _ => {
                let x = vars.choose(&mut rng).unwrap().clone();
                (x.clone(), x, None)
            }
        };
        let others: Vec<i64> =
            stores.iter().filter(|(t, x, _)| *x == var && Some(*t) != reader).map(|(_, _, v)| *v).collect();
        let value = match others.choose(&mut rng) {
            Some(&v) if rng.gen_bool(0.5) => v,
            _ => init_of(&var),
        };
        let eq = Expr::bin(BinOp::Eq, Expr::Ident(name), Expr::Int(value));
        conj = Some(match conj {
            None => eq,
            Some(c) => Expr::bin(BinOp::And, c, eq),
        });
    }
    let final_assert = Some(Expr::Unary(UnOp::Not, Box::new(conj.expect("at least one term"))));
    Ast { shared, threads, final_assert }
}

/// Number of statements in a block, not counting `local` declarations.
pub fn statement_count(stmts: &[Stmt]) -> usize {
    stmts
        .iter()
        .map(|s| match s {
            Stmt::Local(_) => 0,
            Stmt::If(_, t, e) => 1 + statement_count(t) + statement_count(e),
            Stmt::While(_, b) => 1 + statement_count(b),
            _ => 1,
        })
        .sum()
}
