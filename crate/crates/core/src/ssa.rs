//! Guarded SSA construction.
//!
//! Every occurrence of a shared variable becomes its own event with a fresh
//! value symbol: occurrences in expression position are reads (left
//! unconstrained here, to be bound by read-from matches later), occurrences
//! on the left of an assignment are writes. Locals never produce events;
//! their dataflow is carried by symbols, guarded equalities and phi merges.
//! Each shared variable additionally receives an initial write in a
//! pseudo-thread.
//!
//! Symbols are numbered per shared variable in one global sequence: the
//! initial write is `x#0`, then occurrences of `x` are numbered thread by
//! thread in program order (the checker thread last). Within a statement,
//! reads are numbered left to right before the statement's write.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::arith;
use crate::frontend::{Ast, BinOp, Expr, Stmt, UnOp};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SsaError {
    #[error("literal {value} does not fit in {width} value bits")]
    WidthOverflow { value: i64, width: u32 },
    #[error("value width must be in 2..=64, got {0}")]
    InvalidWidth(u32),
    #[error("program still contains loops; unroll it first")]
    NotLoopFree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SymId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GuardId(pub usize);

/// Owner of an event: the initialisation pseudo-thread or a real thread
/// (user threads first, then the checker thread if there is one).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ThreadId {
    Init,
    Thread(usize),
}

impl ThreadId {
    /// Numeric index with the initialisation pseudo-thread at −1.
    pub fn index(self) -> isize {
        match self {
            ThreadId::Init => -1,
            ThreadId::Thread(t) => t as isize,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Read,
    Write,
    Fence,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub id: EventId,
    pub thread: ThreadId,
    pub kind: EventKind,
    /// Index into `SsaSystem::vars`; `None` for fences.
    pub label: Option<usize>,
    /// Position in the per-variable symbol sequence (0 for fences).
    pub ssa_index: usize,
    pub guard: GuardId,
    /// Value read or written; `None` for fences.
    pub value: Option<SymId>,
}

impl Event {
    pub fn is_read(&self) -> bool {
        self.kind == EventKind::Read
    }
    pub fn is_write(&self) -> bool {
        self.kind == EventKind::Write
    }
    pub fn is_fence(&self) -> bool {
        self.kind == EventKind::Fence
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SymbolKind {
    /// Value observed by a read event.
    Read(EventId),
    /// Value stored by a write event.
    Write(EventId),
    /// One version of a thread-local variable.
    Local { thread: usize, name: String },
    /// Merge of two versions of a local after a branch.
    Phi { thread: usize, name: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Symbol {
    pub name: String,
    pub kind: SymbolKind,
}

/// Value-level term over symbols, evaluated in fixed-width two's
/// complement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Term {
    Const(i64),
    Sym(SymId),
    Unary(UnOp, Box<Term>),
    Binary(BinOp, Box<Term>, Box<Term>),
    /// `if guard then a else b`.
    Ite(GuardId, Box<Term>, Box<Term>),
}

impl Term {
    pub fn eval(&self, sym: &dyn Fn(SymId) -> i64, guard: &dyn Fn(GuardId) -> bool, width: u32) -> i64 {
        match self {
            Term::Const(v) => arith::wrap(*v as i128, width),
            Term::Sym(s) => sym(*s),
            Term::Unary(op, a) => arith::unop(*op, a.eval(sym, guard, width), width),
            Term::Binary(op, a, b) => {
                arith::binop(*op, a.eval(sym, guard, width), b.eval(sym, guard, width), width)
            }
            Term::Ite(g, a, b) => {
                if guard(*g) {
                    a.eval(sym, guard, width)
                } else {
                    b.eval(sym, guard, width)
                }
            }
        }
    }

    pub fn symbols(&self, out: &mut Vec<SymId>) {
        match self {
            Term::Const(_) => {}
            Term::Sym(s) => out.push(*s),
            Term::Unary(_, a) => a.symbols(out),
            Term::Binary(_, a, b) | Term::Ite(_, a, b) => {
                a.symbols(out);
                b.symbols(out);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GuardDef {
    True,
    /// The term is nonzero.
    Cond(Term),
    And(GuardId, GuardId),
    AndNot(GuardId, GuardId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Constraint {
    /// Binds the guard atom to its definition.
    DefineGuard(GuardId),
    /// `guard ⇒ lhs = rhs`.
    Equal { guard: GuardId, lhs: SymId, rhs: Term },
    /// `guard ⇒ cond ≠ 0`; paths violating it are discarded.
    Assume { guard: GuardId, cond: Term },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assertion {
    pub guard: GuardId,
    pub cond: Term,
    pub thread: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThreadInfo {
    pub name: String,
    /// The synthetic thread that evaluates a top-level assertion after all
    /// other threads have finished.
    pub checker: bool,
    /// Events in program order.
    pub events: Vec<EventId>,
    pub entry_guard: GuardId,
    /// Range of `SsaSystem::constraints` produced by this thread.
    pub constraints: std::ops::Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SsaSystem {
    pub vars: Vec<String>,
    /// Initial write of each shared variable, indexed like `vars`.
    pub init_events: Vec<EventId>,
    pub threads: Vec<ThreadInfo>,
    pub events: Vec<Event>,
    pub symbols: Vec<Symbol>,
    pub guards: Vec<GuardDef>,
    pub constraints: Vec<Constraint>,
    pub asserts: Vec<Assertion>,
    pub value_width: u32,
    /// Constraints of the initialisation pseudo-thread.
    pub init_constraints: std::ops::Range<usize>,
}

impl SsaSystem {
    pub fn event(&self, id: EventId) -> &Event {
        &self.events[id.0]
    }

    pub fn reads(&self) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(|e| e.is_read())
    }

    pub fn writes(&self) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(|e| e.is_write())
    }

    /// Number of read and write events, initial writes included.
    pub fn k(&self) -> usize {
        self.events.iter().filter(|e| !e.is_fence()).count()
    }

    pub fn checker(&self) -> Option<usize> {
        self.threads.iter().position(|t| t.checker)
    }

    pub fn guard_is_true(&self, g: GuardId) -> bool {
        matches!(self.guards[g.0], GuardDef::True)
    }

    /// `thread:kind label#ssa`, e.g. `t1:W x#1`.
    pub fn describe_event(&self, id: EventId) -> String {
        let e = self.event(id);
        let thread = match e.thread {
            ThreadId::Init => "init",
            ThreadId::Thread(t) => &self.threads[t].name,
        };
        match e.kind {
            EventKind::Fence => format!("{thread}:F"),
            EventKind::Read => format!("{thread}:R {}#{}", self.vars[e.label.unwrap()], e.ssa_index),
            EventKind::Write => format!("{thread}:W {}#{}", self.vars[e.label.unwrap()], e.ssa_index),
        }
    }

    pub fn term_to_string(&self, t: &Term) -> String {
        let mut s = String::new();
        self.fmt_term(t, &mut s, true);
        s
    }

    fn fmt_term(&self, t: &Term, out: &mut String, top: bool) {
        match t {
            Term::Const(v) => {
                let _ = write!(out, "{v}");
            }
            Term::Sym(s) => out.push_str(&self.symbols[s.0].name),
            Term::Unary(op, a) => {
                out.push_str(match op {
                    UnOp::Not => "!",
                    UnOp::Neg => "-",
                });
                self.fmt_term(a, out, false);
            }
            Term::Binary(op, a, b) => {
                if !top {
                    out.push('(');
                }
                self.fmt_term(a, out, false);
                let _ = write!(out, " {} ", op.symbol());
                self.fmt_term(b, out, false);
                if !top {
                    out.push(')');
                }
            }
            Term::Ite(g, a, b) => {
                if !top {
                    out.push('(');
                }
                let _ = write!(out, "g{} ? ", g.0);
                self.fmt_term(a, out, false);
                out.push_str(" : ");
                self.fmt_term(b, out, false);
                if !top {
                    out.push(')');
                }
            }
        }
    }

    fn fmt_constraint(&self, c: &Constraint) -> String {
        match c {
            Constraint::DefineGuard(g) => match &self.guards[g.0] {
                GuardDef::True => format!("g{} := true", g.0),
                GuardDef::Cond(t) => format!("g{} := {}", g.0, self.term_to_string(t)),
                GuardDef::And(a, b) => format!("g{} := g{} && g{}", g.0, a.0, b.0),
                GuardDef::AndNot(a, b) => format!("g{} := g{} && !g{}", g.0, a.0, b.0),
            },
            Constraint::Equal { guard, lhs, rhs } => {
                format!("g{} => ({} = {})", guard.0, self.symbols[lhs.0].name, self.term_to_string(rhs))
            }
            Constraint::Assume { guard, cond } => {
                format!("assume g{} => ({})", guard.0, self.term_to_string(cond))
            }
        }
    }

    /// Textual listing, one constraint per line, grouped by thread.
    pub fn dump(&self) -> String {
        let mut out = String::from("init:\n");
        for c in &self.constraints[self.init_constraints.clone()] {
            let _ = writeln!(out, "  {}", self.fmt_constraint(c));
        }
        for (ti, t) in self.threads.iter().enumerate() {
            let _ = writeln!(out, "thread {}{}:", t.name, if t.checker { " (checker)" } else { "" });
            for c in &self.constraints[t.constraints.clone()] {
                let _ = writeln!(out, "  {}", self.fmt_constraint(c));
            }
            for a in self.asserts.iter().filter(|a| a.thread == ti) {
                let _ = writeln!(out, "  assert g{} => ({})", a.guard.0, self.term_to_string(&a.cond));
            }
        }
        out
    }
}

/// All assertion obligations as (guard, condition) pairs; a violation is
/// any obligation whose guard holds while its condition is zero.
pub fn extract_asserts(ssa: &SsaSystem) -> Vec<(GuardId, Term)> {
    ssa.asserts.iter().map(|a| (a.guard, a.cond.clone())).collect()
}

/// Name of the synthetic thread holding a top-level assertion.
pub const CHECKER_THREAD: &str = "assert";

struct Builder<'a> {
    ast: &'a Ast,
    width: u32,
    sys: SsaSystem,
    next_index: Vec<usize>,
    local_versions: HashMap<(usize, String), usize>,
}

type Env = BTreeMap<String, Term>;

impl Builder<'_> {
    fn guard(&mut self, def: GuardDef) -> GuardId {
        let id = GuardId(self.sys.guards.len());
        self.sys.guards.push(def);
        self.sys.constraints.push(Constraint::DefineGuard(id));
        id
    }

    fn symbol(&mut self, name: String, kind: SymbolKind) -> SymId {
        let id = SymId(self.sys.symbols.len());
        self.sys.symbols.push(Symbol { name, kind });
        id
    }

    fn event(&mut self, thread: ThreadId, kind: EventKind, label: Option<usize>, guard: GuardId) -> EventId {
        let id = EventId(self.sys.events.len());
        let ssa_index = match label {
            Some(v) => {
                let i = self.next_index[v];
                self.next_index[v] += 1;
                i
            }
            None => 0,
        };
        let value = label.map(|v| {
            let name = format!("{}#{}", self.sys.vars[v], ssa_index);
            let kind = if kind == EventKind::Read { SymbolKind::Read(id) } else { SymbolKind::Write(id) };
            self.symbol(name, kind)
        });
        self.sys.events.push(Event { id, thread, kind, label, ssa_index, guard, value });
        if let ThreadId::Thread(t) = thread {
            self.sys.threads[t].events.push(id);
        }
        id
    }

    fn constant(&self, v: i64) -> Result<Term, SsaError> {
        if arith::fits(v, self.width) {
            Ok(Term::Const(v))
        } else {
            Err(SsaError::WidthOverflow { value: v, width: self.width })
        }
    }

    fn local_symbol(&mut self, thread: usize, name: &str, phi: bool) -> SymId {
        let n = self.local_versions.entry((thread, name.to_string())).or_insert(0);
        *n += 1;
        let tname = &self.sys.threads[thread].name;
        let (sname, kind) = if phi {
            (format!("{tname}.{name}#phi{n}"), SymbolKind::Phi { thread, name: name.to_string() })
        } else {
            (format!("{tname}.{name}#{n}"), SymbolKind::Local { thread, name: name.to_string() })
        };
        self.symbol(sname, kind)
    }

    fn expr(&mut self, e: &Expr, thread: usize, guard: GuardId, env: &Env) -> Result<Term, SsaError> {
        Ok(match e {
            Expr::Int(v) => self.constant(*v)?,
            Expr::Ident(name) => match self.ast.shared_index(name) {
                Some(v) => {
                    let ev = self.event(ThreadId::Thread(thread), EventKind::Read, Some(v), guard);
                    Term::Sym(self.sys.events[ev.0].value.unwrap())
                }
                None => env.get(name).cloned().unwrap_or(Term::Const(0)),
            },
            Expr::Unary(op, a) => Term::Unary(*op, Box::new(self.expr(a, thread, guard, env)?)),
            Expr::Binary(op, a, b) => {
                let a = self.expr(a, thread, guard, env)?;
                let b = self.expr(b, thread, guard, env)?;
                Term::Binary(*op, Box::new(a), Box::new(b))
            }
        })
    }

    fn block(&mut self, stmts: &[Stmt], thread: usize, guard: GuardId, env: &mut Env) -> Result<(), SsaError> {
        for s in stmts {
            self.stmt(s, thread, guard, env)?;
        }
        Ok(())
    }

    fn stmt(&mut self, s: &Stmt, thread: usize, guard: GuardId, env: &mut Env) -> Result<(), SsaError> {
        match s {
            Stmt::Local(name) => {
                env.insert(name.clone(), Term::Const(0));
            }
            Stmt::Assign(name, rhs) => {
                let rhs = self.expr(rhs, thread, guard, env)?;
                let lhs = match self.ast.shared_index(name) {
                    Some(v) => {
                        let ev = self.event(ThreadId::Thread(thread), EventKind::Write, Some(v), guard);
                        self.sys.events[ev.0].value.unwrap()
                    }
                    None => {
                        let sym = self.local_symbol(thread, name, false);
                        env.insert(name.clone(), Term::Sym(sym));
                        sym
                    }
                };
                self.sys.constraints.push(Constraint::Equal { guard, lhs, rhs });
            }
            Stmt::If(c, then_b, else_b) => {
                let cond = self.expr(c, thread, guard, env)?;
                let gc = self.guard(GuardDef::Cond(cond));
                let gt = self.guard(GuardDef::And(guard, gc));
                let ge = self.guard(GuardDef::AndNot(guard, gc));
                let mut then_env = env.clone();
                self.block(then_b, thread, gt, &mut then_env)?;
                let mut else_env = env.clone();
                self.block(else_b, thread, ge, &mut else_env)?;
                // locals share one thread-wide scope, so a local first declared in
                // one branch is still visible (as zero) on the other path
                let names: std::collections::BTreeSet<String> =
                    then_env.keys().chain(else_env.keys()).cloned().collect();
                for name in names {
                    let zero = Term::Const(0);
                    let t = then_env.get(&name).unwrap_or(&zero);
                    let e = else_env.get(&name).unwrap_or(&zero);
                    let merged = if t == e {
                        t.clone()
                    } else {
                        let phi = self.local_symbol(thread, &name, true);
                        let rhs = Term::Ite(gc, Box::new(t.clone()), Box::new(e.clone()));
                        self.sys.constraints.push(Constraint::Equal { guard, lhs: phi, rhs });
                        Term::Sym(phi)
                    };
                    env.insert(name, merged);
                }
            }
            Stmt::While(..) => return Err(SsaError::NotLoopFree),
            Stmt::Fence => {
                self.event(ThreadId::Thread(thread), EventKind::Fence, None, guard);
            }
            Stmt::Assert(c) => {
                let cond = self.expr(c, thread, guard, env)?;
                self.sys.asserts.push(Assertion { guard, cond, thread });
            }
            Stmt::Assume(c) => {
                let cond = self.expr(c, thread, guard, env)?;
                self.sys.constraints.push(Constraint::Assume { guard, cond });
            }
        }
        Ok(())
    }
}

/// Builds the guarded SSA form of a loop-free program with `value_width`-bit
/// values.
pub fn build_ssa(ast: &Ast, value_width: u32) -> Result<SsaSystem, SsaError> {
    if !(2..=64).contains(&value_width) {
        return Err(SsaError::InvalidWidth(value_width));
    }
    if !ast.is_loop_free() {
        return Err(SsaError::NotLoopFree);
    }
    let vars: Vec<String> = ast.shared.iter().map(|d| d.name.clone()).collect();
    let mut b = Builder {
        ast,
        width: value_width,
        sys: SsaSystem {
            vars: vars.clone(),
            init_events: Vec::new(),
            threads: Vec::new(),
            events: Vec::new(),
            symbols: Vec::new(),
            guards: Vec::new(),
            constraints: Vec::new(),
            asserts: Vec::new(),
            value_width,
            init_constraints: 0..0,
        },
        next_index: vec![0; vars.len()],
        local_versions: HashMap::new(),
    };

    let g_init = b.guard(GuardDef::True);
    for (v, decl) in ast.shared.iter().enumerate() {
        let ev = b.event(ThreadId::Init, EventKind::Write, Some(v), g_init);
        b.sys.init_events.push(ev);
        if let Some(init) = decl.init {
            let rhs = b.constant(init)?;
            let lhs = b.sys.events[ev.0].value.unwrap();
            b.sys.constraints.push(Constraint::Equal { guard: g_init, lhs, rhs });
        }
    }
    b.sys.init_constraints = 0..b.sys.constraints.len();

    let mut final_envs = Vec::new();
    for (ti, t) in ast.threads.iter().enumerate() {
        let start = b.sys.constraints.len();
        b.sys.threads.push(ThreadInfo {
            name: t.name.clone(),
            checker: false,
            events: Vec::new(),
            entry_guard: GuardId(usize::MAX),
            constraints: start..start,
        });
        let entry = b.guard(GuardDef::True);
        b.sys.threads[ti].entry_guard = entry;
        let mut env = Env::new();
        b.block(&t.body, ti, entry, &mut env)?;
        b.sys.threads[ti].constraints = start..b.sys.constraints.len();
        final_envs.push(env);
    }

    if let Some(cond) = &ast.final_assert {
        let ti = b.sys.threads.len();
        let start = b.sys.constraints.len();
        b.sys.threads.push(ThreadInfo {
            name: CHECKER_THREAD.to_string(),
            checker: true,
            events: Vec::new(),
            entry_guard: GuardId(usize::MAX),
            constraints: start..start,
        });
        let entry = b.guard(GuardDef::True);
        b.sys.threads[ti].entry_guard = entry;
        // locals named in the final assertion observe their owner's last value
        let mut env = Env::new();
        for name in cond.idents() {
            if let Some(owner) = ast.local_owner(name) {
                let v = final_envs[owner].get(name).cloned().unwrap_or(Term::Const(0));
                env.insert(name.to_string(), v);
            }
        }
        let cond = b.expr(cond, ti, entry, &env)?;
        b.sys.asserts.push(Assertion { guard: entry, cond, thread: ti });
        b.sys.threads[ti].constraints = start..b.sys.constraints.len();
    }
    Ok(b.sys)
}

impl fmt::Display for SsaSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.dump())
    }
}
