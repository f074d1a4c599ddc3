//! Explicit-state store-buffer machine.
//!
//! Each thread is compiled to a small instruction list in which every
//! shared-variable occurrence is its own load or store step. Under SC a
//! store writes memory directly; under TSO it is appended to the thread's
//! FIFO buffer and only the oldest entry may be flushed; under PSO any entry
//! that is the oldest for its variable may be flushed. A load returns the
//! youngest buffered value for its variable in the loading thread, else
//! memory. A fence can only execute once the thread's buffer is empty, and
//! the final-assertion checker runs once every thread has finished and every
//! buffer has drained.
//!
//! Instructions that touch only thread-local state are executed eagerly
//! right after each visible step. An assertion failure is recorded and
//! counted only in a terminal state, so a later failing assumption still
//! discards the run.

use std::collections::HashMap;

use thiserror::Error;

use crate::arith;
use crate::frontend::{Ast, BinOp, Expr, Stmt, UnOp};
use crate::memmodel::MemoryModel;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("transition {0:?} is not enabled")]
    NoSuchTransition(Choice),
    #[error("state-space budget of {0} states exceeded")]
    StateSpaceBudgetExceeded(usize),
    #[error("program still contains loops; unroll it first")]
    NotLoopFree,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleConfig {
    pub value_width: u32,
    /// Candidate values of uninitialised shared variables.
    pub domain: Vec<i64>,
    pub budget: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { value_width: 8, domain: vec![0, 1], budget: 10_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum OExpr {
    Const(i64),
    Slot(usize),
    /// A slot of another thread (final assertion reading a local).
    Foreign(usize, usize),
    Unary(UnOp, Box<OExpr>),
    Binary(BinOp, Box<OExpr>, Box<OExpr>),
}

/// Position of a load, store or fence among its thread's memory events, in
/// the same order the SSA builder numbers them.
pub type Key = usize;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Instr {
    Load { var: usize, slot: usize, key: Key },
    Store { var: usize, expr: OExpr, key: Key },
    Fence { key: Key },
    /// Start of the final-assertion checker.
    Join,
    Set { slot: usize, expr: OExpr },
    BranchIfZero { cond: OExpr, target: usize },
    Jump { target: usize },
    Assert { cond: OExpr },
    Assume { cond: OExpr },
}

impl Instr {
    fn is_silent(&self) -> bool {
        !matches!(self, Instr::Load { .. } | Instr::Store { .. } | Instr::Fence { .. } | Instr::Join)
    }
}

#[derive(Debug, Clone)]
struct ThreadCode {
    instrs: Vec<Instr>,
    slots: usize,
    checker: bool,
}

/// One buffered store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Pending {
    pub var: usize,
    pub value: i64,
    pub key: Key,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MachineState {
    pub memory: Vec<i64>,
    /// Per thread, oldest first.
    pub buffers: Vec<Vec<Pending>>,
    pub pcs: Vec<usize>,
    pub slots: Vec<Vec<i64>>,
    /// Some reached assertion has failed.
    pub violated: bool,
    /// A failed assumption discarded this run.
    pub dead: bool,
}

/// A transition: run the next visible instruction of a thread, or flush the
/// buffered store at the given index of a thread's buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Choice {
    Exec(usize),
    Flush(usize, usize),
}

/// Kind and key of a thread's next visible instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NextOp {
    Load(Key),
    Store(Key),
    Fence(Key),
    Join,
}

/// What a transition did, for replaying traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Effect {
    Load { thread: usize, var: usize, key: Key, value: i64, forwarded_from: Option<Key> },
    Store { thread: usize, var: usize, key: Key, value: i64 },
    Fence { thread: usize, key: Key },
    /// The checker started.
    Join,
    /// A buffered store reached memory.
    Commit { thread: usize, var: usize, key: Key, value: i64 },
}

#[derive(Debug, Clone)]
pub struct Machine {
    mm: MemoryModel,
    width: u32,
    threads: Vec<ThreadCode>,
    init: Vec<Option<i64>>,
}

struct Compiler<'a> {
    ast: &'a Ast,
    code: Vec<Instr>,
    locals: HashMap<String, usize>,
    slots: usize,
    keys: usize,
}

impl Compiler<'_> {
    fn slot(&mut self) -> usize {
        self.slots += 1;
        self.slots - 1
    }

    fn local(&mut self, name: &str) -> usize {
        if let Some(&s) = self.locals.get(name) {
            return s;
        }
        let s = self.slot();
        self.locals.insert(name.to_string(), s);
        s
    }

    fn key(&mut self) -> Key {
        self.keys += 1;
        self.keys - 1
    }

    fn expr(&mut self, e: &Expr, foreign: &dyn Fn(&str) -> Option<OExpr>) -> OExpr {
        match e {
            Expr::Int(v) => OExpr::Const(*v),
            Expr::Ident(name) => match self.ast.shared_index(name) {
                Some(var) => {
                    let slot = self.slot();
                    let key = self.key();
                    self.code.push(Instr::Load { var, slot, key });
                    OExpr::Slot(slot)
                }
                None => match foreign(name) {
                    Some(x) => x,
                    None => OExpr::Slot(self.local(name)),
                },
            },
            Expr::Unary(op, a) => OExpr::Unary(*op, Box::new(self.expr(a, foreign))),
            Expr::Binary(op, a, b) => {
                let a = self.expr(a, foreign);
                let b = self.expr(b, foreign);
                OExpr::Binary(*op, Box::new(a), Box::new(b))
            }
        }
    }

    fn block(&mut self, stmts: &[Stmt]) -> Result<(), OracleError> {
        let none = |_: &str| None;
        for s in stmts {
            match s {
                Stmt::Local(name) => {
                    let slot = self.local(name);
                    self.code.push(Instr::Set { slot, expr: OExpr::Const(0) });
                }
                Stmt::Assign(name, rhs) => {
                    let expr = self.expr(rhs, &none);
                    match self.ast.shared_index(name) {
                        Some(var) => {
                            let key = self.key();
                            self.code.push(Instr::Store { var, expr, key });
                        }
                        None => {
                            let slot = self.local(name);
                            self.code.push(Instr::Set { slot, expr });
                        }
                    }
                }
                Stmt::If(c, t, e) => {
                    let cond = self.expr(c, &none);
                    let branch = self.code.len();
                    self.code.push(Instr::BranchIfZero { cond, target: usize::MAX });
                    self.block(t)?;
                    let jump = self.code.len();
                    self.code.push(Instr::Jump { target: usize::MAX });
                    let else_start = self.code.len();
                    self.block(e)?;
                    let end = self.code.len();
                    if let Instr::BranchIfZero { target, .. } = &mut self.code[branch] {
                        *target = else_start;
                    }
                    if let Instr::Jump { target } = &mut self.code[jump] {
                        *target = end;
                    }
                }
                Stmt::While(..) => return Err(OracleError::NotLoopFree),
                Stmt::Fence => {
                    let key = self.key();
                    self.code.push(Instr::Fence { key });
                }
                Stmt::Assert(c) => {
                    let cond = self.expr(c, &none);
                    self.code.push(Instr::Assert { cond });
                }
                Stmt::Assume(c) => {
                    let cond = self.expr(c, &none);
                    self.code.push(Instr::Assume { cond });
                }
            }
        }
        Ok(())
    }
}

impl Machine {
    pub fn new(ast: &Ast, mm: MemoryModel, value_width: u32) -> Result<Machine, OracleError> {
        if !ast.is_loop_free() {
            return Err(OracleError::NotLoopFree);
        }
        let mut threads = Vec::new();
        let mut local_maps = Vec::new();
        for t in &ast.threads {
            let mut c = Compiler { ast, code: Vec::new(), locals: HashMap::new(), slots: 0, keys: 0 };
            c.block(&t.body)?;
            threads.push(ThreadCode { instrs: c.code, slots: c.slots, checker: false });
            local_maps.push(c.locals);
        }
        if let Some(cond) = &ast.final_assert {
            let mut c = Compiler { ast, code: vec![Instr::Join], locals: HashMap::new(), slots: 0, keys: 0 };
            let foreign = |name: &str| {
                let owner = ast.local_owner(name)?;
                // a declared but never touched local still reads as zero
                Some(local_maps[owner].get(name).map_or(OExpr::Const(0), |&s| OExpr::Foreign(owner, s)))
            };
            let cond = c.expr(cond, &foreign);
            c.code.push(Instr::Assert { cond });
            threads.push(ThreadCode { instrs: c.code, slots: c.slots, checker: true });
        }
        Ok(Machine { mm, width: value_width, threads, init: ast.shared.iter().map(|d| d.init).collect() })
    }

    pub fn thread_count(&self) -> usize {
        self.threads.len()
    }

    fn eval(&self, e: &OExpr, s: &MachineState, t: usize) -> i64 {
        match e {
            OExpr::Const(v) => arith::wrap(*v as i128, self.width),
            OExpr::Slot(i) => s.slots[t][*i],
            OExpr::Foreign(o, i) => s.slots[*o][*i],
            OExpr::Unary(op, a) => arith::unop(*op, self.eval(a, s, t), self.width),
            OExpr::Binary(op, a, b) => arith::binop(*op, self.eval(a, s, t), self.eval(b, s, t), self.width),
        }
    }

    /// Runs thread-local instructions of `t` until the next visible one.
    fn settle(&self, s: &mut MachineState, t: usize) {
        let code = &self.threads[t].instrs;
        while !s.dead && s.pcs[t] < code.len() && code[s.pcs[t]].is_silent() {
            let pc = s.pcs[t];
            s.pcs[t] = pc + 1;
            match &code[pc] {
                Instr::Set { slot, expr } => s.slots[t][*slot] = self.eval(expr, s, t),
                Instr::BranchIfZero { cond, target } => {
                    if self.eval(cond, s, t) == 0 {
                        s.pcs[t] = *target;
                    }
                }
                Instr::Jump { target } => s.pcs[t] = *target,
                Instr::Assert { cond } => {
                    if self.eval(cond, s, t) == 0 {
                        s.violated = true;
                    }
                }
                Instr::Assume { cond } => {
                    if self.eval(cond, s, t) == 0 {
                        s.dead = true;
                    }
                }
                Instr::Load { .. } | Instr::Store { .. } | Instr::Fence { .. } | Instr::Join => unreachable!(),
            }
        }
    }

    /// Initial states, one per assignment of `domain` values to the
    /// uninitialised shared variables.
    pub fn initial_states(&self, domain: &[i64]) -> Vec<MachineState> {
        let mut memories: Vec<Vec<i64>> = vec![Vec::new()];
        for init in &self.init {
            let choices: Vec<i64> = match init {
                Some(v) => vec![arith::wrap(*v as i128, self.width)],
                None => domain.iter().map(|&v| arith::wrap(v as i128, self.width)).collect(),
            };
            memories = memories
                .into_iter()
                .flat_map(|m| {
                    choices.iter().map(move |&v| {
                        let mut m = m.clone();
                        m.push(v);
                        m
                    })
                })
                .collect();
        }
        memories.into_iter().map(|m| self.initial_state(m)).collect()
    }

    /// The initial state with the given memory contents.
    pub fn initial_state(&self, memory: Vec<i64>) -> MachineState {
        let mut s = MachineState {
            memory,
            buffers: vec![Vec::new(); self.threads.len()],
            pcs: vec![0; self.threads.len()],
            slots: self.threads.iter().map(|t| vec![0; t.slots]).collect(),
            violated: false,
            dead: false,
        };
        for t in 0..self.threads.len() {
            self.settle(&mut s, t);
        }
        s
    }

    /// The next visible operation of thread `t`, if it has not finished.
    pub fn next_op(&self, s: &MachineState, t: usize) -> Option<NextOp> {
        self.threads[t].instrs.get(s.pcs[t]).map(|i| match i {
            Instr::Load { key, .. } => NextOp::Load(*key),
            Instr::Store { key, .. } => NextOp::Store(*key),
            Instr::Fence { key } => NextOp::Fence(*key),
            Instr::Join => NextOp::Join,
            _ => unreachable!("threads rest only before visible instructions"),
        })
    }

    fn done(&self, s: &MachineState, t: usize) -> bool {
        s.pcs[t] >= self.threads[t].instrs.len()
    }

    fn user_threads_finished(&self, s: &MachineState) -> bool {
        (0..self.threads.len()).all(|t| self.threads[t].checker || self.done(s, t))
            && s.buffers.iter().all(Vec::is_empty)
    }

    /// A state with nothing left to do.
    pub fn is_terminal(&self, s: &MachineState) -> bool {
        !s.dead && (0..self.threads.len()).all(|t| self.done(s, t)) && s.buffers.iter().all(Vec::is_empty)
    }

    pub fn enabled(&self, s: &MachineState) -> Vec<Choice> {
        let mut out = Vec::new();
        if s.dead {
            return out;
        }
        for t in 0..self.threads.len() {
            if !self.done(s, t) {
                let ok = match &self.threads[t].instrs[s.pcs[t]] {
                    _ if self.threads[t].checker => self.user_threads_finished(s),
                    Instr::Fence { .. } => s.buffers[t].is_empty(),
                    _ => true,
                };
                if ok {
                    out.push(Choice::Exec(t));
                }
            }
            for (i, p) in s.buffers[t].iter().enumerate() {
                let flushable = match self.mm {
                    MemoryModel::Sc => false,
                    MemoryModel::Tso => i == 0,
                    MemoryModel::Pso => !s.buffers[t][..i].iter().any(|q| q.var == p.var),
                };
                if flushable {
                    out.push(Choice::Flush(t, i));
                }
            }
        }
        out
    }

    pub fn step(&self, s: &MachineState, choice: Choice) -> Result<MachineState, OracleError> {
        self.step_with_effect(s, choice).map(|(s, _)| s)
    }

    /// Takes one transition and reports its memory effect.
    pub fn step_with_effect(&self, s: &MachineState, choice: Choice) -> Result<(MachineState, Effect), OracleError> {
        if !self.enabled(s).contains(&choice) {
            return Err(OracleError::NoSuchTransition(choice));
        }
        let mut n = s.clone();
        let effect = match choice {
            Choice::Flush(t, i) => {
                let p = n.buffers[t].remove(i);
                n.memory[p.var] = p.value;
                Effect::Commit { thread: t, var: p.var, key: p.key, value: p.value }
            }
            Choice::Exec(t) => {
                let pc = n.pcs[t];
                n.pcs[t] = pc + 1;
                let effect = match &self.threads[t].instrs[pc] {
                    Instr::Load { var, slot, key } => {
                        let buffered = n.buffers[t].iter().rev().find(|p| p.var == *var).copied();
                        let value = buffered.map_or(n.memory[*var], |p| p.value);
                        n.slots[t][*slot] = value;
                        Effect::Load { thread: t, var: *var, key: *key, value, forwarded_from: buffered.map(|p| p.key) }
                    }
                    Instr::Store { var, expr, key } => {
                        let value = self.eval(expr, &n, t);
                        if self.mm == MemoryModel::Sc {
                            n.memory[*var] = value;
                        } else {
                            n.buffers[t].push(Pending { var: *var, value, key: *key });
                        }
                        Effect::Store { thread: t, var: *var, key: *key, value }
                    }
                    Instr::Fence { key } => Effect::Fence { thread: t, key: *key },
                    Instr::Join => Effect::Join,
                    _ => unreachable!("silent instructions never wait"),
                };
                self.settle(&mut n, t);
                effect
            }
        };
        Ok((n, effect))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Exploration {
    /// A terminal state with a failed assertion is reachable.
    pub violation: bool,
    /// Distinct states visited.
    pub states: usize,
}

/// Depth-first search over all interleavings and flush orders.
pub fn explore(ast: &Ast, mm: MemoryModel, config: &OracleConfig) -> Result<Exploration, OracleError> {
    let machine = Machine::new(ast, mm, config.value_width)?;
    let mut visited = std::collections::HashSet::new();
    let mut stack = Vec::new();
    for s in machine.initial_states(&config.domain) {
        if visited.insert(s.clone()) {
            stack.push(s);
        }
    }
    while let Some(s) = stack.pop() {
        if machine.is_terminal(&s) && s.violated {
            return Ok(Exploration { violation: true, states: visited.len() });
        }
        for c in machine.enabled(&s) {
            let n = machine.step(&s, c)?;
            if visited.contains(&n) {
                continue;
            }
            if visited.len() >= config.budget {
                return Err(OracleError::StateSpaceBudgetExceeded(config.budget));
            }
            visited.insert(n.clone());
            stack.push(n);
        }
    }
    Ok(Exploration { violation: false, states: visited.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{parse, unroll};

    const SB: &str = "var x = 0; var y = 0;
        thread t1 { local r1; x = 1; r1 = y; }
        thread t2 { local r2; y = 1; r2 = x; }
        assert(r1 == 1 || r2 == 1);";

    const WRITE_ORDER: &str = "var x = 0; var y = 0;
        thread t1 { x = 1; y = 1; }
        thread t2 { local r1; local r2; r1 = y; r2 = x; }
        assert(r1 != 1 || r2 == 1);";

    fn reachable(src: &str, mm: MemoryModel) -> bool {
        let ast = unroll(&parse(src).unwrap(), 6).unwrap();
        explore(&ast, mm, &OracleConfig::default()).unwrap().violation
    }

    #[test]
    fn store_buffering() {
        assert!(!reachable(SB, MemoryModel::Sc));
        assert!(reachable(SB, MemoryModel::Tso));
        assert!(reachable(SB, MemoryModel::Pso));
    }

    #[test]
    fn write_order() {
        assert!(!reachable(WRITE_ORDER, MemoryModel::Sc));
        assert!(!reachable(WRITE_ORDER, MemoryModel::Tso));
        assert!(reachable(WRITE_ORDER, MemoryModel::Pso));
        let fenced = WRITE_ORDER.replace("x = 1; y = 1;", "x = 1; fence; y = 1;");
        assert!(!reachable(&fenced, MemoryModel::Pso));
    }

    #[test]
    fn store_buffering_schedule() {
        let ast = parse(SB).unwrap();
        let m = Machine::new(&ast, MemoryModel::Tso, 8).unwrap();
        let mut s = m.initial_states(&[0, 1]).remove(0);
        // both stores buffered, both loads read memory, then both flush
        for c in [
            Choice::Exec(0),
            Choice::Exec(1),
            Choice::Exec(0),
            Choice::Exec(1),
            Choice::Flush(0, 0),
            Choice::Flush(1, 0),
        ] {
            s = m.step(&s, c).unwrap();
        }
        assert_eq!(s.slots[0][0], 0);
        assert_eq!(s.slots[1][0], 0);
        s = m.step(&s, Choice::Exec(2)).unwrap();
        assert!(m.is_terminal(&s));
        assert!(s.violated);
    }

    #[test]
    fn write_order_schedule_under_pso() {
        let ast = parse(WRITE_ORDER).unwrap();
        let m = Machine::new(&ast, MemoryModel::Pso, 8).unwrap();
        let mut s = m.initial_states(&[0]).remove(0);
        s = m.step(&s, Choice::Exec(0)).unwrap();
        s = m.step(&s, Choice::Exec(0)).unwrap();
        // y = 1 overtakes x = 1
        s = m.step(&s, Choice::Flush(0, 1)).unwrap();
        s = m.step(&s, Choice::Exec(1)).unwrap();
        s = m.step(&s, Choice::Exec(1)).unwrap();
        s = m.step(&s, Choice::Flush(0, 0)).unwrap();
        s = m.step(&s, Choice::Exec(2)).unwrap();
        assert!(m.is_terminal(&s) && s.violated);
        // under TSO the same overtaking flush does not exist
        let m = Machine::new(&ast, MemoryModel::Tso, 8).unwrap();
        let mut s = m.initial_states(&[0]).remove(0);
        s = m.step(&s, Choice::Exec(0)).unwrap();
        s = m.step(&s, Choice::Exec(0)).unwrap();
        assert_eq!(m.step(&s, Choice::Flush(0, 1)), Err(OracleError::NoSuchTransition(Choice::Flush(0, 1))));
    }

    #[test]
    fn loads_forward_youngest_buffered_store() {
        let ast = parse("var x = 0; thread t { local r; x = 1; x = 2; r = x; assert(r == 2); }").unwrap();
        for mm in MemoryModel::ALL {
            assert!(!explore(&ast, mm, &OracleConfig::default()).unwrap().violation, "{mm}");
        }
    }

    #[test]
    fn fence_waits_for_drain() {
        let ast = parse("var x = 0; thread t { x = 1; fence; }").unwrap();
        let m = Machine::new(&ast, MemoryModel::Tso, 8).unwrap();
        let s = m.initial_states(&[0]).remove(0);
        let s = m.step(&s, Choice::Exec(0)).unwrap();
        assert_eq!(m.enabled(&s), vec![Choice::Flush(0, 0)]);
    }

    #[test]
    fn failed_assumption_discards_violation() {
        let ast = parse("var x = 0; thread t { assert(x == 1); assume(x == 1); }").unwrap();
        assert!(!explore(&ast, MemoryModel::Sc, &OracleConfig::default()).unwrap().violation);
    }

    #[test]
    fn uninitialised_values_range_over_domain() {
        let ast = parse("var x; thread t { local r; r = x; assert(r != 1); }").unwrap();
        let cfg = OracleConfig::default();
        assert!(explore(&ast, MemoryModel::Sc, &cfg).unwrap().violation);
        let only_zero = OracleConfig { domain: vec![0], ..cfg };
        assert!(!explore(&ast, MemoryModel::Sc, &only_zero).unwrap().violation);
    }

    #[test]
    fn arithmetic_wraps() {
        let ast = parse("var x = 127; thread t { x = x + 1; assert(x < 0); }").unwrap();
        assert!(!explore(&ast, MemoryModel::Sc, &OracleConfig::default()).unwrap().violation);
    }

    #[test]
    fn budget_is_enforced() {
        let cfg = OracleConfig { budget: 5, ..OracleConfig::default() };
        let ast = parse(SB).unwrap();
        assert_eq!(explore(&ast, MemoryModel::Pso, &cfg), Err(OracleError::StateSpaceBudgetExceeded(5)));
    }

    #[test]
    fn checker_reads_final_memory() {
        let src = "var x = 0; thread a { x = 1; } thread b { x = 2; } assert(x == 2);";
        assert!(reachable(src, MemoryModel::Sc));
        let src = "var x = 0; thread a { x = 1; x = 2; } assert(x == 2);";
        for mm in MemoryModel::ALL {
            assert!(!reachable(src, mm));
        }
    }
}
