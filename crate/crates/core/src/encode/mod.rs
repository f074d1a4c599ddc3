//! Propositional encoding of bounded executions.
//!
//! The formula is the conjunction of six constraint families:
//!
//! * `ssa` — guard definitions, guarded equalities and assumptions;
//! * `ext` — a match variable holds exactly when both events execute, the
//!   read is not matched elsewhere, and the write is the latest visible one;
//! * `nstep` — clocks respect the preserved program order;
//! * `m2clk` — a match copies the value and (unless the write is the
//!   reader's own buffered store) orders the write's clock before the read;
//! * `unique` — writes to one variable have distinct clocks;
//! * `assert` — some reached assertion fails.
//!
//! Each read and write event owns a clock bit-vector; fences carry no clock,
//! their effect is folded into the ordering constraints.

mod bitvec;
mod circuit;

pub use bitvec::{eval_signed, eval_unsigned, Bv};
pub use circuit::{Circuit, Family, FALSE, TRUE};

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use thiserror::Error;
use wmbmc_sat::{Cnf, Lit};

use crate::frontend::{BinOp, UnOp};
use crate::matches::{MatchId, MatchSet};
use crate::memmodel::PpoGraph;
use crate::ssa::{Constraint, EventId, GuardDef, GuardId, SsaSystem, SymId, Term};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("program has no assertions")]
    EmptyAssertSet,
    #[error("bit-vector widths differ ({0} vs {1})")]
    WidthMismatch(usize, usize),
    #[error("encoding exceeds its size bound: {0}")]
    SizeBound(String),
}

/// `a < b` on unsigned clock values.
pub fn isbefore(c: &mut Circuit, a: &[Lit], b: &[Lit]) -> Result<Lit, EncodeError> {
    if a.len() != b.len() {
        return Err(EncodeError::WidthMismatch(a.len(), b.len()));
    }
    Ok(c.bv_ult(a, b))
}

/// `a = b` on clock values.
pub fn isequal(c: &mut Circuit, a: &[Lit], b: &[Lit]) -> Result<Lit, EncodeError> {
    if a.len() != b.len() {
        return Err(EncodeError::WidthMismatch(a.len(), b.len()));
    }
    Ok(c.bv_eq(a, b))
}

/// Bits needed to give `k` events pairwise distinct clocks:
/// `max(1, ⌈log₂(k + 1)⌉)`.
pub fn clock_width(k: usize) -> usize {
    (usize::BITS - k.leading_zeros()).max(1) as usize
}

/// Where each program-level quantity lives in the propositional encoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarSpace {
    /// One boolean per match pair.
    pub matches: Vec<Lit>,
    pub clock_width: usize,
    /// Clock bits per event; `None` for fences.
    pub clocks: Vec<Option<Bv>>,
    /// Value bits per SSA symbol.
    pub values: Vec<Bv>,
    /// Literal per guard atom.
    pub guards: Vec<Lit>,
}

impl VarSpace {
    pub fn clock(&self, e: EventId) -> &[Lit] {
        self.clocks[e.0].as_deref().expect("fences have no clock")
    }

    pub fn clock_value(&self, model: &[bool], e: EventId) -> u64 {
        eval_unsigned(self.clock(e), model)
    }

    pub fn value(&self, model: &[bool], s: SymId) -> i64 {
        eval_signed(&self.values[s.0], model)
    }

    pub fn guard(&self, model: &[bool], g: GuardId) -> bool {
        self.guards[g.0].eval(model)
    }

    pub fn matched(&self, model: &[bool], m: MatchId) -> bool {
        self.matches[m.0].eval(model)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodingStats {
    /// Read plus write events, initial writes included.
    pub k: usize,
    pub reads: usize,
    pub writes: usize,
    pub fences: usize,
    pub match_vars: usize,
    pub clock_width: usize,
    pub clock_bits: usize,
    pub vars: usize,
    pub clauses: usize,
    pub clauses_per_family: BTreeMap<Family, usize>,
}

impl EncodingStats {
    pub fn match_bound(&self) -> usize {
        (self.k * self.k).div_ceil(4)
    }

    pub fn clock_bound(&self) -> usize {
        self.k * clock_width(self.k)
    }

    /// Checks `match_vars ≤ ⌈k²/4⌉` and `clock_bits = k·width(k)`.
    pub fn check_bounds(&self) -> Result<(), EncodeError> {
        if self.match_vars > self.match_bound() {
            return Err(EncodeError::SizeBound(format!(
                "{} match variables for k = {} (bound {})",
                self.match_vars,
                self.k,
                self.match_bound()
            )));
        }
        if self.clock_bits != self.clock_bound() {
            return Err(EncodeError::SizeBound(format!(
                "{} clock bits for k = {} (expected {})",
                self.clock_bits,
                self.k,
                self.clock_bound()
            )));
        }
        Ok(())
    }
}

impl fmt::Display for EncodingStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "k={} reads={} writes={} fences={} match_vars={} clock_width={} clock_bits={} vars={} clauses={}",
            self.k,
            self.reads,
            self.writes,
            self.fences,
            self.match_vars,
            self.clock_width,
            self.clock_bits,
            self.vars,
            self.clauses
        )?;
        for (fam, n) in &self.clauses_per_family {
            write!(f, " {fam}={n}")?;
        }
        Ok(())
    }
}

pub fn encoding_stats(ssa: &SsaSystem, vs: &VarSpace, circuit: &Circuit) -> EncodingStats {
    EncodingStats {
        k: ssa.k(),
        reads: ssa.reads().count(),
        writes: ssa.writes().count(),
        fences: ssa.events.iter().filter(|e| e.is_fence()).count(),
        match_vars: vs.matches.len(),
        clock_width: vs.clock_width,
        clock_bits: vs.clocks.iter().flatten().map(Vec::len).sum(),
        vars: circuit.num_vars(),
        clauses: circuit.num_clauses(),
        clauses_per_family: Family::ALL.iter().map(|&f| (f, circuit.clauses_in(f))).collect(),
    }
}

/// A complete encoding ready for solving.
#[derive(Debug, Clone)]
pub struct Encoding {
    pub cnf: Cnf,
    pub vars: VarSpace,
    pub stats: EncodingStats,
}

/// Emits the constraint families one at a time into a shared circuit.
pub struct Encoder<'a> {
    ssa: &'a SsaSystem,
    ms: &'a MatchSet,
    pub circuit: Circuit,
    pub vars: VarSpace,
    before_cache: HashMap<(EventId, EventId), Lit>,
}

impl<'a> Encoder<'a> {
    /// Allocates match variables, clocks and read values.
    pub fn new(ssa: &'a SsaSystem, ms: &'a MatchSet) -> Self {
        let mut circuit = Circuit::new();
        let matches = ms.pairs.iter().map(|_| circuit.fresh()).collect();
        let width = clock_width(ssa.k());
        let clocks = ssa
            .events
            .iter()
            .map(|e| if e.is_fence() { None } else { Some(circuit.bv_fresh(width)) })
            .collect();
        let vw = ssa.value_width as usize;
        let values = ssa
            .symbols
            .iter()
            .map(|s| match s.kind {
                crate::ssa::SymbolKind::Read(_) => circuit.bv_fresh(vw),
                _ => Vec::new(),
            })
            .collect();
        Encoder {
            ssa,
            ms,
            circuit,
            vars: VarSpace { matches, clock_width: width, clocks, values, guards: Vec::new() },
            before_cache: HashMap::new(),
        }
    }

    fn before(&mut self, a: EventId, b: EventId) -> Lit {
        if let Some(&l) = self.before_cache.get(&(a, b)) {
            return l;
        }
        let (ca, cb) = (self.vars.clock(a).to_vec(), self.vars.clock(b).to_vec());
        let l = self.circuit.bv_ult(&ca, &cb);
        self.before_cache.insert((a, b), l);
        l
    }

    fn pathcond(&self, e: EventId) -> Lit {
        self.vars.guards[self.ssa.event(e).guard.0]
    }

    fn term(&mut self, t: &Term) -> Bv {
        let w = self.ssa.value_width as usize;
        match t {
            Term::Const(v) => self.circuit.bv_const(*v, w),
            Term::Sym(s) => {
                if self.vars.values[s.0].is_empty() {
                    // a write or local that no equality defined
                    self.vars.values[s.0] = self.circuit.bv_fresh(w);
                }
                self.vars.values[s.0].clone()
            }
            Term::Unary(op, a) => {
                let a = self.term(a);
                match op {
                    UnOp::Neg => self.circuit.bv_neg(&a),
                    UnOp::Not => {
                        let nz = self.circuit.bv_nonzero(&a);
                        self.circuit.bv_bool(!nz, w)
                    }
                }
            }
            Term::Binary(op, a, b) => {
                let (a, b) = (self.term(a), self.term(b));
                let c = &mut self.circuit;
                let flag = match op {
                    BinOp::Add => return c.bv_add(&a, &b),
                    BinOp::Sub => return c.bv_sub(&a, &b),
                    BinOp::Mul => return c.bv_mul(&a, &b),
                    BinOp::Eq => c.bv_eq(&a, &b),
                    BinOp::Ne => !c.bv_eq(&a, &b),
                    BinOp::Lt => c.bv_slt(&a, &b),
                    BinOp::Le => !c.bv_slt(&b, &a),
                    BinOp::Gt => c.bv_slt(&b, &a),
                    BinOp::Ge => !c.bv_slt(&a, &b),
                    BinOp::And => {
                        let (x, y) = (c.bv_nonzero(&a), c.bv_nonzero(&b));
                        c.and(x, y)
                    }
                    BinOp::Or => {
                        let (x, y) = (c.bv_nonzero(&a), c.bv_nonzero(&b));
                        c.or(x, y)
                    }
                };
                self.circuit.bv_bool(flag, w)
            }
            Term::Ite(g, a, b) => {
                let (a, b) = (self.term(a), self.term(b));
                let g = self.vars.guards[g.0];
                self.circuit.bv_ite(g, &a, &b)
            }
        }
    }

    fn truth(&mut self, t: &Term) -> Lit {
        let bits = self.term(t);
        self.circuit.bv_nonzero(&bits)
    }

    /// Guard definitions, guarded equalities and assumptions.
    pub fn emit_ssa(&mut self) {
        self.circuit.set_family(Family::Ssa);
        let w = self.ssa.value_width as usize;
        self.vars.guards = vec![FALSE; self.ssa.guards.len()];
        for c in &self.ssa.constraints {
            match c {
                Constraint::DefineGuard(g) => {
                    let lit = match &self.ssa.guards[g.0] {
                        GuardDef::True => TRUE,
                        GuardDef::Cond(t) => self.truth(t),
                        GuardDef::And(a, b) => self.circuit.and(self.vars.guards[a.0], self.vars.guards[b.0]),
                        GuardDef::AndNot(a, b) => self.circuit.and(self.vars.guards[a.0], !self.vars.guards[b.0]),
                    };
                    self.vars.guards[g.0] = lit;
                }
                Constraint::Equal { guard, lhs, rhs } => {
                    let rhs = self.term(rhs);
                    let g = self.vars.guards[guard.0];
                    if g == TRUE && self.vars.values[lhs.0].is_empty() {
                        self.vars.values[lhs.0] = rhs;
                    } else {
                        if self.vars.values[lhs.0].is_empty() {
                            self.vars.values[lhs.0] = self.circuit.bv_fresh(w);
                        }
                        let lhs = self.vars.values[lhs.0].clone();
                        for (&l, &r) in lhs.iter().zip(&rhs) {
                            self.circuit.clause(&[!g, !l, r]);
                            self.circuit.clause(&[!g, l, !r]);
                        }
                    }
                }
                Constraint::Assume { guard, cond } => {
                    let holds = self.truth(cond);
                    let g = self.vars.guards[guard.0];
                    self.circuit.clause(&[!g, holds]);
                }
            }
        }
        for s in 0..self.vars.values.len() {
            if self.vars.values[s].is_empty() {
                self.vars.values[s] = self.circuit.bv_fresh(w);
            }
        }
    }

    /// Match variables hold exactly for the executed, unique, latest-write
    /// candidate of each read.
    pub fn emit_ext(&mut self) {
        self.circuit.set_family(Family::Ext);
        for r in self.ms.reads().collect::<Vec<_>>() {
            let cands = self.ms.candidates(r).to_vec();
            for &e in &cands {
                let pair = *self.ms.pair(e);
                let mut latest = Vec::new();
                let mut funct = Vec::new();
                for &e2 in cands.iter().filter(|&&e2| e2 != e) {
                    let other = *self.ms.pair(e2);
                    funct.push(!self.vars.matches[e2.0]);
                    // a remote write is visible unless it happens after the read;
                    // the reader's own earlier stores are always visible to it
                    let visible = if other.local { TRUE } else { !self.before(r, other.write) };
                    let pc = self.pathcond(other.write);
                    let cond = self.circuit.and(visible, pc);
                    let later = self.before(pair.write, other.write);
                    latest.push(self.circuit.implies(cond, !later));
                }
                let mut rhs = latest;
                rhs.extend(funct);
                rhs.push(self.pathcond(r));
                rhs.push(self.pathcond(pair.write));
                let rhs = self.circuit.and_all(&rhs);
                let x = self.vars.matches[e.0];
                self.circuit.clause(&[!x, rhs]);
                self.circuit.clause(&[x, !rhs]);
            }
        }
    }

    /// Clock orderings from the preserved program order, fences, the
    /// final-assertion join and initial writes.
    pub fn emit_nstep(&mut self, ppo: &PpoGraph) {
        self.circuit.set_family(Family::Nstep);
        for o in &ppo.orderings {
            let lt = self.before(o.before, o.after);
            match o.guard {
                None => self.circuit.assert(lt),
                Some(g) => {
                    let g = self.vars.guards[g.0];
                    self.circuit.clause(&[!g, lt]);
                }
            }
        }
    }

    /// A match copies the written value; a non-local match also orders the
    /// write before the read.
    pub fn emit_m2clk(&mut self) {
        self.circuit.set_family(Family::M2clk);
        for p in &self.ms.pairs {
            let x = self.vars.matches[p.id.0];
            if !p.local {
                let lt = self.before(p.write, p.read);
                self.circuit.clause(&[!x, lt]);
            }
            let rv = self.ssa.event(p.read).value.unwrap();
            let wv = self.ssa.event(p.write).value.unwrap();
            let (rb, wb) = (self.vars.values[rv.0].clone(), self.vars.values[wv.0].clone());
            for (&a, &b) in rb.iter().zip(&wb) {
                self.circuit.clause(&[!x, !a, b]);
                self.circuit.clause(&[!x, a, !b]);
            }
        }
    }

    /// Writes to the same variable get pairwise distinct clocks.
    pub fn emit_unique(&mut self) {
        self.circuit.set_family(Family::Unique);
        let writes: Vec<_> = self.ssa.writes().map(|w| (w.id, w.label)).collect();
        for (i, &(a, la)) in writes.iter().enumerate() {
            for &(b, lb) in &writes[i + 1..] {
                if la != lb {
                    continue;
                }
                let (ca, cb) = (self.vars.clock(a).to_vec(), self.vars.clock(b).to_vec());
                let differ: Vec<Lit> = ca.iter().zip(&cb).map(|(&x, &y)| self.circuit.xor(x, y)).collect();
                self.circuit.clause(&differ);
            }
        }
    }

    /// Some assertion is reached and fails.
    pub fn emit_assert_neg(&mut self) -> Result<(), EncodeError> {
        if self.ssa.asserts.is_empty() {
            return Err(EncodeError::EmptyAssertSet);
        }
        self.circuit.set_family(Family::Assert);
        let mut violations = Vec::new();
        for a in &self.ssa.asserts {
            let holds = self.truth(&a.cond);
            let g = self.vars.guards[a.guard.0];
            violations.push(self.circuit.and(g, !holds));
        }
        self.circuit.clause(&violations);
        Ok(())
    }

    /// Lowers to CNF with a variable legend in the comment lines.
    pub fn finish(self) -> Encoding {
        let stats = encoding_stats(self.ssa, &self.vars, &self.circuit);
        let mut cnf = self.circuit.to_cnf();
        cnf.comments = legend(self.ssa, self.ms, &self.vars, &self.circuit);
        Encoding { cnf, vars: self.vars, stats }
    }
}

fn lits(bits: &[Lit]) -> String {
    bits.iter().map(|l| l.to_dimacs().to_string()).collect::<Vec<_>>().join(" ")
}

fn legend(ssa: &SsaSystem, ms: &MatchSet, vs: &VarSpace, circuit: &Circuit) -> Vec<String> {
    let mut out = vec![format!("wmbmc encoding: clock width {}, value width {}", vs.clock_width, ssa.value_width)];
    for p in &ms.pairs {
        out.push(format!(
            "match m{} {} <- {} : {}",
            p.id.0,
            ssa.describe_event(p.read),
            ssa.describe_event(p.write),
            vs.matches[p.id.0].to_dimacs()
        ));
    }
    for e in ssa.events.iter().filter(|e| !e.is_fence()) {
        out.push(format!("clock {} : {}", ssa.describe_event(e.id), lits(vs.clock(e.id))));
    }
    for (i, s) in ssa.symbols.iter().enumerate() {
        out.push(format!("value {} : {}", s.name, lits(&vs.values[i])));
    }
    for (i, g) in vs.guards.iter().enumerate() {
        out.push(format!("guard g{i} : {}", g.to_dimacs()));
    }
    for (f, r) in circuit.ranges() {
        out.push(format!("family {f} clauses {}..{}", r.start, r.end));
    }
    out
}

/// Builds the full formula. Fails with `EmptyAssertSet` when there is
/// nothing to violate.
pub fn encode(ssa: &SsaSystem, ppo: &PpoGraph, ms: &MatchSet) -> Result<Encoding, EncodeError> {
    let mut enc = Encoder::new(ssa, ms);
    enc.emit_ssa();
    enc.emit_ext();
    enc.emit_nstep(ppo);
    enc.emit_m2clk();
    enc.emit_unique();
    enc.emit_assert_neg()?;
    let encoding = enc.finish();
    encoding.stats.check_bounds()?;
    Ok(encoding)
}
