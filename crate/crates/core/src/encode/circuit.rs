//! Tseitin circuit builder with hash-consed gates and constant folding.
//!
//! Variable 0 is the constant TRUE (fixed by a unit clause). Literals that
//! have been asserted at the top level are remembered, so gates built on
//! them later fold to constants instead of allocating new variables.

use std::collections::HashMap;
use std::fmt;
use std::ops::Range;

use wmbmc_sat::{Cnf, Lit, Var};

pub const TRUE: Lit = Var(0).lit(true);
pub const FALSE: Lit = Var(0).lit(false);

/// Constraint family a clause belongs to, used for statistics and the
/// DIMACS legend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Ssa,
    Ext,
    Nstep,
    M2clk,
    Unique,
    Assert,
}

impl Family {
    pub const ALL: [Family; 6] =
        [Family::Ssa, Family::Ext, Family::Nstep, Family::M2clk, Family::Unique, Family::Assert];

    pub fn name(self) -> &'static str {
        match self {
            Family::Ssa => "ssa",
            Family::Ext => "ext",
            Family::Nstep => "nstep",
            Family::M2clk => "m2clk",
            Family::Unique => "unique",
            Family::Assert => "assert",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub struct Circuit {
    num_vars: u32,
    clauses: Vec<Vec<Lit>>,
    ranges: Vec<(Family, Range<usize>)>,
    family: Family,
    fixed: Vec<Option<bool>>,
    and_cache: HashMap<Vec<Lit>, Lit>,
    xor_cache: HashMap<(Lit, Lit), Lit>,
    ite_cache: HashMap<(Lit, Lit, Lit), Lit>,
}

impl Default for Circuit {
    fn default() -> Self {
        Self::new()
    }
}

impl Circuit {
    pub fn new() -> Self {
        let mut c = Circuit {
            num_vars: 1,
            clauses: Vec::new(),
            ranges: Vec::new(),
            family: Family::Ssa,
            fixed: vec![Some(true)],
            and_cache: HashMap::new(),
            xor_cache: HashMap::new(),
            ite_cache: HashMap::new(),
        };
        c.push(vec![TRUE]);
        c
    }

    pub fn set_family(&mut self, f: Family) {
        self.family = f;
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars as usize
    }

    pub fn num_clauses(&self) -> usize {
        self.clauses.len()
    }

    pub fn fresh(&mut self) -> Lit {
        let v = Var(self.num_vars);
        self.num_vars += 1;
        self.fixed.push(None);
        v.lit(true)
    }

    /// Known truth value of `l`, if it is a constant or was asserted.
    pub fn value(&self, l: Lit) -> Option<bool> {
        self.fixed[l.var().index()].map(|b| b == l.is_positive())
    }

    fn norm(&self, l: Lit) -> Lit {
        match self.value(l) {
            Some(true) => TRUE,
            Some(false) => FALSE,
            None => l,
        }
    }

    fn push(&mut self, clause: Vec<Lit>) {
        let i = self.clauses.len();
        match self.ranges.last_mut() {
            Some((f, r)) if *f == self.family && r.end == i => r.end += 1,
            _ => self.ranges.push((self.family, i..i + 1)),
        }
        self.clauses.push(clause);
    }

    /// Adds a clause after simplification against known constants.
    /// A clause that simplifies to empty is emitted as the unit `FALSE`.
    pub fn clause(&mut self, lits: &[Lit]) {
        let mut out: Vec<Lit> = Vec::with_capacity(lits.len());
        for &l in lits {
            match self.value(l) {
                Some(true) => return,
                Some(false) => continue,
                None => {
                    if out.contains(&!l) {
                        return;
                    }
                    if !out.contains(&l) {
                        out.push(l);
                    }
                }
            }
        }
        match out.len() {
            0 => self.push(vec![FALSE]),
            1 => {
                self.fixed[out[0].var().index()] = Some(out[0].is_positive());
                self.push(out);
            }
            _ => self.push(out),
        }
    }

    pub fn assert(&mut self, l: Lit) {
        self.clause(&[l]);
    }

    pub fn and(&mut self, a: Lit, b: Lit) -> Lit {
        self.and_all(&[a, b])
    }

    pub fn or(&mut self, a: Lit, b: Lit) -> Lit {
        !self.and_all(&[!a, !b])
    }

    pub fn implies(&mut self, a: Lit, b: Lit) -> Lit {
        self.or(!a, b)
    }

    pub fn iff(&mut self, a: Lit, b: Lit) -> Lit {
        !self.xor(a, b)
    }

    pub fn or_all(&mut self, lits: &[Lit]) -> Lit {
        let neg: Vec<Lit> = lits.iter().map(|&l| !l).collect();
        !self.and_all(&neg)
    }

    pub fn and_all(&mut self, lits: &[Lit]) -> Lit {
        let mut ins: Vec<Lit> = Vec::with_capacity(lits.len());
        for &l in lits {
            let l = self.norm(l);
            if l == FALSE {
                return FALSE;
            }
            if l != TRUE {
                ins.push(l);
            }
        }
        ins.sort_unstable();
        ins.dedup();
        if ins.windows(2).any(|w| w[0] == !w[1]) {
            return FALSE;
        }
        match ins.len() {
            0 => return TRUE,
            1 => return ins[0],
            _ => {}
        }
        if let Some(&g) = self.and_cache.get(&ins) {
            return g;
        }
        let g = self.fresh();
        for &l in &ins {
            self.push(vec![!g, l]);
        }
        let mut big: Vec<Lit> = ins.iter().map(|&l| !l).collect();
        big.push(g);
        self.push(big);
        self.and_cache.insert(ins, g);
        g
    }

    pub fn xor(&mut self, a: Lit, b: Lit) -> Lit {
        let (a, b) = (self.norm(a), self.norm(b));
        if a == FALSE {
            return b;
        }
        if a == TRUE {
            return !b;
        }
        if b == FALSE {
            return a;
        }
        if b == TRUE {
            return !a;
        }
        if a == b {
            return FALSE;
        }
        if a == !b {
            return TRUE;
        }
        // strip polarities: xor(¬a, b) = ¬xor(a, b)
        let flip = a.is_positive() != b.is_positive();
        let (pa, pb) = (a.var().lit(true), b.var().lit(true));
        let key = if pa < pb { (pa, pb) } else { (pb, pa) };
        let g = match self.xor_cache.get(&key) {
            Some(&g) => g,
            None => {
                let g = self.fresh();
                let (x, y) = key;
                self.push(vec![!g, x, y]);
                self.push(vec![!g, !x, !y]);
                self.push(vec![g, !x, y]);
                self.push(vec![g, x, !y]);
                self.xor_cache.insert(key, g);
                g
            }
        };
        if flip {
            !g
        } else {
            g
        }
    }

    /// `if c then t else e`.
    pub fn ite(&mut self, c: Lit, t: Lit, e: Lit) -> Lit {
        let (c, t, e) = (self.norm(c), self.norm(t), self.norm(e));
        if c == TRUE {
            return t;
        }
        if c == FALSE {
            return e;
        }
        if t == e {
            return t;
        }
        if t == TRUE {
            return self.or(c, e);
        }
        if t == FALSE {
            return self.and(!c, e);
        }
        if e == TRUE {
            return self.or(!c, t);
        }
        if e == FALSE {
            return self.and(c, t);
        }
        if t == !e {
            return !self.xor(c, t);
        }
        let (c, t, e) = if c.is_positive() { (c, t, e) } else { (!c, e, t) };
        if let Some(&g) = self.ite_cache.get(&(c, t, e)) {
            return g;
        }
        let g = self.fresh();
        self.push(vec![!c, !t, g]);
        self.push(vec![!c, t, !g]);
        self.push(vec![c, !e, g]);
        self.push(vec![c, e, !g]);
        self.push(vec![!t, !e, g]);
        self.push(vec![t, e, !g]);
        self.ite_cache.insert((c, t, e), g);
        g
    }

    /// Clause ranges per family, in emission order.
    pub fn ranges(&self) -> &[(Family, Range<usize>)] {
        &self.ranges
    }

    pub fn clauses_in(&self, f: Family) -> usize {
        self.ranges.iter().filter(|(g, _)| *g == f).map(|(_, r)| r.len()).sum()
    }

    pub fn to_cnf(&self) -> Cnf {
        let mut cnf = Cnf::new(self.num_vars());
        cnf.clauses = self.clauses.clone();
        cnf
    }
}
