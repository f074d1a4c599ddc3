use std::fmt;

/// A propositional variable, numbered from zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(pub u32);

impl Var {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }

    #[inline]
    pub const fn lit(self, positive: bool) -> Lit {
        Lit::new(self, positive)
    }
}

/// A literal packed as `var << 1 | negated`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Lit(u32);

impl Lit {
    #[inline]
    pub const fn new(var: Var, positive: bool) -> Lit {
        Lit(var.0 << 1 | (!positive) as u32)
    }

    #[inline]
    pub fn var(self) -> Var {
        Var(self.0 >> 1)
    }

    #[inline]
    pub fn is_positive(self) -> bool {
        self.0 & 1 == 0
    }

    #[inline]
    pub fn code(self) -> usize {
        self.0 as usize
    }

    /// Signed DIMACS form (variables are 1-based there).
    pub fn to_dimacs(self) -> i64 {
        let v = self.var().0 as i64 + 1;
        if self.is_positive() {
            v
        } else {
            -v
        }
    }

    pub fn from_dimacs(x: i64) -> Option<Lit> {
        if x == 0 || x.unsigned_abs() > u32::MAX as u64 / 2 {
            return None;
        }
        Some(Lit::new(Var((x.unsigned_abs() - 1) as u32), x > 0))
    }

    /// Truth value of this literal under a full assignment.
    #[inline]
    pub fn eval(self, model: &[bool]) -> bool {
        model[self.var().index()] == self.is_positive()
    }
}

impl std::ops::Not for Lit {
    type Output = Lit;
    #[inline]
    fn not(self) -> Lit {
        Lit(self.0 ^ 1)
    }
}

impl fmt::Debug for Lit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_dimacs())
    }
}

/// Clause database in conjunctive normal form.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Cnf {
    pub num_vars: usize,
    pub clauses: Vec<Vec<Lit>>,
    /// Free-form comment lines written ahead of the DIMACS header.
    pub comments: Vec<String>,
}

impl Cnf {
    pub fn new(num_vars: usize) -> Self {
        Cnf { num_vars, clauses: Vec::new(), comments: Vec::new() }
    }

    pub fn add_clause(&mut self, clause: Vec<Lit>) {
        for l in &clause {
            if l.var().index() >= self.num_vars {
                self.num_vars = l.var().index() + 1;
            }
        }
        self.clauses.push(clause);
    }

    /// Index of the first clause the model falsifies, if any.
    pub fn first_violated(&self, model: &[bool]) -> Option<usize> {
        self.clauses.iter().position(|c| !c.iter().any(|l| l.eval(model)))
    }

    pub fn is_satisfied_by(&self, model: &[bool]) -> bool {
        model.len() >= self.num_vars && self.first_violated(model).is_none()
    }
}
