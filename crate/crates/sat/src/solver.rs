//! Conflict-driven clause learning with two watched literals, first-UIP
//! learning, phase saving, VSIDS branching and Luby restarts.

use std::fmt;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cnf::{Cnf, Lit, Var};
use crate::heap::VarHeap;
use crate::SatError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Sat,
    Unsat,
    Timeout,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Sat => "SAT",
            Status::Unsat => "UNSAT",
            Status::Timeout => "TIMEOUT",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveStats {
    pub decisions: u64,
    pub propagations: u64,
    pub conflicts: u64,
    pub learned: u64,
    pub restarts: u64,
    pub time_s: f64,
}

impl SolveStats {
    /// Flat `key=value` block, one counter per line.
    pub fn to_key_values(&self) -> String {
        let rho = match exploration_efficacy(self) {
            Efficacy::Ratio(r) => format!("{r}"),
            Efficacy::Undefined => "undefined".to_string(),
        };
        format!(
            "decisions={}\npropagations={}\nconflicts={}\nlearned={}\nrestarts={}\ntime_s={:.6}\nrho={}\n",
            self.decisions, self.propagations, self.conflicts, self.learned, self.restarts, self.time_s, rho
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub status: Status,
    /// Full assignment, present only for `Status::Sat`.
    pub model: Option<Vec<bool>>,
    pub stats: SolveStats,
}

/// Propagations per conflict. Undefined when the search saw no conflict.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Efficacy {
    Ratio(f64),
    Undefined,
}

impl fmt::Display for Efficacy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Efficacy::Ratio(r) => write!(f, "{r:.4}"),
            Efficacy::Undefined => f.write_str("NA"),
        }
    }
}

pub fn exploration_efficacy(stats: &SolveStats) -> Efficacy {
    if stats.conflicts == 0 {
        Efficacy::Undefined
    } else {
        Efficacy::Ratio(stats.propagations as f64 / stats.conflicts as f64)
    }
}

const NO_REASON: u32 = u32::MAX;
const UNDEF: i8 = 0;
const TRUE: i8 = 1;
const FALSE: i8 = -1;

#[derive(Debug, Clone)]
struct Clause {
    lits: Vec<Lit>,
    learnt: bool,
    activity: f64,
    deleted: bool,
}

#[derive(Debug, Clone, Copy)]
struct Watcher {
    cref: u32,
    blocker: Lit,
}

pub struct Solver {
    original: Cnf,
    num_vars: usize,
    clauses: Vec<Clause>,
    watches: Vec<Vec<Watcher>>,
    assigns: Vec<i8>,
    level: Vec<u32>,
    reason: Vec<u32>,
    trail: Vec<Lit>,
    trail_lim: Vec<usize>,
    qhead: usize,
    activity: Vec<f64>,
    var_inc: f64,
    cla_inc: f64,
    heap: VarHeap,
    polarity: Vec<bool>,
    seen: Vec<bool>,
    num_learnts: usize,
    max_learnts: f64,
    ok: bool,
    stats: SolveStats,
}

const VAR_DECAY: f64 = 0.95;
const CLA_DECAY: f64 = 0.999;
const RESTART_BASE: f64 = 100.0;

impl Solver {
    /// Loads `cnf`; `seed` perturbs the initial branching order.
    pub fn new(cnf: &Cnf, seed: u64) -> Result<Self, SatError> {
        let n = cnf.num_vars;
        for (i, c) in cnf.clauses.iter().enumerate() {
            if let Some(l) = c.iter().find(|l| l.var().index() >= n) {
                return Err(SatError::MalformedCnf(format!(
                    "clause {i} mentions variable {} beyond declared count {n}",
                    l.var().0 + 1
                )));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let activity: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 1e-5).collect();
        let mut heap = VarHeap::new(n);
        for v in 0..n {
            heap.insert(v as u32, &activity);
        }
        let mut s = Solver {
            original: cnf.clone(),
            num_vars: n,
            clauses: Vec::new(),
            watches: vec![Vec::new(); 2 * n],
            assigns: vec![UNDEF; n],
            level: vec![0; n],
            reason: vec![NO_REASON; n],
            trail: Vec::with_capacity(n),
            trail_lim: Vec::new(),
            qhead: 0,
            activity,
            var_inc: 1.0,
            cla_inc: 1.0,
            heap,
            polarity: vec![false; n],
            seen: vec![false; n],
            num_learnts: 0,
            max_learnts: 0.0,
            ok: true,
            stats: SolveStats::default(),
        };
        for c in &cnf.clauses {
            if !s.add_input_clause(c) {
                s.ok = false;
                break;
            }
        }
        s.max_learnts = (s.clauses.len() as f64 / 3.0).max(2000.0);
        Ok(s)
    }

    fn add_input_clause(&mut self, clause: &[Lit]) -> bool {
        let mut lits: Vec<Lit> = clause.to_vec();
        lits.sort();
        lits.dedup();
        if lits.windows(2).any(|w| w[0] == !w[1]) {
            return true;
        }
        lits.retain(|&l| self.value(l) != FALSE);
        if lits.iter().any(|&l| self.value(l) == TRUE) {
            return true;
        }
        match lits.len() {
            0 => false,
            1 => {
                self.enqueue(lits[0], NO_REASON);
                self.propagate().is_none()
            }
            _ => {
                self.attach(lits, false);
                true
            }
        }
    }

    fn attach(&mut self, lits: Vec<Lit>, learnt: bool) -> u32 {
        let cref = self.clauses.len() as u32;
        self.watches[(!lits[0]).code()].push(Watcher { cref, blocker: lits[1] });
        self.watches[(!lits[1]).code()].push(Watcher { cref, blocker: lits[0] });
        self.clauses.push(Clause { lits, learnt, activity: 0.0, deleted: false });
        if learnt {
            self.num_learnts += 1;
        }
        cref
    }

    #[inline]
    fn value(&self, l: Lit) -> i8 {
        let a = self.assigns[l.var().index()];
        if l.is_positive() {
            a
        } else {
            -a
        }
    }

    #[inline]
    fn decision_level(&self) -> u32 {
        self.trail_lim.len() as u32
    }

    fn enqueue(&mut self, l: Lit, reason: u32) {
        let v = l.var().index();
        self.assigns[v] = if l.is_positive() { TRUE } else { FALSE };
        self.level[v] = self.decision_level();
        self.reason[v] = reason;
        self.trail.push(l);
    }

    fn propagate(&mut self) -> Option<u32> {
        let mut conflict = None;
        while self.qhead < self.trail.len() {
            let p = self.trail[self.qhead];
            self.qhead += 1;
            self.stats.propagations += 1;
            let false_lit = !p;
            let mut ws = std::mem::take(&mut self.watches[p.code()]);
            let (mut i, mut j) = (0, 0);
            while i < ws.len() {
                let w = ws[i];
                i += 1;
                if self.value(w.blocker) == TRUE {
                    ws[j] = w;
                    j += 1;
                    continue;
                }
                let cref = w.cref as usize;
                if self.clauses[cref].lits[0] == false_lit {
                    self.clauses[cref].lits.swap(0, 1);
                }
                let first = self.clauses[cref].lits[0];
                if first != w.blocker && self.value(first) == TRUE {
                    ws[j] = Watcher { cref: w.cref, blocker: first };
                    j += 1;
                    continue;
                }
                let len = self.clauses[cref].lits.len();
                let mut moved = false;
                for k in 2..len {
                    let lk = self.clauses[cref].lits[k];
                    if self.value(lk) != FALSE {
                        self.clauses[cref].lits.swap(1, k);
                        self.watches[(!lk).code()].push(Watcher { cref: w.cref, blocker: first });
                        moved = true;
                        break;
                    }
                }
                if moved {
                    continue;
                }
                ws[j] = Watcher { cref: w.cref, blocker: first };
                j += 1;
                if self.value(first) == FALSE {
                    conflict = Some(w.cref);
                    self.qhead = self.trail.len();
                    while i < ws.len() {
                        ws[j] = ws[i];
                        j += 1;
                        i += 1;
                    }
                } else {
                    self.enqueue(first, w.cref);
                }
            }
            ws.truncate(j);
            self.watches[p.code()] = ws;
            if conflict.is_some() {
                break;
            }
        }
        conflict
    }

    fn bump_var(&mut self, v: Var) {
        let i = v.index();
        self.activity[i] += self.var_inc;
        if self.activity[i] > 1e100 {
            for a in self.activity.iter_mut() {
                *a *= 1e-100;
            }
            self.var_inc *= 1e-100;
        }
        self.heap.bumped(v.0, &self.activity);
    }

    fn bump_clause(&mut self, cref: u32) {
        let c = &mut self.clauses[cref as usize];
        if !c.learnt {
            return;
        }
        c.activity += self.cla_inc;
        if c.activity > 1e20 {
            for c in self.clauses.iter_mut().filter(|c| c.learnt) {
                c.activity *= 1e-20;
            }
            self.cla_inc *= 1e-20;
        }
    }

    fn analyze(&mut self, mut confl: u32) -> (Vec<Lit>, u32) {
        let mut learnt: Vec<Lit> = vec![Lit::new(Var(0), true)];
        let mut path_count = 0usize;
        let mut p: Option<Lit> = None;
        let mut idx = self.trail.len();
        let current = self.decision_level();
        loop {
            self.bump_clause(confl);
            let start = usize::from(p.is_some());
            let lits = self.clauses[confl as usize].lits.clone();
            for &q in &lits[start..] {
                let v = q.var();
                if !self.seen[v.index()] && self.level[v.index()] > 0 {
                    self.bump_var(v);
                    self.seen[v.index()] = true;
                    if self.level[v.index()] >= current {
                        path_count += 1;
                    } else {
                        learnt.push(q);
                    }
                }
            }
            loop {
                idx -= 1;
                if self.seen[self.trail[idx].var().index()] {
                    break;
                }
            }
            let lit = self.trail[idx];
            p = Some(lit);
            confl = self.reason[lit.var().index()];
            self.seen[lit.var().index()] = false;
            path_count -= 1;
            if path_count == 0 {
                break;
            }
        }
        learnt[0] = !p.expect("conflict analysis visits at least one literal");

        // drop literals implied by the rest of the clause
        let mut minimized = Vec::with_capacity(learnt.len());
        minimized.push(learnt[0]);
        for &l in &learnt[1..] {
            let r = self.reason[l.var().index()];
            let redundant = r != NO_REASON
                && self.clauses[r as usize].lits[1..]
                    .iter()
                    .all(|q| self.seen[q.var().index()] || self.level[q.var().index()] == 0);
            if !redundant {
                minimized.push(l);
            }
        }
        for l in &learnt {
            self.seen[l.var().index()] = false;
        }
        let mut learnt = minimized;

        let bt = if learnt.len() == 1 {
            0
        } else {
            let (max_i, _) = learnt
                .iter()
                .enumerate()
                .skip(1)
                .max_by_key(|(_, l)| self.level[l.var().index()])
                .expect("non-unit clause");
            learnt.swap(1, max_i);
            self.level[learnt[1].var().index()]
        };
        (learnt, bt)
    }

    fn cancel_until(&mut self, lvl: u32) {
        if self.decision_level() <= lvl {
            return;
        }
        let lim = self.trail_lim[lvl as usize];
        for i in (lim..self.trail.len()).rev() {
            let l = self.trail[i];
            let v = l.var().index();
            self.assigns[v] = UNDEF;
            self.reason[v] = NO_REASON;
            self.polarity[v] = l.is_positive();
            self.heap.insert(v as u32, &self.activity);
        }
        self.trail.truncate(lim);
        self.trail_lim.truncate(lvl as usize);
        self.qhead = lim;
    }

    fn pick_branch(&mut self) -> Option<Lit> {
        while let Some(v) = self.heap.pop(&self.activity) {
            if self.assigns[v as usize] == UNDEF {
                return Some(Lit::new(Var(v), self.polarity[v as usize]));
            }
        }
        None
    }

    fn locked(&self, cref: usize) -> bool {
        let c = &self.clauses[cref];
        let v = c.lits[0].var().index();
        self.reason[v] == cref as u32 && self.value(c.lits[0]) == TRUE
    }

    fn reduce_db(&mut self) {
        let mut cands: Vec<usize> = (0..self.clauses.len())
            .filter(|&i| {
                let c = &self.clauses[i];
                c.learnt && !c.deleted && c.lits.len() > 2 && !self.locked(i)
            })
            .collect();
        cands.sort_by(|&a, &b| self.clauses[a].activity.total_cmp(&self.clauses[b].activity));
        let remove = cands.len() / 2;
        for &i in &cands[..remove] {
            self.clauses[i].deleted = true;
            self.clauses[i].lits.clear();
            self.num_learnts -= 1;
        }
        let clauses = &self.clauses;
        for ws in self.watches.iter_mut() {
            ws.retain(|w| !clauses[w.cref as usize].deleted);
        }
    }

    fn luby(mut x: u64) -> f64 {
        // Luby sequence with base 2: 1 1 2 1 1 2 4 ...
        let (mut size, mut seq) = (1u64, 0u32);
        while size < x + 1 {
            seq += 1;
            size = 2 * size + 1;
        }
        while size - 1 != x {
            size = (size - 1) >> 1;
            seq -= 1;
            x %= size;
        }
        2f64.powi(seq as i32)
    }

    /// Runs the search; the timeout is checked at every conflict.
    pub fn solve(&mut self, timeout: Duration) -> Result<SolveResult, SatError> {
        let started = Instant::now();
        let status = self.search_loop(started, timeout);
        self.stats.time_s = started.elapsed().as_secs_f64();
        let model = if status == Status::Sat {
            let model: Vec<bool> = self.assigns.iter().map(|&a| a == TRUE).collect();
            if let Some(ci) = self.original.first_violated(&model) {
                return Err(SatError::ModelRejected(format!(
                    "internal solver model falsifies input clause {ci}"
                )));
            }
            Some(model)
        } else {
            None
        };
        Ok(SolveResult { status, model, stats: self.stats.clone() })
    }

    fn search_loop(&mut self, started: Instant, timeout: Duration) -> Status {
        if !self.ok {
            return Status::Unsat;
        }
        let mut restart_idx = 0u64;
        loop {
            let budget = (Self::luby(restart_idx) * RESTART_BASE) as u64;
            match self.search(budget, started, timeout) {
                Some(s) => return s,
                None => {
                    restart_idx += 1;
                    self.stats.restarts += 1;
                }
            }
        }
    }

    fn search(&mut self, budget: u64, started: Instant, timeout: Duration) -> Option<Status> {
        let mut conflicts_here = 0u64;
        loop {
            if let Some(confl) = self.propagate() {
                self.stats.conflicts += 1;
                conflicts_here += 1;
                if self.decision_level() == 0 {
                    self.ok = false;
                    return Some(Status::Unsat);
                }
                let (learnt, bt) = self.analyze(confl);
                self.cancel_until(bt);
                if learnt.len() == 1 {
                    self.enqueue(learnt[0], NO_REASON);
                } else {
                    let first = learnt[0];
                    let cref = self.attach(learnt, true);
                    self.bump_clause(cref);
                    self.enqueue(first, cref);
                }
                self.stats.learned += 1;
                self.var_inc /= VAR_DECAY;
                self.cla_inc /= CLA_DECAY;
                if started.elapsed() > timeout {
                    self.cancel_until(0);
                    return Some(Status::Timeout);
                }
            } else {
                if conflicts_here >= budget {
                    self.cancel_until(0);
                    return None;
                }
                if self.num_learnts as f64 - self.trail.len() as f64 >= self.max_learnts {
                    self.reduce_db();
                    self.max_learnts *= 1.1;
                }
                match self.pick_branch() {
                    None => return Some(Status::Sat),
                    Some(l) => {
                        self.stats.decisions += 1;
                        self.trail_lim.push(self.trail.len());
                        self.enqueue(l, NO_REASON);
                    }
                }
            }
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lit(x: i64) -> Lit {
        Lit::from_dimacs(x).unwrap()
    }

    fn cnf(n: usize, clauses: &[&[i64]]) -> Cnf {
        let mut c = Cnf::new(n);
        for cl in clauses {
            c.add_clause(cl.iter().map(|&x| lit(x)).collect());
        }
        c
    }

    fn solve(c: &Cnf) -> SolveResult {
        Solver::new(c, 0).unwrap().solve(Duration::from_secs(10)).unwrap()
    }

    #[test]
    fn or_with_negated_unit_is_sat_with_b() {
        let r = solve(&cnf(2, &[&[1, 2], &[-1]]));
        assert_eq!(r.status, Status::Sat);
        let m = r.model.unwrap();
        assert!(!m[0]);
        assert!(m[1]);
    }

    #[test]
    fn contradictory_units_are_unsat() {
        assert_eq!(solve(&cnf(1, &[&[1], &[-1]])).status, Status::Unsat);
    }

    #[test]
    fn empty_clause_is_unsat() {
        let mut c = Cnf::new(1);
        c.clauses.push(vec![]);
        assert_eq!(solve(&c).status, Status::Unsat);
    }

    #[test]
    fn out_of_range_literal_is_malformed() {
        let mut c = Cnf::new(1);
        c.clauses.push(vec![lit(3)]);
        assert!(matches!(Solver::new(&c, 0), Err(SatError::MalformedCnf(_))));
    }

    #[test]
    fn pigeonhole_three_into_two_is_unsat() {
        // p_{i,j}: pigeon i in hole j, var = 2*i + j + 1
        let v = |i: i64, j: i64| 2 * i + j + 1;
        let mut cls: Vec<Vec<i64>> = (0..3).map(|i| vec![v(i, 0), v(i, 1)]).collect();
        for j in 0..2 {
            for a in 0..3 {
                for b in a + 1..3 {
                    cls.push(vec![-v(a, j), -v(b, j)]);
                }
            }
        }
        let refs: Vec<&[i64]> = cls.iter().map(|c| c.as_slice()).collect();
        let r = solve(&cnf(6, &refs));
        assert_eq!(r.status, Status::Unsat);
        assert!(r.stats.conflicts > 0);
    }

    #[test]
    fn efficacy_ratio_and_undefined_marker() {
        let stats = SolveStats { propagations: 4000, conflicts: 2, ..Default::default() };
        assert_eq!(exploration_efficacy(&stats), Efficacy::Ratio(2000.0));
        let none = SolveStats { propagations: 17, conflicts: 0, ..Default::default() };
        assert_eq!(exploration_efficacy(&none), Efficacy::Undefined);
    }

    #[test]
    fn luby_prefix() {
        let seq: Vec<f64> = (0..15).map(Solver::luby).collect();
        assert_eq!(seq, vec![1., 1., 2., 1., 1., 2., 4., 1., 1., 2., 1., 1., 2., 4., 8.]);
    }

    #[test]
    fn timeout_zero_on_hard_instance_reports_timeout() {
        // pigeonhole 8 into 7 needs many conflicts
        let (p, h) = (8i64, 7i64);
        let v = |i: i64, j: i64| i * h + j + 1;
        let mut cls: Vec<Vec<i64>> = (0..p).map(|i| (0..h).map(|j| v(i, j)).collect()).collect();
        for j in 0..h {
            for a in 0..p {
                for b in a + 1..p {
                    cls.push(vec![-v(a, j), -v(b, j)]);
                }
            }
        }
        let refs: Vec<&[i64]> = cls.iter().map(|c| c.as_slice()).collect();
        let c = cnf((p * h) as usize, &refs);
        let r = Solver::new(&c, 0).unwrap().solve(Duration::ZERO).unwrap();
        assert_eq!(r.status, Status::Timeout);
        assert!(r.model.is_none());
    }
}
