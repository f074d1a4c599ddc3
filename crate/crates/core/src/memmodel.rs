//! Preserved program order under SC, TSO and PSO.
//!
//! The per-thread order is built pairwise from the kinds of two
//! program-ordered events, closed transitively, and then reduced to its
//! covering edges. Fences order everything before them against everything
//! after them.
//!
//! For the clock constraints the fences themselves are eliminated: a fence
//! that executes unconditionally simply adds its before/after pairs to the
//! pairwise relation, while a fence under a branch contributes orderings
//! guarded by its path condition.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::ssa::{Event, EventId, EventKind, GuardId, SsaSystem};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MemModelError {
    #[error("ordering relation contains a cycle")]
    CycleDetected,
    #[error("unknown memory model `{0}` (expected sc, tso or pso)")]
    UnknownModel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MemoryModel {
    Sc,
    Tso,
    Pso,
}

impl MemoryModel {
    pub const ALL: [MemoryModel; 3] = [MemoryModel::Sc, MemoryModel::Tso, MemoryModel::Pso];

    pub fn name(self) -> &'static str {
        match self {
            MemoryModel::Sc => "sc",
            MemoryModel::Tso => "tso",
            MemoryModel::Pso => "pso",
        }
    }
}

impl fmt::Display for MemoryModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MemoryModel {
    type Err = MemModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sc" => Ok(MemoryModel::Sc),
            "tso" => Ok(MemoryModel::Tso),
            "pso" => Ok(MemoryModel::Pso),
            _ => Err(MemModelError::UnknownModel(s.to_string())),
        }
    }
}

/// Whether `a`, program-ordered before `b` in the same thread, must stay
/// before it.
///
/// A write followed by a read is relaxed under TSO and PSO for any pair of
/// locations: a read of the thread's own buffered store is satisfied by
/// forwarding before the store reaches memory.
pub fn preserved(mm: MemoryModel, a: &Event, b: &Event) -> bool {
    match (a.kind, b.kind) {
        (EventKind::Fence, _) | (_, EventKind::Fence) => true,
        (EventKind::Read, _) => true,
        (EventKind::Write, EventKind::Read) => mm == MemoryModel::Sc,
        (EventKind::Write, EventKind::Write) => mm != MemoryModel::Pso || a.label == b.label,
    }
}

/// Transitively closed preserved order of one thread's events, given in
/// program order.
pub fn compute_tppo(events: &[&Event], mm: MemoryModel) -> BTreeSet<(EventId, EventId)> {
    closure_of(events.len(), |i, j| preserved(mm, events[i], events[j]))
        .into_iter()
        .map(|(i, j)| (events[i].id, events[j].id))
        .collect()
}

/// Closure of a relation over program positions `0..n` whose edges all
/// point forward.
fn closure_of(n: usize, rel: impl Fn(usize, usize) -> bool) -> BTreeSet<(usize, usize)> {
    let mut reach: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for i in (0..n).rev() {
        for j in i + 1..n {
            if rel(i, j) && !reach[i].contains(&j) {
                reach[i].insert(j);
                let later = reach[j].clone();
                reach[i].extend(later);
            }
        }
    }
    reach.into_iter().enumerate().flat_map(|(i, s)| s.into_iter().map(move |j| (i, j))).collect()
}

/// The unique minimal edge set with the same transitive closure as `edges`.
pub fn transitive_reduction<N: Copy + Ord>(edges: &BTreeSet<(N, N)>) -> Result<BTreeSet<(N, N)>, MemModelError> {
    let mut succ: BTreeMap<N, Vec<N>> = BTreeMap::new();
    let mut indeg: BTreeMap<N, usize> = BTreeMap::new();
    for &(a, b) in edges {
        if a == b {
            return Err(MemModelError::CycleDetected);
        }
        succ.entry(a).or_default().push(b);
        succ.entry(b).or_default();
        *indeg.entry(b).or_default() += 1;
        indeg.entry(a).or_default();
    }
    // Kahn's algorithm for a topological order
    let mut ready: Vec<N> = indeg.iter().filter(|(_, &d)| d == 0).map(|(&n, _)| n).collect();
    let mut order = Vec::with_capacity(indeg.len());
    while let Some(n) = ready.pop() {
        order.push(n);
        for &m in &succ[&n] {
            let d = indeg.get_mut(&m).unwrap();
            *d -= 1;
            if *d == 0 {
                ready.push(m);
            }
        }
    }
    if order.len() != indeg.len() {
        return Err(MemModelError::CycleDetected);
    }
    // strict descendants, filled in reverse topological order
    let mut desc: BTreeMap<N, BTreeSet<N>> = BTreeMap::new();
    for &n in order.iter().rev() {
        let mut d = BTreeSet::new();
        for &m in &succ[&n] {
            d.insert(m);
            d.extend(desc[&m].iter().copied());
        }
        desc.insert(n, d);
    }
    Ok(edges
        .iter()
        .copied()
        .filter(|&(a, b)| !succ[&a].iter().any(|&w| w != b && desc[&w].contains(&b)))
        .collect())
}

/// Why two clocks are ordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OrderOrigin {
    /// Covering edge of the preserved program order.
    Program,
    /// Pair separated by a fence that executes only under a branch.
    Fence,
    /// A thread's event before a read of the final-assertion checker.
    Join,
    /// Initial write before an event on the same variable.
    Init,
}

/// `C_before < C_after`, required whenever `guard` (if any) holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ClockOrder {
    pub before: EventId,
    pub after: EventId,
    pub guard: Option<GuardId>,
    pub origin: OrderOrigin,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PpoGraph {
    pub mm: MemoryModel,
    /// Per thread: covering edges of the preserved order, fences included.
    pub edges: Vec<BTreeSet<(EventId, EventId)>>,
    /// Per thread: the transitively closed preserved order.
    closure: Vec<HashSet<(EventId, EventId)>>,
    /// Every ordering between clocks the encoding must enforce.
    pub orderings: Vec<ClockOrder>,
}

impl PpoGraph {
    /// Whether the preserved order places `a` before `b` (same thread).
    pub fn ordered(&self, a: EventId, b: EventId) -> bool {
        self.closure.iter().any(|c| c.contains(&(a, b)))
    }
}

/// Computes the preserved order of every thread and the clock orderings
/// derived from it.
pub fn build_ppo(ssa: &SsaSystem, mm: MemoryModel) -> Result<PpoGraph, MemModelError> {
    let mut edges = Vec::with_capacity(ssa.threads.len());
    let mut closure = Vec::with_capacity(ssa.threads.len());
    let mut orderings = Vec::new();
    // per thread: events with no successor / no predecessor among clocked events
    let mut sinks: Vec<Vec<EventId>> = Vec::new();
    let mut sources: Vec<Vec<EventId>> = Vec::new();

    for t in &ssa.threads {
        let evs: Vec<&Event> = t.events.iter().map(|&id| ssa.event(id)).collect();
        let tppo = compute_tppo(&evs, mm);
        edges.push(transitive_reduction(&tppo)?);
        closure.push(tppo.into_iter().collect());

        let mem: Vec<&Event> = evs.iter().copied().filter(|e| !e.is_fence()).collect();
        let pos_of = |id: EventId| evs.iter().position(|e| e.id == id).unwrap();
        let fence_between = |a: &Event, b: &Event, unconditional: bool| {
            evs[pos_of(a.id) + 1..pos_of(b.id)]
                .iter()
                .any(|f| f.is_fence() && ssa.guard_is_true(f.guard) == unconditional)
        };
        let base = closure_of(mem.len(), |i, j| preserved(mm, mem[i], mem[j]) || fence_between(mem[i], mem[j], true));
        for &(i, j) in &transitive_reduction(&base)? {
            orderings.push(ClockOrder { before: mem[i].id, after: mem[j].id, guard: None, origin: OrderOrigin::Program });
        }
        for (fp, f) in evs.iter().enumerate() {
            if !f.is_fence() || ssa.guard_is_true(f.guard) {
                continue;
            }
            for (i, p) in mem.iter().enumerate() {
                for (j, q) in mem.iter().enumerate() {
                    if pos_of(p.id) < fp && fp < pos_of(q.id) && !base.contains(&(i, j)) {
                        orderings.push(ClockOrder {
                            before: p.id,
                            after: q.id,
                            guard: Some(f.guard),
                            origin: OrderOrigin::Fence,
                        });
                    }
                }
            }
        }
        sinks.push((0..mem.len()).filter(|&i| !base.iter().any(|&(a, _)| a == i)).map(|i| mem[i].id).collect());
        sources.push((0..mem.len()).filter(|&j| !base.iter().any(|&(_, b)| b == j)).map(|j| mem[j].id).collect());
    }

    if let Some(c) = ssa.checker() {
        for (t, thread_sinks) in sinks.iter().enumerate() {
            if t == c {
                continue;
            }
            for &s in thread_sinks {
                for &r in &sources[c] {
                    orderings.push(ClockOrder { before: s, after: r, guard: None, origin: OrderOrigin::Join });
                }
            }
        }
    }

    for e in &ssa.events {
        if let (Some(v), false) = (e.label, e.thread == crate::ssa::ThreadId::Init) {
            orderings.push(ClockOrder {
                before: ssa.init_events[v],
                after: e.id,
                guard: None,
                origin: OrderOrigin::Init,
            });
        }
    }
    Ok(PpoGraph { mm, edges, closure, orderings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse;
    use crate::ssa::{build_ssa, ThreadId};
    use proptest::prelude::*;

    /// Builds a single thread from tokens like `Wx`, `Ry`, `F`.
    fn thread(shape: &str) -> Vec<Event> {
        shape.split_whitespace()
            .enumerate()
            .map(|(i, tok)| {
                let (kind, label) = match tok.as_bytes()[0] {
                    b'W' => (EventKind::Write, Some((tok.as_bytes()[1] - b'x') as usize)),
                    b'R' => (EventKind::Read, Some((tok.as_bytes()[1] - b'x') as usize)),
                    _ => (EventKind::Fence, None),
                };
                Event {
                    id: EventId(i),
                    thread: ThreadId::Thread(0),
                    kind,
                    label,
                    ssa_index: i,
                    guard: GuardId(0),
                    value: None,
                }
            })
            .collect()
    }

    fn tppo(shape: &str, mm: MemoryModel) -> BTreeSet<(EventId, EventId)> {
        let evs = thread(shape);
        let refs: Vec<&Event> = evs.iter().collect();
        compute_tppo(&refs, mm)
    }

    fn e(a: usize, b: usize) -> (EventId, EventId) {
        (EventId(a), EventId(b))
    }

    #[test]
    fn store_buffering_thread() {
        assert!(tppo("Wx Ry", MemoryModel::Sc).contains(&e(0, 1)));
        assert!(tppo("Wx Ry", MemoryModel::Tso).is_empty());
        assert!(tppo("Wx Ry", MemoryModel::Pso).is_empty());
    }

    #[test]
    fn write_order_thread() {
        assert!(tppo("Wx Wy", MemoryModel::Tso).contains(&e(0, 1)));
        assert!(tppo("Wx Wy", MemoryModel::Pso).is_empty());
        assert!(tppo("Wx Wx", MemoryModel::Pso).contains(&e(0, 1)));
    }

    #[test]
    fn fence_restores_order() {
        let t = tppo("Wx F Ry", MemoryModel::Pso);
        assert_eq!(t, [e(0, 1), e(1, 2), e(0, 2)].into_iter().collect());
        assert_eq!(transitive_reduction(&t).unwrap(), [e(0, 1), e(1, 2)].into_iter().collect());
    }

    #[test]
    fn reduction_of_chain() {
        let edges: BTreeSet<_> = [('a', 'b'), ('b', 'c'), ('a', 'c')].into_iter().collect();
        let red = transitive_reduction(&edges).unwrap();
        assert_eq!(red, [('a', 'b'), ('b', 'c')].into_iter().collect());
        assert_eq!(transitive_reduction(&red).unwrap(), red);
    }

    #[test]
    fn reduction_rejects_cycles() {
        let edges: BTreeSet<_> = [(1, 2), (2, 3), (3, 1)].into_iter().collect();
        assert_eq!(transitive_reduction(&edges), Err(MemModelError::CycleDetected));
    }

    /// Reflexive-free closure by Floyd–Warshall over an adjacency matrix.
    fn warshall(n: usize, edges: &BTreeSet<(usize, usize)>) -> Vec<Vec<bool>> {
        let mut m = vec![vec![false; n]; n];
        for &(a, b) in edges {
            m[a][b] = true;
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if m[i][k] && m[k][j] {
                        m[i][j] = true;
                    }
                }
            }
        }
        m
    }

    #[test]
    fn reduction_of_random_dags() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.gen_range(2..=12);
            // edges only from lower to higher index of a random permutation
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                perm.swap(i, rng.gen_range(0..=i));
            }
            let mut edges = BTreeSet::new();
            for i in 0..n {
                for j in i + 1..n {
                    if rng.gen_bool(0.35) {
                        edges.insert((perm[i], perm[j]));
                    }
                }
            }
            let red = transitive_reduction(&edges).unwrap();
            assert!(red.is_subset(&edges));
            let full = warshall(n, &edges);
            assert_eq!(warshall(n, &red), full);
            for &edge in &red {
                let mut fewer = red.clone();
                fewer.remove(&edge);
                assert_ne!(warshall(n, &fewer), full, "edge {edge:?} is redundant");
            }
        }
    }

    fn arb_thread() -> impl Strategy<Value = String> {
        prop::collection::vec(prop::sample::select(vec!["Wx", "Wy", "Wz", "Rx", "Ry", "Rz", "F"]), 1..9)
            .prop_map(|v| v.join(" "))
    }

    proptest! {
        #[test]
        fn weaker_models_preserve_less(shape in arb_thread()) {
            let sc = tppo(&shape, MemoryModel::Sc);
            let tso = tppo(&shape, MemoryModel::Tso);
            let pso = tppo(&shape, MemoryModel::Pso);
            prop_assert!(pso.is_subset(&tso));
            prop_assert!(tso.is_subset(&sc));
        }

        #[test]
        fn loads_and_same_location_stores_stay_ordered(shape in arb_thread()) {
            let evs = thread(&shape);
            for mm in MemoryModel::ALL {
                let t = tppo(&shape, mm);
                for a in &evs {
                    for b in evs.iter().filter(|b| b.id > a.id) {
                        if a.is_read() {
                            prop_assert!(t.contains(&(a.id, b.id)));
                        }
                        if a.is_write() && b.is_write() && a.label == b.label {
                            prop_assert!(t.contains(&(a.id, b.id)));
                        }
                    }
                }
            }
        }
    }

    fn program(src: &str, mm: MemoryModel) -> (SsaSystem, PpoGraph) {
        let ssa = build_ssa(&parse(src).unwrap(), 8).unwrap();
        let ppo = build_ppo(&ssa, mm).unwrap();
        (ssa, ppo)
    }

    fn program_orders(ssa: &SsaSystem, ppo: &PpoGraph) -> Vec<(String, String, OrderOrigin)> {
        ppo.orderings
            .iter()
            .filter(|o| o.origin != OrderOrigin::Init)
            .map(|o| (ssa.describe_event(o.before), ssa.describe_event(o.after), o.origin))
            .collect()
    }

    const SB: &str = "var x = 0; var y = 0;
        thread t1 { local r1; x = 1; r1 = y; }
        thread t2 { local r2; y = 1; r2 = x; }
        assert(r1 == 1 || r2 == 1);";

    #[test]
    fn store_buffering_orderings() {
        let (ssa, sc) = program(SB, MemoryModel::Sc);
        let sc = program_orders(&ssa, &sc);
        assert!(sc.contains(&("t1:W x#1".into(), "t1:R y#1".into(), OrderOrigin::Program)));
        let (ssa, tso) = program(SB, MemoryModel::Tso);
        let tso = program_orders(&ssa, &tso);
        assert!(!tso.iter().any(|o| o.2 == OrderOrigin::Program));
        // the final assertion reads only locals, so there is nothing to join
        assert!(tso.is_empty());
    }

    #[test]
    fn checker_reads_follow_every_thread() {
        let (ssa, ppo) = program("var x; thread a { x = 1; } thread b { x = 2; } assert(x == 2);", MemoryModel::Pso);
        let joins: Vec<_> = program_orders(&ssa, &ppo).into_iter().filter(|o| o.2 == OrderOrigin::Join).collect();
        assert_eq!(joins.len(), 2);
        assert!(joins.iter().all(|o| o.1 == "assert:R x#3"));
    }

    #[test]
    fn unconditional_fence_orders_across() {
        let (ssa, ppo) = program("var x; var y; thread t { local r; x = 1; fence; r = y; }", MemoryModel::Tso);
        assert_eq!(
            program_orders(&ssa, &ppo),
            vec![("t:W x#1".into(), "t:R y#1".into(), OrderOrigin::Program)]
        );
        // the fence stays visible in the preserved-order graph itself
        assert_eq!(ppo.edges[0].len(), 2);
    }

    #[test]
    fn conditional_fence_gives_guarded_orderings() {
        let (ssa, ppo) = program(
            "var x; var y; var c; thread t { local r; x = 1; if (c == 1) { fence; } r = y; }",
            MemoryModel::Tso,
        );
        let guarded: Vec<_> = ppo.orderings.iter().filter(|o| o.guard.is_some()).collect();
        assert_eq!(guarded.len(), 1);
        assert_eq!(ssa.describe_event(guarded[0].before), "t:W x#1");
        assert_eq!(ssa.describe_event(guarded[0].after), "t:R y#1");
    }

    #[test]
    fn initial_writes_precede_their_variable() {
        let (ssa, ppo) = program("var x; var y; thread t { x = y; }", MemoryModel::Sc);
        let inits: Vec<_> = ppo
            .orderings
            .iter()
            .filter(|o| o.origin == OrderOrigin::Init)
            .map(|o| (ssa.describe_event(o.before), ssa.describe_event(o.after)))
            .collect();
        assert_eq!(
            inits,
            vec![("init:W y#0".to_string(), "t:R y#1".to_string()), ("init:W x#0".into(), "t:W x#1".into())]
        );
    }

    #[test]
    fn model_names_round_trip() {
        for mm in MemoryModel::ALL {
            assert_eq!(mm.to_string().parse::<MemoryModel>().unwrap(), mm);
        }
        assert!("rmo".parse::<MemoryModel>().is_err());
    }
}
