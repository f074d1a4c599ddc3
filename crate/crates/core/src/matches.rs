//! Potential read-from pairs.
//!
//! Every read may be satisfied by any write to the same variable, except a
//! write of its own thread that the preserved order places after it. A
//! pair whose write comes earlier in the reader's own thread is *local*:
//! the value can be forwarded from the thread's store buffer before the
//! write becomes visible to anyone else.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::memmodel::{OrderOrigin, PpoGraph};
use crate::ssa::{EventId, SsaSystem, ThreadId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MatchError {
    #[error("read {0} has no candidate write")]
    ReadWithoutWriter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MatchId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MatchPair {
    pub id: MatchId,
    pub read: EventId,
    pub write: EventId,
    /// The write precedes the read in the reader's own thread.
    pub local: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MatchSet {
    pub pairs: Vec<MatchPair>,
    pub free_writes: Vec<EventId>,
    by_read: BTreeMap<EventId, Vec<MatchId>>,
}

impl MatchSet {
    pub fn pair(&self, id: MatchId) -> &MatchPair {
        &self.pairs[id.0]
    }

    /// Candidate pairs of `read`, in write-event order.
    pub fn candidates(&self, read: EventId) -> &[MatchId] {
        self.by_read.get(&read).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn reads(&self) -> impl Iterator<Item = EventId> + '_ {
        self.by_read.keys().copied()
    }
}

pub fn build_potmat(ssa: &SsaSystem, ppo: &PpoGraph) -> Result<MatchSet, MatchError> {
    let mut ms = MatchSet { free_writes: ssa.writes().map(|w| w.id).collect(), ..Default::default() };
    for r in ssa.reads() {
        let mut ids = Vec::new();
        for w in ssa.writes().filter(|w| w.label == r.label) {
            let same_thread = w.thread == r.thread && w.thread != ThreadId::Init;
            if same_thread && ppo.ordered(r.id, w.id) {
                continue;
            }
            let id = MatchId(ms.pairs.len());
            ms.pairs.push(MatchPair { id, read: r.id, write: w.id, local: same_thread });
            ids.push(id);
        }
        if ids.is_empty() {
            return Err(MatchError::ReadWithoutWriter(ssa.describe_event(r.id)));
        }
        ms.by_read.insert(r.id, ids);
    }
    Ok(ms)
}

/// Graphviz rendering: one cluster per thread with its preserved-order
/// edges, plus dashed read-from candidates.
pub fn to_dot(ssa: &SsaSystem, ppo: &PpoGraph, ms: &MatchSet) -> String {
    let mut out = String::from("digraph ppo {\n  rankdir=TB;\n  node [shape=box, fontname=\"monospace\"];\n");
    let node = |id: EventId| format!("e{}", id.0);
    let _ = writeln!(out, "  subgraph cluster_init {{\n    label=\"init\";");
    for &e in &ssa.init_events {
        let _ = writeln!(out, "    {} [label=\"{}\"];", node(e), ssa.describe_event(e));
    }
    out.push_str("  }\n");
    for (ti, t) in ssa.threads.iter().enumerate() {
        let _ = writeln!(out, "  subgraph cluster_{ti} {{\n    label=\"{}\";", t.name);
        for &e in &t.events {
            let _ = writeln!(out, "    {} [label=\"{}\"];", node(e), ssa.describe_event(e));
        }
        for &(a, b) in &ppo.edges[ti] {
            let _ = writeln!(out, "    {} -> {};", node(a), node(b));
        }
        out.push_str("  }\n");
    }
    for o in ppo.orderings.iter().filter(|o| o.origin == OrderOrigin::Join) {
        let _ = writeln!(out, "  {} -> {} [color=gray];", node(o.before), node(o.after));
    }
    for p in &ms.pairs {
        let _ = writeln!(out, "  {} -> {} [style=dashed, label=\"m{}\"];", node(p.write), node(p.read), p.id.0);
    }
    out.push_str("}\n");
    out
}
