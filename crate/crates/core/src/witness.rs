//! Counterexample traces.
//!
//! A satisfying assignment is decoded into the executed events ordered by
//! clock, with the value each read observed and the write it read from.
//! The decoded trace is checked against the formula's own conditions
//! (`reconstruct`) and, independently, replayed step by step on the
//! store-buffer machine (`replay_validate`).

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use thiserror::Error;

use crate::encode::VarSpace;
use crate::frontend::Ast;
use crate::matches::MatchSet;
use crate::memmodel::MemoryModel;
use crate::oracle::{Choice, Effect, Key, Machine, MachineState, NextOp};
use crate::ssa::{EventId, EventKind, SsaSystem, ThreadId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WitnessError {
    #[error("model is inconsistent with the encoding: {0}")]
    InconsistentModel(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceStep {
    pub event: EventId,
    pub thread: ThreadId,
    pub kind: EventKind,
    pub label: usize,
    pub ssa_index: usize,
    pub clock: u64,
    pub value: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    /// Executed reads and writes, by increasing clock.
    pub steps: Vec<TraceStep>,
    /// Read → the write it observed.
    pub matches: BTreeMap<EventId, EventId>,
    /// Index into `SsaSystem::asserts` of a failing assertion.
    pub violated_assert: usize,
    rendered: Vec<String>,
}

impl Trace {
    pub fn step(&self, e: EventId) -> Option<&TraceStep> {
        self.steps.iter().find(|s| s.event == e)
    }
}

impl fmt::Display for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for line in &self.rendered {
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

fn inconsistent(msg: String) -> WitnessError {
    WitnessError::InconsistentModel(msg)
}

/// Decodes `model` and re-checks every condition the formula imposes on
/// read-from choices, clocks and values.
pub fn reconstruct(model: &[bool], vs: &VarSpace, ssa: &SsaSystem, ms: &MatchSet) -> Result<Trace, WitnessError> {
    let executed = |e: EventId| vs.guard(model, ssa.event(e).guard);
    let clock = |e: EventId| vs.clock_value(model, e);
    let value = |e: EventId| vs.value(model, ssa.event(e).value.expect("memory event has a value"));

    let mut matches = BTreeMap::new();
    for r in ssa.reads() {
        let chosen: Vec<_> = ms.candidates(r.id).iter().filter(|&&m| vs.matched(model, m)).collect();
        let name = ssa.describe_event(r.id);
        if !executed(r.id) {
            if !chosen.is_empty() {
                return Err(inconsistent(format!("unexecuted read {name} is matched")));
            }
            continue;
        }
        let [&m] = chosen.as_slice() else {
            return Err(inconsistent(format!("read {name} has {} matches", chosen.len())));
        };
        let p = ms.pair(m);
        let wname = ssa.describe_event(p.write);
        if !executed(p.write) {
            return Err(inconsistent(format!("{name} reads from unexecuted {wname}")));
        }
        if !p.local && clock(p.write) >= clock(r.id) {
            return Err(inconsistent(format!("{name} reads from {wname}, which is not earlier")));
        }
        if value(p.write) != value(r.id) {
            return Err(inconsistent(format!("{name} = {} but {wname} = {}", value(r.id), value(p.write))));
        }
        for &m2 in ms.candidates(r.id) {
            let other = ms.pair(m2);
            if m2 == m || !executed(other.write) {
                continue;
            }
            let visible = other.local || clock(other.write) <= clock(r.id);
            if visible && clock(p.write) < clock(other.write) {
                return Err(inconsistent(format!(
                    "{name} reads from {wname} although {} is later and visible",
                    ssa.describe_event(other.write)
                )));
            }
        }
        matches.insert(r.id, p.write);
    }

    let writes: Vec<_> = ssa.writes().collect();
    for (i, a) in writes.iter().enumerate() {
        for b in &writes[i + 1..] {
            if a.label == b.label && clock(a.id) == clock(b.id) {
                return Err(inconsistent(format!(
                    "{} and {} share clock {}",
                    ssa.describe_event(a.id),
                    ssa.describe_event(b.id),
                    clock(a.id)
                )));
            }
        }
    }

    let sym = |s| vs.value(model, s);
    let guard = |g| vs.guard(model, g);
    let violated_assert = ssa
        .asserts
        .iter()
        .position(|a| guard(a.guard) && a.cond.eval(&sym, &guard, ssa.value_width) == 0)
        .ok_or_else(|| inconsistent("no assertion fails".into()))?;

    let mut steps: Vec<TraceStep> = ssa
        .events
        .iter()
        .filter(|e| !e.is_fence() && executed(e.id))
        .map(|e| TraceStep {
            event: e.id,
            thread: e.thread,
            kind: e.kind,
            label: e.label.expect("memory event has a label"),
            ssa_index: e.ssa_index,
            clock: clock(e.id),
            value: value(e.id),
        })
        .collect();
    steps.sort_by_key(|s| replay_order(ssa, s));

    let mut rendered: Vec<String> =
        steps.iter().map(|s| format!("[{}] {} = {}", s.clock, ssa.describe_event(s.event), s.value)).collect();
    rendered.push("matches:".into());
    for (&r, &w) in &matches {
        rendered.push(format!("  {} <- {}", ssa.describe_event(r), ssa.describe_event(w)));
    }
    let a = &ssa.asserts[violated_assert];
    rendered.push(format!(
        "violated: {} in {}",
        ssa.term_to_string(&a.cond),
        ssa.threads.get(a.thread).map_or("?", |t| t.name.as_str())
    ));
    Ok(Trace { steps, matches, violated_assert, rendered })
}

/// Clock first; at equal clocks writes go before reads, then thread and
/// program order.
fn replay_order(ssa: &SsaSystem, s: &TraceStep) -> (u64, bool, isize, usize) {
    (s.clock, s.kind != EventKind::Write, s.thread.index(), thread_key(ssa, s.event).unwrap_or(0))
}

/// Position of an event among its thread's memory events; this is the key
/// the store-buffer machine uses for the same instruction.
fn thread_key(ssa: &SsaSystem, e: EventId) -> Option<Key> {
    match ssa.event(e).thread {
        ThreadId::Init => None,
        ThreadId::Thread(t) => ssa.threads[t].events.iter().position(|&x| x == e),
    }
}

struct Replay<'a> {
    machine: &'a Machine,
    mm: MemoryModel,
    state: MachineState,
    user_threads: usize,
}

impl Replay<'_> {
    fn take(&mut self, choice: Choice) -> Option<Effect> {
        let (next, effect) = self.machine.step_with_effect(&self.state, choice).ok()?;
        self.state = next;
        Some(effect)
    }

    /// Runs thread `t` up to (not including) `target`, executing only what
    /// the trace allows to happen silently: buffered stores that commit
    /// later, fences and the checker's start. `None` runs to completion.
    fn advance(&mut self, t: usize, target: Option<NextOp>) -> Option<()> {
        loop {
            let op = self.machine.next_op(&self.state, t);
            if op == target {
                return Some(());
            }
            match op? {
                NextOp::Load(_) => return None,
                NextOp::Store(_) if self.mm == MemoryModel::Sc => return None,
                NextOp::Store(_) | NextOp::Fence(_) => {
                    self.take(Choice::Exec(t))?;
                }
                NextOp::Join => {
                    for u in 0..self.user_threads {
                        self.advance(u, None)?;
                    }
                    self.take(Choice::Exec(t))?;
                }
            }
        }
    }
}

/// Replays `trace` on the store-buffer machine for the unrolled program:
/// every write commits to memory at its clock, every read executes at its
/// clock and must observe the value and source the trace claims, and the
/// run must end in a state with a failed assertion.
pub fn replay_validate(trace: &Trace, ssa: &SsaSystem, unrolled: &Ast, mm: MemoryModel) -> bool {
    replay(trace, ssa, unrolled, mm).is_some()
}

fn replay(trace: &Trace, ssa: &SsaSystem, unrolled: &Ast, mm: MemoryModel) -> Option<()> {
    let machine = Machine::new(unrolled, mm, ssa.value_width).ok()?;
    if machine.thread_count() != ssa.threads.len() {
        return None;
    }
    let mut memory = vec![0; ssa.vars.len()];
    let mut last_commit: HashMap<usize, EventId> = HashMap::new();
    for s in trace.steps.iter().filter(|s| s.thread == ThreadId::Init) {
        memory[s.label] = s.value;
        last_commit.insert(s.label, s.event);
    }
    if last_commit.len() != ssa.vars.len() {
        return None;
    }
    let user_threads = ssa.threads.iter().filter(|t| !t.checker).count();
    let mut rp = Replay { machine: &machine, mm, state: machine.initial_state(memory), user_threads };
    let key_of: HashMap<EventId, Key> =
        trace.steps.iter().filter_map(|s| Some((s.event, thread_key(ssa, s.event)?))).collect();

    for s in trace.steps.iter().filter(|s| s.thread != ThreadId::Init) {
        let ThreadId::Thread(t) = s.thread else { unreachable!() };
        let key = key_of[&s.event];
        match s.kind {
            EventKind::Write => {
                let buffered = rp.state.buffers[t].iter().position(|p| p.key == key);
                let idx = match buffered {
                    Some(i) => i,
                    None => {
                        rp.advance(t, Some(NextOp::Store(key)))?;
                        match rp.take(Choice::Exec(t))? {
                            Effect::Store { value, .. } if value == s.value => {}
                            _ => return None,
                        }
                        if mm == MemoryModel::Sc {
                            last_commit.insert(s.label, s.event);
                            continue;
                        }
                        rp.state.buffers[t].iter().position(|p| p.key == key)?
                    }
                };
                match rp.take(Choice::Flush(t, idx))? {
                    Effect::Commit { value, .. } if value == s.value => {}
                    _ => return None,
                }
                last_commit.insert(s.label, s.event);
            }
            EventKind::Read => {
                rp.advance(t, Some(NextOp::Load(key)))?;
                let Effect::Load { value, forwarded_from, .. } = rp.take(Choice::Exec(t))? else {
                    return None;
                };
                let source = *trace.matches.get(&s.event)?;
                let source_ok = match forwarded_from {
                    Some(k) => ssa.event(source).thread == s.thread && key_of.get(&source) == Some(&k),
                    None => last_commit.get(&s.label) == Some(&source),
                };
                if value != s.value || !source_ok {
                    return None;
                }
            }
            EventKind::Fence => return None,
        }
    }
    for t in 0..machine.thread_count() {
        rp.advance(t, None)?;
    }
    (machine.is_terminal(&rp.state) && rp.state.violated).then_some(())
}
