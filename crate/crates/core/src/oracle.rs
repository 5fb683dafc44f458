//! Executable concurrency semantics over explicit operation histories.
//!
//! A [`History`] is a set of update events with a happens-before relation.
//! Each `eval_*` function computes the query-visible state a replicated type
//! must expose once every event in the history has been applied, directly
//! from the happens-before closure and the event timestamps. Nothing here
//! shares code with the replicated types; this module is the reference they
//! are checked against.

use std::cell::OnceCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::causality::{Dot, HybridTimestamp, ReplicaId};
use crate::value::Value;

/// An update request. Queries are not events and never appear here.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Op {
    Add(Value),
    Rmv(Value),
    /// Register write.
    Write(Value),
    /// Counter write (`wr(n)` on a write-wins counter).
    Assign(i64),
    Inc(u64),
    Dec(u64),
    /// Bounded-counter rights transfer from the issuing replica.
    Transfer { to: ReplicaId, amount: u64 },
    /// Top-K add with a caller-supplied score.
    AddScored { elem: Value, score: i64 },
}

impl Op {
    pub fn kind(&self) -> &'static str {
        match self {
            Op::Add(_) => "add",
            Op::Rmv(_) => "rmv",
            Op::Write(_) => "write",
            Op::Assign(_) => "assign",
            Op::Inc(_) => "inc",
            Op::Dec(_) => "dec",
            Op::Transfer { .. } => "transfer",
            Op::AddScored { .. } => "add_scored",
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Op::Add(v) => write!(f, "add({v})"),
            Op::Rmv(v) => write!(f, "rmv({v})"),
            Op::Write(v) => write!(f, "wr({v})"),
            Op::Assign(n) => write!(f, "wr({n})"),
            Op::Inc(n) => write!(f, "inc({n})"),
            Op::Dec(n) => write!(f, "dec({n})"),
            Op::Transfer { to, amount } => write!(f, "transfer({to},{amount})"),
            Op::AddScored { elem, score } => write!(f, "add({elem},{score})"),
        }
    }
}

impl fmt::Debug for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// An update a replicated type cannot perform.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{kind} does not support {op}")]
pub struct UnsupportedOp {
    pub kind: &'static str,
    pub op: String,
}

impl UnsupportedOp {
    pub fn new(kind: &'static str, op: &Op) -> Self {
        UnsupportedOp {
            kind,
            op: op.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpEvent {
    pub id: Dot,
    pub op: Op,
    pub ts: HybridTimestamp,
}

/// Why an edge is in the happens-before relation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum EdgeCause {
    /// Earlier event at the same replica.
    ProgramOrder,
    /// The source's effects reached the target's replica through a message.
    Delivery,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("happens-before cycle through {0} and {1}")]
    Cycle(Dot, Dot),
    #[error("events {0} and {1} of the same replica are not ordered by happens-before")]
    PerReplicaOrder(Dot, Dot),
    #[error("{0} happens before {1} but its timestamp is not smaller")]
    TimestampOrder(Dot, Dot),
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("unknown event {0}")]
    UnknownEvent(Dot),
    #[error("duplicate event id {0}")]
    DuplicateEvent(Dot),
    #[error("invalid history: {0}")]
    InvalidHistory(#[from] Violation),
    #[error("{evaluator} does not accept {op} (event {event})")]
    OutOfDomain {
        evaluator: &'static str,
        event: Dot,
        op: String,
    },
}

/// Reachability matrix of the transitive closure, one bitset row per event.
#[derive(Clone, Debug)]
struct Closure {
    words: usize,
    rows: Vec<Vec<u64>>,
}

impl Closure {
    fn compute(n: usize, edges: &BTreeMap<(usize, usize), EdgeCause>) -> Self {
        let words = n.div_ceil(64).max(1);
        let mut rows = vec![vec![0u64; words]; n];
        for &(a, b) in edges.keys() {
            rows[a][b / 64] |= 1 << (b % 64);
        }
        for k in 0..n {
            let row_k = rows[k].clone();
            for row in rows.iter_mut() {
                if row[k / 64] & (1 << (k % 64)) != 0 {
                    for (w, bits) in row.iter_mut().zip(&row_k) {
                        *w |= bits;
                    }
                }
            }
        }
        Closure { words, rows }
    }

    fn reaches(&self, a: usize, b: usize) -> bool {
        debug_assert!(b / 64 < self.words);
        self.rows[a][b / 64] & (1 << (b % 64)) != 0
    }
}

/// Update events plus happens-before. Edges are stored as given; queries use
/// the transitive closure, computed on first use and cached.
#[derive(Clone, Default)]
pub struct History {
    events: Vec<OpEvent>,
    index: BTreeMap<Dot, usize>,
    edges: BTreeMap<(usize, usize), EdgeCause>,
    last_at: BTreeMap<ReplicaId, usize>,
    closure: OnceCell<Closure>,
    validity: OnceCell<Result<(), Violation>>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, event: OpEvent) -> Result<(), OracleError> {
        if self.index.contains_key(&event.id) {
            return Err(OracleError::DuplicateEvent(event.id));
        }
        let i = self.events.len();
        let last = self.last_at.entry(event.id.replica.clone()).or_insert(i);
        if self.events.get(*last).is_none_or(|e| e.id.counter < event.id.counter) {
            *last = i;
        }
        self.index.insert(event.id.clone(), i);
        self.events.push(event);
        self.invalidate();
        Ok(())
    }

    pub fn add_edge(&mut self, from: &Dot, to: &Dot, cause: EdgeCause) -> Result<(), OracleError> {
        let a = self.position(from)?;
        let b = self.position(to)?;
        self.edges.insert((a, b), cause);
        self.invalidate();
        Ok(())
    }

    /// Appends the next event of `replica`, ordered after that replica's
    /// previous event and after every event in `delivered`.
    pub fn append(&mut self, replica: &ReplicaId, op: Op, ts: HybridTimestamp, delivered: &[Dot]) -> Dot {
        let prev = self.last_at.get(replica).map(|&i| self.events[i].id.clone());
        let id = Dot::new(replica.clone(), prev.as_ref().map_or(1, |d| d.counter + 1));
        self.insert(OpEvent { id: id.clone(), op, ts })
            .expect("fresh dot cannot collide");
        if let Some(p) = prev {
            self.add_edge(&p, &id, EdgeCause::ProgramOrder).expect("known event");
        }
        for d in delivered {
            if d.replica != *replica {
                self.add_edge(d, &id, EdgeCause::Delivery).expect("delivered events are recorded");
            }
        }
        id
    }

    pub fn events(&self) -> &[OpEvent] {
        &self.events
    }

    pub fn get(&self, id: &Dot) -> Option<&OpEvent> {
        self.index.get(id).map(|&i| &self.events[i])
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn edges(&self) -> impl Iterator<Item = (&Dot, &Dot, EdgeCause)> {
        self.edges
            .iter()
            .map(|(&(a, b), &c)| (&self.events[a].id, &self.events[b].id, c))
    }

    /// `a ≺ b` in the transitive closure.
    pub fn happens_before(&self, a: &Dot, b: &Dot) -> Result<bool, OracleError> {
        let (i, j) = (self.position(a)?, self.position(b)?);
        Ok(self.closure().reaches(i, j))
    }

    pub fn concurrent(&self, a: &Dot, b: &Dot) -> Result<bool, OracleError> {
        let (i, j) = (self.position(a)?, self.position(b)?);
        let c = self.closure();
        Ok(!c.reaches(i, j) && !c.reaches(j, i))
    }

    pub fn validate(&self) -> Result<(), Violation> {
        self.validity.get_or_init(|| self.check()).clone()
    }

    fn check(&self) -> Result<(), Violation> {
        let c = self.closure();
        let n = self.events.len();
        for i in 0..n {
            if c.reaches(i, i) {
                let j = (0..n)
                    .find(|&j| j != i && c.reaches(i, j) && c.reaches(j, i))
                    .unwrap_or(i);
                return Err(Violation::Cycle(self.events[i].id.clone(), self.events[j].id.clone()));
            }
        }
        let mut by_replica: BTreeMap<&ReplicaId, Vec<usize>> = BTreeMap::new();
        for (i, e) in self.events.iter().enumerate() {
            by_replica.entry(&e.id.replica).or_default().push(i);
        }
        for idx in by_replica.values_mut() {
            idx.sort_by_key(|&i| self.events[i].id.counter);
            for w in idx.windows(2) {
                if !c.reaches(w[0], w[1]) {
                    return Err(Violation::PerReplicaOrder(
                        self.events[w[0]].id.clone(),
                        self.events[w[1]].id.clone(),
                    ));
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                let (ei, ej) = (&self.events[i], &self.events[j]);
                let broken = if c.reaches(i, j) {
                    ei.ts >= ej.ts
                } else {
                    i < j && ei.ts == ej.ts
                };
                if broken {
                    return Err(Violation::TimestampOrder(ei.id.clone(), ej.id.clone()));
                }
            }
        }
        Ok(())
    }

    fn position(&self, id: &Dot) -> Result<usize, OracleError> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| OracleError::UnknownEvent(id.clone()))
    }

    fn closure(&self) -> &Closure {
        self.closure
            .get_or_init(|| Closure::compute(self.events.len(), &self.edges))
    }

    fn invalidate(&mut self) {
        self.closure = OnceCell::new();
        self.validity = OnceCell::new();
    }

    fn precedes(&self, i: usize, j: usize) -> bool {
        self.closure().reaches(i, j)
    }

    /// Validates and checks every event kind against `allowed`.
    fn domain(&self, evaluator: &'static str, allowed: fn(&Op) -> bool) -> Result<(), OracleError> {
        self.validate()?;
        match self.events.iter().find(|e| !allowed(&e.op)) {
            Some(e) => Err(OracleError::OutOfDomain {
                evaluator,
                event: e.id.clone(),
                op: e.op.to_string(),
            }),
            None => Ok(()),
        }
    }
}

impl fmt::Debug for History {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("History")
            .field("events", &self.events)
            .field("edges", &self.edges().map(|(a, b, _)| (a.clone(), b.clone())).collect::<Vec<_>>())
            .finish()
    }
}

pub fn history_validate(h: &History) -> Result<(), Violation> {
    h.validate()
}

pub fn concurrent(h: &History, a: &Dot, b: &Dot) -> Result<bool, OracleError> {
    h.concurrent(a, b)
}

fn is_set_op(op: &Op) -> bool {
    matches!(op, Op::Add(_) | Op::Rmv(_))
}

fn is_write(op: &Op) -> bool {
    matches!(op, Op::Write(_))
}

fn is_counter_op(op: &Op) -> bool {
    matches!(op, Op::Inc(_) | Op::Dec(_))
}

/// Present iff some `add(e)` has no `rmv(e)` after it.
pub fn eval_aw_set(h: &History) -> Result<BTreeSet<Value>, OracleError> {
    h.domain("eval_aw_set", is_set_op)?;
    let ev = h.events();
    let mut out = BTreeSet::new();
    for (i, a) in ev.iter().enumerate() {
        let Op::Add(e) = &a.op else { continue };
        let removed = ev
            .iter()
            .enumerate()
            .any(|(j, r)| matches!(&r.op, Op::Rmv(x) if x == e) && h.precedes(i, j));
        if !removed {
            out.insert(e.clone());
        }
    }
    Ok(out)
}

/// Present iff some `add(e)` happened after every `rmv(e)`.
pub fn eval_rw_set(h: &History) -> Result<BTreeSet<Value>, OracleError> {
    h.domain("eval_rw_set", is_set_op)?;
    let ev = h.events();
    let mut out = BTreeSet::new();
    for (i, a) in ev.iter().enumerate() {
        let Op::Add(e) = &a.op else { continue };
        let dominates = ev
            .iter()
            .enumerate()
            .filter(|(_, r)| matches!(&r.op, Op::Rmv(x) if x == e))
            .all(|(j, _)| h.precedes(j, i));
        if dominates {
            out.insert(e.clone());
        }
    }
    Ok(out)
}

/// Present iff the timestamp-greatest operation on the element is an add.
pub fn eval_lww_set(h: &History) -> Result<BTreeSet<Value>, OracleError> {
    h.domain("eval_lww_set", is_set_op)?;
    let mut latest: BTreeMap<&Value, (&HybridTimestamp, bool)> = BTreeMap::new();
    for e in h.events() {
        let (elem, present) = match &e.op {
            Op::Add(x) => (x, true),
            Op::Rmv(x) => (x, false),
            _ => unreachable!(),
        };
        let slot = latest.entry(elem).or_insert((&e.ts, present));
        if e.ts > *slot.0 {
            *slot = (&e.ts, present);
        }
    }
    Ok(latest
        .into_iter()
        .filter(|(_, (_, present))| *present)
        .map(|(e, _)| e.clone())
        .collect())
}

/// Values of the happens-before-maximal writes, sorted; duplicates kept.
pub fn eval_mv_register(h: &History) -> Result<Vec<Value>, OracleError> {
    h.domain("eval_mv_register", is_write)?;
    let ev = h.events();
    let mut out: Vec<Value> = ev
        .iter()
        .enumerate()
        .filter(|&(i, _)| !(0..ev.len()).any(|j| h.precedes(i, j)))
        .map(|(_, w)| match &w.op {
            Op::Write(v) => v.clone(),
            _ => unreachable!(),
        })
        .collect();
    out.sort();
    Ok(out)
}

/// Value of the timestamp-greatest write, if any.
pub fn eval_lww_register(h: &History) -> Result<Option<Value>, OracleError> {
    h.domain("eval_lww_register", is_write)?;
    Ok(h.events()
        .iter()
        .max_by(|a, b| a.ts.cmp(&b.ts))
        .map(|w| match &w.op {
            Op::Write(v) => v.clone(),
            _ => unreachable!(),
        }))
}

fn signed(op: &Op) -> i64 {
    match op {
        Op::Inc(n) => *n as i64,
        Op::Dec(n) => -(*n as i64),
        _ => 0,
    }
}

/// Sum of increments minus sum of decrements.
pub fn eval_counter(h: &History) -> Result<i64, OracleError> {
    h.domain("eval_counter", is_counter_op)?;
    Ok(h.events().iter().map(|e| signed(&e.op)).sum())
}

/// Write-wins counter: `v + o`, where `v` is the timestamp-greatest write and
/// `o` the net of the inc/dec events that happened after it. Without writes
/// this is the plain counter.
pub fn eval_ww_counter(h: &History) -> Result<i64, OracleError> {
    h.domain("eval_ww_counter", |op| is_counter_op(op) || matches!(op, Op::Assign(_)))?;
    let ev = h.events();
    let last_write = ev
        .iter()
        .enumerate()
        .filter(|(_, e)| matches!(e.op, Op::Assign(_)))
        .max_by(|(_, a), (_, b)| a.ts.cmp(&b.ts));
    match last_write {
        None => Ok(ev.iter().map(|e| signed(&e.op)).sum()),
        Some((w, write)) => {
            let Op::Assign(base) = write.op else { unreachable!() };
            let after: i64 = ev
                .iter()
                .enumerate()
                .filter(|&(j, _)| h.precedes(w, j))
                .map(|(_, e)| signed(&e.op))
                .sum();
            Ok(base + after)
        }
    }
}

/// Escrow counter reference: transfers move rights but never the value.
pub fn eval_bounded_counter(h: &History, initial: u64) -> Result<i64, OracleError> {
    h.domain("eval_bounded_counter", |op| {
        is_counter_op(op) || matches!(op, Op::Transfer { .. })
    })?;
    Ok(initial as i64 + h.events().iter().map(|e| signed(&e.op)).sum::<i64>())
}

/// Top-K over a fully replicated add/remove history: an add survives unless
/// a remove of its element happened after it; elements rank by their best
/// surviving `(score, element, event)` and the `k` best are returned.
pub fn eval_top_k(h: &History, k: usize) -> Result<Vec<Value>, OracleError> {
    h.domain("eval_top_k", |op| matches!(op, Op::AddScored { .. } | Op::Rmv(_)))?;
    let ev = h.events();
    let mut best: BTreeMap<&Value, (i64, &Dot)> = BTreeMap::new();
    for (i, a) in ev.iter().enumerate() {
        let Op::AddScored { elem, score } = &a.op else { continue };
        let removed = ev
            .iter()
            .enumerate()
            .any(|(j, r)| matches!(&r.op, Op::Rmv(x) if x == elem) && h.precedes(i, j));
        if removed {
            continue;
        }
        let slot = best.entry(elem).or_insert((*score, &a.id));
        if (*score, &a.id) > *slot {
            *slot = (*score, &a.id);
        }
    }
    let mut ranked: Vec<(i64, &Value)> = best.into_iter().map(|(e, (s, _))| (s, e)).collect();
    ranked.sort_by(|a, b| b.cmp(a));
    Ok(ranked.into_iter().take(k).map(|(_, e)| e.clone()).collect())
}
