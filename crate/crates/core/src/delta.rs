//! Delta-state replication.
//!
//! A delta mutator returns the small lattice element that encodes one
//! update; the replica's state is the join of its initial state and every
//! delta it produced or received. Anti-entropy keeps an indexed log of those
//! deltas and sends each peer the join of the interval it has not
//! acknowledged, falling back to the full state on first contact or when the
//! needed interval was already collected.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Debug;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::causality::{CausalContext, ReplicaId};
use crate::oracle::{Op, UnsupportedOp};
use crate::state_crdts::{AwSet, GCounter, Lattice, MvRegister, PnCounter};

pub trait DeltaCrdt: Lattice + Default + Serialize + DeserializeOwned {
    /// Applies `op` issued at `replica` and returns its delta; afterwards
    /// `self` equals the old state joined with the delta.
    fn apply_delta(&mut self, replica: &ReplicaId, op: &Op) -> Result<Self, UnsupportedOp>;
}

pub fn delta_update<S: DeltaCrdt>(state: &S, replica: &ReplicaId, op: &Op) -> Result<(S, S), UnsupportedOp> {
    let mut next = state.clone();
    let delta = next.apply_delta(replica, op)?;
    Ok((next, delta))
}

impl DeltaCrdt for GCounter {
    fn apply_delta(&mut self, replica: &ReplicaId, op: &Op) -> Result<Self, UnsupportedOp> {
        let Op::Inc(n) = op else {
            return Err(UnsupportedOp::new("gcounter", op));
        };
        self.inc_by(replica, *n);
        Ok(GCounter::single(replica, self.get(replica)))
    }
}

impl DeltaCrdt for PnCounter {
    fn apply_delta(&mut self, replica: &ReplicaId, op: &Op) -> Result<Self, UnsupportedOp> {
        match op {
            Op::Inc(n) => {
                self.inc_by(replica, *n);
                let own = self.increments().get(replica);
                Ok(PnCounter::from_parts(GCounter::single(replica, own), GCounter::new()))
            }
            Op::Dec(n) => {
                self.dec_by(replica, *n);
                let own = self.decrements().get(replica);
                Ok(PnCounter::from_parts(GCounter::new(), GCounter::single(replica, own)))
            }
            _ => Err(UnsupportedOp::new("pncounter", op)),
        }
    }
}

impl DeltaCrdt for AwSet {
    fn apply_delta(&mut self, replica: &ReplicaId, op: &Op) -> Result<Self, UnsupportedOp> {
        match op {
            Op::Add(e) => {
                let dot = self.next_dot(replica);
                self.add(e.clone(), dot.clone());
                Ok(AwSet::from_parts(
                    [(e.clone(), [dot.clone()].into())].into(),
                    CausalContext::from_dots([&dot]),
                ))
            }
            Op::Rmv(e) => {
                let removed = self.rmv(e);
                Ok(AwSet::from_parts(BTreeMap::new(), CausalContext::from_dots(&removed)))
            }
            _ => Err(UnsupportedOp::new("awset", op)),
        }
    }
}

impl DeltaCrdt for MvRegister {
    fn apply_delta(&mut self, replica: &ReplicaId, op: &Op) -> Result<Self, UnsupportedOp> {
        let Op::Write(v) = op else {
            return Err(UnsupportedOp::new("mvreg", op));
        };
        let dot = self.next_dot(replica);
        let covered = CausalContext::from_dots(self.entries().keys().chain([&dot]));
        self.write(v.clone(), dot.clone());
        Ok(MvRegister::from_parts([(dot, v.clone())].into(), covered))
    }
}

/// Anti-entropy message.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeltaMessage<S> {
    /// Whole state, current up to the sender's log index `upto`.
    Full { upto: u64, state: S },
    /// Join of the sender's log entries with index in `(from, to]`.
    Interval { from: u64, to: u64, delta: S },
    /// The receiver has merged the sender's log up to this index.
    Ack(u64),
}

/// Indexed log of deltas not yet acknowledged by every peer.
#[derive(Clone, Debug, Default)]
pub struct DeltaBuffer<S> {
    entries: VecDeque<(u64, S)>,
    last: u64,
    acked: BTreeMap<ReplicaId, u64>,
}

impl<S: Lattice + Default> DeltaBuffer<S> {
    pub fn push(&mut self, delta: S) -> u64 {
        self.last += 1;
        self.entries.push_back((self.last, delta));
        self.last
    }

    pub fn last_index(&self) -> u64 {
        self.last
    }

    pub fn ack_of(&self, peer: &ReplicaId) -> Option<u64> {
        self.acked.get(peer).copied()
    }

    pub fn record_ack(&mut self, peer: &ReplicaId, index: u64) {
        let a = self.acked.entry(peer.clone()).or_insert(0);
        *a = (*a).max(index.min(self.last));
    }

    /// Join of the retained entries above `from`, or `None` when some of them
    /// were already collected.
    pub fn interval(&self, from: u64) -> Option<S> {
        let first = self.entries.front().map_or(self.last + 1, |(i, _)| *i);
        if from + 1 < first {
            return None;
        }
        let mut out = S::default();
        for (_, d) in self.entries.iter().filter(|(i, _)| *i > from) {
            out.merge(d);
        }
        Some(out)
    }

    /// Drops entries every listed peer has acknowledged.
    pub fn collect(&mut self, peers: &[ReplicaId]) {
        let floor = peers.iter().map(|p| self.acked.get(p).copied().unwrap_or(0)).min().unwrap_or(0);
        while self.entries.front().is_some_and(|(i, _)| *i <= floor) {
            self.entries.pop_front();
        }
    }

    pub fn retained(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> impl Iterator<Item = &(u64, S)> {
        self.entries.iter()
    }
}

/// One replica under delta-state anti-entropy.
#[derive(Clone, Debug)]
pub struct DeltaReplica<S> {
    id: ReplicaId,
    peers: Vec<ReplicaId>,
    state: S,
    buffer: DeltaBuffer<S>,
    received: BTreeMap<ReplicaId, u64>,
}

impl<S: DeltaCrdt> DeltaReplica<S> {
    pub fn new(id: ReplicaId, peers: Vec<ReplicaId>) -> Self {
        let peers = peers.into_iter().filter(|p| *p != id).collect();
        DeltaReplica {
            id,
            peers,
            state: S::default(),
            buffer: DeltaBuffer::default(),
            received: BTreeMap::new(),
        }
    }

    pub fn id(&self) -> &ReplicaId {
        &self.id
    }

    pub fn state(&self) -> &S {
        &self.state
    }

    pub fn buffer(&self) -> &DeltaBuffer<S> {
        &self.buffer
    }

    pub fn update(&mut self, op: &Op) -> Result<S, UnsupportedOp> {
        let delta = self.state.apply_delta(&self.id, op)?;
        self.buffer.push(delta.clone());
        Ok(delta)
    }

    /// What to send `peer` now; `None` when it is already up to date.
    pub fn anti_entropy_step(&self, peer: &ReplicaId) -> Option<DeltaMessage<S>> {
        let last = self.buffer.last_index();
        let full = || DeltaMessage::Full {
            upto: last,
            state: self.state.clone(),
        };
        match self.buffer.ack_of(peer) {
            None => Some(full()),
            Some(a) if a >= last => None,
            Some(a) => Some(match self.buffer.interval(a) {
                Some(delta) => DeltaMessage::Interval { from: a, to: last, delta },
                None => full(),
            }),
        }
    }

    /// Handles a message from `from`; returns the acknowledgement to send
    /// back, if any.
    pub fn receive(&mut self, from: &ReplicaId, msg: &DeltaMessage<S>) -> Option<DeltaMessage<S>> {
        let (content, reached) = match msg {
            DeltaMessage::Ack(index) => {
                self.buffer.record_ack(from, *index);
                self.buffer.collect(&self.peers);
                return None;
            }
            DeltaMessage::Full { upto, state } => (state, Some(*upto)),
            DeltaMessage::Interval { from: start, to, delta } => {
                let contiguous = *start <= self.received.get(from).copied().unwrap_or(0);
                (delta, contiguous.then_some(*to))
            }
        };
        let before = self.state.clone();
        self.state.merge(content);
        if self.state != before {
            // Relayed content goes into our own log so peers get it from us.
            self.buffer.push(content.clone());
        }
        let got = self.received.entry(from.clone()).or_insert(0);
        if let Some(r) = reached {
            *got = (*got).max(r);
        }
        Some(DeltaMessage::Ack(*got))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::causality::{Dot, VersionVector};
    use crate::value::Value;

    fn r(id: &str) -> ReplicaId {
        ReplicaId::from(id)
    }

    #[test]
    fn gcounter_delta_is_single_entry() {
        let state = GCounter::single(&r("A"), 4);
        let (next, delta) = delta_update(&state, &r("A"), &Op::Inc(1)).unwrap();
        assert_eq!(delta, GCounter::single(&r("A"), 5));
        assert_eq!(state.join(&delta), next);
        assert_eq!(next.get(&r("A")), 5);
    }

    #[test]
    fn awset_add_delta() {
        let (next, delta) = delta_update(&AwSet::new(), &r("A"), &Op::Add("x".into())).unwrap();
        let dot = Dot::new("A", 1);
        assert_eq!(
            delta,
            AwSet::from_parts([(Value::from("x"), [dot.clone()].into())].into(), CausalContext::from_dots([&dot]))
        );
        assert_eq!(next, delta);
    }

    #[test]
    fn awset_rmv_delta_covers_removed_dots() {
        let (state, _) = delta_update(&AwSet::new(), &r("A"), &Op::Add("x".into())).unwrap();
        let (next, delta) = delta_update(&state, &r("A"), &Op::Rmv("x".into())).unwrap();
        let vv: VersionVector = [(r("A"), 1)].into_iter().collect();
        assert_eq!(delta, AwSet::from_parts(BTreeMap::new(), vv.into()));
        assert_eq!(state.join(&delta), next);
        assert!(next.elements().is_empty());
    }

    #[test]
    fn add_delta_does_not_claim_earlier_dots() {
        let mut a = AwSet::new();
        let d1 = a.apply_delta(&r("A"), &Op::Add("x".into())).unwrap();
        let d2 = a.apply_delta(&r("A"), &Op::Add("y".into())).unwrap();
        let mut b = AwSet::new();
        b.merge(&d1);
        b.merge(&d2);
        assert_eq!(b, a);
        assert_eq!(b.elements().len(), 2);
    }

    #[test]
    fn mvreg_write_delta_covers_overwritten() {
        let mut a = MvRegister::new();
        let d1 = a.apply_delta(&r("A"), &Op::Write("1".into())).unwrap();
        let mut b = MvRegister::new();
        let d2 = b.apply_delta(&r("B"), &Op::Write("2".into())).unwrap();
        a.merge(&d2);
        let d3 = a.apply_delta(&r("A"), &Op::Write("3".into())).unwrap();
        let mut c = MvRegister::new();
        for d in [&d1, &d2, &d3] {
            c.merge(d);
        }
        assert_eq!(c.read(), vec![Value::from("3")]);
        assert_eq!(c, a);
    }

    #[test]
    fn unsupported_op_is_reported() {
        assert!(delta_update(&GCounter::new(), &r("A"), &Op::Dec(1)).is_err());
    }

    fn pair() -> (DeltaReplica<GCounter>, DeltaReplica<GCounter>) {
        let peers = vec![r("A"), r("B")];
        (DeltaReplica::new(r("A"), peers.clone()), DeltaReplica::new(r("B"), peers))
    }

    #[test]
    fn first_contact_sends_full_state() {
        let (mut a, _) = pair();
        a.update(&Op::Inc(1)).unwrap();
        assert!(matches!(a.anti_entropy_step(&r("B")), Some(DeltaMessage::Full { upto: 1, .. })));
    }

    #[test]
    fn interval_above_ack_is_one_joined_message() {
        let (mut a, mut b) = pair();
        for _ in 0..3 {
            a.update(&Op::Inc(1)).unwrap();
        }
        let msg = a.anti_entropy_step(&r("B")).unwrap();
        let ack = b.receive(&r("A"), &msg).unwrap();
        assert_eq!(ack, DeltaMessage::Ack(3));
        a.receive(&r("B"), &ack);
        for _ in 0..3 {
            a.update(&Op::Inc(1)).unwrap();
        }
        let msg = a.anti_entropy_step(&r("B")).unwrap();
        assert_eq!(
            msg,
            DeltaMessage::Interval { from: 3, to: 6, delta: GCounter::single(&r("A"), 6) }
        );
        b.receive(&r("A"), &msg);
        assert_eq!(b.state(), a.state());
    }

    #[test]
    fn nothing_pending_sends_nothing() {
        let (mut a, mut b) = pair();
        a.update(&Op::Inc(1)).unwrap();
        let ack = b.receive(&r("A"), &a.anti_entropy_step(&r("B")).unwrap()).unwrap();
        a.receive(&r("B"), &ack);
        assert_eq!(a.anti_entropy_step(&r("B")), None);
    }

    #[test]
    fn collected_interval_falls_back_to_full_state() {
        let mut buf: DeltaBuffer<GCounter> = DeltaBuffer::default();
        for n in 1..=4 {
            buf.push(GCounter::single(&r("A"), n));
        }
        buf.record_ack(&r("B"), 3);
        buf.collect(&[r("B")]);
        assert_eq!(buf.retained(), 1);
        assert!(buf.interval(1).is_none());
        assert_eq!(buf.interval(3), Some(GCounter::single(&r("A"), 4)));
    }

    #[test]
    fn duplicated_and_reordered_messages_are_harmless() {
        let (mut a, mut b) = pair();
        a.update(&Op::Inc(1)).unwrap();
        let m1 = a.anti_entropy_step(&r("B")).unwrap();
        a.update(&Op::Inc(1)).unwrap();
        let m2 = a.anti_entropy_step(&r("B")).unwrap();
        b.receive(&r("A"), &m2);
        b.receive(&r("A"), &m1);
        b.receive(&r("A"), &m2);
        assert_eq!(b.state(), a.state());
    }
}
