//! Adapters that put each replicated type behind one replica interface the
//! engine can drive, whatever its synchronization model.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::causality::{Dot, HybridTimestamp, ReplicaId, VersionVector};
use crate::codec::encode;
use crate::delta::{DeltaCrdt, DeltaMessage, DeltaReplica};
use crate::extensions::{BoundedCounter, TopKMessage, TopKSet};
use crate::op_crdts::{commutes, effect, CausalReplica, Effector, OpAwSet, OpCounter, OpCrdt, OpWwCounter};
use crate::oracle::Op;
use crate::state_crdts::{AwSet, GCounter, Lattice, LwwRegister, LwwSet, MvRegister, PnCounter, RwSet};
use crate::value::Value;

/// What a read returns, in a form comparable across replicas and with the
/// reference evaluation.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryValue {
    Int(i64),
    Set(BTreeSet<Value>),
    /// Sorted multiset, e.g. the concurrent values of a register.
    Values(Vec<Value>),
    Register(Option<Value>),
    /// Best first.
    Ranked(Vec<Value>),
}

fn join_values<'a>(f: &mut fmt::Formatter<'_>, open: &str, vals: impl Iterator<Item = &'a Value>, close: &str) -> fmt::Result {
    f.write_str(open)?;
    for (i, v) in vals.enumerate() {
        if i > 0 {
            f.write_str(",")?;
        }
        write!(f, "{v}")?;
    }
    f.write_str(close)
}

impl fmt::Display for QueryValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QueryValue::Int(n) => write!(f, "{n}"),
            QueryValue::Set(s) => join_values(f, "{", s.iter(), "}"),
            QueryValue::Values(v) => join_values(f, "{|", v.iter(), "|}"),
            QueryValue::Register(None) => f.write_str("none"),
            QueryValue::Register(Some(v)) => write!(f, "{v}"),
            QueryValue::Ranked(v) => join_values(f, "[", v.iter(), "]"),
        }
    }
}

/// How much of the sender's knowledge a delivered message passed on.
pub enum Learned {
    /// Nothing, e.g. an acknowledgement.
    Nothing,
    /// Everything the sender knew when it sent the message.
    Envelope,
    /// Exactly these event sets (one per effector that became applicable).
    Events(Vec<VersionVector>),
}

pub struct Receipt<M> {
    pub replies: Vec<M>,
    pub learned: Learned,
}

#[derive(Default)]
pub struct Applied {
    /// Event identity the replica assigned itself, when it must coincide
    /// with the history's.
    pub event: Option<Dot>,
    pub fields: Vec<String>,
}

/// A replica as the engine sees it.
pub trait Node {
    type Message: Clone + Serialize;

    fn update(&mut self, op: &Op, ts: &HybridTimestamp) -> Result<Applied, String>;

    /// Messages a sync session towards `peer` sends now.
    fn sync_to(&mut self, peer: &ReplicaId) -> Vec<Self::Message>;

    fn receive(&mut self, from: &ReplicaId, msg: &Self::Message) -> Result<Receipt<Self::Message>, String>;

    fn query(&self) -> QueryValue;

    /// Canonical encoding of the replicated state.
    fn state_bytes(&self) -> Vec<u8>;

    /// Changes whenever anything a later sync could depend on changes.
    fn fingerprint(&self) -> Vec<u8> {
        self.state_bytes()
    }

    /// Trace fields describing a message.
    fn describe(msg: &Self::Message) -> Vec<String>;

    /// Observations the engine logs the first time they hold.
    fn notes(&self) -> Vec<String> {
        Vec::new()
    }

    fn check_invariants(&self) -> Result<(), String> {
        Ok(())
    }

    /// End-of-run self check; `deep` asks for the expensive variant. Returns
    /// the number of items checked.
    fn audit(&self, _deep: bool) -> Result<u64, String> {
        Ok(0)
    }
}

/// A state-based type the engine can update and read.
pub trait Replicated: Lattice + Serialize {
    fn update(&mut self, replica: &ReplicaId, op: &Op, ts: &HybridTimestamp) -> Result<(), String>;

    fn query(&self) -> QueryValue;

    fn check(&self) -> Result<(), String> {
        Ok(())
    }
}

fn unsupported(tag: &str, op: &Op) -> String {
    format!("{tag} does not support {op}")
}

impl Replicated for GCounter {
    fn update(&mut self, replica: &ReplicaId, op: &Op, _: &HybridTimestamp) -> Result<(), String> {
        match op {
            Op::Inc(n) => self.inc_by(replica, *n),
            _ => return Err(unsupported("gcounter", op)),
        }
        Ok(())
    }

    fn query(&self) -> QueryValue {
        QueryValue::Int(self.value() as i64)
    }
}

impl Replicated for PnCounter {
    fn update(&mut self, replica: &ReplicaId, op: &Op, _: &HybridTimestamp) -> Result<(), String> {
        match op {
            Op::Inc(n) => self.inc_by(replica, *n),
            Op::Dec(n) => self.dec_by(replica, *n),
            _ => return Err(unsupported("pncounter", op)),
        }
        Ok(())
    }

    fn query(&self) -> QueryValue {
        QueryValue::Int(self.value())
    }
}

impl Replicated for LwwRegister {
    fn update(&mut self, _: &ReplicaId, op: &Op, ts: &HybridTimestamp) -> Result<(), String> {
        match op {
            Op::Write(v) => self.write(v.clone(), ts.clone()),
            _ => return Err(unsupported("lwwreg", op)),
        }
        Ok(())
    }

    fn query(&self) -> QueryValue {
        QueryValue::Register(self.read().cloned())
    }
}

impl Replicated for MvRegister {
    fn update(&mut self, replica: &ReplicaId, op: &Op, _: &HybridTimestamp) -> Result<(), String> {
        match op {
            Op::Write(v) => {
                let dot = self.next_dot(replica);
                self.write(v.clone(), dot);
            }
            _ => return Err(unsupported("mvreg", op)),
        }
        Ok(())
    }

    fn query(&self) -> QueryValue {
        QueryValue::Values(self.read())
    }
}

impl Replicated for AwSet {
    fn update(&mut self, replica: &ReplicaId, op: &Op, _: &HybridTimestamp) -> Result<(), String> {
        match op {
            Op::Add(e) => {
                let dot = self.next_dot(replica);
                self.add(e.clone(), dot);
            }
            Op::Rmv(e) => {
                self.rmv(e);
            }
            _ => return Err(unsupported("awset", op)),
        }
        Ok(())
    }

    fn query(&self) -> QueryValue {
        QueryValue::Set(self.elements())
    }
}

impl Replicated for RwSet {
    fn update(&mut self, replica: &ReplicaId, op: &Op, _: &HybridTimestamp) -> Result<(), String> {
        let dot = self.next_dot(replica);
        match op {
            Op::Add(e) => self.add(e.clone(), dot),
            Op::Rmv(e) => self.rmv(e.clone(), dot),
            _ => return Err(unsupported("rwset", op)),
        }
        Ok(())
    }

    fn query(&self) -> QueryValue {
        QueryValue::Set(self.elements())
    }
}

impl Replicated for LwwSet {
    fn update(&mut self, _: &ReplicaId, op: &Op, ts: &HybridTimestamp) -> Result<(), String> {
        match op {
            Op::Add(e) => self.add(e.clone(), ts.clone()),
            Op::Rmv(e) => self.rmv(e.clone(), ts.clone()),
            _ => return Err(unsupported("lwwset", op)),
        }
        Ok(())
    }

    fn query(&self) -> QueryValue {
        QueryValue::Set(self.elements())
    }
}

impl Replicated for BoundedCounter {
    fn update(&mut self, replica: &ReplicaId, op: &Op, _: &HybridTimestamp) -> Result<(), String> {
        match op {
            Op::Inc(n) => {
                self.inc(replica, *n);
                Ok(())
            }
            Op::Dec(n) => self.dec(replica, *n).map_err(|e| e.to_string()),
            Op::Transfer { to, amount } => self.transfer(replica, to, *amount).map_err(|e| e.to_string()),
            _ => Err(unsupported("bcounter", op)),
        }
    }

    fn query(&self) -> QueryValue {
        QueryValue::Int(self.value())
    }

    fn check(&self) -> Result<(), String> {
        for r in self.replicas() {
            let rights = self.local_rights(&r);
            if rights < 0 {
                return Err(format!("local rights of {r} are {rights}"));
            }
        }
        match self.value() {
            v if v < 0 => Err(format!("value is {v}")),
            _ => Ok(()),
        }
    }
}

/// Full-state replication: a sync session ships the whole state.
pub struct StateNode<S> {
    id: ReplicaId,
    state: S,
}

impl<S: Replicated> StateNode<S> {
    pub fn new(id: ReplicaId, initial: S) -> Self {
        StateNode { id, state: initial }
    }

    pub fn state(&self) -> &S {
        &self.state
    }
}

impl<S: Replicated> Node for StateNode<S> {
    type Message = S;

    fn update(&mut self, op: &Op, ts: &HybridTimestamp) -> Result<Applied, String> {
        self.state.update(&self.id, op, ts)?;
        Ok(Applied::default())
    }

    fn sync_to(&mut self, _: &ReplicaId) -> Vec<S> {
        vec![self.state.clone()]
    }

    fn receive(&mut self, _: &ReplicaId, msg: &S) -> Result<Receipt<S>, String> {
        self.state.merge(msg);
        Ok(Receipt {
            replies: Vec::new(),
            learned: Learned::Envelope,
        })
    }

    fn query(&self) -> QueryValue {
        self.state.query()
    }

    fn state_bytes(&self) -> Vec<u8> {
        encode(&self.state)
    }

    fn describe(_: &S) -> Vec<String> {
        vec!["kind=state".into()]
    }

    fn check_invariants(&self) -> Result<(), String> {
        self.state.check()
    }
}

/// Delta-state replication with acknowledged intervals.
pub struct DeltaNode<S> {
    replica: DeltaReplica<S>,
}

impl<S: DeltaCrdt + Replicated> DeltaNode<S> {
    pub fn new(id: ReplicaId, peers: Vec<ReplicaId>) -> Self {
        DeltaNode {
            replica: DeltaReplica::new(id, peers),
        }
    }

    pub fn replica(&self) -> &DeltaReplica<S> {
        &self.replica
    }
}

impl<S: DeltaCrdt + Replicated> Node for DeltaNode<S> {
    type Message = DeltaMessage<S>;

    fn update(&mut self, op: &Op, _: &HybridTimestamp) -> Result<Applied, String> {
        self.replica.update(op).map_err(|e| e.to_string())?;
        Ok(Applied::default())
    }

    fn sync_to(&mut self, peer: &ReplicaId) -> Vec<Self::Message> {
        self.replica.anti_entropy_step(peer).into_iter().collect()
    }

    fn receive(&mut self, from: &ReplicaId, msg: &Self::Message) -> Result<Receipt<Self::Message>, String> {
        let learned = match msg {
            DeltaMessage::Ack(_) => Learned::Nothing,
            _ => Learned::Envelope,
        };
        Ok(Receipt {
            replies: self.replica.receive(from, msg).into_iter().collect(),
            learned,
        })
    }

    fn query(&self) -> QueryValue {
        self.replica.state().query()
    }

    fn state_bytes(&self) -> Vec<u8> {
        encode(self.replica.state())
    }

    fn describe(msg: &Self::Message) -> Vec<String> {
        match msg {
            DeltaMessage::Full { upto, .. } => vec!["kind=full".into(), format!("upto={upto}")],
            DeltaMessage::Interval { from, to, .. } => vec!["kind=interval".into(), format!("range={from}..{to}")],
            DeltaMessage::Ack(n) => vec!["kind=ack".into(), format!("upto={n}")],
        }
    }

    fn check_invariants(&self) -> Result<(), String> {
        self.replica.state().check()
    }
}

/// Read side of the operation-based types.
pub trait OpQuery: OpCrdt + Serialize {
    fn query(&self) -> QueryValue;
}

impl OpQuery for OpCounter {
    fn query(&self) -> QueryValue {
        QueryValue::Int(self.value())
    }
}

impl OpQuery for OpWwCounter {
    fn query(&self) -> QueryValue {
        QueryValue::Int(self.value())
    }
}

impl OpQuery for OpAwSet {
    fn query(&self) -> QueryValue {
        QueryValue::Set(self.elements())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum OpMessage<P> {
    Effector(Effector<P>),
    /// Everything the sender has applied.
    Ack(VersionVector),
}

/// Operation-based replication over the causal-delivery middleware.
pub struct OpNode<S: OpCrdt> {
    replica: CausalReplica<S>,
}

impl<S: OpQuery> OpNode<S> {
    pub fn new(id: ReplicaId) -> Self {
        OpNode {
            replica: CausalReplica::new(id),
        }
    }

    pub fn replica(&self) -> &CausalReplica<S> {
        &self.replica
    }
}

fn knowledge_of<P>(eff: &Effector<P>) -> VersionVector {
    let mut vv = eff.deps.clone();
    vv.observe(&eff.id());
    vv
}

/// Checks every concurrent pair of effectors in `log` (a causal order) for
/// commutativity on the state built from their combined dependencies.
/// Returns the number of pairs checked.
pub fn audit_commutativity<S: OpCrdt>(log: &[Effector<S::Payload>]) -> Result<u64, String> {
    let mut pairs = 0;
    for (i, a) in log.iter().enumerate() {
        for b in &log[i + 1..] {
            if !a.concurrent_with(b) {
                continue;
            }
            let base = a.deps.join(&b.deps);
            let mut snapshot = S::default();
            for e in log.iter().filter(|e| base.contains(&e.id())) {
                effect(&mut snapshot, e);
            }
            let mut ab = snapshot.clone();
            effect(&mut ab, a);
            effect(&mut ab, b);
            let mut ba = snapshot.clone();
            effect(&mut ba, b);
            effect(&mut ba, a);
            if !commutes(a, b, &snapshot) || ab != ba {
                return Err(format!("effectors {} and {} do not commute", a.id(), b.id()));
            }
            pairs += 1;
        }
    }
    Ok(pairs)
}

impl<S: OpQuery> Node for OpNode<S> {
    type Message = OpMessage<S::Payload>;

    fn update(&mut self, op: &Op, ts: &HybridTimestamp) -> Result<Applied, String> {
        let eff = self.replica.submit(op, ts.clone()).map_err(|e| e.to_string())?;
        Ok(Applied {
            event: Some(eff.id()),
            fields: Vec::new(),
        })
    }

    fn sync_to(&mut self, peer: &ReplicaId) -> Vec<Self::Message> {
        self.replica.outgoing(peer).into_iter().map(OpMessage::Effector).collect()
    }

    fn receive(&mut self, from: &ReplicaId, msg: &Self::Message) -> Result<Receipt<Self::Message>, String> {
        match msg {
            OpMessage::Ack(vv) => {
                self.replica.on_ack(from, vv);
                Ok(Receipt {
                    replies: Vec::new(),
                    learned: Learned::Nothing,
                })
            }
            OpMessage::Effector(eff) => {
                let applied = self.replica.receive(eff.clone()).map_err(|e| e.to_string())?;
                let log = self.replica.log();
                let learned = log[log.len() - applied.len()..].iter().map(knowledge_of).collect();
                Ok(Receipt {
                    replies: vec![OpMessage::Ack(self.replica.delivered().clone())],
                    learned: Learned::Events(learned),
                })
            }
        }
    }

    fn query(&self) -> QueryValue {
        self.replica.state().query()
    }

    fn state_bytes(&self) -> Vec<u8> {
        encode(self.replica.state())
    }

    fn fingerprint(&self) -> Vec<u8> {
        encode(&(self.replica.state(), self.replica.delivered()))
    }

    fn describe(msg: &Self::Message) -> Vec<String> {
        match msg {
            OpMessage::Effector(e) => vec!["kind=effector".into(), format!("effector={}", e.id())],
            OpMessage::Ack(vv) => vec!["kind=ack".into(), format!("delivered={vv:?}")],
        }
    }

    fn audit(&self, deep: bool) -> Result<u64, String> {
        let mut seen = VersionVector::new();
        for e in self.replica.log() {
            if seen.contains(&e.id()) {
                return Err(format!("{} applied {} twice", self.replica.id(), e.id()));
            }
            if !e.deps.leq(&seen) {
                return Err(format!("{} applied {} before its dependencies", self.replica.id(), e.id()));
            }
            seen.observe(&e.id());
        }
        if deep {
            audit_commutativity::<S>(self.replica.log())
        } else {
            Ok(0)
        }
    }
}

/// Top-K set: sync sessions ship the replicated part only.
pub struct TopKNode {
    id: ReplicaId,
    set: TopKSet,
}

impl TopKNode {
    pub fn new(id: ReplicaId, k: usize) -> Self {
        TopKNode { id, set: TopKSet::new(k) }
    }

    pub fn set(&self) -> &TopKSet {
        &self.set
    }
}

fn dot_list<'a>(dots: impl IntoIterator<Item = &'a Dot>) -> String {
    dots.into_iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",")
}

impl Node for TopKNode {
    type Message = TopKMessage;

    fn update(&mut self, op: &Op, _: &HybridTimestamp) -> Result<Applied, String> {
        match op {
            Op::AddScored { elem, score } => {
                let dot = self.set.next_dot(&self.id);
                self.set.add(elem.clone(), *score, dot.clone());
                Ok(Applied {
                    event: None,
                    fields: vec![format!("dot={dot}")],
                })
            }
            Op::Rmv(elem) => {
                self.set.rmv(elem);
                Ok(Applied::default())
            }
            _ => Err(unsupported("topk", op)),
        }
    }

    fn sync_to(&mut self, _: &ReplicaId) -> Vec<TopKMessage> {
        vec![self.set.sync_message()]
    }

    fn receive(&mut self, _: &ReplicaId, msg: &TopKMessage) -> Result<Receipt<TopKMessage>, String> {
        self.set.receive(msg);
        Ok(Receipt {
            replies: Vec::new(),
            learned: Learned::Envelope,
        })
    }

    fn query(&self) -> QueryValue {
        QueryValue::Ranked(self.set.read())
    }

    fn state_bytes(&self) -> Vec<u8> {
        encode(&self.set)
    }

    fn describe(msg: &TopKMessage) -> Vec<String> {
        let kind = match msg {
            TopKMessage::AddEntry { .. } => "add-entry",
            TopKMessage::Removal { .. } => "removal",
            TopKMessage::Sync { .. } => "sync",
        };
        vec![format!("kind={kind}"), format!("carries={}", dot_list(msg.carried_dots()))]
    }

    fn notes(&self) -> Vec<String> {
        self.set.known_entries().map(|e| format!("known-top={}", e.dot)).collect()
    }
}
