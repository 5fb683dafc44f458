use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::nodes::{DeltaNode, Learned, Node, OpNode, QueryValue, Replicated, StateNode, TopKNode};
use super::rng::SplitMix64;
use super::scenario::{CrdtSpec, NetConfig, Scenario, ScenarioError, Step, SyncModel};
use super::trace::{EventKind, Trace};
use crate::causality::{Dot, HybridTimestamp, ReplicaId, VersionVector};
use crate::codec::encode;
use crate::extensions::BoundedCounter;
use crate::op_crdts::{OpAwSet, OpCounter, OpWwCounter};
use crate::oracle::{History, Op};
use crate::state_crdts::{AwSet, GCounter, LwwRegister, LwwSet, MvRegister, PnCounter, RwSet};

/// Upper bound on full-sync rounds before giving up on quiescence.
pub const MAX_FULL_SYNC_ROUNDS: u32 = 10_000;

const DATA: u64 = 0;
const REPLY: u64 = 1;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("middleware violation at tick {tick}: {detail}")]
    Middleware { tick: u64, detail: String },
    #[error("full sync did not quiesce within {0} rounds")]
    NoQuiescence(u32),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunStats {
    pub updates: u64,
    pub rejected: u64,
    pub messages: u64,
    pub dropped: u64,
    pub duplicated: u64,
    pub delivered: u64,
    pub bytes: u64,
    pub full_sync_rounds: u64,
    /// Items checked by end-of-run audits (effector pairs in op mode).
    pub audited: u64,
}

#[derive(Clone, Debug)]
pub struct QueryRecord {
    pub tick: u64,
    pub replica: ReplicaId,
    pub value: QueryValue,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub scenario: Scenario,
    /// Final read at every replica, in declaration order.
    pub finals: Vec<(ReplicaId, QueryValue)>,
    /// Canonical encoding of every replica's final state.
    pub states: Vec<(ReplicaId, Vec<u8>)>,
    pub queries: Vec<QueryRecord>,
    pub trace: Trace,
    pub history: History,
    pub stats: RunStats,
    /// Safety invariants and audits that failed during the run.
    pub violations: Vec<String>,
}

struct Envelope<M> {
    id: u64,
    from: usize,
    to: usize,
    clock: HybridTimestamp,
    knowledge: VersionVector,
    msg: M,
}

struct Sim<N: Node> {
    scenario: Scenario,
    ids: Vec<ReplicaId>,
    nodes: Vec<N>,
    clocks: Vec<HybridTimestamp>,
    /// Per replica, the history events its state reflects.
    knowledge: Vec<VersionVector>,
    /// Per replica, the knowledge already linked into the history.
    linked: Vec<VersionVector>,
    noted: Vec<BTreeSet<String>>,
    net: NetConfig,
    in_flight: BTreeMap<(u64, u64), Envelope<N::Message>>,
    next_slot: u64,
    next_message: u64,
    tick: u64,
    step: u64,
    ordinals: [u64; 2],
    changed: bool,
    trace: Trace,
    history: History,
    stats: RunStats,
    queries: Vec<QueryRecord>,
    violations: Vec<String>,
}

/// Runs a scenario with the replica types its `crdt` and `model` select.
pub fn run(scenario: &Scenario) -> Result<RunResult, SimError> {
    let ids = scenario.replicas.clone();
    match (&scenario.crdt, scenario.model) {
        (CrdtSpec::Gcounter, SyncModel::State) => run_state::<GCounter>(scenario),
        (CrdtSpec::Pncounter, SyncModel::State) => run_state::<PnCounter>(scenario),
        (CrdtSpec::Lwwreg, SyncModel::State) => run_state::<LwwRegister>(scenario),
        (CrdtSpec::Mvreg, SyncModel::State) => run_state::<MvRegister>(scenario),
        (CrdtSpec::Awset, SyncModel::State) => run_state::<AwSet>(scenario),
        (CrdtSpec::Rwset, SyncModel::State) => run_state::<RwSet>(scenario),
        (CrdtSpec::Lwwset, SyncModel::State) => run_state::<LwwSet>(scenario),
        (CrdtSpec::Bcounter { initial, allocation }, SyncModel::State) => {
            let bc = BoundedCounter::new(*initial, &ids, allocation)
                .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
            run_with(scenario, |id| StateNode::new(id.clone(), bc.clone()))
        }
        (CrdtSpec::Topk { k }, SyncModel::State) => run_with(scenario, |id| TopKNode::new(id.clone(), *k)),
        (CrdtSpec::Gcounter, SyncModel::Delta) => run_with(scenario, |id| DeltaNode::<GCounter>::new(id.clone(), ids.clone())),
        (CrdtSpec::Pncounter, SyncModel::Delta) => run_with(scenario, |id| DeltaNode::<PnCounter>::new(id.clone(), ids.clone())),
        (CrdtSpec::Awset, SyncModel::Delta) => run_with(scenario, |id| DeltaNode::<AwSet>::new(id.clone(), ids.clone())),
        (CrdtSpec::Mvreg, SyncModel::Delta) => run_with(scenario, |id| DeltaNode::<MvRegister>::new(id.clone(), ids.clone())),
        (CrdtSpec::Opcounter, SyncModel::Op) => run_with(scenario, |id| OpNode::<OpCounter>::new(id.clone())),
        (CrdtSpec::Wwcounter, SyncModel::Op) => run_with(scenario, |id| OpNode::<OpWwCounter>::new(id.clone())),
        (CrdtSpec::Awset, SyncModel::Op) => run_with(scenario, |id| OpNode::<OpAwSet>::new(id.clone())),
        (crdt, model) => Err(ScenarioError::Invalid(format!("{} does not run under the {model} model", crdt.tag())).into()),
    }
}

/// Full-state run of any [`Replicated`] type starting from its default.
pub fn run_state<S: Replicated + Default>(scenario: &Scenario) -> Result<RunResult, SimError> {
    run_with(scenario, |id| StateNode::new(id.clone(), S::default()))
}

/// Runs a scenario with replicas built by `make`. The scenario's `crdt` only
/// matters to the reference evaluation done later.
pub fn run_with<N: Node>(scenario: &Scenario, make: impl Fn(&ReplicaId) -> N) -> Result<RunResult, SimError> {
    scenario.validate()?;
    let ids = scenario.replicas.clone();
    let n = ids.len();
    let mut sim = Sim {
        scenario: scenario.clone(),
        nodes: ids.iter().map(&make).collect(),
        clocks: ids.iter().map(|id| HybridTimestamp::zero(id.clone())).collect(),
        knowledge: vec![VersionVector::new(); n],
        linked: vec![VersionVector::new(); n],
        noted: vec![BTreeSet::new(); n],
        ids,
        net: NetConfig::default(),
        in_flight: BTreeMap::new(),
        next_slot: 0,
        next_message: 0,
        tick: 0,
        step: 0,
        ordinals: [0; 2],
        changed: false,
        trace: Trace::default(),
        history: History::new(),
        stats: RunStats::default(),
        queries: Vec::new(),
        violations: Vec::new(),
    };
    for i in 0..n {
        sim.note(i);
    }
    for (s, step) in scenario.steps.iter().enumerate() {
        sim.step = s as u64;
        sim.ordinals = [0; 2];
        sim.tick += 1;
        sim.deliver_due()?;
        sim.exec(step)?;
    }
    sim.finish()
}

impl<N: Node> Sim<N> {
    fn index(&self, r: &ReplicaId) -> usize {
        self.ids.iter().position(|x| x == r).expect("scenario was validated")
    }

    fn exec(&mut self, step: &Step) -> Result<(), SimError> {
        match step {
            Step::Update { at, op } => self.update(self.index(at), op),
            Step::Query { query } => {
                let i = self.index(query);
                let value = self.nodes[i].query();
                self.trace
                    .push(self.tick, EventKind::QueryResult, vec![query.to_string(), value.to_string()]);
                self.queries.push(QueryRecord {
                    tick: self.tick,
                    replica: query.clone(),
                    value,
                });
                Ok(())
            }
            Step::Sync { sync } => {
                let (i, j) = (self.index(&sync.from), self.index(&sync.to));
                self.session(i, j);
                self.deliver_due()
            }
            Step::Net { net } => {
                self.net = net.clone();
                Ok(())
            }
            Step::Keyword(_) => self.full_sync(),
        }
    }

    fn update(&mut self, i: usize, op: &Op) -> Result<(), SimError> {
        let ts = self.clocks[i].tick(self.tick);
        let replica = self.ids[i].clone();
        match self.nodes[i].update(op, &ts) {
            Err(reason) => {
                self.stats.rejected += 1;
                self.trace.push(
                    self.tick,
                    EventKind::UpdateRejected,
                    vec![replica.to_string(), op.to_string(), format!("reason={reason}")],
                );
            }
            Ok(applied) => {
                self.stats.updates += 1;
                self.clocks[i] = ts.clone();
                let fresh: Vec<Dot> = self.knowledge[i]
                    .iter()
                    .filter(|(q, c)| **q != replica && *c > self.linked[i].get(q))
                    .map(|(q, c)| Dot::new(q.clone(), c))
                    .collect();
                let event = self.history.append(&replica, op.clone(), ts.clone(), &fresh);
                self.knowledge[i].observe(&event);
                self.linked[i] = self.knowledge[i].clone();
                if applied.event.as_ref().is_some_and(|e| *e != event) {
                    return Err(SimError::Middleware {
                        tick: self.tick,
                        detail: format!("replica numbered event {event} as {:?}", applied.event),
                    });
                }
                let mut fields = vec![replica.to_string(), op.to_string(), format!("event={event}"), format!("ts={ts}")];
                fields.extend(applied.fields);
                self.trace.push(self.tick, EventKind::UpdateApplied, fields);
                self.after_change(i);
            }
        }
        Ok(())
    }

    fn after_change(&mut self, i: usize) {
        self.note(i);
        if let Err(v) = self.nodes[i].check_invariants() {
            self.violations.push(format!("tick {} at {}: {v}", self.tick, self.ids[i]));
        }
    }

    fn note(&mut self, i: usize) {
        for n in self.nodes[i].notes() {
            if self.noted[i].insert(n.clone()) {
                self.trace.push(self.tick, EventKind::Note, vec![self.ids[i].to_string(), n]);
            }
        }
    }

    /// One sync session: everything `from` sends towards `to` now.
    fn session(&mut self, from: usize, to: usize) {
        let peer = self.ids[to].clone();
        for msg in self.nodes[from].sync_to(&peer) {
            self.send(from, to, msg, DATA);
        }
    }

    fn send(&mut self, from: usize, to: usize, msg: N::Message, channel: u64) {
        let id = self.next_message;
        self.next_message += 1;
        let ordinal = self.ordinals[channel as usize];
        self.ordinals[channel as usize] += 1;
        let bytes = encode(&msg).len() as u64;
        self.stats.messages += 1;
        self.stats.bytes += bytes;
        let mut fields = vec![
            format!("id={id}"),
            format!("from={}", self.ids[from]),
            format!("to={}", self.ids[to]),
        ];
        fields.extend(N::describe(&msg));
        fields.push(format!("bytes={bytes}"));
        self.trace.push(self.tick, EventKind::MessageSent, fields);

        let mut fate = SplitMix64::derive(self.scenario.seed, &[self.step, ordinal, channel]);
        if fate.chance(self.net.drop) {
            self.stats.dropped += 1;
            self.trace.push(self.tick, EventKind::MessageDropped, vec![format!("id={id}")]);
            return;
        }
        let copies = if fate.chance(self.net.dup) { 2 } else { 1 };
        if copies == 2 {
            self.stats.duplicated += 1;
            self.trace.push(self.tick, EventKind::MessageDuplicated, vec![format!("id={id}")]);
        }
        for _ in 0..copies {
            let delay = if self.net.reorder > 0 { fate.below(self.net.reorder + 1) } else { 0 };
            let slot = self.next_slot;
            self.next_slot += 1;
            self.in_flight.insert(
                (self.tick + delay, slot),
                Envelope {
                    id,
                    from,
                    to,
                    clock: self.clocks[from].clone(),
                    knowledge: self.knowledge[from].clone(),
                    msg: msg.clone(),
                },
            );
        }
    }

    fn deliver_due(&mut self) -> Result<(), SimError> {
        while let Some(entry) = self.in_flight.first_entry() {
            if entry.key().0 > self.tick {
                break;
            }
            let env = entry.remove();
            self.deliver(env)?;
        }
        Ok(())
    }

    /// Delivers everything in flight, letting time pass as needed.
    fn drain(&mut self) -> Result<(), SimError> {
        while let Some(((due, _), env)) = self.in_flight.pop_first() {
            self.tick = self.tick.max(due);
            self.deliver(env)?;
        }
        Ok(())
    }

    fn deliver(&mut self, env: Envelope<N::Message>) -> Result<(), SimError> {
        let to = env.to;
        self.clocks[to] = self.clocks[to].receive(&env.clock, self.tick);
        let before = self.nodes[to].fingerprint();
        let sender = self.ids[env.from].clone();
        let receipt = self.nodes[to]
            .receive(&sender, &env.msg)
            .map_err(|detail| SimError::Middleware { tick: self.tick, detail })?;
        match receipt.learned {
            Learned::Nothing => {}
            Learned::Envelope => self.knowledge[to].join_assign(&env.knowledge),
            Learned::Events(sets) => {
                for vv in &sets {
                    self.knowledge[to].join_assign(vv);
                }
            }
        }
        self.stats.delivered += 1;
        self.trace.push(
            self.tick,
            EventKind::MessageDelivered,
            vec![format!("id={}", env.id), format!("from={sender}"), format!("to={}", self.ids[to])],
        );
        if self.nodes[to].fingerprint() != before {
            self.changed = true;
            self.after_change(to);
        }
        for reply in receipt.replies {
            self.send(to, env.from, reply, REPLY);
        }
        Ok(())
    }

    /// Delivers what is in flight, then runs pairwise sessions between every
    /// ordered pair over a reliable channel until a round changes nothing.
    fn full_sync(&mut self) -> Result<(), SimError> {
        self.drain()?;
        let net = std::mem::take(&mut self.net);
        let n = self.nodes.len();
        let mut quiet = false;
        for _ in 0..MAX_FULL_SYNC_ROUNDS {
            self.stats.full_sync_rounds += 1;
            self.changed = false;
            for i in 0..n {
                for j in (0..n).filter(|&j| j != i) {
                    self.session(i, j);
                    self.drain()?;
                }
            }
            if !self.changed {
                quiet = true;
                break;
            }
        }
        self.net = net;
        if !quiet {
            return Err(SimError::NoQuiescence(MAX_FULL_SYNC_ROUNDS));
        }
        let agree = self.nodes.windows(2).all(|w| w[0].query() == w[1].query());
        let verdict = if agree { "replicas-agree" } else { "replicas-differ" };
        self.trace.push(self.tick, EventKind::ConvergenceCheck, vec![verdict.into()]);
        Ok(())
    }

    fn finish(mut self) -> Result<RunResult, SimError> {
        for (i, node) in self.nodes.iter().enumerate() {
            match node.audit(i == 0) {
                Ok(n) => self.stats.audited += n,
                Err(v) => self.violations.push(v),
            }
        }
        if let Err(v) = self.history.validate() {
            self.violations.push(format!("induced history is invalid: {v}"));
        }
        let finals = self.ids.iter().cloned().zip(self.nodes.iter().map(|n| n.query())).collect();
        let states = self.ids.iter().cloned().zip(self.nodes.iter().map(|n| n.state_bytes())).collect();
        Ok(RunResult {
            scenario: self.scenario,
            finals,
            states,
            queries: self.queries,
            trace: self.trace,
            history: self.history,
            stats: self.stats,
            violations: self.violations,
        })
    }
}
