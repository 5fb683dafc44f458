use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::causality::ReplicaId;
use crate::oracle::Op;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncModel {
    State,
    Op,
    Delta,
}

impl fmt::Display for SyncModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SyncModel::State => "state",
            SyncModel::Op => "op",
            SyncModel::Delta => "delta",
        })
    }
}

impl std::str::FromStr for SyncModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "state" => Ok(SyncModel::State),
            "op" => Ok(SyncModel::Op),
            "delta" => Ok(SyncModel::Delta),
            _ => Err(format!("unknown sync model `{s}` (expected state, op or delta)")),
        }
    }
}

/// Replicated type under test, with its parameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CrdtSpec {
    Gcounter,
    Pncounter,
    Opcounter,
    Wwcounter,
    Lwwreg,
    Mvreg,
    Awset,
    Rwset,
    Lwwset,
    Bcounter {
        initial: u64,
        allocation: BTreeMap<ReplicaId, u64>,
    },
    Topk {
        k: usize,
    },
}

/// Type tags without parameters, as accepted on the command line.
pub const TYPE_TAGS: [&str; 11] = [
    "gcounter", "pncounter", "opcounter", "wwcounter", "lwwreg", "mvreg", "awset", "rwset", "lwwset", "bcounter",
    "topk",
];

impl CrdtSpec {
    pub fn tag(&self) -> &'static str {
        match self {
            CrdtSpec::Gcounter => "gcounter",
            CrdtSpec::Pncounter => "pncounter",
            CrdtSpec::Opcounter => "opcounter",
            CrdtSpec::Wwcounter => "wwcounter",
            CrdtSpec::Lwwreg => "lwwreg",
            CrdtSpec::Mvreg => "mvreg",
            CrdtSpec::Awset => "awset",
            CrdtSpec::Rwset => "rwset",
            CrdtSpec::Lwwset => "lwwset",
            CrdtSpec::Bcounter { .. } => "bcounter",
            CrdtSpec::Topk { .. } => "topk",
        }
    }

    pub fn supports(&self, model: SyncModel) -> bool {
        supported_models(self.tag()).contains(&model)
    }

    /// Whether `op` is an update this type accepts.
    pub fn accepts(&self, op: &Op) -> bool {
        match self {
            CrdtSpec::Gcounter => matches!(op, Op::Inc(_)),
            CrdtSpec::Pncounter | CrdtSpec::Opcounter => matches!(op, Op::Inc(_) | Op::Dec(_)),
            CrdtSpec::Wwcounter => matches!(op, Op::Assign(_) | Op::Inc(_) | Op::Dec(_)),
            CrdtSpec::Lwwreg | CrdtSpec::Mvreg => matches!(op, Op::Write(_)),
            CrdtSpec::Awset | CrdtSpec::Rwset | CrdtSpec::Lwwset => matches!(op, Op::Add(_) | Op::Rmv(_)),
            CrdtSpec::Bcounter { .. } => matches!(op, Op::Inc(_) | Op::Dec(_) | Op::Transfer { .. }),
            CrdtSpec::Topk { .. } => matches!(op, Op::AddScored { .. } | Op::Rmv(_)),
        }
    }
}

/// Sync models each type can run under.
pub fn supported_models(tag: &str) -> &'static [SyncModel] {
    use SyncModel::*;
    match tag {
        "gcounter" | "pncounter" => &[State, Delta],
        "awset" => &[State, Op, Delta],
        "mvreg" => &[State, Delta],
        "opcounter" | "wwcounter" => &[Op],
        "lwwreg" | "rwset" | "lwwset" | "bcounter" | "topk" => &[State],
        _ => &[],
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    #[serde(default)]
    pub drop: f64,
    #[serde(default)]
    pub dup: f64,
    /// Extra delivery delay is drawn uniformly from `0..=reorder` ticks.
    #[serde(default)]
    pub reorder: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig { drop: 0.0, dup: 0.0, reorder: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyncPair {
    pub from: ReplicaId,
    pub to: ReplicaId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Keyword {
    FullSync,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Step {
    Update {
        at: ReplicaId,
        #[serde(rename = "do")]
        op: Op,
    },
    Query {
        query: ReplicaId,
    },
    Sync {
        sync: SyncPair,
    },
    Net {
        net: NetConfig,
    },
    Keyword(Keyword),
}

impl Step {
    pub fn update(at: &ReplicaId, op: Op) -> Self {
        Step::Update { at: at.clone(), op }
    }

    pub fn sync(from: &ReplicaId, to: &ReplicaId) -> Self {
        Step::Sync {
            sync: SyncPair {
                from: from.clone(),
                to: to.clone(),
            },
        }
    }

    pub fn full_sync() -> Self {
        Step::Keyword(Keyword::FullSync)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub crdt: CrdtSpec,
    pub model: SyncModel,
    pub replicas: Vec<ReplicaId>,
    pub steps: Vec<Step>,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenarios always serialize")
    }

    pub fn ends_with_full_sync(&self) -> bool {
        matches!(self.steps.last(), Some(Step::Keyword(Keyword::FullSync)))
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if self.replicas.is_empty() {
            return bad("no replicas declared".into());
        }
        for (i, r) in self.replicas.iter().enumerate() {
            if self.replicas[..i].contains(r) {
                return bad(format!("replica {r} declared twice"));
            }
        }
        if !self.crdt.supports(self.model) {
            return bad(format!("{} does not run under the {} model", self.crdt.tag(), self.model));
        }
        let known = |r: &ReplicaId| self.replicas.contains(r);
        match &self.crdt {
            CrdtSpec::Bcounter { initial, allocation } => {
                if let Some(r) = allocation.keys().find(|r| !known(r)) {
                    return bad(format!("allocation names undeclared replica {r}"));
                }
                let sum: u64 = allocation.values().sum();
                if sum != *initial {
                    return bad(format!("allocation sums to {sum}, expected {initial}"));
                }
            }
            CrdtSpec::Topk { k: 0 } => return bad("k must be positive".into()),
            _ => {}
        }
        for (i, step) in self.steps.iter().enumerate() {
            match step {
                Step::Update { at, op } => {
                    if !known(at) {
                        return bad(format!("step {i}: undeclared replica {at}"));
                    }
                    if !self.crdt.accepts(op) {
                        return bad(format!("step {i}: {} does not support {op}", self.crdt.tag()));
                    }
                    if let Op::Transfer { to, .. } = op {
                        if !known(to) {
                            return bad(format!("step {i}: transfer to undeclared replica {to}"));
                        }
                    }
                }
                Step::Query { query } if !known(query) => {
                    return bad(format!("step {i}: undeclared replica {query}"));
                }
                Step::Sync { sync } => {
                    if !known(&sync.from) || !known(&sync.to) {
                        return bad(format!("step {i}: sync between undeclared replicas"));
                    }
                    if sync.from == sync.to {
                        return bad(format!("step {i}: sync from {} to itself", sync.from));
                    }
                }
                Step::Net { net } => {
                    for (name, p) in [("drop", net.drop), ("dup", net.dup)] {
                        if !(0.0..=1.0).contains(&p) {
                            return bad(format!("step {i}: {name} rate {p} outside [0, 1]"));
                        }
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}

const SHIPPED: [(&str, &str); 9] = [
    ("fig1_awset", include_str!("../../scenarios/fig1_awset.json")),
    ("fig1_rwset", include_str!("../../scenarios/fig1_rwset.json")),
    ("fig1_lwwset_a", include_str!("../../scenarios/fig1_lwwset_a.json")),
    ("fig1_lwwset_b", include_str!("../../scenarios/fig1_lwwset_b.json")),
    ("fig2_awset", include_str!("../../scenarios/fig2_awset.json")),
    ("mvreg_concurrent", include_str!("../../scenarios/mvreg_concurrent.json")),
    ("wwcounter_basic", include_str!("../../scenarios/wwcounter_basic.json")),
    ("bcounter_escrow", include_str!("../../scenarios/bcounter_escrow.json")),
    ("topk_promote", include_str!("../../scenarios/topk_promote.json")),
];

pub fn shipped_names() -> impl Iterator<Item = &'static str> {
    SHIPPED.iter().map(|(n, _)| *n)
}

pub fn shipped(name: &str) -> Option<Scenario> {
    let (_, text) = SHIPPED.iter().find(|(n, _)| *n == name)?;
    Some(Scenario::from_json(text).expect("shipped scenarios are valid"))
}
