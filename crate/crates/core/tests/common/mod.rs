//! Test-side references shared by the integration suites. None of this calls
//! into the library's evaluators; it is what they are checked against.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use crdtkit::oracle::{History, Op};
use crdtkit::simulator::rng::SplitMix64;
use crdtkit::simulator::{CrdtSpec, QueryValue, Replicated};
use crdtkit::state_crdts::Lattice;
use crdtkit::{HybridTimestamp, ReplicaId, Value};

pub const ELEMS: [&str; 4] = ["a", "b", "c", "d"];
pub const RANKED: [&str; 6] = ["a", "b", "c", "d", "e", "f"];

pub fn replicas(n: usize) -> Vec<ReplicaId> {
    (0..n).map(|i| ReplicaId::new(((b'A' + i as u8) as char).to_string())).collect()
}

pub fn spec_for(tag: &str, rng: &mut SplitMix64, ids: &[ReplicaId]) -> CrdtSpec {
    match tag {
        "gcounter" => CrdtSpec::Gcounter,
        "pncounter" => CrdtSpec::Pncounter,
        "opcounter" => CrdtSpec::Opcounter,
        "wwcounter" => CrdtSpec::Wwcounter,
        "lwwreg" => CrdtSpec::Lwwreg,
        "mvreg" => CrdtSpec::Mvreg,
        "awset" => CrdtSpec::Awset,
        "rwset" => CrdtSpec::Rwset,
        "lwwset" => CrdtSpec::Lwwset,
        "bcounter" => {
            let allocation: BTreeMap<ReplicaId, u64> = ids.iter().map(|r| (r.clone(), rng.below(6))).collect();
            CrdtSpec::Bcounter {
                initial: allocation.values().sum(),
                allocation,
            }
        }
        "topk" => CrdtSpec::Topk {
            k: 1 + rng.below(3) as usize,
        },
        other => panic!("unknown tag {other}"),
    }
}

pub fn random_op(spec: &CrdtSpec, rng: &mut SplitMix64, at: &ReplicaId, ids: &[ReplicaId]) -> Op {
    let elem = |rng: &mut SplitMix64| Value::from(*rng.pick(&ELEMS));
    let n = |rng: &mut SplitMix64| 1 + rng.below(4);
    match spec {
        CrdtSpec::Gcounter => Op::Inc(n(rng)),
        CrdtSpec::Pncounter | CrdtSpec::Opcounter => {
            if rng.chance(0.5) {
                Op::Inc(n(rng))
            } else {
                Op::Dec(n(rng))
            }
        }
        CrdtSpec::Wwcounter => match rng.below(3) {
            0 => Op::Assign(rng.below(11) as i64 - 5),
            1 => Op::Inc(n(rng)),
            _ => Op::Dec(n(rng)),
        },
        CrdtSpec::Lwwreg | CrdtSpec::Mvreg => Op::Write(elem(rng)),
        CrdtSpec::Awset | CrdtSpec::Rwset | CrdtSpec::Lwwset => {
            if rng.chance(0.55) {
                Op::Add(elem(rng))
            } else {
                Op::Rmv(elem(rng))
            }
        }
        CrdtSpec::Bcounter { .. } => {
            let others: Vec<&ReplicaId> = ids.iter().filter(|r| *r != at).collect();
            match rng.below(3) {
                0 => Op::Inc(n(rng)),
                1 if !others.is_empty() => Op::Transfer {
                    to: (*rng.pick(&others)).clone(),
                    amount: n(rng),
                },
                _ => Op::Dec(n(rng)),
            }
        }
        CrdtSpec::Topk { .. } => {
            if rng.chance(0.75) {
                Op::AddScored {
                    elem: Value::from(*rng.pick(&RANKED)),
                    score: rng.below(10) as i64,
                }
            } else {
                Op::Rmv(Value::from(*rng.pick(&RANKED)))
            }
        }
    }
}

/// The sequential data type each replicated type must behave like when every
/// update sees all earlier ones.
#[derive(Clone, Debug)]
pub enum Sequential {
    Counter(i64),
    Register(Option<Value>),
    MultiValue(Option<Value>),
    Set(BTreeSet<Value>),
    Rights(BTreeMap<ReplicaId, i64>),
    Ranked { k: usize, best: BTreeMap<Value, i64> },
}

impl Sequential {
    pub fn new(spec: &CrdtSpec) -> Self {
        match spec {
            CrdtSpec::Gcounter | CrdtSpec::Pncounter | CrdtSpec::Opcounter | CrdtSpec::Wwcounter => Sequential::Counter(0),
            CrdtSpec::Lwwreg => Sequential::Register(None),
            CrdtSpec::Mvreg => Sequential::MultiValue(None),
            CrdtSpec::Awset | CrdtSpec::Rwset | CrdtSpec::Lwwset => Sequential::Set(BTreeSet::new()),
            CrdtSpec::Bcounter { allocation, .. } => {
                Sequential::Rights(allocation.iter().map(|(r, &n)| (r.clone(), n as i64)).collect())
            }
            CrdtSpec::Topk { k } => Sequential::Ranked {
                k: *k,
                best: BTreeMap::new(),
            },
        }
    }

    /// Applies `op` issued at `at`; false if the type must refuse it.
    pub fn apply(&mut self, at: &ReplicaId, op: &Op) -> bool {
        match (self, op) {
            (Sequential::Counter(c), Op::Inc(n)) => *c += *n as i64,
            (Sequential::Counter(c), Op::Dec(n)) => *c -= *n as i64,
            (Sequential::Counter(c), Op::Assign(n)) => *c = *n,
            (Sequential::Register(r) | Sequential::MultiValue(r), Op::Write(v)) => *r = Some(v.clone()),
            (Sequential::Set(s), Op::Add(v)) => {
                s.insert(v.clone());
            }
            (Sequential::Set(s), Op::Rmv(v)) => {
                s.remove(v);
            }
            (Sequential::Rights(r), Op::Inc(n)) => *r.entry(at.clone()).or_default() += *n as i64,
            (Sequential::Rights(r), Op::Dec(n)) => {
                let mine = r.entry(at.clone()).or_default();
                if *mine < *n as i64 {
                    return false;
                }
                *mine -= *n as i64;
            }
            (Sequential::Rights(r), Op::Transfer { to, amount }) => {
                let mine = r.entry(at.clone()).or_default();
                if *mine < *amount as i64 {
                    return false;
                }
                *mine -= *amount as i64;
                *r.entry(to.clone()).or_default() += *amount as i64;
            }
            (Sequential::Ranked { best, .. }, Op::AddScored { elem, score }) => {
                let s = best.entry(elem.clone()).or_insert(*score);
                *s = (*s).max(*score);
            }
            (Sequential::Ranked { best, .. }, Op::Rmv(v)) => {
                best.remove(v);
            }
            (model, op) => panic!("{op} is not an operation of {model:?}"),
        }
        true
    }

    pub fn read(&self) -> QueryValue {
        match self {
            Sequential::Counter(c) => QueryValue::Int(*c),
            Sequential::Register(r) => QueryValue::Register(r.clone()),
            Sequential::MultiValue(r) => QueryValue::Values(r.iter().cloned().collect()),
            Sequential::Set(s) => QueryValue::Set(s.clone()),
            Sequential::Rights(r) => QueryValue::Int(r.values().sum()),
            Sequential::Ranked { k, best } => QueryValue::Ranked(top(best.iter().map(|(e, s)| (e.clone(), *s)), *k)),
        }
    }
}

fn top(entries: impl Iterator<Item = (Value, i64)>, k: usize) -> Vec<Value> {
    let mut ranked: Vec<(i64, Value)> = entries.map(|(e, s)| (s, e)).collect();
    ranked.sort_by(|a, b| b.cmp(a));
    ranked.into_iter().take(k).map(|(_, e)| e).collect()
}

/// Top-K of a replica that stored every add: an add counts unless a removal
/// of its element causally follows it, and each element keeps its best score.
pub fn full_top_k(history: &History, k: usize) -> Vec<Value> {
    let mut best: BTreeMap<Value, i64> = BTreeMap::new();
    for add in history.events() {
        let Op::AddScored { elem, score } = &add.op else { continue };
        let removed = history.events().iter().any(|r| {
            r.op == Op::Rmv(elem.clone()) && history.happens_before(&add.id, &r.id).expect("events of this history")
        });
        if !removed {
            let s = best.entry(elem.clone()).or_insert(*score);
            *s = (*s).max(*score);
        }
    }
    top(best.into_iter(), k)
}

/// Parses `inc(3)` / `dec(3)` as written in traces.
pub fn signed_amount(op: &str) -> i64 {
    let amount = |s: &str| s.trim_end_matches(')').parse::<i64>().expect("amount");
    if let Some(n) = op.strip_prefix("inc(") {
        amount(n)
    } else if let Some(n) = op.strip_prefix("dec(") {
        -amount(n)
    } else {
        0
    }
}

/// Three replica states reached by random updates and pairwise merges from
/// `start`. Every update and merge along the way must be an inflation.
pub fn reachable_triple<S: Replicated>(
    start: S,
    spec: &CrdtSpec,
    ids: &[ReplicaId],
    rng: &mut SplitMix64,
    steps: u64,
) -> Result<[S; 3], String> {
    let mut states = [start.clone(), start.clone(), start];
    for step in 1..=steps {
        let i = rng.below(3) as usize;
        if rng.chance(0.6) {
            let op = random_op(spec, rng, &ids[i], ids);
            let ts = HybridTimestamp::new(step, 0, ids[i].clone());
            let before = states[i].clone();
            if states[i].update(&ids[i], &op, &ts).is_ok() && !before.leq(&states[i]) {
                return Err(format!("{op} at {} is not an inflation", ids[i]));
            }
        } else {
            let j = (i + 1 + rng.below(2) as usize) % 3;
            let other = states[j].clone();
            let before = states[i].clone();
            states[i].merge(&other);
            if !before.leq(&states[i]) || !other.leq(&states[i]) {
                return Err("merge result is not an upper bound".into());
            }
        }
    }
    Ok(states)
}

/// Semilattice laws on one triple.
pub fn lattice_laws<S: Lattice>(a: &S, b: &S, c: &S) -> Result<(), String> {
    let ab = a.join(b);
    if ab != b.join(a) {
        return Err("merge is not commutative".into());
    }
    if ab.join(c) != a.join(&b.join(c)) {
        return Err("merge is not associative".into());
    }
    if a.join(a) != *a {
        return Err("merge is not idempotent".into());
    }
    if !a.leq(&ab) || !b.leq(&ab) {
        return Err("merge is not an upper bound".into());
    }
    // Any upper bound of a and b must sit above a ⊔ b.
    for upper in [c.clone(), a.join(c), b.join(c)] {
        if a.leq(&upper) && b.leq(&upper) && !ab.leq(&upper) {
            return Err("merge is not the least upper bound".into());
        }
    }
    for (x, y) in [(a, b), (b, c), (a, c)] {
        if x.leq(y) != (x.join(y) == *y) {
            return Err("leq disagrees with merge".into());
        }
    }
    if !a.leq(a) {
        return Err("leq is not reflexive".into());
    }
    Ok(())
}
