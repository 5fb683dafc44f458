use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::check::check_convergence;
use super::engine::{run, RunResult};
use super::rng::SplitMix64;
use super::scenario::{supported_models, CrdtSpec, NetConfig, Scenario, Step, SyncModel};
use super::trace::{EventKind, Trace};
use crate::causality::ReplicaId;
use crate::oracle::Op;
use crate::value::Value;

pub const MAX_REPLICAS: usize = 4;
pub const MAX_OPS: usize = 40;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FuzzConfig {
    pub tag: String,
    pub model: SyncModel,
    pub replicas: usize,
    pub ops: usize,
    pub runs: u64,
    pub seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FuzzSummary {
    pub runs: u64,
    pub updates: u64,
    pub rejected: u64,
    pub messages: u64,
    pub dropped: u64,
    pub duplicated: u64,
    pub bytes: u64,
    /// Effector pairs checked for commutativity (op model).
    pub audited_pairs: u64,
    /// Runs whose final states were compared against a full-state replay
    /// (delta model).
    pub cross_checked: u64,
    /// Top-K adds that stayed local for the whole run.
    pub untransmitted_adds: u64,
}

#[derive(Debug, Error)]
pub enum FuzzError {
    #[error("invalid fuzz configuration: {0}")]
    Config(String),
    #[error("run {run} failed (seed {seed}): {reason}")]
    Failure {
        run: u64,
        seed: u64,
        reason: String,
        scenario: Box<Scenario>,
    },
}

const ELEMS: [&str; 4] = ["a", "b", "c", "d"];
const RANKED: [&str; 6] = ["a", "b", "c", "d", "e", "f"];

fn replica_names(n: usize) -> Vec<ReplicaId> {
    (0..n).map(|i| ReplicaId::new(((b'A' + i as u8) as char).to_string())).collect()
}

fn random_net(rng: &mut SplitMix64) -> NetConfig {
    NetConfig {
        drop: (rng.unit() * 0.3 * 100.0).round() / 100.0,
        dup: (rng.unit() * 0.2 * 100.0).round() / 100.0,
        reorder: rng.below(4),
    }
}

fn random_spec(tag: &str, rng: &mut SplitMix64, replicas: &[ReplicaId]) -> Option<CrdtSpec> {
    Some(match tag {
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
            let mut allocation = BTreeMap::new();
            for r in replicas {
                allocation.insert(r.clone(), rng.below(8));
            }
            CrdtSpec::Bcounter {
                initial: allocation.values().sum(),
                allocation,
            }
        }
        "topk" => CrdtSpec::Topk {
            k: 1 + rng.below(3) as usize,
        },
        _ => return None,
    })
}

fn random_op(spec: &CrdtSpec, rng: &mut SplitMix64, at: &ReplicaId, replicas: &[ReplicaId]) -> Op {
    let elem = |rng: &mut SplitMix64| Value::from(*rng.pick(&ELEMS));
    let amount = |rng: &mut SplitMix64| 1 + rng.below(3);
    match spec {
        CrdtSpec::Gcounter => Op::Inc(amount(rng)),
        CrdtSpec::Pncounter | CrdtSpec::Opcounter => {
            if rng.chance(0.5) {
                Op::Inc(amount(rng))
            } else {
                Op::Dec(amount(rng))
            }
        }
        CrdtSpec::Wwcounter => match rng.below(4) {
            0 => Op::Assign(rng.below(21) as i64 - 10),
            1 | 2 => Op::Inc(amount(rng)),
            _ => Op::Dec(amount(rng)),
        },
        CrdtSpec::Lwwreg | CrdtSpec::Mvreg => Op::Write(elem(rng)),
        CrdtSpec::Awset | CrdtSpec::Rwset | CrdtSpec::Lwwset => {
            if rng.chance(0.6) {
                Op::Add(elem(rng))
            } else {
                Op::Rmv(elem(rng))
            }
        }
        CrdtSpec::Bcounter { .. } => {
            let others: Vec<&ReplicaId> = replicas.iter().filter(|r| *r != at).collect();
            match rng.below(10) {
                0..=2 => Op::Inc(amount(rng)),
                3 | 4 if !others.is_empty() => Op::Transfer {
                    to: (*rng.pick(&others)).clone(),
                    amount: amount(rng),
                },
                _ => Op::Dec(amount(rng)),
            }
        }
        CrdtSpec::Topk { .. } => {
            if rng.chance(0.7) {
                Op::AddScored {
                    elem: Value::from(*rng.pick(&RANKED)),
                    score: rng.below(20) as i64,
                }
            } else {
                Op::Rmv(Value::from(*rng.pick(&RANKED)))
            }
        }
    }
}

/// A random scenario: a lossy network, `ops` updates interleaved with
/// one-way syncs, queries and network changes, then a full sync.
pub fn generate_scenario(tag: &str, model: SyncModel, replicas: usize, ops: usize, seed: u64) -> Option<Scenario> {
    let mut rng = SplitMix64::new(seed);
    let ids = replica_names(replicas);
    let crdt = random_spec(tag, &mut rng, &ids)?;
    let mut steps = vec![Step::Net { net: random_net(&mut rng) }];
    for _ in 0..ops {
        let at = rng.pick(&ids).clone();
        let op = random_op(&crdt, &mut rng, &at, &ids);
        steps.push(Step::update(&at, op));
        if ids.len() > 1 && rng.chance(0.4) {
            let from = rng.below(ids.len() as u64) as usize;
            let to = (from + 1 + rng.below(ids.len() as u64 - 1) as usize) % ids.len();
            steps.push(Step::sync(&ids[from], &ids[to]));
        }
        if rng.chance(0.05) {
            steps.push(Step::Query {
                query: rng.pick(&ids).clone(),
            });
        }
        if rng.chance(0.03) {
            steps.push(Step::Net { net: random_net(&mut rng) });
        }
    }
    steps.push(Step::full_sync());
    Some(Scenario {
        name: format!("fuzz-{tag}-{model}-{seed:016x}"),
        seed,
        crdt,
        model,
        replicas: ids,
        steps,
    })
}

/// Checks from a top-K trace that every transmitted add-dot had entered some
/// replica's known top before it was sent. Returns the number of adds that
/// never did (and so were never sent).
pub fn audit_topk_bandwidth(trace: &Trace) -> Result<u64, String> {
    let mut entered: BTreeSet<&str> = BTreeSet::new();
    let mut added: BTreeSet<&str> = BTreeSet::new();
    for e in trace.events() {
        match e.kind {
            EventKind::Note => {
                if let Some(dot) = e.fields.get(1).and_then(|f| f.strip_prefix("known-top=")) {
                    entered.insert(dot);
                }
            }
            EventKind::UpdateApplied => added.extend(e.field("dot")),
            EventKind::MessageSent => {
                for dot in e.field("carries").into_iter().flat_map(|c| c.split(',')).filter(|d| !d.is_empty()) {
                    if !entered.contains(dot) {
                        return Err(format!("add {dot} was transmitted without entering a known top"));
                    }
                }
            }
            _ => {}
        }
    }
    Ok(added.difference(&entered).count() as u64)
}

/// Runs one scenario and applies every check the fuzzer makes.
pub fn check_run(scenario: &Scenario) -> Result<RunResult, String> {
    let result = run(scenario).map_err(|e| e.to_string())?;
    check_convergence(&result).map_err(|d| d.to_string())?;
    if scenario.model == SyncModel::Delta {
        let replay = Scenario {
            model: SyncModel::State,
            ..scenario.clone()
        };
        let reference = run(&replay).map_err(|e| format!("state-model replay: {e}"))?;
        if reference.states != result.states {
            return Err("delta-model final states differ from the state-model replay".into());
        }
    }
    if matches!(scenario.crdt, CrdtSpec::Topk { .. }) {
        audit_topk_bandwidth(&result.trace)?;
    }
    Ok(result)
}

/// Seed of run `index` under fuzz seed `seed`.
pub fn run_seed(seed: u64, index: u64) -> u64 {
    SplitMix64::derive(seed, &[index]).next_u64()
}

pub fn fuzz(config: &FuzzConfig) -> Result<FuzzSummary, FuzzError> {
    let bad = |m: String| Err(FuzzError::Config(m));
    if !supported_models(&config.tag).contains(&config.model) {
        return bad(format!("{} does not run under the {} model", config.tag, config.model));
    }
    if !(1..=MAX_REPLICAS).contains(&config.replicas) {
        return bad(format!("replica count must be 1..={MAX_REPLICAS}"));
    }
    if config.ops > MAX_OPS {
        return bad(format!("at most {MAX_OPS} updates per run"));
    }
    let mut summary = FuzzSummary::default();
    for i in 0..config.runs {
        let seed = run_seed(config.seed, i);
        let scenario = generate_scenario(&config.tag, config.model, config.replicas, config.ops, seed)
            .expect("tag was checked above");
        let result = check_run(&scenario).map_err(|reason| FuzzError::Failure {
            run: i,
            seed,
            reason,
            scenario: Box::new(scenario.clone()),
        })?;
        summary.runs += 1;
        summary.updates += result.stats.updates;
        summary.rejected += result.stats.rejected;
        summary.messages += result.stats.messages;
        summary.dropped += result.stats.dropped;
        summary.duplicated += result.stats.duplicated;
        summary.bytes += result.stats.bytes;
        if config.model == SyncModel::Op {
            summary.audited_pairs += result.stats.audited;
        }
        if config.model == SyncModel::Delta {
            summary.cross_checked += 1;
        }
        if config.tag == "topk" {
            summary.untransmitted_adds += audit_topk_bandwidth(&result.trace).unwrap_or(0);
        }
    }
    Ok(summary)
}
