//! Acceptance criteria, one line of output each. Runs without the libtest
//! harness so the verdicts are visible under plain `cargo test`; exits
//! non-zero if any criterion fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use serde::Serialize;

use crdtkit::extensions::BoundedCounter;
use crdtkit::oracle::Op;
use crdtkit::simulator::rng::SplitMix64;
use crdtkit::simulator::{
    check_convergence, fuzz, generate_scenario, run, run_seed, run_state, shipped, shipped_names, supported_models,
    CrdtSpec, Divergence, EventKind, FuzzConfig, FuzzSummary, QueryValue, Replicated, Scenario, Step, SyncModel,
    TYPE_TAGS,
};
use crdtkit::state_crdts::{AwSet, GCounter, Lattice, LwwRegister, LwwSet, MvRegister, PnCounter, RwSet};
use crdtkit::{HybridTimestamp, ReplicaId, Value};

use common::{full_top_k, lattice_laws, random_op, reachable_triple, replicas, signed_amount, spec_for, Sequential};

const FIGURE_BUDGET: Duration = Duration::from_secs(1);
const FUZZ_BUDGET: Duration = Duration::from_secs(60);
const FUZZ_RUNS: u64 = 1000;
const FUZZ_REPLICAS: usize = 4;
const FUZZ_OPS: usize = 40;
const LATTICE_TRIPLES: u64 = 1000;
const SEQUENTIAL_SCRIPTS: u64 = 500;
const DELTA_SCENARIOS: u64 = 500;
const BCOUNTER_RUNS: u64 = 1000;
const TOPK_RUNS: u64 = 500;

type Verdict = Result<String, String>;

fn pairs() -> Vec<(&'static str, SyncModel)> {
    TYPE_TAGS
        .iter()
        .flat_map(|&t| supported_models(t).iter().map(move |&m| (t, m)))
        .collect()
}

fn figures() -> Verdict {
    let expected = [
        ("fig1_awset", vec!["a"]),
        ("fig1_rwset", vec![]),
        ("fig1_lwwset_a", vec!["a"]),
        ("fig1_lwwset_b", vec![]),
        ("fig2_awset", vec!["a", "b"]),
    ];
    let start = Instant::now();
    for (name, elems) in &expected {
        let result = run(&shipped(name).unwrap()).map_err(|e| format!("{name}: {e}"))?;
        check_convergence(&result).map_err(|d| format!("{name}: {d}"))?;
        let want = QueryValue::Set(elems.iter().map(|e| Value::from(*e)).collect());
        if let Some((r, v)) = result.finals.iter().find(|(_, v)| *v != want) {
            return Err(format!("{name}: {r} reads {v}, expected {want}"));
        }
    }
    let elapsed = start.elapsed();
    if elapsed >= FIGURE_BUDGET {
        return Err(format!("took {elapsed:?}"));
    }
    Ok(format!("5 scenarios exact in {elapsed:?}"))
}

fn fuzz_all() -> (Verdict, Vec<(&'static str, SyncModel, FuzzSummary)>) {
    let mut summaries = Vec::new();
    let mut slowest = Duration::ZERO;
    let mut failures = Vec::new();
    for (i, (tag, model)) in pairs().into_iter().enumerate() {
        let config = FuzzConfig {
            tag: tag.into(),
            model,
            replicas: FUZZ_REPLICAS,
            ops: FUZZ_OPS,
            runs: FUZZ_RUNS,
            seed: 0xacce_0000 + i as u64,
        };
        let start = Instant::now();
        let outcome = fuzz(&config);
        let elapsed = start.elapsed();
        slowest = slowest.max(elapsed);
        match outcome {
            Ok(s) if elapsed < FUZZ_BUDGET => summaries.push((tag, model, s)),
            Ok(_) => failures.push(format!("{tag}/{model} took {elapsed:?}")),
            Err(e) => failures.push(format!("{tag}/{model}: {e}")),
        }
    }
    let verdict = if failures.is_empty() {
        let runs: u64 = summaries.iter().map(|(_, _, s)| s.runs).sum();
        Ok(format!("{} pairs, {runs} runs, slowest pair {slowest:?}", summaries.len()))
    } else {
        Err(failures.join("; "))
    };
    (verdict, summaries)
}

fn lattice_suite() -> Verdict {
    fn triples<S: Replicated>(name: &str, start: impl Fn(&mut SplitMix64, &[ReplicaId]) -> (S, CrdtSpec)) -> Result<(), String> {
        let ids = replicas(3);
        for i in 0..LATTICE_TRIPLES {
            let mut rng = SplitMix64::derive(0x1a77, &[i]);
            let (s, spec) = start(&mut rng, &ids);
            let steps = 4 + rng.below(20);
            let [a, b, c] = reachable_triple(s, &spec, &ids, &mut rng, steps).map_err(|e| format!("{name} #{i}: {e}"))?;
            lattice_laws(&a, &b, &c).map_err(|e| format!("{name} #{i}: {e}"))?;
        }
        Ok(())
    }
    fn plain<S: Replicated + Default>(spec: CrdtSpec) -> impl Fn(&mut SplitMix64, &[ReplicaId]) -> (S, CrdtSpec) {
        move |_, _| (S::default(), spec.clone())
    }
    triples("gcounter", plain::<GCounter>(CrdtSpec::Gcounter))?;
    triples("pncounter", plain::<PnCounter>(CrdtSpec::Pncounter))?;
    triples("lwwreg", plain::<LwwRegister>(CrdtSpec::Lwwreg))?;
    triples("mvreg", plain::<MvRegister>(CrdtSpec::Mvreg))?;
    triples("awset", plain::<AwSet>(CrdtSpec::Awset))?;
    triples("rwset", plain::<RwSet>(CrdtSpec::Rwset))?;
    triples("lwwset", plain::<LwwSet>(CrdtSpec::Lwwset))?;
    triples("bcounter", |rng, ids| {
        let spec = spec_for("bcounter", rng, ids);
        let CrdtSpec::Bcounter { initial, allocation } = &spec else { unreachable!() };
        (BoundedCounter::new(*initial, ids, allocation).unwrap(), spec)
    })?;
    Ok(format!("8 state types x {LATTICE_TRIPLES} triples"))
}

/// A script whose every update is followed by a read; with more than one
/// replica each update is also followed by a full sync.
fn sequential_script(tag: &str, model: SyncModel, n: usize, seed: u64) -> (Scenario, Vec<QueryValue>, u64) {
    let mut rng = SplitMix64::derive(seed, &[n as u64]);
    let ids = replicas(n);
    let crdt = spec_for(tag, &mut rng, &ids);
    let mut reference = Sequential::new(&crdt);
    let mut steps = Vec::new();
    let mut expected = Vec::new();
    let mut refused = 0;
    for _ in 0..1 + rng.below(15) {
        let at = rng.pick(&ids).clone();
        let op = random_op(&crdt, &mut rng, &at, &ids);
        if !reference.apply(&at, &op) {
            refused += 1;
        }
        steps.push(Step::update(&at, op));
        if n > 1 {
            steps.push(Step::full_sync());
        }
        steps.push(Step::Query {
            query: rng.pick(&ids).clone(),
        });
        expected.push(reference.read());
    }
    steps.push(Step::full_sync());
    let scenario = Scenario {
        name: format!("sequential-{tag}-{model}-{seed}"),
        seed,
        crdt,
        model,
        replicas: ids,
        steps,
    };
    (scenario, expected, refused)
}

fn sequential_suite() -> Verdict {
    let mut scripts = 0;
    for (tag, model) in pairs() {
        for n in [1, 3] {
            for seed in 0..SEQUENTIAL_SCRIPTS {
                let (scenario, expected, refused) = sequential_script(tag, model, n, seed);
                let result = run(&scenario).map_err(|e| format!("{}: {e}", scenario.name))?;
                let got: Vec<QueryValue> = result.queries.iter().map(|q| q.value.clone()).collect();
                if got != expected {
                    return Err(format!("{} read {got:?}, sequential replay reads {expected:?}", scenario.name));
                }
                if result.stats.rejected != refused {
                    return Err(format!("{} refused {} updates, expected {refused}", scenario.name, result.stats.rejected));
                }
                scripts += 1;
            }
        }
    }
    Ok(format!("{scripts} scripts match the sequential replay"))
}

fn commutativity(summaries: &[(&str, SyncModel, FuzzSummary)]) -> Verdict {
    let op: Vec<_> = summaries.iter().filter(|(_, m, _)| *m == SyncModel::Op).collect();
    let expected = pairs().iter().filter(|(_, m)| *m == SyncModel::Op).count();
    if op.len() != expected {
        return Err(format!("only {} of {expected} op-model fuzz suites passed", op.len()));
    }
    let mut detail = Vec::new();
    for (tag, _, s) in op {
        if s.audited_pairs == 0 {
            return Err(format!("{tag}: no concurrent effector pairs observed"));
        }
        detail.push(format!("{tag} {}", s.audited_pairs));
    }
    Ok(format!("concurrent pairs commuting in both orders: {}", detail.join(", ")))
}

fn delta_equivalence() -> Verdict {
    let tags: Vec<&str> = TYPE_TAGS.iter().copied().filter(|t| supported_models(t).contains(&SyncModel::Delta)).collect();
    let mut compared = 0;
    for tag in &tags {
        for i in 0..DELTA_SCENARIOS {
            let seed = run_seed(0xde17a, i);
            let delta = generate_scenario(tag, SyncModel::Delta, FUZZ_REPLICAS, FUZZ_OPS, seed).unwrap();
            let state = Scenario {
                model: SyncModel::State,
                ..delta.clone()
            };
            let a = run(&delta).map_err(|e| format!("{}: {e}", delta.name))?;
            let b = run(&state).map_err(|e| format!("{}: {e}", state.name))?;
            check_convergence(&a).map_err(|d| format!("{}: {d}", delta.name))?;
            if a.states != b.states {
                return Err(format!("{}: delta and state final states differ", delta.name));
            }
            compared += 1;
        }
    }
    Ok(format!("{compared} scenarios over {}", tags.join(", ")))
}

fn bounded_counter_safety() -> Verdict {
    let mut refused = 0;
    let mut transfers = 0;
    for i in 0..BCOUNTER_RUNS {
        let s = generate_scenario("bcounter", SyncModel::State, FUZZ_REPLICAS, FUZZ_OPS, run_seed(0xb0c, i)).unwrap();
        let CrdtSpec::Bcounter { initial, .. } = &s.crdt else { unreachable!() };
        let result = run(&s).map_err(|e| format!("{}: {e}", s.name))?;
        if let Some(v) = result.violations.first() {
            return Err(format!("{}: {v}", s.name));
        }
        let applied: Vec<&str> = result
            .trace
            .of_kind(EventKind::UpdateApplied)
            .map(|e| e.fields[1].as_str())
            .collect();
        transfers += applied.iter().filter(|op| op.starts_with("transfer(")).count();
        let replay = *initial as i64 + applied.iter().map(|op| signed_amount(op)).sum::<i64>();
        for (r, v) in &result.finals {
            match v {
                QueryValue::Int(n) if *n >= 0 && *n == replay => {}
                other => return Err(format!("{}: {r} reads {other}, replay gives {replay}", s.name)),
            }
        }
        for q in &result.queries {
            if matches!(q.value, QueryValue::Int(n) if n < 0) {
                return Err(format!("{}: {} read {} at tick {}", s.name, q.replica, q.value, q.tick));
            }
        }
        refused += result.stats.rejected;
    }
    Ok(format!("{BCOUNTER_RUNS} runs, {transfers} transfers, {refused} overdrafts refused"))
}

fn top_k_non_uniform() -> Verdict {
    let mut never_top = 0;
    let mut sent = 0;
    for i in 0..TOPK_RUNS {
        let s = generate_scenario("topk", SyncModel::State, FUZZ_REPLICAS, FUZZ_OPS, run_seed(0x707, i)).unwrap();
        let CrdtSpec::Topk { k } = s.crdt else { unreachable!() };
        let result = run(&s).map_err(|e| format!("{}: {e}", s.name))?;
        let want = QueryValue::Ranked(full_top_k(&result.history, k));
        if let Some((r, v)) = result.finals.iter().find(|(_, v)| *v != want) {
            return Err(format!("{}: {r} reads {v}, full replica reads {want}", s.name));
        }
        let mut entered: BTreeSet<String> = BTreeSet::new();
        let mut added: BTreeSet<String> = BTreeSet::new();
        for line in result.trace.render().lines() {
            let cols: Vec<&str> = line.split('\t').collect();
            match cols[1] {
                "note" => entered.extend(cols[3..].iter().filter_map(|c| c.strip_prefix("known-top=")).map(String::from)),
                "update-applied" => added.extend(cols[2..].iter().filter_map(|c| c.strip_prefix("dot=")).map(String::from)),
                "message-sent" => {
                    for dot in cols.iter().filter_map(|c| c.strip_prefix("carries=")).flat_map(|c| c.split(',')) {
                        if dot.is_empty() {
                            continue;
                        }
                        if !entered.contains(dot) {
                            return Err(format!("{}: {dot} sent before entering any known top", s.name));
                        }
                        sent += 1;
                    }
                }
                _ => {}
            }
        }
        never_top += added.difference(&entered).count();
    }
    if never_top == 0 {
        return Err("no run had an add that stayed out of every known top".into());
    }
    Ok(format!("{TOPK_RUNS} runs, {sent} entry transmissions, {never_top} never-top adds sent 0 times"))
}

fn determinism() -> Verdict {
    let mut scenarios: Vec<Scenario> = shipped_names().map(|n| shipped(n).unwrap()).collect();
    for (i, tag) in TYPE_TAGS.iter().enumerate() {
        let models = supported_models(tag);
        let model = models[i % models.len()];
        scenarios.push(generate_scenario(tag, model, FUZZ_REPLICAS, FUZZ_OPS, 0xd37 + i as u64).unwrap());
    }
    for s in &scenarios {
        let a = run(s).map_err(|e| format!("{}: {e}", s.name))?.trace.render();
        let b = run(s).map_err(|e| format!("{}: {e}", s.name))?.trace.render();
        if a.as_bytes() != b.as_bytes() {
            return Err(format!("{}: traces differ", s.name));
        }
    }
    Ok(format!("{} scenarios replay byte-identically", scenarios.len()))
}

/// Grow-only counter whose merge ignores the incoming state.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
struct DeafCounter(BTreeMap<ReplicaId, u64>);

impl Lattice for DeafCounter {
    fn merge(&mut self, _: &Self) {}

    fn leq(&self, other: &Self) -> bool {
        self.0.iter().all(|(r, n)| other.0.get(r).is_some_and(|m| n <= m))
    }
}

impl Replicated for DeafCounter {
    fn update(&mut self, replica: &ReplicaId, op: &Op, _: &HybridTimestamp) -> Result<(), String> {
        match op {
            Op::Inc(n) => *self.0.entry(replica.clone()).or_default() += n,
            _ => return Err(format!("unsupported {op}")),
        }
        Ok(())
    }

    fn query(&self) -> QueryValue {
        QueryValue::Int(self.0.values().sum::<u64>() as i64)
    }
}

fn negative_control() -> Verdict {
    let ids = replicas(3);
    let mut steps: Vec<Step> = ids.iter().enumerate().map(|(i, r)| Step::update(r, Op::Inc(i as u64 + 1))).collect();
    steps.push(Step::sync(&ids[0], &ids[1]));
    steps.push(Step::full_sync());
    let scenario = Scenario {
        name: "broken-merge".into(),
        seed: 7,
        crdt: CrdtSpec::Gcounter,
        model: SyncModel::State,
        replicas: ids,
        steps,
    };
    check_convergence(&run_state::<GCounter>(&scenario).unwrap()).map_err(|d| format!("correct merge rejected: {d}"))?;
    match check_convergence(&run_state::<DeafCounter>(&scenario).unwrap()) {
        Err(d @ Divergence::Replicas { .. }) => Ok(format!("caught: {d}")),
        Err(other) => Err(format!("caught without a witness pair: {other}")),
        Ok(()) => Err("broken merge passed".into()),
    }
}

fn main() -> ExitCode {
    let started = Instant::now();
    let mut failed = 0;
    let mut report = |n: u32, name: &str, verdict: Verdict| {
        match verdict {
            Ok(detail) => println!("criterion {n:>2} {name}: PASS ({detail})"),
            Err(reason) => {
                failed += 1;
                println!("criterion {n:>2} {name}: FAIL ({reason})");
            }
        }
    };
    report(1, "figure reproduction", figures());
    let (fuzzed, summaries) = fuzz_all();
    report(2, "oracle agreement fuzz", fuzzed);
    report(3, "lattice laws", lattice_suite());
    report(4, "sequential semantics", sequential_suite());
    report(5, "effector commutativity", commutativity(&summaries));
    report(6, "delta equivalence", delta_equivalence());
    report(7, "bounded counter safety", bounded_counter_safety());
    report(8, "top-k non-uniformity", top_k_non_uniform());
    report(9, "determinism", determinism());
    report(10, "negative control", negative_control());
    println!("acceptance: {} of 10 criteria passed in {:?}", 10 - failed, started.elapsed());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
