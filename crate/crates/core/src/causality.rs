//! Event identity and causality tracking.
//!
//! - [`Dot`]: a `(replica, counter)` pair naming one event.
//! - [`VersionVector`]: per-replica contiguous prefix of seen counters.
//! - [`CausalContext`]: a version vector plus a cloud of dots seen out of
//!   order, used by the dotted state types and their delta mutators.
//! - [`HybridTimestamp`]: a total order consistent with happens-before,
//!   built from a physical component, a logical tie counter and the replica.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReplicaId(String);

impl ReplicaId {
    pub fn new(id: impl Into<String>) -> Self {
        ReplicaId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for ReplicaId {
    fn from(s: &str) -> Self {
        ReplicaId(s.to_owned())
    }
}

impl fmt::Display for ReplicaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for ReplicaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Identifier of the `counter`-th event generated at `replica` (1-based).
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Dot {
    pub replica: ReplicaId,
    pub counter: u64,
}

impl Dot {
    pub fn new(replica: impl Into<ReplicaId>, counter: u64) -> Self {
        debug_assert!(counter >= 1, "dot counters start at 1");
        Dot {
            replica: replica.into(),
            counter,
        }
    }
}

impl fmt::Display for Dot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.replica, self.counter)
    }
}

impl fmt::Debug for Dot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.replica, self.counter)
    }
}

/// Highest contiguous counter seen per replica. Zero entries are never stored,
/// so structural equality is semantic equality.
#[derive(Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VersionVector {
    entries: BTreeMap<ReplicaId, u64>,
}

impl VersionVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, replica: &ReplicaId) -> u64 {
        self.entries.get(replica).copied().unwrap_or(0)
    }

    pub fn set(&mut self, replica: ReplicaId, counter: u64) {
        if counter == 0 {
            self.entries.remove(&replica);
        } else {
            self.entries.insert(replica, counter);
        }
    }

    /// Raises the entry for `replica` to at least `counter`.
    pub fn advance(&mut self, replica: &ReplicaId, counter: u64) {
        if counter > self.get(replica) {
            self.entries.insert(replica.clone(), counter);
        }
    }

    pub fn next_dot(&self, replica: &ReplicaId) -> Dot {
        Dot {
            replica: replica.clone(),
            counter: self.get(replica) + 1,
        }
    }

    pub fn contains(&self, dot: &Dot) -> bool {
        dot.counter <= self.get(&dot.replica)
    }

    /// Records `dot`, assuming every earlier dot of its replica is covered.
    pub fn observe(&mut self, dot: &Dot) {
        self.advance(&dot.replica, dot.counter);
    }

    pub fn join(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.join_assign(other);
        out
    }

    pub fn join_assign(&mut self, other: &Self) {
        for (r, &c) in &other.entries {
            self.advance(r, c);
        }
    }

    pub fn leq(&self, other: &Self) -> bool {
        self.entries.iter().all(|(r, &c)| c <= other.get(r))
    }

    /// Partial-order comparison; `None` when the vectors are concurrent.
    pub fn partial_cmp_causal(&self, other: &Self) -> Option<Ordering> {
        match (self.leq(other), other.leq(self)) {
            (true, true) => Some(Ordering::Equal),
            (true, false) => Some(Ordering::Less),
            (false, true) => Some(Ordering::Greater),
            (false, false) => None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ReplicaId, u64)> {
        self.entries.iter().map(|(r, &c)| (r, c))
    }

    /// Sum of all entries, i.e. the number of dots covered.
    pub fn total(&self) -> u64 {
        self.entries.values().sum()
    }
}

impl FromIterator<(ReplicaId, u64)> for VersionVector {
    fn from_iter<I: IntoIterator<Item = (ReplicaId, u64)>>(iter: I) -> Self {
        let mut vv = VersionVector::new();
        for (r, c) in iter {
            vv.advance(&r, c);
        }
        vv
    }
}

impl fmt::Debug for VersionVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (r, c)) in self.entries.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{r}:{c}")?;
        }
        f.write_str("}")
    }
}

pub fn next_dot(vv: &VersionVector, replica: &ReplicaId) -> Dot {
    vv.next_dot(replica)
}

pub fn vv_join(a: &VersionVector, b: &VersionVector) -> VersionVector {
    a.join(b)
}

pub fn vv_leq(a: &VersionVector, b: &VersionVector) -> bool {
    a.leq(b)
}

pub fn dot_seen(vv: &VersionVector, dot: &Dot) -> bool {
    vv.contains(dot)
}

/// Set of seen dots: a contiguous prefix per replica plus the dots seen past a
/// gap. Always kept compact, so no cloud dot is adjacent to or below its
/// replica's prefix.
#[derive(Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CausalContext {
    prefix: VersionVector,
    cloud: BTreeSet<Dot>,
}

impl CausalContext {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_dots<'a>(dots: impl IntoIterator<Item = &'a Dot>) -> Self {
        let mut cc = CausalContext::new();
        for d in dots {
            cc.cloud.insert(d.clone());
        }
        cc.compact();
        cc
    }

    pub fn contains(&self, dot: &Dot) -> bool {
        self.prefix.contains(dot) || self.cloud.contains(dot)
    }

    pub fn insert(&mut self, dot: Dot) {
        if !self.prefix.contains(&dot) {
            self.cloud.insert(dot);
            self.compact();
        }
    }

    /// Next unused dot for `replica`, past both the prefix and the cloud.
    pub fn next_dot(&self, replica: &ReplicaId) -> Dot {
        let in_cloud = self
            .cloud
            .range(Dot::new(replica.clone(), 1)..)
            .take_while(|d| &d.replica == replica)
            .map(|d| d.counter)
            .max()
            .unwrap_or(0);
        Dot::new(replica.clone(), self.prefix.get(replica).max(in_cloud) + 1)
    }

    pub fn join(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.join_assign(other);
        out
    }

    pub fn join_assign(&mut self, other: &Self) {
        self.prefix.join_assign(&other.prefix);
        self.cloud.extend(other.cloud.iter().cloned());
        self.compact();
    }

    /// Set inclusion.
    pub fn leq(&self, other: &Self) -> bool {
        for (r, c) in self.prefix.iter() {
            let covered = other.prefix.get(r);
            if covered < c && !(covered + 1..=c).all(|n| other.cloud.contains(&Dot::new(r.clone(), n))) {
                return false;
            }
        }
        self.cloud.iter().all(|d| other.contains(d))
    }

    pub fn prefix(&self) -> &VersionVector {
        &self.prefix
    }

    pub fn cloud(&self) -> &BTreeSet<Dot> {
        &self.cloud
    }

    pub fn is_empty(&self) -> bool {
        self.prefix.is_empty() && self.cloud.is_empty()
    }

    fn compact(&mut self) {
        let cloud = std::mem::take(&mut self.cloud);
        for d in cloud {
            let have = self.prefix.get(&d.replica);
            if d.counter <= have {
                continue;
            }
            if d.counter == have + 1 {
                self.prefix.set(d.replica, d.counter);
            } else {
                self.cloud.insert(d);
            }
        }
    }
}

impl From<VersionVector> for CausalContext {
    fn from(prefix: VersionVector) -> Self {
        CausalContext {
            prefix,
            cloud: BTreeSet::new(),
        }
    }
}

impl fmt::Debug for CausalContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.prefix)?;
        if !self.cloud.is_empty() {
            write!(f, "+{:?}", self.cloud)?;
        }
        Ok(())
    }
}

/// Hybrid logical timestamp. The derived order is lexicographic on
/// `(physical, logical, replica)`, a strict total order over distinct events.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HybridTimestamp {
    pub physical: u64,
    pub logical: u64,
    pub replica: ReplicaId,
}

impl HybridTimestamp {
    pub fn new(physical: u64, logical: u64, replica: impl Into<ReplicaId>) -> Self {
        HybridTimestamp {
            physical,
            logical,
            replica: replica.into(),
        }
    }

    /// The clock a replica starts with.
    pub fn zero(replica: ReplicaId) -> Self {
        HybridTimestamp {
            physical: 0,
            logical: 0,
            replica,
        }
    }

    /// Local or send event.
    pub fn tick(&self, now: u64) -> Self {
        hlc_local(self, now)
    }

    /// Receive event for a message stamped `msg`.
    pub fn receive(&self, msg: &Self, now: u64) -> Self {
        hlc_receive(self, msg, now)
    }
}

impl fmt::Display for HybridTimestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.physical, self.logical, self.replica)
    }
}

impl fmt::Debug for HybridTimestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

pub fn hlc_local(clock: &HybridTimestamp, now: u64) -> HybridTimestamp {
    if now > clock.physical {
        HybridTimestamp::new(now, 0, clock.replica.clone())
    } else {
        HybridTimestamp::new(clock.physical, clock.logical + 1, clock.replica.clone())
    }
}

pub fn hlc_receive(clock: &HybridTimestamp, msg: &HybridTimestamp, now: u64) -> HybridTimestamp {
    let physical = clock.physical.max(msg.physical).max(now);
    let logical = match (physical == clock.physical, physical == msg.physical) {
        (true, true) => clock.logical.max(msg.logical) + 1,
        (true, false) => clock.logical + 1,
        (false, true) => msg.logical + 1,
        (false, false) => 0,
    };
    HybridTimestamp::new(physical, logical, clock.replica.clone())
}

pub fn ts_compare(a: &HybridTimestamp, b: &HybridTimestamp) -> Ordering {
    a.cmp(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vv(entries: &[(&str, u64)]) -> VersionVector {
        entries.iter().map(|(r, c)| (ReplicaId::from(*r), *c)).collect()
    }

    fn ts(p: u64, l: u64, r: &str) -> HybridTimestamp {
        HybridTimestamp::new(p, l, r)
    }

    #[test]
    fn next_dot_examples() {
        let v = vv(&[("A", 2), ("B", 1)]);
        assert_eq!(next_dot(&v, &"A".into()), Dot::new("A", 3));
        assert_eq!(next_dot(&VersionVector::new(), &"B".into()), Dot::new("B", 1));
        assert_eq!(next_dot(&v, &"C".into()), Dot::new("C", 1));
        assert_eq!(v, vv(&[("A", 2), ("B", 1)]));
    }

    #[test]
    fn join_examples() {
        assert_eq!(
            vv_join(&vv(&[("A", 2), ("B", 1)]), &vv(&[("A", 1), ("B", 3)])),
            vv(&[("A", 2), ("B", 3)])
        );
        let v = vv(&[("A", 2), ("B", 1)]);
        assert_eq!(vv_join(&v, &v), v);
        assert_eq!(vv_join(&vv(&[]), &vv(&[("C", 4)])), vv(&[("C", 4)]));
    }

    #[test]
    fn leq_examples() {
        assert!(vv_leq(&vv(&[("A", 1)]), &vv(&[("A", 2), ("B", 1)])));
        assert!(!vv_leq(&vv(&[("A", 2)]), &vv(&[("B", 2)])));
        assert!(vv_leq(&vv(&[]), &vv(&[])));
    }

    #[test]
    fn dot_seen_examples() {
        assert!(dot_seen(&vv(&[("A", 3)]), &Dot::new("A", 2)));
        assert!(!dot_seen(&vv(&[("A", 3)]), &Dot::new("A", 4)));
        assert!(!dot_seen(&vv(&[]), &Dot::new("B", 1)));
    }

    #[test]
    fn zero_entries_are_not_stored() {
        let mut v = vv(&[("A", 1)]);
        v.set("A".into(), 0);
        assert_eq!(v, VersionVector::new());
        assert!(v.is_empty());
    }

    #[test]
    fn hlc_local_examples() {
        assert_eq!(hlc_local(&ts(10, 0, "A"), 12), ts(12, 0, "A"));
        assert_eq!(hlc_local(&ts(10, 3, "A"), 10), ts(10, 4, "A"));
        assert_eq!(hlc_local(&ts(10, 3, "A"), 7), ts(10, 4, "A"));
    }

    #[test]
    fn hlc_receive_examples() {
        assert_eq!(hlc_receive(&ts(10, 2, "A"), &ts(10, 5, "B"), 9), ts(10, 6, "A"));
        assert_eq!(hlc_receive(&ts(10, 2, "A"), &ts(8, 9, "B"), 15), ts(15, 0, "A"));
        assert_eq!(hlc_receive(&ts(10, 2, "A"), &ts(12, 0, "B"), 9), ts(12, 1, "A"));
    }

    #[test]
    fn ts_compare_examples() {
        assert_eq!(ts_compare(&ts(10, 0, "A"), &ts(10, 0, "B")), Ordering::Less);
        assert_eq!(ts_compare(&ts(9, 9, "B"), &ts(10, 0, "A")), Ordering::Less);
        assert_eq!(ts_compare(&ts(10, 1, "A"), &ts(10, 0, "A")), Ordering::Greater);
    }

    #[test]
    fn causal_context_compacts() {
        let mut cc = CausalContext::new();
        cc.insert(Dot::new("A", 2));
        assert!(cc.contains(&Dot::new("A", 2)));
        assert!(!cc.contains(&Dot::new("A", 1)));
        assert_eq!(cc.cloud().len(), 1);
        cc.insert(Dot::new("A", 1));
        assert!(cc.cloud().is_empty());
        assert_eq!(cc.prefix(), &vv(&[("A", 2)]));
        assert_eq!(cc.next_dot(&"A".into()), Dot::new("A", 3));
    }

    #[test]
    fn causal_context_next_dot_skips_cloud() {
        let cc = CausalContext::from_dots(&[Dot::new("A", 5)]);
        assert_eq!(cc.next_dot(&"A".into()), Dot::new("A", 6));
        assert_eq!(cc.next_dot(&"B".into()), Dot::new("B", 1));
    }

    #[test]
    fn causal_context_leq_is_inclusion() {
        let gap = CausalContext::from_dots(&[Dot::new("A", 1), Dot::new("A", 3)]);
        let full = CausalContext::from(vv(&[("A", 3)]));
        assert!(gap.leq(&full));
        assert!(!full.leq(&gap));
        let prefix_via_cloud = CausalContext::from(vv(&[("A", 1)])).join(&CausalContext::from_dots(&[Dot::new("A", 3)]));
        assert_eq!(prefix_via_cloud, gap);
        assert!(CausalContext::from(vv(&[("A", 1)])).leq(&gap));
    }
}
