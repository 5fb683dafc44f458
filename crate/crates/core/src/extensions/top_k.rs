use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::causality::{Dot, ReplicaId, VersionVector};
use crate::value::Value;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TopKEntry {
    pub elem: Value,
    pub score: i64,
    pub dot: Dot,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TopKMessage {
    AddEntry { entry: TopKEntry, context: VersionVector },
    Removal { elem: Value, covered: VersionVector, context: VersionVector },
    /// The replicated part of a replica's state: its known top, every
    /// removal it knows of, and its add-dot context.
    Sync {
        known: Vec<TopKEntry>,
        removals: BTreeMap<Value, VersionVector>,
        context: VersionVector,
    },
}

impl TopKMessage {
    /// Add-dots whose entries this message carries.
    pub fn carried_dots(&self) -> Vec<&Dot> {
        match self {
            TopKMessage::AddEntry { entry, .. } => vec![&entry.dot],
            TopKMessage::Removal { .. } => Vec::new(),
            TopKMessage::Sync { known, .. } => known.iter().map(|e| &e.dot).collect(),
        }
    }
}

/// Top-K set under non-uniform replication.
///
/// Replicas keep the top `k` elements they know of plus the adds they issued
/// themselves; a local add that does not make the local top is never sent.
/// A remove covers every add-dot in the remover's context, which includes
/// dots it never stored, so it also deletes non-top adds elsewhere that
/// happened before it. When a top element goes away, the best local add
/// takes its place and travels with the next sync.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopKSet {
    k: usize,
    local: BTreeSet<TopKEntry>,
    known: BTreeMap<Value, (i64, Dot)>,
    removals: BTreeMap<Value, VersionVector>,
    context: VersionVector,
}

impl TopKSet {
    pub fn new(k: usize) -> Self {
        assert!(k > 0, "k must be positive");
        TopKSet {
            k,
            local: BTreeSet::new(),
            known: BTreeMap::new(),
            removals: BTreeMap::new(),
            context: VersionVector::new(),
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn next_dot(&self, replica: &ReplicaId) -> Dot {
        self.context.next_dot(replica)
    }

    pub fn context(&self) -> &VersionVector {
        &self.context
    }

    fn removed(&self, elem: &Value, dot: &Dot) -> bool {
        self.removals.get(elem).is_some_and(|vv| vv.contains(dot))
    }

    /// Records a local add; returns the broadcast if it made the local top.
    pub fn add(&mut self, elem: Value, score: i64, dot: Dot) -> Option<TopKMessage> {
        self.context.observe(&dot);
        let entry = TopKEntry { elem, score, dot };
        self.local.insert(entry.clone());
        self.refresh(std::iter::empty());
        self.is_known(&entry).then(|| TopKMessage::AddEntry {
            entry,
            context: self.context.clone(),
        })
    }

    /// Removes every add of `elem` this replica's context covers.
    pub fn rmv(&mut self, elem: &Value) -> TopKMessage {
        self.removals.entry(elem.clone()).or_default().join_assign(&self.context);
        self.refresh(std::iter::empty());
        TopKMessage::Removal {
            elem: elem.clone(),
            covered: self.removals[elem].clone(),
            context: self.context.clone(),
        }
    }

    pub fn sync_message(&self) -> TopKMessage {
        TopKMessage::Sync {
            known: self.known_entries().collect(),
            removals: self.removals.clone(),
            context: self.context.clone(),
        }
    }

    pub fn receive(&mut self, msg: &TopKMessage) {
        match msg {
            TopKMessage::AddEntry { entry, context } => {
                self.context.join_assign(context);
                self.refresh([entry.clone()]);
            }
            TopKMessage::Removal { elem, covered, context } => {
                self.context.join_assign(context);
                self.removals.entry(elem.clone()).or_default().join_assign(covered);
                self.refresh(std::iter::empty());
            }
            TopKMessage::Sync { known, removals, context } => {
                self.context.join_assign(context);
                for (e, vv) in removals {
                    self.removals.entry(e.clone()).or_default().join_assign(vv);
                }
                self.refresh(known.iter().cloned());
            }
        }
    }

    /// Live elements ranked by score, best first, at most `k`.
    pub fn read(&self) -> Vec<Value> {
        self.ranked().into_iter().map(|e| e.elem).collect()
    }

    pub fn known_entries(&self) -> impl Iterator<Item = TopKEntry> + '_ {
        self.known.iter().map(|(elem, (score, dot))| TopKEntry {
            elem: elem.clone(),
            score: *score,
            dot: dot.clone(),
        })
    }

    pub fn is_known(&self, entry: &TopKEntry) -> bool {
        self.known.get(&entry.elem) == Some(&(entry.score, entry.dot.clone()))
    }

    pub fn local_entries(&self) -> impl Iterator<Item = &TopKEntry> {
        self.local.iter()
    }

    fn ranked(&self) -> Vec<TopKEntry> {
        let mut all: Vec<TopKEntry> = self.known_entries().collect();
        all.sort_by(|a, b| (b.score, &b.elem).cmp(&(a.score, &a.elem)));
        all
    }

    fn refresh(&mut self, incoming: impl IntoIterator<Item = TopKEntry>) {
        let removals = &self.removals;
        let live = |e: &TopKEntry| !removals.get(&e.elem).is_some_and(|vv| vv.contains(&e.dot));
        self.local.retain(|e| live(e));
        let mut best: BTreeMap<Value, (i64, Dot)> = BTreeMap::new();
        let known = std::mem::take(&mut self.known).into_iter().map(|(elem, (score, dot))| TopKEntry { elem, score, dot });
        for e in known.chain(incoming).chain(self.local.iter().cloned()) {
            if self.removed(&e.elem, &e.dot) {
                continue;
            }
            let cand = (e.score, e.dot);
            match best.get_mut(&e.elem) {
                Some(slot) if *slot >= cand => {}
                Some(slot) => *slot = cand,
                None => {
                    best.insert(e.elem, cand);
                }
            }
        }
        let mut ranked: Vec<(Value, (i64, Dot))> = best.into_iter().collect();
        ranked.sort_by(|(ea, (sa, _)), (eb, (sb, _))| (sb, eb).cmp(&(sa, ea)));
        ranked.truncate(self.k);
        self.known = ranked.into_iter().collect();
    }
}
