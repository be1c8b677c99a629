use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::schema::{NodeId, PropertyAssertionSet, PropertyId, Value};

/// Default match threshold. No source fixes a value; 0.8 is a starting point.
pub const DEFAULT_SIMILARITY_THRESHOLD: f64 = 0.8;

/// A substance concept accumulated over encounters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptEntry {
    /// Every assertion set matched to this entry, in arrival order.
    pub sketch: Vec<PropertyAssertionSet>,
    pub encounters: u64,
    pub linked_node: Option<NodeId>,
}

impl ConceptEntry {
    /// Per-property modal value over the sketch. Ties go to the value seen
    /// first.
    pub fn prototype(&self) -> PropertyAssertionSet {
        let mut tallies: BTreeMap<&PropertyId, Vec<(&Value, usize)>> = BTreeMap::new();
        for obs in &self.sketch {
            for (p, v) in obs.iter() {
                let t = tallies.entry(p).or_default();
                match t.iter_mut().find(|(seen, _)| *seen == v) {
                    Some((_, n)) => *n += 1,
                    None => t.push((v, 1)),
                }
            }
        }
        tallies
            .into_iter()
            .map(|(p, t)| {
                let mut best = t[0];
                for &(v, n) in &t[1..] {
                    if n > best.1 {
                        best = (v, n);
                    }
                }
                (p.clone(), best.0.clone())
            })
            .collect()
    }
}

/// Outcome of one [`ConceptMemory::observe`] call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub entry: usize,
    pub created: bool,
    /// Similarity to the matched entry before it absorbed the observation;
    /// 0 for a new entry.
    pub similarity: f64,
}

/// Jaccard ratio over property-value pairs.
pub fn similarity(a: &PropertyAssertionSet, b: &PropertyAssertionSet) -> f64 {
    let pa: BTreeSet<_> = a.iter().collect();
    let pb: BTreeSet<_> = b.iter().collect();
    let union = pa.union(&pb).count();
    if union == 0 {
        return 0.0;
    }
    pa.intersection(&pb).count() as f64 / union as f64
}

/// Cumulative store of concepts. Callers serialize writes; a memory has one
/// writer at a time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptMemory {
    threshold: f64,
    entries: Vec<ConceptEntry>,
}

impl Default for ConceptMemory {
    fn default() -> Self {
        ConceptMemory::new(DEFAULT_SIMILARITY_THRESHOLD)
    }
}

impl ConceptMemory {
    pub fn new(threshold: f64) -> Self {
        ConceptMemory {
            threshold,
            entries: vec![],
        }
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn entries(&self) -> &[ConceptEntry] {
        &self.entries
    }

    /// Matches `assertions` to the most similar entry at or above the
    /// threshold (lowest index on ties) or opens a new one.
    pub fn observe(&mut self, assertions: &PropertyAssertionSet) -> Result<Observation, EngineError> {
        if assertions.is_empty() {
            return Err(EngineError::EmptyAssertions);
        }
        let mut best: Option<(usize, f64)> = None;
        for (i, e) in self.entries.iter().enumerate() {
            let s = similarity(&e.prototype(), assertions);
            if s >= self.threshold && best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
        let (entry, created, similarity) = match best {
            Some((i, s)) => (i, false, s),
            None => {
                self.entries.push(ConceptEntry {
                    sketch: vec![],
                    encounters: 0,
                    linked_node: None,
                });
                (self.entries.len() - 1, true, 0.0)
            }
        };
        let e = &mut self.entries[entry];
        e.sketch.push(assertions.clone());
        e.encounters += 1;
        Ok(Observation {
            entry,
            created,
            similarity,
        })
    }

    /// Records the schema node an entry resolved to. Returns false for an
    /// unknown index.
    pub fn link(&mut self, entry: usize, node: impl Into<NodeId>) -> bool {
        match self.entries.get_mut(entry) {
            Some(e) => {
                e.linked_node = Some(node.into());
                true
            }
            None => false,
        }
    }
}
