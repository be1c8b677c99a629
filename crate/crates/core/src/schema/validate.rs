use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{NodeId, Schema, Value};

/// The canons a schema is checked against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Canon {
    /// Exactly one root; every node reachable from it.
    K1,
    /// Non-root nodes carry differentiae; the root carries none.
    K2,
    /// Root-path constraints assign at most one value per property.
    K3,
    /// Siblings are separated by a shared property with different values.
    K4,
    /// Each (label, language) names at most one node.
    K5,
    /// Concept ids are unique.
    K6,
    /// A gloss mentions its node's genus and differentia phrases.
    K7,
    /// A node has a lexical binding.
    K8,
}

impl fmt::Display for Canon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "ids")]
pub enum Locus {
    Schema,
    Node(NodeId),
    Nodes(Vec<NodeId>),
}

impl Locus {
    /// The first node the locus points at.
    pub fn primary_node(&self) -> Option<&str> {
        match self {
            Locus::Schema => None,
            Locus::Node(n) => Some(n),
            Locus::Nodes(ns) => ns.first().map(String::as_str),
        }
    }
}

impl fmt::Display for Locus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Locus::Schema => f.write_str("schema"),
            Locus::Node(n) => write!(f, "node {n}"),
            Locus::Nodes(ns) => write!(f, "nodes {{{}}}", ns.join(", ")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub canon: Canon,
    pub severity: Severity,
    pub locus: Locus,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn errors(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.severity == Severity::Warning)
    }

    pub fn has_errors(&self) -> bool {
        self.errors().next().is_some()
    }

    pub fn summary(&self) -> String {
        format!("{} errors, {} warnings", self.errors().count(), self.warnings().count())
    }
}

impl Schema {
    /// Runs every canon and returns all findings, ordered by canon then locus.
    pub fn validate(&self) -> ValidationReport {
        let mut out = vec![];
        let mut push = |canon, severity, locus, message: String| {
            out.push(Finding {
                canon,
                severity,
                locus,
                message,
            })
        };

        // K1
        let roots: Vec<NodeId> = self.roots().map(|n| n.id.clone()).collect();
        match roots.len() {
            0 => push(Canon::K1, Severity::Error, Locus::Schema, "schema has no root".into()),
            1 => {}
            _ => push(
                Canon::K1,
                Severity::Error,
                Locus::Nodes(roots.clone()),
                format!("schema has {} roots; exactly one is required", roots.len()),
            ),
        }
        let unreachable: Vec<NodeId> = self
            .nodes()
            .filter(|n| self.root_path(&n.id).is_none())
            .map(|n| n.id.clone())
            .collect();
        if !unreachable.is_empty() {
            push(
                Canon::K1,
                Severity::Error,
                Locus::Nodes(unreachable),
                "nodes form a cycle and are not reachable from a root".into(),
            );
        }

        let reachable: Vec<_> = self.nodes().filter(|n| self.root_path(&n.id).is_some()).collect();

        // K2
        for n in &reachable {
            match (&n.parent, n.differentiae.is_empty()) {
                (Some(_), true) => push(
                    Canon::K2,
                    Severity::Error,
                    Locus::Node(n.id.clone()),
                    "non-root node has no differentia".into(),
                ),
                (None, false) => push(
                    Canon::K2,
                    Severity::Error,
                    Locus::Node(n.id.clone()),
                    "root node must not carry differentiae".into(),
                ),
                _ => {}
            }
        }

        // K3: reported at the node that introduces the conflict
        for n in &reachable {
            let mut inherited: BTreeMap<&str, &Value> = BTreeMap::new();
            if let Some(p) = &n.parent {
                for anc in self.root_path(p).unwrap_or_default() {
                    for c in &self.node(&anc).expect("path node").differentiae {
                        inherited.entry(c.property.as_str()).or_insert(&c.value);
                    }
                }
            }
            let mut conflicts = BTreeSet::new();
            for c in &n.differentiae {
                match inherited.get(c.property.as_str()) {
                    Some(v) if **v != c.value => {
                        conflicts.insert(c.property.clone());
                    }
                    Some(_) => {}
                    None => {
                        inherited.insert(c.property.as_str(), &c.value);
                    }
                }
            }
            if !conflicts.is_empty() {
                push(
                    Canon::K3,
                    Severity::Error,
                    Locus::Node(n.id.clone()),
                    format!(
                        "root path assigns more than one value to {}",
                        conflicts.into_iter().collect::<Vec<_>>().join(", ")
                    ),
                );
            }
        }

        // K4
        for parent in &reachable {
            let kids: Vec<_> = self.children(&parent.id).collect();
            for (i, a) in kids.iter().enumerate() {
                for b in &kids[i + 1..] {
                    let separated = a.differentiae.iter().any(|ca| {
                        b.differentiae
                            .iter()
                            .any(|cb| ca.property == cb.property && ca.value != cb.value)
                    });
                    if !separated {
                        push(
                            Canon::K4,
                            Severity::Error,
                            Locus::Nodes(vec![a.id.clone(), b.id.clone()]),
                            format!(
                                "siblings `{}` and `{}` share no property constrained to different values",
                                a.id, b.id
                            ),
                        );
                    }
                }
            }
        }

        // K5
        let mut by_label: BTreeMap<(String, String), Vec<NodeId>> = BTreeMap::new();
        for n in self.nodes() {
            let key = match &n.binding {
                Some(b) => (b.lemma.trim().to_lowercase(), b.language.clone()),
                None => match self.synthesize_label(&n.id, &self.context().language) {
                    Ok(l) => (l.to_lowercase(), self.context().language.clone()),
                    Err(_) => continue,
                },
            };
            by_label.entry(key).or_default().push(n.id.clone());
        }
        for ((lemma, lang), ids) in by_label {
            if ids.len() > 1 {
                push(
                    Canon::K5,
                    Severity::Error,
                    Locus::Nodes(ids),
                    format!("label \"{lemma}\"@{lang} names more than one node"),
                );
            }
        }

        // K6
        let mut by_id: BTreeMap<u64, Vec<NodeId>> = BTreeMap::new();
        for n in self.nodes() {
            if let Some(c) = n.concept_id {
                by_id.entry(c.get()).or_default().push(n.id.clone());
            }
        }
        for (cid, ids) in by_id {
            if ids.len() > 1 {
                push(
                    Canon::K6,
                    Severity::Error,
                    Locus::Nodes(ids),
                    format!("concept id {cid} is assigned to more than one node"),
                );
            }
        }

        // K7
        for n in &reachable {
            if n.binding.is_none() {
                continue;
            }
            if let Ok(report) = self.check_gloss_alignment(&n.id) {
                if !report.is_aligned() {
                    let missing: Vec<_> = report.missing.iter().map(|m| format!("\"{}\"", m.phrase)).collect();
                    push(
                        Canon::K7,
                        Severity::Warning,
                        Locus::Node(n.id.clone()),
                        format!("gloss does not mention {}", missing.join(", ")),
                    );
                }
            }
        }

        // K8
        for n in self.nodes() {
            if n.binding.is_none() {
                let synth = self
                    .synthesize_label(&n.id, &self.context().language)
                    .unwrap_or_default();
                push(
                    Canon::K8,
                    Severity::Warning,
                    Locus::Node(n.id.clone()),
                    format!("lexical gap; label will be synthesized as \"{synth}\""),
                );
            }
        }

        out.sort_by(|a, b| (a.canon, &a.locus).cmp(&(b.canon, &b.locus)));
        ValidationReport { findings: out }
    }
}
