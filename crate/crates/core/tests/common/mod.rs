//! Oracles, generators and checks shared by the integration tests and the
//! acceptance runner. Each `check_*` returns a short summary on success and a
//! description of the first counterexample on failure.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::PathBuf;
use std::sync::Arc;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use vtelos_core::agreement::{self, LabeledItemMatrix, MatchPolicy};
use vtelos_core::dsl::{
    self, ConstraintDecl, DomainDecl, Header, LabelDecl, Literal, NodeDecl, PropertyDecl, SchemaDocument, SourceSpan,
    ValueDecl,
};
use vtelos_core::engine::{AnnotationRecord, BBox, EngineError, FixedClock, ImageRef, Session, SessionConfig};
use vtelos_core::fixtures;
use vtelos_core::persist::{self, ExportFormat, PersistError, RecordFilter, RecordStore};
use vtelos_core::schema::{
    Canon, ContextProfile, DifferentiaConstraint, Domain, LexicalBinding, PropertyAssertionSet, PropertyDef,
    ResolutionStatus, Schema, Severity, Value,
};
use vtelos_core::service::{Api, ApiRequest};
use vtelos_core::simulation::{self, ExperimentConfig, GroundTruthItem};

pub fn data(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(rel)
}

/// Non-comment, non-empty lines split on tabs.
pub fn tsv(rel: &str) -> Vec<Vec<String>> {
    fs::read_to_string(data(rel))
        .unwrap_or_else(|e| panic!("{rel}: {e}"))
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| l.split('\t').map(String::from).collect())
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// canons

pub struct CanonCase {
    pub file: String,
    pub canon: Canon,
    pub severity: Severity,
    pub nodes: Vec<String>,
}

pub fn canon_cases() -> Vec<CanonCase> {
    tsv("canons/expected.tsv")
        .into_iter()
        .map(|row| {
            let canon = match row[1].as_str() {
                "K1" => Canon::K1,
                "K2" => Canon::K2,
                "K3" => Canon::K3,
                "K4" => Canon::K4,
                "K5" => Canon::K5,
                "K6" => Canon::K6,
                "K7" => Canon::K7,
                "K8" => Canon::K8,
                other => panic!("unknown canon {other}"),
            };
            let severity = if row[2] == "error" {
                Severity::Error
            } else {
                Severity::Warning
            };
            CanonCase {
                file: row[0].clone(),
                canon,
                severity,
                nodes: row[3].split(',').map(String::from).collect(),
            }
        })
        .collect()
}

pub fn check_music_clean() -> Result<String, String> {
    let lowered = dsl::load_draft(fixtures::MUSIC_VTS).map_err(|d| format!("{d:?}"))?;
    let report = lowered.schema.validate();
    if !report.findings.is_empty() {
        return Err(format!("MUSIC has findings: {:?}", report.findings));
    }
    lowered.schema.freeze().map_err(|e| e.to_string())?;
    Ok(report.summary())
}

pub fn check_canon_case(case: &CanonCase) -> Result<(), String> {
    let path = data(&format!("canons/{}.vts", case.file));
    let text = fs::read_to_string(&path).map_err(|e| e.to_string())?;
    let lowered = dsl::load_draft(&text).map_err(|d| format!("{}: does not lower: {d:?}", case.file))?;
    let report = lowered.schema.validate();
    if report.findings.len() != 1 {
        return Err(format!(
            "{}: expected one finding, got {:?}",
            case.file, report.findings
        ));
    }
    let f = &report.findings[0];
    let mut nodes: Vec<String> = match &f.locus {
        vtelos_core::schema::Locus::Schema => vec![],
        vtelos_core::schema::Locus::Node(n) => vec![n.clone()],
        vtelos_core::schema::Locus::Nodes(ns) => ns.clone(),
    };
    nodes.sort();
    if f.canon != case.canon || f.severity != case.severity || nodes != case.nodes {
        return Err(format!(
            "{}: expected {} {} at {:?}, got {} {} at {:?}",
            case.file, case.canon, case.severity, case.nodes, f.canon, f.severity, nodes
        ));
    }
    let span = lowered.spans.locate(&f.locus);
    let declared = format!("node {}", nodes[0]);
    if !text[span.start..].starts_with(&declared) {
        return Err(format!("{}: finding span does not point at `{declared}`", case.file));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// resolution oracle

pub struct ResolutionCase {
    pub assertions: PropertyAssertionSet,
    pub path: Vec<String>,
    pub status: ResolutionStatus,
    pub frontier: Vec<String>,
}

pub fn resolution_cases() -> Vec<ResolutionCase> {
    tsv("music_resolution.tsv")
        .into_iter()
        .map(|row| {
            let mut a = PropertyAssertionSet::new();
            if row[0] != "-" {
                a.assert("sound_production", Value::symbol(row[0].clone()));
            }
            if row[1] != "-" {
                a.assert("taut_string_count", Value::Int(row[1].parse().unwrap()));
            }
            ResolutionCase {
                assertions: a,
                path: row[2].split('/').map(String::from).collect(),
                status: if row[3] == "leaf" {
                    ResolutionStatus::Leaf
                } else {
                    ResolutionStatus::Partial
                },
                frontier: if row[4] == "-" {
                    vec![]
                } else {
                    row[4].split(',').map(String::from).collect()
                },
            }
        })
        .collect()
}

pub fn check_resolution_oracle() -> Result<String, String> {
    let schema = fixtures::music_frozen();
    let cases = resolution_cases();
    let mut exact = 0;
    for c in &cases {
        let r = schema.resolve(&c.assertions).map_err(|e| e.to_string())?;
        let frontier: Vec<String> = r.unsatisfied_frontier.iter().map(|f| f.child.clone()).collect();
        if r.path != c.path || r.status != c.status || frontier != c.frontier {
            return Err(format!(
                "{:?}: expected {:?} {} {:?}, got {:?} {} {:?}",
                c.assertions, c.path, c.status, c.frontier, r.path, r.status, frontier
            ));
        }
        exact += 1;
    }
    if cases.len() != 12 {
        return Err(format!("oracle table has {} rows, expected 12", cases.len()));
    }
    Ok(format!("{exact}/12 exact"))
}

// ---------------------------------------------------------------------------
// random schemas

fn random_domain(rng: &mut impl Rng) -> Domain {
    match rng.random_range(0..3) {
        0 => Domain::enumeration((0..rng.random_range(2..=5)).map(|i| format!("v{i}"))),
        1 => {
            let min = rng.random_range(-3..=3);
            Domain::Integer {
                min,
                max: min + rng.random_range(1..=9),
            }
        }
        _ => Domain::Boolean,
    }
}

/// A frozen schema of at most six levels and five children per node whose
/// children split on a property not yet used on their path.
pub fn random_schema(rng: &mut impl Rng) -> Schema {
    let ctx = ContextProfile::new("random", "property tests", "eng");
    let mut s = Schema::new("random", ctx, rng.random_range(1..1_000_000)).unwrap();
    let nprops = 8;
    for i in 0..nprops {
        let mut def = PropertyDef::new(format!("p{i}"), random_domain(rng));
        if rng.random_bool(0.5) {
            if let Some(v) = def.domain.nth(0) {
                def = def.with_phrase(v, format!("phrase {i} zero"));
            }
        }
        s.add_property(def).unwrap();
    }
    s.add_root("n0", Some(LexicalBinding::new("node n0", "eng", "anything at all")))
        .unwrap();
    let mut count = 1usize;
    grow(&mut s, rng, "n0", 0, &mut count);
    s.freeze()
        .unwrap_or_else(|e| panic!("generated schema does not freeze: {e}"))
}

fn grow(s: &mut Schema, rng: &mut impl Rng, id: &str, depth: usize, count: &mut usize) {
    if depth >= 5 || *count >= 120 || !rng.random_bool(if depth == 0 { 0.95 } else { 0.55 }) {
        return;
    }
    let used: BTreeSet<String> = s.cumulative_constraints(id).into_iter().map(|c| c.property).collect();
    let free: Vec<String> = s
        .properties()
        .filter(|p| !used.contains(&p.id) && p.domain.size() >= 2)
        .map(|p| p.id.clone())
        .collect();
    let Some(split) = free.choose(rng).cloned() else {
        return;
    };
    let domain = s.property(&split).unwrap().domain.clone();
    let k = rng.random_range(1..=domain.size().min(5) as usize);
    let mut picks: Vec<u64> = (0..domain.size()).collect();
    picks.shuffle(rng);
    let extra = free.iter().filter(|p| **p != split).cloned().collect::<Vec<_>>();
    let extra = extra.choose(rng).cloned();
    let mut kids = vec![];
    for &vi in &picks[..k] {
        let child = format!("n{}", *count);
        *count += 1;
        let mut diffs = vec![DifferentiaConstraint::new(split.clone(), domain.nth(vi).unwrap())];
        if let Some(q) = &extra {
            if rng.random_bool(0.3) {
                let qd = &s.property(q).unwrap().domain;
                diffs.push(DifferentiaConstraint::new(
                    q.clone(),
                    qd.nth(rng.random_range(0..qd.size())).unwrap(),
                ));
            }
        }
        let mut path = s.cumulative_constraints(id);
        path.extend(diffs.iter().cloned());
        let gloss: Vec<String> = path
            .iter()
            .map(|c| s.property(&c.property).unwrap().phrase(&c.value))
            .collect();
        let binding = rng
            .random_bool(0.85)
            .then(|| LexicalBinding::new(format!("node {child}"), "eng", gloss.join(", ")));
        s.add_node(id, child.clone(), diffs, binding).unwrap();
        kids.push(child);
    }
    for c in kids {
        grow(s, rng, &c, depth + 1, count);
    }
}

/// Evidence aimed at a random node: most of its path constraints plus a
/// few unrelated values.
pub fn random_assertions(s: &Schema, rng: &mut impl Rng) -> PropertyAssertionSet {
    let nodes: Vec<String> = s.nodes().map(|n| n.id.clone()).collect();
    let target = nodes.choose(rng).unwrap();
    let mut a = PropertyAssertionSet::new();
    for c in s.cumulative_constraints(target) {
        if rng.random_bool(0.8) {
            a.assert(c.property, c.value);
        }
    }
    for p in s.properties() {
        if a.get(&p.id).is_none() && rng.random_bool(0.2) {
            a.assert(
                p.id.clone(),
                p.domain.nth(rng.random_range(0..p.domain.size())).unwrap(),
            );
        }
    }
    a
}

/// Descent uniqueness, determinism, assertion-order independence and prefix
/// monotonicity for `trials` random evidence sets.
pub fn check_resolution_properties(s: &Arc<Schema>, rng: &mut impl Rng, trials: usize) -> Result<(), String> {
    let depth = s.nodes().filter_map(|n| s.depth(&n.id)).max().unwrap_or(0);
    if depth > 5 || s.nodes().any(|n| s.children(&n.id).count() > 5) {
        return Err("generator exceeded six levels or five children".into());
    }
    for _ in 0..trials {
        let b = random_assertions(s, rng);
        let r = s.resolve(&b).map_err(|e| e.to_string())?;

        // uniqueness: at most one qualifying child anywhere, and the path
        // follows it
        for n in s.nodes() {
            if s.qualifying_children(&n.id, &b).count() > 1 {
                return Err(format!("two children of {} qualify for {b:?}", n.id));
            }
        }
        for w in r.path.windows(2) {
            let q: Vec<_> = s.qualifying_children(&w[0], &b).map(|c| c.id.clone()).collect();
            if q != [w[1].clone()] {
                return Err(format!(
                    "path step {} -> {} is not the unique qualifying child",
                    w[0], w[1]
                ));
            }
        }
        if s.qualifying_children(&r.terminal, &b).next().is_some() {
            return Err(format!("descent stopped early at {}", r.terminal));
        }

        if s.resolve(&b).map_err(|e| e.to_string())? != r {
            return Err(format!("resolve is not deterministic for {b:?}"));
        }

        let mut pairs: Vec<(String, Value)> = b.iter().map(|(p, v)| (p.clone(), v.clone())).collect();
        pairs.shuffle(rng);
        let mut sess = Session::open_with(
            Arc::clone(s),
            SessionConfig::classifier("p", "a", vec![ImageRef::new("i")]),
            Arc::new(FixedClock(0)),
        )
        .map_err(|e| e.to_string())?;
        let region = sess.localize("i", BBox::new(0, 0, 1, 1)).map_err(|e| e.to_string())?;
        for (p, v) in &pairs {
            sess.assert_property(&region, p, v.clone()).map_err(|e| e.to_string())?;
        }
        if sess.region(&region).unwrap().resolution != r {
            return Err(format!("assertion order {pairs:?} changed the resolution"));
        }

        let a: PropertyAssertionSet = b
            .iter()
            .filter(|_| rng.random_bool(0.5))
            .map(|(p, v)| (p.clone(), v.clone()))
            .collect();
        let ra = s.resolve(&a).map_err(|e| e.to_string())?;
        if !r.path.starts_with(&ra.path) {
            return Err(format!(
                "{:?} is not a prefix of {:?} although {a:?} is a subset of {b:?}",
                ra.path, r.path
            ));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// random documents

fn ident(rng: &mut impl Rng, prefix: &str) -> String {
    const TAIL: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_";
    let len = rng.random_range(0..8);
    let tail: String = (0..len)
        .map(|_| TAIL[rng.random_range(0..TAIL.len())] as char)
        .collect();
    format!("{prefix}{tail}")
}

fn text(rng: &mut impl Rng) -> String {
    const PIECES: &[&str] = &[
        "a", "b", " ", "word", "\"", "\\", "\n", "\t", "\r", "é", "日本", "\u{1}", "#", "{", "}", ";", "..", "=",
        "node", "\u{7f}", "🎻",
    ];
    (0..rng.random_range(0..10))
        .map(|_| *PIECES.choose(rng).unwrap())
        .collect()
}

fn literal(rng: &mut impl Rng) -> Literal {
    if rng.random_bool(0.5) {
        Literal::Int(rng.random_range(-1000..1000))
    } else {
        Literal::Ident(ident(rng, "v"))
    }
}

/// A syntactically valid document. It need not lower to a valid schema.
pub fn random_document(rng: &mut impl Rng) -> SchemaDocument {
    let header = Header {
        id: ident(rng, "s"),
        context: text(rng),
        purpose: rng.random_bool(0.5).then(|| text(rng)),
        language: text(rng),
        registry: rng.random_bool(0.7).then(|| rng.random_range(1..1_000_000_000_000u64)),
        span: SourceSpan::default(),
    };
    let mut prop_ids = BTreeSet::new();
    let mut properties = vec![];
    for _ in 0..rng.random_range(0..4) {
        let id = ident(rng, "p");
        if !prop_ids.insert(id.clone()) {
            continue;
        }
        let domain = match rng.random_range(0..3) {
            0 => DomainDecl::Enum,
            1 => {
                let min = rng.random_range(-50..50);
                DomainDecl::Integer {
                    min,
                    max: min + rng.random_range(0..100),
                }
            }
            _ => DomainDecl::Boolean,
        };
        let mut seen = BTreeSet::new();
        let mut values = vec![];
        for _ in 0..rng.random_range(0..5) {
            let value = match domain {
                DomainDecl::Enum => Literal::Ident(ident(rng, "v")),
                _ => literal(rng),
            };
            if seen.insert(value.clone()) {
                values.push(ValueDecl {
                    value,
                    phrase: rng.random_bool(0.7).then(|| text(rng)),
                    span: SourceSpan::default(),
                });
            }
        }
        properties.push(PropertyDecl {
            id,
            domain,
            values,
            span: SourceSpan::default(),
        });
    }
    let props: Vec<String> = prop_ids.into_iter().collect();
    let mut counter = 0;
    let nodes = (0..rng.random_range(0..3))
        .map(|_| random_node(rng, &props, 0, &mut counter))
        .collect();
    SchemaDocument {
        header,
        properties,
        nodes,
    }
}

fn random_node(rng: &mut impl Rng, props: &[String], depth: usize, counter: &mut usize) -> NodeDecl {
    *counter += 1;
    let mut n = NodeDecl::new(format!("{}_{}", ident(rng, "n"), counter));
    if !props.is_empty() {
        for _ in 0..rng.random_range(0..3) {
            n.differentiae.push(ConstraintDecl {
                property: props.choose(rng).unwrap().clone(),
                value: literal(rng),
                span: SourceSpan::default(),
            });
        }
    }
    n.concept_id = rng.random_bool(0.3).then(|| rng.random_range(1..1_000_000_000));
    if rng.random_bool(0.7) {
        n.label = Some(LabelDecl {
            lemma: text(rng),
            language: rng.random_bool(0.3).then(|| text(rng)),
            span: SourceSpan::default(),
        });
    }
    n.synonyms = (0..rng.random_range(0..3)).map(|_| text(rng)).collect();
    n.gloss = rng.random_bool(0.7).then(|| text(rng));
    if depth < 3 {
        n.children = (0..rng.random_range(0..3))
            .map(|_| random_node(rng, props, depth + 1, counter))
            .collect();
    }
    n
}

pub fn check_round_trip(doc: &SchemaDocument) -> Result<(), String> {
    let s1 = dsl::serialize(doc);
    let parsed = dsl::parse(&s1).map_err(|d| format!("serialized text does not parse: {d:?}\n{s1}"))?;
    if parsed != doc.clone().canonicalized() {
        return Err(format!("parse(serialize(doc)) differs from doc\n{s1}"));
    }
    let s2 = dsl::serialize(&parsed);
    if s1 != s2 {
        return Err(format!("serialize is not a fixpoint:\n{s1}\n---\n{s2}"));
    }
    Ok(())
}

/// Damages `text` with a few random edits.
pub fn mutate(text: &str, rng: &mut impl Rng) -> String {
    const NOISE: &[&str] = &[
        "{", "}", ";", "\"", "[", "]", "=", ",", "..", "node", "-", "9", "é", "\\", "#", "\n",
    ];
    let mut chars: Vec<char> = text.chars().collect();
    for _ in 0..rng.random_range(1..4) {
        let at = rng.random_range(0..=chars.len());
        match rng.random_range(0..3) {
            0 if at < chars.len() => {
                chars.remove(at);
            }
            1 => {
                for (i, c) in NOISE.choose(rng).unwrap().chars().enumerate() {
                    chars.insert(at + i, c);
                }
            }
            _ => chars.truncate(at),
        }
    }
    chars.into_iter().collect()
}

/// Every diagnostic's span lies inside the text, on character boundaries,
/// with a line and column that match its start offset.
pub fn check_spans(text: &str) -> Result<usize, String> {
    let diags = match dsl::parse(text) {
        Ok(_) => return Ok(0),
        Err(d) => d,
    };
    for d in &diags {
        let s = d.span;
        if s.start > s.end || s.end > text.len() || !text.is_char_boundary(s.start) || !text.is_char_boundary(s.end) {
            return Err(format!(
                "span {}..{} out of bounds for {} bytes: {d}",
                s.start,
                s.end,
                text.len()
            ));
        }
        let before = &text[..s.start];
        let line = before.matches('\n').count() as u32 + 1;
        let col = before.rsplit('\n').next().unwrap().chars().count() as u32 + 1;
        if (line, col) != (s.line, s.column) {
            return Err(format!(
                "span at byte {} claims {}:{}, actual {line}:{col}",
                s.start, s.line, s.column
            ));
        }
    }
    Ok(diags.len())
}

// ---------------------------------------------------------------------------
// exact arithmetic for agreement oracles

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Frac(pub i128, pub i128);

fn gcd(a: i128, b: i128) -> i128 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

impl Frac {
    pub fn new(n: i128, d: i128) -> Frac {
        let g = gcd(n, d).max(1) * d.signum();
        Frac(n / g, d / g)
    }
    pub fn add(self, o: Frac) -> Frac {
        Frac::new(self.0 * o.1 + o.0 * self.1, self.1 * o.1)
    }
    pub fn sub(self, o: Frac) -> Frac {
        self.add(Frac(-o.0, o.1))
    }
    pub fn mul(self, o: Frac) -> Frac {
        Frac::new(self.0 * o.0, self.1 * o.1)
    }
    pub fn div(self, o: Frac) -> Frac {
        Frac::new(self.0 * o.1, self.1 * o.0)
    }
    pub fn to_f64(self) -> f64 {
        self.0 as f64 / self.1 as f64
    }
}

/// Fleiss' κ by the textbook formula in exact arithmetic:
/// P_i = (Σ_j n_ij² − n) / (n(n − 1)), P̄ = mean P_i,
/// p_j = Σ_i n_ij / (N n), P_e = Σ_j p_j², κ = (P̄ − P_e) / (1 − P_e).
pub fn fleiss_oracle(rows: &[Vec<String>]) -> Frac {
    let n = rows[0].len() as i128;
    let big_n = rows.len() as i128;
    let mut totals: BTreeMap<&str, i128> = BTreeMap::new();
    let mut p_bar = Frac(0, 1);
    for row in rows {
        let mut counts: BTreeMap<&str, i128> = BTreeMap::new();
        for c in row {
            *counts.entry(c).or_default() += 1;
            *totals.entry(c).or_default() += 1;
        }
        let sq: i128 = counts.values().map(|v| v * v).sum();
        p_bar = p_bar.add(Frac::new(sq - n, n * (n - 1)));
    }
    p_bar = p_bar.div(Frac(big_n, 1));
    let p_e = totals
        .values()
        .fold(Frac(0, 1), |acc, &t| acc.add(Frac::new(t * t, big_n * n * big_n * n)));
    p_bar.sub(p_e).div(Frac(1, 1).sub(p_e))
}

/// Cohen's κ from a contingency table given as (rater 1, rater 2, count).
pub fn cohen_oracle(table: &[(String, String, i128)]) -> Frac {
    let total: i128 = table.iter().map(|t| t.2).sum();
    let agree: i128 = table.iter().filter(|t| t.0 == t.1).map(|t| t.2).sum();
    let mut m1: BTreeMap<&str, i128> = BTreeMap::new();
    let mut m2: BTreeMap<&str, i128> = BTreeMap::new();
    for (a, b, n) in table {
        *m1.entry(a).or_default() += n;
        *m2.entry(b).or_default() += n;
    }
    let p_o = Frac::new(agree, total);
    let p_e = m1.iter().fold(Frac(0, 1), |acc, (c, a)| {
        acc.add(Frac::new(a * m2.get(c).copied().unwrap_or(0), total * total))
    });
    p_o.sub(p_e).div(Frac(1, 1).sub(p_e))
}

pub fn fleiss_table() -> Vec<Vec<String>> {
    tsv("fleiss_3x6.tsv")
}

pub fn cohen_table() -> Vec<(String, String, i128)> {
    tsv("cohen_2x2.tsv")
        .into_iter()
        .map(|r| (r[0].clone(), r[1].clone(), r[2].parse().unwrap()))
        .collect()
}

pub fn matrix_from_rows(rows: &[Vec<String>]) -> LabeledItemMatrix {
    let raters = rows[0].len();
    let cells: Vec<Vec<Option<&str>>> = rows
        .iter()
        .map(|r| r.iter().map(|c| Some(c.as_str())).collect())
        .collect();
    LabeledItemMatrix::from_rows(
        (0..raters).map(|i| format!("r{i}")).collect(),
        (0..rows.len())
            .map(|i| agreement::ItemKey::image(format!("item{i}")))
            .collect(),
        &cells,
    )
    .unwrap()
}

pub fn expand_table(table: &[(String, String, i128)]) -> Vec<Vec<String>> {
    table
        .iter()
        .flat_map(|(a, b, n)| (0..*n).map(move |_| vec![a.clone(), b.clone()]))
        .collect()
}

pub fn check_kappa_oracles() -> Result<String, String> {
    let table = cohen_table();
    let oracle = cohen_oracle(&table);
    let m = matrix_from_rows(&expand_table(&table));
    let k = agreement::cohen_kappa(&m, "r0", "r1").map_err(|e| e.to_string())?;
    let got = k.value.ok_or("cohen undefined")?;
    if oracle != Frac(3, 5) || (got - 0.6).abs() > 1e-12 {
        return Err(format!("cohen: oracle {oracle:?}, got {got}"));
    }

    let rows = fleiss_table();
    let oracle = fleiss_oracle(&rows);
    // by hand: P̄ = 2/3, column totals 7/5/6 of 18, P_e = 110/324, κ = 53/107
    if oracle != Frac(53, 107) {
        return Err(format!("fleiss oracle {oracle:?} disagrees with the hand value 53/107"));
    }
    let f = agreement::fleiss_kappa(&matrix_from_rows(&rows)).map_err(|e| e.to_string())?;
    let got = f.kappa.value.ok_or("fleiss undefined")?;
    if (got - oracle.to_f64()).abs() > 1e-12 {
        return Err(format!("fleiss: oracle {}, got {got}", oracle.to_f64()));
    }

    let same: Vec<Vec<String>> = vec![vec!["x".into(), "x".into()]; 8];
    let m = matrix_from_rows(&same);
    let c = agreement::cohen_kappa(&m, "r0", "r1").map_err(|e| e.to_string())?;
    let f = agreement::fleiss_kappa(&m).map_err(|e| e.to_string())?;
    for (name, v) in [("cohen", c.value), ("fleiss", f.kappa.value)] {
        if let Some(v) = v {
            return Err(format!(
                "{name} on degenerate marginals returned {v} instead of undefined"
            ));
        }
    }
    Ok(format!(
        "cohen {:.12}, fleiss {:.12} (53/107), degenerate cases undefined",
        0.6, got
    ))
}

// ---------------------------------------------------------------------------
// simulation

/// Expected two-annotator Cohen κ, with the expected contingency table built
/// by enumerating every corruption outcome of every item's true properties.
pub fn enumerated_kappa(schema: &Schema, truth: &[GroundTruthItem], eps: f64) -> f64 {
    let mut dists: BTreeMap<&PropertyAssertionSet, BTreeMap<String, f64>> = BTreeMap::new();
    for t in truth {
        dists
            .entry(&t.truth)
            .or_insert_with(|| outcome_distribution(schema, &t.truth, eps));
    }
    let n = truth.len() as f64;
    let mut p_o = 0.0;
    let mut marginal: BTreeMap<&str, f64> = BTreeMap::new();
    for t in truth {
        for (c, q) in &dists[&t.truth] {
            p_o += q * q / n;
            *marginal.entry(c).or_default() += q / n;
        }
    }
    let p_e: f64 = marginal.values().map(|m| m * m).sum();
    (p_o - p_e) / (1.0 - p_e)
}

fn outcome_distribution(schema: &Schema, truth: &PropertyAssertionSet, eps: f64) -> BTreeMap<String, f64> {
    let mut outcomes: Vec<(PropertyAssertionSet, f64)> = vec![(PropertyAssertionSet::new(), 1.0)];
    for (p, v) in truth.iter() {
        let d = &schema.property(p).unwrap().domain;
        let others = (d.size() - 1) as f64;
        let mut next = vec![];
        for (set, q) in &outcomes {
            for i in 0..d.size() {
                let u = d.nth(i).unwrap();
                let w = if &u == v { 1.0 - eps } else { eps / others };
                let mut s = set.clone();
                s.assert(p.clone(), u);
                next.push((s, q * w));
            }
        }
        outcomes = next;
    }
    let mut dist = BTreeMap::new();
    for (set, q) in outcomes {
        let node = schema.resolve(&set).unwrap().terminal;
        let cid = schema.node(&node).unwrap().concept_id.unwrap().to_string();
        *dist.entry(cid).or_insert(0.0) += q;
    }
    dist
}

pub fn music() -> Arc<Schema> {
    Arc::new(fixtures::music_frozen())
}

pub fn vtelos_percent(schema: &Arc<Schema>, items: usize, eps: f64, seed: u64) -> f64 {
    let cfg = ExperimentConfig::new("music.vts", items, 2, eps, seed);
    let truth = simulation::ground_truth(schema, items, seed).unwrap();
    let recs: Vec<AnnotationRecord> = simulation::simulate_vtelos(schema, &cfg, &truth)
        .unwrap()
        .into_iter()
        .flatten()
        .collect();
    let m = agreement::build_matrix(&recs, MatchPolicy::default()).unwrap();
    agreement::percent_agreement(&m).unwrap()
}

pub fn check_simulation_echo() -> Result<String, String> {
    let s = music();
    let seed = 42;
    let n = 10_000;

    let clean = vtelos_percent(&s, 2_000, 0.0, seed);
    if clean != 1.0 {
        return Err(format!("eps=0 vTelos percent agreement {clean}, expected exactly 1"));
    }

    let cfg = ExperimentConfig::new("music.vts", n, 2, 0.0, seed);
    let items: Vec<GroundTruthItem> = (0..n)
        .map(|i| GroundTruthItem {
            id: simulation::item_id(i),
            truth: PropertyAssertionSet::new(),
        })
        .collect();
    let pool = simulation::AdHocLabelPool::with_sizes(&vec![2; n]);
    let adhoc = simulation::simulate_adhoc(&cfg, &items, &pool).map_err(|e| e.to_string())?;
    let mc = agreement::percent_agreement(&simulation::adhoc_matrix(&adhoc).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    if (mc - 0.5).abs() > 0.02 {
        return Err(format!("ad-hoc k=2 Monte Carlo agreement {mc}, expected 0.50 +/- 0.02"));
    }

    let mut deltas = vec![];
    for eps in [0.0, 0.05, 0.1] {
        let mut cfg = ExperimentConfig::new("music.vts", n, 2, eps, seed);
        cfg.adhoc_k = vec![2];
        let r = simulation::run_experiment(&s, &cfg).map_err(|e| e.to_string())?;
        let d = r
            .delta
            .as_ref()
            .and_then(|d| d.get("percent_agreement"))
            .and_then(|d| d.absolute)
            .ok_or("no percent delta")?;
        if d <= 0.0 {
            return Err(format!("eps={eps}: vTelos - ad-hoc delta {d} is not positive"));
        }
        deltas.push(format!("{eps}:{d:+.3}"));
    }
    Ok(format!(
        "eps=0 agreement 1.0; ad-hoc k=2 {mc:.4}; deltas {}",
        deltas.join(" ")
    ))
}

// ---------------------------------------------------------------------------
// replay integrity

/// `count` records from simulated annotators with some perception noise,
/// so several different nodes appear.
pub fn simulated_records(count: usize, seed: u64) -> (Arc<Schema>, Vec<AnnotationRecord>) {
    let s = music();
    let items = count / 2;
    let cfg = ExperimentConfig::new("music.vts", items, 2, 0.2, seed);
    let truth = simulation::ground_truth(&s, items, seed).unwrap();
    let recs = simulation::simulate_vtelos(&s, &cfg, &truth)
        .unwrap()
        .into_iter()
        .flatten()
        .collect();
    (s, recs)
}

pub fn check_replay_integrity(total: usize, tampered: usize, seed: u64) -> Result<String, String> {
    let (s, mut recs) = simulated_records(total, seed);
    if recs.len() != total {
        return Err(format!("simulated {} records, wanted {total}", recs.len()));
    }
    persist::export_dataset(&recs, &s, ExportFormat::Csv).map_err(|e| format!("clean export failed: {e}"))?;
    let nodes: Vec<String> = s.nodes().map(|n| n.id.clone()).collect();
    let mut r = rng(seed);
    let mut idx: Vec<usize> = (0..recs.len()).collect();
    idx.shuffle(&mut r);
    let mut expected: Vec<String> = vec![];
    for &i in &idx[..tampered] {
        let rec = &mut recs[i];
        let other = nodes.iter().filter(|n| **n != rec.resolved_node).collect::<Vec<_>>();
        rec.resolved_node = other.choose(&mut r).unwrap().to_string();
        expected.push(rec.record_id.clone());
    }
    expected.sort();
    match persist::export_dataset(&recs, &s, ExportFormat::Csv) {
        Err(PersistError::InconsistentRecord { mut record_ids }) => {
            record_ids.sort();
            if record_ids != expected {
                let caught = record_ids.iter().filter(|id| expected.contains(id)).count();
                return Err(format!(
                    "flagged {} records, {caught} of {tampered} tampered",
                    record_ids.len()
                ));
            }
            Ok(format!(
                "{tampered}/{tampered} tampered records flagged among {total}, no false positives"
            ))
        }
        other => Err(format!("export of tampered records returned {other:?}")),
    }
}

// ---------------------------------------------------------------------------
// workflow enforcement

pub fn check_draft_sessions_refused() -> Result<(), String> {
    match Session::open(Arc::new(fixtures::music_draft()), "s", "a", vec![]) {
        Err(EngineError::SchemaNotFrozen) => {}
        other => return Err(format!("session on a draft: {other:?}")),
    }
    let api = Api::new(Some(Arc::new(fixtures::music_draft())));
    let resp = api.handle(&ApiRequest::post(
        "/sessions",
        json!({"annotator_id": "a", "images": ["i"]}),
    ));
    if resp.status != 503 {
        return Err(format!("server on a draft accepted a session: {}", resp.status));
    }
    Ok(())
}

const LABEL_KEYS: &[&str] = &[
    "label",
    "Label",
    "canonical_label",
    "lemma",
    "gloss",
    "concept_id",
    "resolved_node",
];
const LABEL_VALUES: &[&str] = &["guitar", "koto", "banjo", "wind instrument", "", "1278956"];

/// Sends a mix of well-formed requests and requests that smuggle a label
/// somewhere, then checks that every stored record carries the label and
/// concept id the schema assigns to its node.
pub fn check_label_fuzz(iterations: usize, seed: u64) -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let s = music();
    let store = RecordStore::open(dir.path().join("store.vrec"), [Arc::clone(&s)]);
    let api = Api::new(Some(Arc::clone(&s)))
        .with_store(store.clone())
        .with_clock(Arc::new(FixedClock(0)));
    let mut r = rng(seed);
    let mut regions: Vec<String> = vec![];
    let mut sessions: Vec<String> = vec![];
    let mut smuggled = 0;
    let mut accepted_with_label = 0;
    for i in 0..iterations {
        if sessions.is_empty() || r.random_bool(0.05) {
            let resp = api.handle(&ApiRequest::post(
                "/sessions",
                json!({"annotator_id": format!("ann{}", i % 3), "images": ["a", "b", "c"]}),
            ));
            sessions.push(
                resp.payload()["session_id"]
                    .as_str()
                    .ok_or("no session id")?
                    .to_string(),
            );
        }
        let session = sessions.choose(&mut r).unwrap().clone();
        let region = regions.choose(&mut r).cloned();
        let (path, mut body) = match (r.random_range(0..4), region) {
            (0, _) | (_, None) => (
                format!("/sessions/{session}/regions"),
                json!({"image": (*["a", "b", "c"].choose(&mut r).unwrap()), "bbox": {"x": 0, "y": 0, "width": 5, "height": 5}}),
            ),
            (1, Some(reg)) => (
                format!("/regions/{reg}/assertions"),
                json!({"property": "sound_production", "value": (*["string_vibration", "air_vibration"].choose(&mut r).unwrap())}),
            ),
            (2, Some(reg)) => (
                format!("/regions/{reg}/assertions"),
                json!({"property": "taut_string_count", "value": (*[6, 7, 13].choose(&mut r).unwrap())}),
            ),
            (_, Some(reg)) => (
                format!("/regions/{reg}/finalize"),
                json!({"accept_partial": r.random_bool(0.5)}),
            ),
        };
        let smuggle = r.random_bool(0.5);
        if smuggle {
            smuggled += 1;
            let key = *LABEL_KEYS.choose(&mut r).unwrap();
            let val = json!(*LABEL_VALUES.choose(&mut r).unwrap());
            match r.random_range(0..3) {
                0 => body[key] = val,
                1 if body.get("bbox").is_some() => body["bbox"][key] = val,
                _ => body[key] = json!({ "lemma": val }),
            }
        }
        let resp = api.handle(&ApiRequest::post(&path, body.clone()));
        if smuggle && resp.status == 200 {
            accepted_with_label += 1;
        }
        if let Some(id) = resp.payload()["region_id"].as_str() {
            regions.push(id.to_string());
        }
        // values that are labels rather than property values are refused too
        if r.random_bool(0.05) {
            if let Some(reg) = regions.choose(&mut r) {
                let resp = api.handle(&ApiRequest::post(
                    &format!("/regions/{reg}/assertions"),
                    json!({"property": "sound_production", "value": LABEL_VALUES.choose(&mut r).unwrap()}),
                ));
                if resp.status == 200 {
                    return Err(format!("label-valued assertion accepted: {:?}", resp.json()));
                }
            }
        }
    }
    if accepted_with_label > 0 {
        return Err(format!("{accepted_with_label} requests carrying a label were accepted"));
    }
    let stored = store.load(&RecordFilter::default()).map_err(|e| e.to_string())?;
    for rec in &stored {
        let node = s.node(&rec.resolved_node).ok_or("record names an unknown node")?;
        let label = s.canonical_label(&node.id).map_err(|e| e.to_string())?;
        if rec.label != label || Some(rec.concept_id) != node.concept_id {
            return Err(format!(
                "record {} has label {:?}, schema says {label:?}",
                rec.record_id, rec.label
            ));
        }
    }
    if stored.is_empty() {
        return Err("fuzzing stored no records; the run exercised nothing".into());
    }
    Ok(format!(
        "{smuggled} label-carrying requests rejected; {} stored records all schema-labelled",
        stored.len()
    ))
}
