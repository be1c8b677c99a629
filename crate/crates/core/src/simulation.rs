//! Synthetic annotators.
//!
//! Two conditions are simulated over the same items. Ad-hoc annotators pick
//! uniformly among the labels that plausibly fit an item. vTelos annotators
//! perceive each true property value, misperceiving it with probability ε,
//! and let the schema resolve the label. Every random draw comes from a ChaCha
//! stream keyed by (seed, condition, annotator, item), so runs are
//! reproducible and items can be simulated in any order.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agreement::{self, AgreementError, AgreementReport, DeltaReport, ItemKey, LabeledItemMatrix, MatchPolicy};
use crate::engine::{AnnotationRecord, BBox, EngineError, FixedClock, ImageRef, Session, SessionConfig};
use crate::schema::{PropertyAssertionSet, Schema};

/// Box drawn by every simulated annotator; items are whole images.
pub const SIM_BBOX: BBox = BBox {
    x: 0,
    y: 0,
    width: 100,
    height: 100,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulationError {
    #[error("schema is not frozen")]
    SchemaNotFrozen,
    #[error("item `{0}` has no applicable labels")]
    EmptyPool(String),
    #[error("label pool covers {pool} items but {items} were given")]
    PoolSizeMismatch { pool: usize, items: usize },
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error("schema has no leaves")]
    NoLeaves,
    #[error(transparent)]
    Engine(EngineError),
    #[error(transparent)]
    Agreement(#[from] AgreementError),
}

impl From<EngineError> for SimulationError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::SchemaNotFrozen => SimulationError::SchemaNotFrozen,
            e => SimulationError::Engine(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthItem {
    pub id: String,
    pub truth: PropertyAssertionSet,
}

/// Leaves of the schema in preorder.
pub fn leaves(schema: &Schema) -> Vec<String> {
    schema
        .preorder()
        .into_iter()
        .filter(|n| schema.children(&n.id).next().is_none())
        .map(|n| n.id.clone())
        .collect()
}

/// `count` items whose truth is the full differentia path of a leaf chosen
/// uniformly at random.
pub fn ground_truth(schema: &Schema, count: usize, seed: u64) -> Result<Vec<GroundTruthItem>, SimulationError> {
    let leaves = leaves(schema);
    if leaves.is_empty() {
        return Err(SimulationError::NoLeaves);
    }
    Ok((0..count)
        .map(|i| {
            let mut rng = stream(seed, Stream::Truth, 0, i);
            let leaf = &leaves[rng.random_range(0..leaves.len())];
            GroundTruthItem {
                id: item_id(i),
                truth: schema
                    .cumulative_constraints(leaf)
                    .into_iter()
                    .map(|c| (c.property, c.value))
                    .collect(),
            }
        })
        .collect())
}

pub fn item_id(i: usize) -> String {
    format!("item{i:05}")
}

pub fn annotator_id(j: usize) -> String {
    format!("annotator{j}")
}

#[derive(Debug, Clone, Copy)]
enum Stream {
    Truth = 0,
    AdHoc = 1,
    VTelos = 2,
}

fn stream(seed: u64, kind: Stream, annotator: usize, item: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(kind as u64).to_le_bytes());
    key[16..24].copy_from_slice(&(annotator as u64).to_le_bytes());
    key[24..].copy_from_slice(&(item as u64).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Per-property misperception: with probability `epsilon` the value is
/// replaced by one drawn uniformly from the rest of the domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    epsilon: f64,
}

impl NoiseModel {
    pub fn new(epsilon: f64) -> Result<Self, SimulationError> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(SimulationError::InvalidConfig(format!(
                "epsilon {epsilon} is outside [0, 1]"
            )));
        }
        Ok(NoiseModel { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn corrupt(&self, schema: &Schema, truth: &PropertyAssertionSet, rng: &mut impl Rng) -> PropertyAssertionSet {
        truth
            .iter()
            .map(|(p, v)| {
                let domain = &schema.property(p).expect("truth uses schema properties").domain;
                let size = domain.size();
                if size < 2 || !rng.random_bool(self.epsilon) {
                    return (p.clone(), v.clone());
                }
                let own = domain.index_of(v).expect("truth values lie in their domains");
                let mut k = rng.random_range(0..size - 1);
                if k >= own {
                    k += 1;
                }
                (p.clone(), domain.nth(k).expect("index within domain"))
            })
            .collect()
    }
}

/// Labels an ad-hoc annotator considers applicable, per item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdHocLabelPool {
    pub labels: Vec<Vec<String>>,
}

impl AdHocLabelPool {
    /// Pools of `k_i` interchangeable labels.
    pub fn with_sizes(sizes: &[usize]) -> Self {
        AdHocLabelPool {
            labels: sizes
                .iter()
                .map(|&k| (0..k).map(|j| format!("label{j}")).collect())
                .collect(),
        }
    }

    /// For each item, the first `k_i` names of its true concept: the leaf's
    /// lemma and synonyms, then its ancestors' from the bottom up. `sizes`
    /// is cycled over the items.
    pub fn from_schema(schema: &Schema, items: &[GroundTruthItem], sizes: &[usize]) -> Result<Self, SimulationError> {
        let mut labels = vec![];
        for (i, item) in items.iter().enumerate() {
            let node = schema.resolve(&item.truth).map_err(EngineError::from)?.terminal;
            let mut names: Vec<String> = vec![];
            for id in schema.root_path(&node).unwrap_or_default().iter().rev() {
                let n = schema.node(id).expect("path nodes exist");
                let mut own = vec![schema.canonical_label(id).map_err(EngineError::from)?];
                if let Some(b) = &n.binding {
                    own.extend(b.synonyms.iter().cloned());
                }
                for name in own {
                    if !names.contains(&name) {
                        names.push(name);
                    }
                }
            }
            let k = if sizes.is_empty() { 1 } else { sizes[i % sizes.len()] };
            names.truncate(k.max(1));
            labels.push(names);
        }
        Ok(AdHocLabelPool { labels })
    }

    /// Expected two-annotator percent agreement, (1/N) Σ 1/k_i.
    pub fn expected_agreement(&self) -> f64 {
        self.labels.iter().map(|l| 1.0 / l.len() as f64).sum::<f64>() / self.labels.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Adhoc,
    Vtelos,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Path to a `.vts` or `.vtsf` file, relative to the config file.
    pub schema: String,
    pub items: usize,
    pub annotators: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub condition: Condition,
    /// Ad-hoc pool sizes, cycled over items.
    pub adhoc_k: Vec<usize>,
}

impl ExperimentConfig {
    pub fn new(schema: impl Into<String>, items: usize, annotators: usize, epsilon: f64, seed: u64) -> Self {
        ExperimentConfig {
            schema: schema.into(),
            items,
            annotators,
            epsilon,
            seed,
            condition: Condition::Both,
            adhoc_k: vec![2],
        }
    }

    /// Parses `key = value` lines. Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self, SimulationError> {
        let bad = |m: String| SimulationError::InvalidConfig(m);
        let mut kv: BTreeMap<String, String> = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("line {}: expected key = value", n + 1)))?;
            if kv.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                return Err(bad(format!("line {}: duplicate key `{}`", n + 1, k.trim())));
            }
        }
        fn take<T: std::str::FromStr>(
            kv: &mut BTreeMap<String, String>,
            key: &str,
        ) -> Result<Option<T>, SimulationError> {
            kv.remove(key)
                .map(|v| {
                    v.parse()
                        .map_err(|_| SimulationError::InvalidConfig(format!("`{key}` has invalid value `{v}`")))
                })
                .transpose()
        }
        let schema: String = take(&mut kv, "schema")?.ok_or_else(|| bad("missing `schema`".into()))?;
        let items = take(&mut kv, "items")?.ok_or_else(|| bad("missing `items`".into()))?;
        let annotators = take(&mut kv, "annotators")?.unwrap_or(2);
        let epsilon = take(&mut kv, "epsilon")?.unwrap_or(0.0);
        let seed = take(&mut kv, "seed")?.ok_or_else(|| bad("missing `seed`".into()))?;
        let condition = match kv.remove("condition").as_deref() {
            None | Some("both") => Condition::Both,
            Some("adhoc") => Condition::Adhoc,
            Some("vtelos") => Condition::Vtelos,
            Some(other) => return Err(bad(format!("unknown condition `{other}`"))),
        };
        let adhoc_k = match kv.remove("adhoc_k") {
            None => vec![2],
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<usize>()
                        .map_err(|_| bad(format!("`adhoc_k` has invalid value `{v}`")))
                })
                .collect::<Result<_, _>>()?,
        };
        if let Some(k) = kv.keys().next() {
            return Err(bad(format!("unknown key `{k}`")));
        }
        let config = ExperimentConfig {
            schema,
            items,
            annotators,
            epsilon,
            seed,
            condition,
            adhoc_k,
        };
        config.check()?;
        Ok(config)
    }

    pub fn check(&self) -> Result<(), SimulationError> {
        NoiseModel::new(self.epsilon)?;
        if self.annotators < 2 {
            return Err(SimulationError::InvalidConfig("need at least two annotators".into()));
        }
        if self.adhoc_k.contains(&0) {
            return Err(SimulationError::InvalidConfig(
                "`adhoc_k` sizes must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let condition = match self.condition {
            Condition::Adhoc => "adhoc",
            Condition::Vtelos => "vtelos",
            Condition::Both => "both",
        };
        let ks: Vec<String> = self.adhoc_k.iter().map(usize::to_string).collect();
        format!(
            "schema = {}\nitems = {}\nannotators = {}\nepsilon = {}\nseed = {}\ncondition = {}\nadhoc_k = {}\n",
            self.schema,
            self.items,
            self.annotators,
            self.epsilon,
            self.seed,
            condition,
            ks.join(",")
        )
    }
}

/// Runs every annotator through an engine session: localize, assert the
/// perceived properties, finalize with partial results accepted.
pub fn simulate_vtelos(
    schema: &Arc<Schema>,
    config: &ExperimentConfig,
    truth: &[GroundTruthItem],
) -> Result<Vec<Vec<AnnotationRecord>>, SimulationError> {
    let noise = NoiseModel::new(config.epsilon)?;
    let images: Vec<ImageRef> = truth.iter().map(|t| ImageRef::new(t.id.clone())).collect();
    let mut out = vec![];
    for j in 0..config.annotators {
        let mut session = Session::open_with(
            Arc::clone(schema),
            SessionConfig::classifier(format!("sim-{}-a{j}", config.seed), annotator_id(j), images.clone()),
            Arc::new(FixedClock(0)),
        )?;
        let mut records = Vec::with_capacity(truth.len());
        for (i, item) in truth.iter().enumerate() {
            let mut rng = stream(config.seed, Stream::VTelos, j, i);
            let perceived = noise.corrupt(schema, &item.truth, &mut rng);
            let region = session.localize(&item.id, SIM_BBOX)?;
            for (p, v) in perceived.iter() {
                session.assert_property(&region, p, v.clone())?;
            }
            records.push(session.finalize(&region, true)?);
            session.take_events();
        }
        out.push(records);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdHocRecord {
    pub item: String,
    pub annotator_id: String,
    pub label: String,
}

/// Every annotator picks one label uniformly from each item's pool.
pub fn simulate_adhoc(
    config: &ExperimentConfig,
    items: &[GroundTruthItem],
    pool: &AdHocLabelPool,
) -> Result<Vec<Vec<AdHocRecord>>, SimulationError> {
    if pool.labels.len() != items.len() {
        return Err(SimulationError::PoolSizeMismatch {
            pool: pool.labels.len(),
            items: items.len(),
        });
    }
    if let Some(i) = pool.labels.iter().position(Vec::is_empty) {
        return Err(SimulationError::EmptyPool(items[i].id.clone()));
    }
    Ok((0..config.annotators)
        .map(|j| {
            items
                .iter()
                .zip(&pool.labels)
                .enumerate()
                .map(|(i, (item, labels))| {
                    let mut rng = stream(config.seed, Stream::AdHoc, j, i);
                    AdHocRecord {
                        item: item.id.clone(),
                        annotator_id: annotator_id(j),
                        label: labels[rng.random_range(0..labels.len())].clone(),
                    }
                })
                .collect()
        })
        .collect())
}

/// Ad-hoc choices as a matrix keyed like the vTelos records.
pub fn adhoc_matrix(records: &[Vec<AdHocRecord>]) -> Result<LabeledItemMatrix, SimulationError> {
    let annotators: Vec<String> = records
        .iter()
        .enumerate()
        .map(|(j, r)| {
            r.first()
                .map(|r| r.annotator_id.clone())
                .unwrap_or_else(|| annotator_id(j))
        })
        .collect();
    let mut rows: BTreeMap<&str, Vec<Option<&str>>> = BTreeMap::new();
    for (j, set) in records.iter().enumerate() {
        for r in set {
            rows.entry(&r.item).or_insert_with(|| vec![None; records.len()])[j] = Some(&r.label);
        }
    }
    let items = rows
        .keys()
        .map(|i| ItemKey {
            image: i.to_string(),
            bbox: Some(SIM_BBOX),
        })
        .collect();
    let rows: Vec<_> = rows.into_values().collect();
    Ok(LabeledItemMatrix::from_rows(annotators, items, &rows)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub schema_stamp: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adhoc: Option<AgreementReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vtelos: Option<AgreementReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<DeltaReport>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }

    pub fn render_text(&self) -> String {
        let c = &self.config;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "seed {}  items {}  annotators {}  epsilon {}  adhoc_k {:?}",
            c.seed, c.items, c.annotators, c.epsilon, c.adhoc_k
        );
        let _ = writeln!(out, "schema {}", self.schema_stamp);
        for (name, r) in [("ad-hoc", &self.adhoc), ("vTelos", &self.vtelos)] {
            if let Some(r) = r {
                let _ = writeln!(out, "\n[{name}]");
                out.push_str(&r.render_text());
            }
        }
        if let Some(d) = &self.delta {
            out.push_str("\n[vTelos - ad-hoc]\n");
            out.push_str(&d.render_text());
        }
        out
    }
}

/// Simulates the configured conditions over one set of items and compares
/// them when both ran.
pub fn run_experiment(schema: &Arc<Schema>, config: &ExperimentConfig) -> Result<ExperimentReport, SimulationError> {
    config.check()?;
    let stamp = schema
        .version_stamp()
        .ok_or(SimulationError::SchemaNotFrozen)?
        .to_string();
    let truth = ground_truth(schema, config.items, config.seed)?;
    let adhoc = match config.condition {
        Condition::Vtelos => None,
        _ => {
            let pool = AdHocLabelPool::from_schema(schema, &truth, &config.adhoc_k)?;
            let m = adhoc_matrix(&simulate_adhoc(config, &truth, &pool)?)?;
            Some(AgreementReport::compute(&m, None)?)
        }
    };
    let vtelos = match config.condition {
        Condition::Adhoc => None,
        _ => {
            let records: Vec<AnnotationRecord> =
                simulate_vtelos(schema, config, &truth)?.into_iter().flatten().collect();
            let m = agreement::build_matrix(&records, MatchPolicy::default())?;
            Some(AgreementReport::compute(&m, None)?)
        }
    };
    let delta = match (&adhoc, &vtelos) {
        (Some(a), Some(v)) => Some(agreement::compare_conditions(a, v)?),
        _ => None,
    };
    Ok(ExperimentReport {
        config: config.clone(),
        schema_stamp: stamp,
        adhoc,
        vtelos,
        delta,
    })
}
