//! Inter-annotator agreement.
//!
//! Records from several annotators are paired into items by image and box
//! overlap, giving a [`LabeledItemMatrix`] of category assignments. Categories
//! are concept ids, so synonyms never count as disagreement. Percent
//! agreement, Cohen's κ and Fleiss' κ are pure functions of the matrix.
//!
//! A κ whose expected agreement is exactly 1 is reported as undefined rather
//! than NaN; the check is done in integer arithmetic.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::engine::{AnnotationRecord, BBox};
use crate::schema::{ConceptId, Schema};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AgreementError {
    #[error("records are pinned to different schema versions: {0:?}")]
    MixedSchemaVersions(Vec<String>),
    #[error("agreement needs at least two annotators, found {0}")]
    TooFewAnnotators(usize),
    #[error("no item has two or more assignments")]
    NoComparableItems,
    #[error("annotators `{0}` and `{1}` share no items")]
    NoSharedItems(String, String),
    #[error("no item is eligible for Fleiss' kappa")]
    NoEligibleItems,
    #[error("unknown annotator `{0}`")]
    UnknownAnnotator(String),
    #[error("reports cover different item universes")]
    MismatchedItemUniverse,
    #[error("category `{0}` is not a concept id of the schema")]
    UnknownCategory(String),
}

impl AgreementError {
    pub fn code(&self) -> &'static str {
        match self {
            AgreementError::MixedSchemaVersions(_) => "MixedSchemaVersions",
            AgreementError::TooFewAnnotators(_) => "TooFewAnnotators",
            AgreementError::NoComparableItems => "NoComparableItems",
            AgreementError::NoSharedItems(..) => "NoSharedItems",
            AgreementError::NoEligibleItems => "NoEligibleItems",
            AgreementError::UnknownAnnotator(_) => "UnknownAnnotator",
            AgreementError::MismatchedItemUniverse => "MismatchedItemUniverse",
            AgreementError::UnknownCategory(_) => "UnknownCategory",
        }
    }
}

/// An object on an image. `bbox` is the first box seen for the object.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ItemKey {
    pub image: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BBox>,
}

impl ItemKey {
    pub fn image(image: impl Into<String>) -> Self {
        ItemKey {
            image: image.into(),
            bbox: None,
        }
    }
}

impl fmt::Display for ItemKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.bbox {
            Some(b) => write!(f, "{}@{},{},{},{}", self.image, b.x, b.y, b.width, b.height),
            None => f.write_str(&self.image),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchPolicy {
    pub iou_threshold: f64,
}

impl Default for MatchPolicy {
    fn default() -> Self {
        MatchPolicy { iou_threshold: 0.5 }
    }
}

/// Category assignments, one row per item and one column per annotator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledItemMatrix {
    annotators: Vec<String>,
    items: Vec<ItemKey>,
    categories: Vec<String>,
    cells: Vec<Vec<Option<usize>>>,
}

impl LabeledItemMatrix {
    /// Builds a matrix from per-item rows of optional category names.
    /// `rows[i][a]` is annotator `a`'s category for item `i`.
    pub fn from_rows<S: AsRef<str>>(
        annotators: Vec<String>,
        items: Vec<ItemKey>,
        rows: &[Vec<Option<S>>],
    ) -> Result<Self, AgreementError> {
        if annotators.len() < 2 {
            return Err(AgreementError::TooFewAnnotators(annotators.len()));
        }
        assert_eq!(items.len(), rows.len(), "one row per item");
        let categories: Vec<String> = rows
            .iter()
            .flatten()
            .flatten()
            .map(|c| c.as_ref().to_string())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let cells = rows
            .iter()
            .map(|row| {
                assert_eq!(row.len(), annotators.len(), "one cell per annotator");
                row.iter()
                    .map(|c| {
                        c.as_ref()
                            .map(|c| categories.binary_search_by(|k| k.as_str().cmp(c.as_ref())).unwrap())
                    })
                    .collect()
            })
            .collect();
        Ok(LabeledItemMatrix {
            annotators,
            items,
            categories,
            cells,
        })
    }

    pub fn annotators(&self) -> &[String] {
        &self.annotators
    }

    pub fn items(&self) -> &[ItemKey] {
        &self.items
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn cell(&self, item: usize, annotator: usize) -> Option<&str> {
        self.cells[item][annotator].map(|c| self.categories[c].as_str())
    }

    pub fn missing_cells(&self) -> usize {
        self.cells.iter().flatten().filter(|c| c.is_none()).count()
    }

    fn annotator_index(&self, name: &str) -> Result<usize, AgreementError> {
        self.annotators
            .iter()
            .position(|a| a == name)
            .ok_or_else(|| AgreementError::UnknownAnnotator(name.to_string()))
    }

    /// sha256 over the sorted item keys. Two matrices with the same
    /// fingerprint describe the same objects.
    pub fn universe_fingerprint(&self) -> String {
        let mut keys: Vec<String> = self.items.iter().map(ItemKey::to_string).collect();
        keys.sort();
        let mut h = Sha256::new();
        for k in keys {
            h.update(k.as_bytes());
            h.update([0]);
        }
        format!("sha256:{}", hex::encode(h.finalize()))
    }
}

/// Pairs records across annotators. Records on the same image are matched
/// greedily by descending IoU, at or above the policy threshold; leftovers
/// become items of their own. Categories are concept ids.
pub fn build_matrix(records: &[AnnotationRecord], policy: MatchPolicy) -> Result<LabeledItemMatrix, AgreementError> {
    let stamps: BTreeSet<&str> = records.iter().map(|r| r.schema_stamp.as_str()).collect();
    if stamps.len() > 1 {
        return Err(AgreementError::MixedSchemaVersions(
            stamps.into_iter().map(String::from).collect(),
        ));
    }
    let annotators: Vec<String> = records
        .iter()
        .map(|r| r.annotator_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if annotators.len() < 2 {
        return Err(AgreementError::TooFewAnnotators(annotators.len()));
    }
    let column: BTreeMap<&str, usize> = annotators.iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();

    // image -> annotator -> boxes with categories, in a fixed order
    type Boxes = Vec<(BBox, ConceptId)>;
    let mut by_image: BTreeMap<&str, BTreeMap<usize, Boxes>> = BTreeMap::new();
    for r in records {
        by_image
            .entry(&r.image)
            .or_default()
            .entry(column[r.annotator_id.as_str()])
            .or_default()
            .push((r.bbox, r.concept_id));
    }

    let mut items = vec![];
    let mut rows: Vec<Vec<Option<String>>> = vec![];
    for (image, per_annotator) in by_image {
        let first = rows.len();
        for (a, mut regions) in per_annotator {
            regions.sort();
            let mut candidates = vec![];
            for (ri, (b, _)) in regions.iter().enumerate() {
                for (ci, key) in items[first..].iter().enumerate() {
                    let key: &ItemKey = key;
                    if rows[first + ci][a].is_some() {
                        continue;
                    }
                    let iou = b.iou(key.bbox.as_ref().expect("record items carry boxes"));
                    if iou >= policy.iou_threshold {
                        candidates.push((iou, ri, first + ci));
                    }
                }
            }
            candidates.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
            let mut region_used = vec![false; regions.len()];
            let mut item_used = BTreeSet::new();
            for (_, ri, item) in candidates {
                if region_used[ri] || item_used.contains(&item) {
                    continue;
                }
                region_used[ri] = true;
                item_used.insert(item);
                rows[item][a] = Some(regions[ri].1.to_string());
            }
            for (ri, (b, cid)) in regions.iter().enumerate() {
                if !region_used[ri] {
                    items.push(ItemKey {
                        image: image.to_string(),
                        bbox: Some(*b),
                    });
                    let mut row = vec![None; annotators.len()];
                    row[a] = Some(cid.to_string());
                    rows.push(row);
                }
            }
        }
    }
    LabeledItemMatrix::from_rows(annotators, items, &rows)
}

fn present(row: &[Option<usize>]) -> impl Iterator<Item = usize> + '_ {
    row.iter().flatten().copied()
}

/// Mean over items with two or more assignments of the fraction of equal
/// assignment pairs.
pub fn percent_agreement(m: &LabeledItemMatrix) -> Result<f64, AgreementError> {
    percent_agreement_by(m, |a, b| if a == b { 1.0 } else { 0.0 })
}

/// Percent agreement where each pair earns `credit(category_a, category_b)`.
pub fn percent_agreement_by(m: &LabeledItemMatrix, credit: impl Fn(&str, &str) -> f64) -> Result<f64, AgreementError> {
    let mut total = 0.0;
    let mut counted = 0usize;
    for row in &m.cells {
        let cats: Vec<usize> = present(row).collect();
        if cats.len() < 2 {
            continue;
        }
        let mut sum = 0.0;
        let mut pairs = 0usize;
        for i in 0..cats.len() {
            for j in i + 1..cats.len() {
                sum += credit(&m.categories[cats[i]], &m.categories[cats[j]]);
                pairs += 1;
            }
        }
        total += sum / pairs as f64;
        counted += 1;
    }
    if counted == 0 {
        return Err(AgreementError::NoComparableItems);
    }
    Ok(total / counted as f64)
}

/// Percent agreement with partial credit for near misses: two concepts earn
/// depth(common ancestor) / max(depth) with the root at depth 1.
pub fn hierarchical_agreement(m: &LabeledItemMatrix, schema: &Schema) -> Result<f64, AgreementError> {
    let mut paths: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for c in &m.categories {
        let node = c
            .parse::<u64>()
            .ok()
            .and_then(|n| ConceptId::new(n).ok())
            .and_then(|id| schema.node_by_concept(id))
            .ok_or_else(|| AgreementError::UnknownCategory(c.clone()))?;
        let path = schema
            .root_path(&node.id)
            .ok_or_else(|| AgreementError::UnknownCategory(c.clone()))?;
        paths.insert(c, path);
    }
    percent_agreement_by(m, |a, b| {
        let (pa, pb) = (&paths[a], &paths[b]);
        let common = pa.iter().zip(pb).take_while(|(x, y)| x == y).count();
        common as f64 / pa.len().max(pb.len()) as f64
    })
}

/// A κ statistic. `value` is `None` when expected agreement is exactly 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kappa {
    pub observed: f64,
    pub expected: f64,
    pub value: Option<f64>,
    pub items: usize,
}

impl Kappa {
    pub fn is_undefined(&self) -> bool {
        self.value.is_none()
    }
}

/// Cohen's κ over the items both annotators assigned.
pub fn cohen_kappa(m: &LabeledItemMatrix, a: &str, b: &str) -> Result<Kappa, AgreementError> {
    let (ia, ib) = (m.annotator_index(a)?, m.annotator_index(b)?);
    let k = m.categories.len();
    let mut ma = vec![0u128; k];
    let mut mb = vec![0u128; k];
    let (mut n, mut agree) = (0u128, 0u128);
    for row in &m.cells {
        if let (Some(x), Some(y)) = (row[ia], row[ib]) {
            n += 1;
            ma[x] += 1;
            mb[y] += 1;
            if x == y {
                agree += 1;
            }
        }
    }
    if n == 0 {
        return Err(AgreementError::NoSharedItems(a.to_string(), b.to_string()));
    }
    let chance: u128 = ma.iter().zip(&mb).map(|(x, y)| x * y).sum();
    let p_o = agree as f64 / n as f64;
    let p_e = chance as f64 / (n * n) as f64;
    let value = (chance != n * n).then(|| (p_o - p_e) / (1.0 - p_e));
    Ok(Kappa {
        observed: p_o,
        expected: p_e,
        value,
        items: n as usize,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FleissKappa {
    #[serde(flatten)]
    pub kappa: Kappa,
    /// Assignments per included item.
    pub raters: usize,
    /// Items left out because their assignment count differs from `raters`.
    pub excluded: usize,
}

/// Fleiss' κ. Items need the same number of assignments; that number is the
/// most common count among items with at least two (the larger on ties), and
/// other items are excluded.
pub fn fleiss_kappa(m: &LabeledItemMatrix) -> Result<FleissKappa, AgreementError> {
    let counts: Vec<usize> = m.cells.iter().map(|r| present(r).count()).collect();
    let mut freq: BTreeMap<usize, usize> = BTreeMap::new();
    for &c in counts.iter().filter(|&&c| c >= 2) {
        *freq.entry(c).or_default() += 1;
    }
    let raters = freq
        .iter()
        .max_by(|x, y| x.1.cmp(y.1).then(x.0.cmp(y.0)))
        .map(|(&c, _)| c)
        .ok_or(AgreementError::NoEligibleItems)?;
    let k = m.categories.len();
    let mut totals = vec![0u128; k];
    let (mut items, mut excluded) = (0u128, 0usize);
    let mut p_sum = 0.0;
    for (row, &c) in m.cells.iter().zip(&counts) {
        if c != raters {
            excluded += 1;
            continue;
        }
        let mut n_ij = vec![0u128; k];
        for x in present(row) {
            n_ij[x] += 1;
        }
        let sq: u128 = n_ij.iter().map(|v| v * v).sum();
        let n = raters as u128;
        p_sum += (sq - n) as f64 / (n * (n - 1)) as f64;
        for (t, v) in totals.iter_mut().zip(&n_ij) {
            *t += v;
        }
        items += 1;
    }
    let n = raters as u128;
    let all = items * n;
    let chance: u128 = totals.iter().map(|t| t * t).sum();
    let p_bar = p_sum / items as f64;
    let p_e = chance as f64 / (all * all) as f64;
    let value = (chance != all * all).then(|| (p_bar - p_e) / (1.0 - p_e));
    Ok(FleissKappa {
        kappa: Kappa {
            observed: p_bar,
            expected: p_e,
            value,
            items: items as usize,
        },
        raters,
        excluded,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairKappa {
    pub a: String,
    pub b: String,
    #[serde(flatten)]
    pub kappa: Kappa,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub annotators: Vec<String>,
    pub items: usize,
    pub comparable_items: usize,
    pub missing_cells: usize,
    pub universe: String,
    pub percent_agreement: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hierarchical_agreement: Option<f64>,
    /// Pairs without shared items are omitted.
    pub cohen: Vec<PairKappa>,
    pub fleiss: FleissKappa,
    /// Names of metrics whose expected agreement was 1.
    pub undefined: Vec<String>,
}

impl AgreementReport {
    /// Computes every metric. With a schema, hierarchical credit is added.
    pub fn compute(m: &LabeledItemMatrix, hierarchy: Option<&Schema>) -> Result<Self, AgreementError> {
        let percent = percent_agreement(m)?;
        let hierarchical = hierarchy.map(|s| hierarchical_agreement(m, s)).transpose()?;
        let mut undefined = vec![];
        let mut cohen = vec![];
        for (i, a) in m.annotators.iter().enumerate() {
            for b in &m.annotators[i + 1..] {
                match cohen_kappa(m, a, b) {
                    Ok(kappa) => {
                        if kappa.is_undefined() {
                            undefined.push(format!("cohen_kappa:{a}|{b}"));
                        }
                        cohen.push(PairKappa {
                            a: a.clone(),
                            b: b.clone(),
                            kappa,
                        });
                    }
                    Err(AgreementError::NoSharedItems(..)) => {}
                    Err(e) => return Err(e),
                }
            }
        }
        let fleiss = fleiss_kappa(m)?;
        if fleiss.kappa.is_undefined() {
            undefined.push("fleiss_kappa".into());
        }
        Ok(AgreementReport {
            annotators: m.annotators.clone(),
            items: m.items.len(),
            comparable_items: m.cells.iter().filter(|r| present(r).count() >= 2).count(),
            missing_cells: m.missing_cells(),
            universe: m.universe_fingerprint(),
            percent_agreement: percent,
            hierarchical_agreement: hierarchical,
            cohen,
            fleiss,
            undefined,
        })
    }

    /// Mean of the defined pairwise Cohen values.
    pub fn mean_cohen_kappa(&self) -> Option<f64> {
        let vals: Vec<f64> = self.cohen.iter().filter_map(|p| p.kappa.value).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// Named metric values; undefined metrics are `None`.
    pub fn metrics(&self) -> Vec<(String, Option<f64>)> {
        let mut out = vec![("percent_agreement".to_string(), Some(self.percent_agreement))];
        if let Some(h) = self.hierarchical_agreement {
            out.push(("hierarchical_agreement".into(), Some(h)));
        }
        out.push(("mean_cohen_kappa".into(), self.mean_cohen_kappa()));
        for p in &self.cohen {
            out.push((format!("cohen_kappa:{}|{}", p.a, p.b), p.kappa.value));
        }
        out.push(("fleiss_kappa".into(), self.fleiss.kappa.value));
        out
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "annotators {}  items {}  comparable {}  missing cells {}",
            self.annotators.len(),
            self.items,
            self.comparable_items,
            self.missing_cells
        );
        let metrics = self.metrics();
        let w = metrics.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(24);
        for (name, v) in metrics {
            let _ = writeln!(out, "{:<w$} {}", name, fmt_metric(v));
        }
        out
    }
}

fn fmt_metric(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.4}"),
        None => "undefined".to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub metric: String,
    pub adhoc: Option<f64>,
    pub vtelos: Option<f64>,
    pub absolute: Option<f64>,
    /// `absolute / |adhoc|`; absent when ad-hoc is 0 or undefined.
    pub relative: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub universe: String,
    pub deltas: Vec<MetricDelta>,
}

impl DeltaReport {
    pub fn get(&self, metric: &str) -> Option<&MetricDelta> {
        self.deltas.iter().find(|d| d.metric == metric)
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let w = self.deltas.iter().map(|d| d.metric.len()).max().unwrap_or(0).max(24);
        let _ = writeln!(
            out,
            "{:<w$} {:>10} {:>10} {:>10} {:>10}",
            "metric", "adhoc", "vtelos", "delta", "relative"
        );
        for d in &self.deltas {
            let rel = match d.relative {
                Some(r) => format!("{:+.1}%", r * 100.0),
                None => "n/a".into(),
            };
            let abs = match d.absolute {
                Some(a) => format!("{a:+.4}"),
                None => "n/a".into(),
            };
            let _ = writeln!(
                out,
                "{:<w$} {:>10} {:>10} {:>10} {:>10}",
                d.metric,
                fmt_metric(d.adhoc),
                fmt_metric(d.vtelos),
                abs,
                rel
            );
        }
        out
    }
}

/// vTelos minus ad-hoc for every metric present in both reports.
pub fn compare_conditions(adhoc: &AgreementReport, vtelos: &AgreementReport) -> Result<DeltaReport, AgreementError> {
    if adhoc.universe != vtelos.universe {
        return Err(AgreementError::MismatchedItemUniverse);
    }
    let theirs: BTreeMap<String, Option<f64>> = vtelos.metrics().into_iter().collect();
    let deltas = adhoc
        .metrics()
        .into_iter()
        .filter_map(|(metric, a)| {
            let v = *theirs.get(&metric)?;
            let absolute = a.zip(v).map(|(a, v)| v - a);
            let relative = absolute.zip(a).filter(|(_, a)| *a != 0.0).map(|(d, a)| d / a.abs());
            Some(MetricDelta {
                metric,
                adhoc: a,
                vtelos: v,
                absolute,
                relative,
            })
        })
        .collect();
    Ok(DeltaReport {
        universe: adhoc.universe.clone(),
        deltas,
    })
}
