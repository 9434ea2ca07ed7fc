//! Analysis tables over a consolidated store.
//!
//! Every report is a pure function of its inputs and renders to CSV and to an
//! aligned text table.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::consolidate::ConsolidatedStore;
use crate::error::{Error, Result};
pub use crate::ingest::ContentProfile;
use crate::ingest::SourceRecord;
use crate::model::{Assessment, ChainId, Digest, IgnoreReason, Judgment, Visibility};
use crate::source::minor_version;
use crate::taxonomy::swc_class;

/// A rendered report.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new<S: Into<String>>(headers: impl IntoIterator<Item = S>) -> Self {
        Table {
            headers: headers.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    fn push<S: ToString>(&mut self, row: impl IntoIterator<Item = S>) {
        self.rows.push(row.into_iter().map(|c| c.to_string()).collect());
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.headers).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8 cells")
    }

    pub fn to_text(&self) -> String {
        let mut widths: Vec<usize> = self.headers.iter().map(|h| h.chars().count()).collect();
        for r in &self.rows {
            for (i, c) in r.iter().enumerate() {
                widths[i] = widths[i].max(c.chars().count());
            }
        }
        let is_num = |c: &str| !c.is_empty() && c.chars().all(|ch| ch.is_ascii_digit() || ch == '.');
        // a column is right-aligned when every non-empty cell is a number
        let right: Vec<bool> = (0..widths.len())
            .map(|i| {
                let mut cells = self.rows.iter().map(|r| r[i].as_str()).filter(|c| !c.is_empty()).peekable();
                cells.peek().is_some() && cells.all(is_num)
            })
            .collect();
        let line = |cells: &[String]| {
            let mut s = String::new();
            for (i, c) in cells.iter().enumerate() {
                if i > 0 {
                    s.push_str("  ");
                }
                if right[i] {
                    let _ = write!(s, "{c:>w$}", w = widths[i]);
                } else {
                    let _ = write!(s, "{c:<w$}", w = widths[i]);
                }
            }
            s.trim_end().to_string()
        };
        let mut out = line(&self.headers);
        out.push('\n');
        out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&line(r));
            out.push('\n');
        }
        out
    }
}

fn mapped_retained(store: &ConsolidatedStore) -> impl Iterator<Item = &Assessment> {
    store.retained().filter(|a| a.mapped_swc().is_some())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CoverageRow {
    pub swc_id: u16,
    pub n_sets: usize,
    pub n_positive: usize,
    pub n_negative: usize,
    pub title: String,
    pub visibility: Option<Visibility>,
}

/// Retained, mapped assessments per class.
pub fn coverage_table(store: &ConsolidatedStore) -> Vec<CoverageRow> {
    let mut per: BTreeMap<u16, (BTreeSet<&str>, usize, usize)> = BTreeMap::new();
    for a in mapped_retained(store) {
        let e = per.entry(a.mapped_swc().unwrap()).or_default();
        e.0.insert(&a.dataset);
        match a.judgment {
            Judgment::Positive => e.1 += 1,
            Judgment::Negative => e.2 += 1,
            Judgment::Na => {}
        }
    }
    per.into_iter()
        .map(|(swc, (sets, pos, neg))| {
            let class = swc_class(swc);
            CoverageRow {
                swc_id: swc,
                n_sets: sets.len(),
                n_positive: pos,
                n_negative: neg,
                title: class.map(|c| c.title.to_string()).unwrap_or_default(),
                visibility: class.and_then(|c| c.visibility),
            }
        })
        .collect()
}

pub fn coverage_report(rows: &[CoverageRow]) -> Table {
    let mut t = Table::new(["swc_id", "n_sets", "n_positive", "n_negative", "weakness", "visibility"]);
    for r in rows {
        t.push([
            r.swc_id.to_string(),
            r.n_sets.to_string(),
            r.n_positive.to_string(),
            r.n_negative.to_string(),
            r.title.clone(),
            r.visibility.map(|v| v.as_str().to_string()).unwrap_or_default(),
        ]);
    }
    t
}

/// Datasets with at least one retained assessment in each group.
fn group_datasets(store: &ConsolidatedStore) -> HashMap<u32, Vec<&Assessment>> {
    let mut by_group: HashMap<u32, Vec<&Assessment>> = HashMap::new();
    for a in mapped_retained(store) {
        if let Some(g) = store.group_of(&a.id) {
            by_group.entry(g).or_default().push(a);
        }
    }
    by_group
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OverlapMatrix {
    pub datasets: Vec<String>,
    /// `cells[a][b]`: retained mapped assessments of `a` sharing a group with one of `b`.
    pub cells: Vec<Vec<usize>>,
    /// Per dataset: retained mapped assessments sharing a group with any other dataset.
    pub any_other: Vec<usize>,
}

impl OverlapMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<usize> {
        let i = self.datasets.iter().position(|d| d == a)?;
        let j = self.datasets.iter().position(|d| d == b)?;
        Some(self.cells[i][j])
    }

    pub fn total_overlapping(&self) -> usize {
        self.any_other.iter().sum()
    }
}

pub fn overlap_matrix(store: &ConsolidatedStore) -> OverlapMatrix {
    let datasets = store.datasets();
    let index: HashMap<&str, usize> = datasets.iter().enumerate().map(|(i, d)| (d.as_str(), i)).collect();
    let n = datasets.len();
    let mut cells = vec![vec![0; n]; n];
    let mut any_other = vec![0; n];
    for members in group_datasets(store).values() {
        let present: BTreeSet<usize> = members.iter().map(|a| index[a.dataset.as_str()]).collect();
        for a in members {
            let i = index[a.dataset.as_str()];
            for &j in &present {
                cells[i][j] += 1;
            }
            if present.len() > 1 {
                any_other[i] += 1;
            }
        }
    }
    // diagonal: also count mapped retained assessments outside any group
    for (i, d) in datasets.iter().enumerate() {
        cells[i][i] = mapped_retained(store).filter(|a| &a.dataset == d).count();
    }
    OverlapMatrix {
        datasets,
        cells,
        any_other,
    }
}

pub fn overlap_report(m: &OverlapMatrix) -> Table {
    let mut t = Table::new(std::iter::once("dataset".to_string()).chain(m.datasets.iter().cloned()).chain(["ANY".into()]));
    for (i, d) in m.datasets.iter().enumerate() {
        t.push(
            std::iter::once(d.clone())
                .chain(m.cells[i].iter().map(|c| c.to_string()))
                .chain([m.any_other[i].to_string()]),
        );
    }
    t.push(
        std::iter::once("TOTAL".to_string())
            .chain(m.datasets.iter().map(|_| String::new()))
            .chain([m.total_overlapping().to_string()]),
    );
    t
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DisagreementTable {
    /// dataset → swc → count
    pub counts: BTreeMap<String, BTreeMap<u16, usize>>,
}

impl DisagreementTable {
    pub fn total(&self, dataset: &str) -> usize {
        self.counts.get(dataset).map_or(0, |m| m.values().sum())
    }
}

/// Retained assessments whose group holds an opposite judgment from another dataset.
pub fn disagreement_table(store: &ConsolidatedStore) -> DisagreementTable {
    let mut t = DisagreementTable::default();
    for members in group_datasets(store).values() {
        for a in members {
            let disagrees = members
                .iter()
                .any(|b| b.dataset != a.dataset && a.judgment.opposes(b.judgment));
            if disagrees {
                *t.counts
                    .entry(a.dataset.clone())
                    .or_default()
                    .entry(a.mapped_swc().unwrap())
                    .or_default() += 1;
            }
        }
    }
    t
}

pub fn disagreement_report(d: &DisagreementTable) -> Table {
    let classes: BTreeSet<u16> = d.counts.values().flat_map(|m| m.keys().copied()).collect();
    let mut t = Table::new(
        std::iter::once("dataset".to_string())
            .chain(classes.iter().map(|c| c.to_string()))
            .chain(["total".into()]),
    );
    for (ds, m) in &d.counts {
        t.push(
            std::iter::once(ds.clone())
                .chain(classes.iter().map(|c| m.get(c).copied().unwrap_or(0).to_string()))
                .chain([d.total(ds).to_string()]),
        );
    }
    t
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IgnoredBreakdown {
    pub datasets: Vec<String>,
    pub counts: BTreeMap<IgnoreReason, BTreeMap<String, usize>>,
    pub ignored: BTreeMap<String, usize>,
    pub retained: BTreeMap<String, usize>,
}

impl IgnoredBreakdown {
    pub fn get(&self, reason: IgnoreReason, dataset: &str) -> usize {
        self.counts.get(&reason).and_then(|m| m.get(dataset)).copied().unwrap_or(0)
    }
}

pub fn ignored_breakdown(store: &ConsolidatedStore) -> IgnoredBreakdown {
    let mut b = IgnoredBreakdown {
        datasets: store.datasets(),
        ..Default::default()
    };
    for d in &b.datasets {
        b.ignored.insert(d.clone(), 0);
        b.retained.insert(d.clone(), 0);
    }
    for a in &store.assessments {
        match a.ignore_reason {
            Some(r) => {
                *b.counts.entry(r).or_default().entry(a.dataset.clone()).or_default() += 1;
                *b.ignored.get_mut(&a.dataset).unwrap() += 1;
            }
            None => *b.retained.get_mut(&a.dataset).unwrap() += 1,
        }
    }
    b
}

pub fn ignored_report(b: &IgnoredBreakdown) -> Table {
    let mut t = Table::new(std::iter::once("reason".to_string()).chain(b.datasets.iter().cloned()));
    for r in IgnoreReason::ALL {
        t.push(std::iter::once(r.label().to_string()).chain(b.datasets.iter().map(|d| b.get(r, d).to_string())));
    }
    t.push(std::iter::once("assessments ignored".to_string()).chain(b.datasets.iter().map(|d| b.ignored[d].to_string())));
    t.push(std::iter::once("assessments retained".to_string()).chain(b.datasets.iter().map(|d| b.retained[d].to_string())));
    t
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct VariabilityStats {
    pub entries: usize,
    pub address_and_source: usize,
    pub source_only: usize,
    pub address_only: usize,
    pub neither: usize,
    pub unique_addresses: usize,
    /// Unique addresses per chain; unresolved addresses appear as `UNRESOLVED`.
    pub addresses_per_chain: BTreeMap<String, usize>,
    /// Distinct sources per Solidity minor version (`unknown` without a pragma).
    pub minor_versions: BTreeMap<String, usize>,
    /// Unique deployments per 100,000-block bin (keyed by the bin's first block).
    pub block_bins: BTreeMap<u64, usize>,
}

pub const BLOCK_BIN: u64 = 100_000;

/// Entry, address, version and deployment statistics. `sources` supplies the
/// pragma versions of fingerprinted sources.
pub fn variability_stats(store: &ConsolidatedStore, sources: &[SourceRecord]) -> VariabilityStats {
    let mut s = VariabilityStats::default();
    let mut seen_entries = BTreeSet::new();
    let mut addresses: BTreeMap<(String, [u8; 20]), Option<u64>> = BTreeMap::new();
    let mut fps: BTreeSet<Digest> = BTreeSet::new();
    for a in &store.assessments {
        let c = &a.contract;
        if let Some(addr) = c.address {
            let chain = c.chain.map_or("UNRESOLVED", ChainId::as_str).to_string();
            let slot = addresses.entry((chain, *addr.as_bytes())).or_default();
            if slot.is_none() {
                *slot = c.deployment_block;
            }
        }
        if let Some(fp) = c.source_fp {
            fps.insert(fp);
        }
        if !seen_entries.insert(a.entry_key()) {
            continue;
        }
        s.entries += 1;
        match (c.address.is_some(), c.source_fp.is_some()) {
            (true, true) => s.address_and_source += 1,
            (false, true) => s.source_only += 1,
            (true, false) => s.address_only += 1,
            (false, false) => s.neither += 1,
        }
    }
    s.unique_addresses = addresses.keys().map(|(_, a)| *a).collect::<BTreeSet<_>>().len();
    for ((chain, _), block) in &addresses {
        *s.addresses_per_chain.entry(chain.clone()).or_default() += 1;
        if let Some(b) = block {
            *s.block_bins.entry(b / BLOCK_BIN * BLOCK_BIN).or_default() += 1;
        }
    }
    let catalog: HashMap<Digest, &SourceRecord> = sources.iter().map(|r| (r.source_fp, r)).collect();
    for fp in fps {
        let version = catalog
            .get(&fp)
            .and_then(|r| r.pragma_versions.iter().find_map(|v| minor_version(v)))
            .unwrap_or_else(|| "unknown".to_string());
        *s.minor_versions.entry(version).or_default() += 1;
    }
    s
}

pub fn variability_report(s: &VariabilityStats) -> Table {
    let mut t = Table::new(["section", "key", "count"]);
    for (k, v) in [
        ("entries", s.entries),
        ("address_and_source", s.address_and_source),
        ("source_only", s.source_only),
        ("address_only", s.address_only),
        ("neither", s.neither),
        ("unique_addresses", s.unique_addresses),
    ] {
        t.push(["entries".to_string(), k.to_string(), v.to_string()]);
    }
    for (k, v) in &s.addresses_per_chain {
        t.push(["chain".to_string(), k.clone(), v.to_string()]);
    }
    for (k, v) in &s.minor_versions {
        t.push(["solidity_minor".to_string(), k.clone(), v.to_string()]);
    }
    for (k, v) in &s.block_bins {
        t.push(["block_bin".to_string(), k.to_string(), v.to_string()]);
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Grade {
    Good,
    Med,
    Bad,
}

impl Grade {
    pub fn as_str(self) -> &'static str {
        match self {
            Grade::Good => "GOOD",
            Grade::Med => "MED",
            Grade::Bad => "BAD",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QualityScore {
    pub dataset: String,
    pub completeness: Grade,
    pub irredundancy: Grade,
    pub consistency: Grade,
    pub heterogeneity: Grade,
    pub data_quantity: Grade,
    pub timeliness: Grade,
}

/// Per-dataset facts the grades are computed from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityInputs {
    pub dataset: String,
    pub assessments: usize,
    pub weaknesses: usize,
    pub ignored: BTreeMap<IgnoreReason, usize>,
    pub content: ContentProfile,
    pub confirmed_errors: usize,
}

/// Share of entries counting as "nearly all".
pub const NEARLY_ALL: f64 = 0.9;

pub fn grade(q: &QualityInputs) -> QualityScore {
    let c = &q.content;
    let completeness = if c.share(c.source) >= NEARLY_ALL && c.share(c.runtime) >= NEARLY_ALL {
        Grade::Good
    } else if c.source + c.deploy + c.runtime > 0 {
        Grade::Med
    } else {
        Grade::Bad
    };

    let count = |r: IgnoreReason| q.ignored.get(&r).copied().unwrap_or(0);
    let dups = count(IgnoreReason::DuplicateOwnId) + count(IgnoreReason::DuplicateAddress) + count(IgnoreReason::DuplicateSource);
    // compare dups/total against 1% and 10% without floating point
    let irredundancy = if dups * 100 <= q.assessments {
        Grade::Good
    } else if dups * 10 < q.assessments {
        Grade::Med
    } else {
        Grade::Bad
    };

    let contradicted = IgnoreReason::ALL.iter().any(|r| r.is_contradiction() && count(*r) > 0);
    let consistency = if contradicted {
        Grade::Bad
    } else if q.confirmed_errors > 0 {
        Grade::Med
    } else {
        Grade::Good
    };

    let data_quantity = if q.assessments > 1000 && q.weaknesses > 5 {
        Grade::Good
    } else if q.assessments < 500 && q.weaknesses < 5 {
        Grade::Bad
    } else {
        Grade::Med
    };

    QualityScore {
        dataset: q.dataset.clone(),
        completeness,
        irredundancy,
        consistency,
        heterogeneity: Grade::Bad,
        data_quantity,
        timeliness: Grade::Bad,
    }
}

/// Confirmed wrong assessments per (dataset, SWC class).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ErrorsFixture {
    pub rows: BTreeMap<(String, u16), usize>,
}

impl ErrorsFixture {
    pub fn from_reader<R: std::io::Read>(r: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            dataset: String,
            swc_id: u16,
            n_errors: usize,
        }
        let mut f = ErrorsFixture::default();
        for row in csv::Reader::from_reader(r).deserialize() {
            let row: Row = row?;
            *f.rows.entry((row.dataset.trim().to_string(), row.swc_id)).or_default() += row.n_errors;
        }
        Ok(f)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file)
    }

    pub fn errors_for(&self, dataset: &str) -> usize {
        self.rows.iter().filter(|((d, _), _)| d == dataset).map(|(_, n)| n).sum()
    }
}

/// Collects grade inputs from the store, the ingest-time content profiles and the errors fixture.
pub fn quality_inputs(
    store: &ConsolidatedStore,
    content: &BTreeMap<String, ContentProfile>,
    errors: &ErrorsFixture,
) -> Vec<QualityInputs> {
    let mut out: BTreeMap<String, (QualityInputs, BTreeSet<&str>)> = BTreeMap::new();
    for a in &store.assessments {
        let (q, labels) = out.entry(a.dataset.clone()).or_insert_with(|| {
            (
                QualityInputs {
                    dataset: a.dataset.clone(),
                    content: content.get(&a.dataset).copied().unwrap_or_default(),
                    confirmed_errors: errors.errors_for(&a.dataset),
                    ..Default::default()
                },
                BTreeSet::new(),
            )
        });
        q.assessments += 1;
        labels.insert(&a.property_label);
        if let Some(r) = a.ignore_reason {
            *q.ignored.entry(r).or_default() += 1;
        }
    }
    out.into_values()
        .map(|(mut q, labels)| {
            q.weaknesses = labels.len();
            q
        })
        .collect()
}

pub fn quality_scores(inputs: &[QualityInputs]) -> Vec<QualityScore> {
    inputs.iter().map(grade).collect()
}

pub fn quality_report(scores: &[QualityScore]) -> Table {
    let mut t = Table::new([
        "dataset",
        "completeness",
        "irredundancy",
        "consistency",
        "heterogeneity",
        "data_quantity",
        "timeliness",
    ]);
    for s in scores {
        t.push([
            s.dataset.as_str(),
            s.completeness.as_str(),
            s.irredundancy.as_str(),
            s.consistency.as_str(),
            s.heterogeneity.as_str(),
            s.data_quantity.as_str(),
            s.timeliness.as_str(),
        ]);
    }
    t
}
