//! Manifest-driven dataset ingestion.
//!
//! [`ingest_dataset`] reads one dataset tree into [`DatasetEntry`] values and
//! [`canonicalize`] expands those into [`Assessment`]s with fingerprinted
//! contract identities.

mod manifest;
mod read;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use manifest::{
    load_manifest, AssessmentBinding, ContractBinding, DatasetGroup, DatasetManifest, FileContent, FileSet,
    FilepathBinding, Fixup, FixupField, FixupSelector, LabelColumn, LabelToken, Layout, Relabel, Selector,
    StructuredBinding, TabularBinding, ValueSource,
};

use crate::bytecode::{decode_hex, extract_runtime, fingerprint_bytecode};
use crate::error::Result;
use crate::model::{make_occurrence_id, normalize_address, sort_canonical, Assessment, ContractIdentity, Digest, Judgment};
use crate::source::{fingerprint_source, normalize_source_bytes};

/// One raw `(label, token)` pair with the judgment it maps to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawAssessment {
    pub property_label: String,
    pub token: String,
    pub judgment: Judgment,
}

/// The smallest unit of a dataset, as read before canonicalization.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub dataset: String,
    pub entry_id: String,
    pub raw_contract_ref: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub address: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deploy_hex: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime_hex: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contract_name: Option<String>,
    pub raw_assessments: Vec<RawAssessment>,
}

/// What a dataset itself provides per entry, counted at ingestion.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContentProfile {
    pub entries: usize,
    pub address: usize,
    pub source: usize,
    pub deploy: usize,
    pub runtime: usize,
}

impl ContentProfile {
    pub fn share(&self, n: usize) -> f64 {
        if self.entries == 0 {
            0.0
        } else {
            n as f64 / self.entries as f64
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub dataset: String,
    pub entries: usize,
    pub assessments: usize,
    pub fixups_applied: usize,
    pub content: ContentProfile,
    pub warnings: Vec<String>,
    /// Per-file failures. A non-empty list means the dataset is incomplete.
    pub errors: Vec<String>,
}

impl IngestReport {
    pub fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        log::warn!("{}: {msg}", self.dataset);
        self.warnings.push(msg);
    }

    pub fn error(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        log::error!("{}: {msg}", self.dataset);
        self.errors.push(msg);
    }
}

/// Reads a dataset tree according to its manifest.
///
/// Entries come out in file order (files sorted by relative path when found by
/// pattern). Unreadable files are reported, not skipped silently.
pub fn ingest_dataset(manifest: &DatasetManifest, root: &Path) -> (Vec<DatasetEntry>, IngestReport) {
    let mut report = IngestReport {
        dataset: manifest.name.clone(),
        ..IngestReport::default()
    };
    let mut entries = read::read_entries(manifest, root, &mut report);
    report.fixups_applied = apply_fixups(manifest, &mut entries, &mut report);
    entries.retain(|e| {
        if e.raw_assessments.is_empty() {
            report.warn(format!("entry {:?} has no assessments; skipped", e.entry_id));
            false
        } else {
            true
        }
    });
    for e in &mut entries {
        if let Some(path) = e.source_path.clone() {
            match std::fs::read(root.join(&path)) {
                Ok(bytes) => e.source_text = Some(String::from_utf8_lossy(&bytes).into_owned()),
                Err(err) => report.warn(format!("entry {:?}: source {path:?} unreadable: {err}", e.entry_id)),
            }
        }
    }
    report.entries = entries.len();
    report.content = ContentProfile {
        entries: entries.len(),
        address: entries.iter().filter(|e| e.address.is_some()).count(),
        source: entries.iter().filter(|e| e.source_text.is_some()).count(),
        deploy: entries.iter().filter(|e| e.deploy_hex.is_some()).count(),
        runtime: entries.iter().filter(|e| e.runtime_hex.is_some()).count(),
    };
    report.assessments = entries.iter().map(|e| e.raw_assessments.len()).sum();
    (entries, report)
}

fn apply_fixups(manifest: &DatasetManifest, entries: &mut [DatasetEntry], report: &mut IngestReport) -> usize {
    let mut applied = 0;
    for (n, fixup) in manifest.fixups.iter().enumerate() {
        let pattern = fixup
            .selector
            .entry_id_pattern
            .as_deref()
            .map(|p| regex::Regex::new(p).expect("validated with the manifest"));
        let mut hits = 0;
        for e in entries.iter_mut() {
            let by_id = fixup.selector.entry_id.as_deref().is_none_or(|id| id == e.entry_id);
            let by_pattern = pattern.as_ref().is_none_or(|re| re.is_match(&e.entry_id));
            if !(by_id && by_pattern) {
                continue;
            }
            hits += 1;
            for (field, value) in &fixup.set {
                let slot = match field {
                    FixupField::ContractRef => {
                        e.raw_contract_ref = value.clone();
                        continue;
                    }
                    FixupField::Address => &mut e.address,
                    FixupField::SourcePath => &mut e.source_path,
                    FixupField::DeployHex => &mut e.deploy_hex,
                    FixupField::RuntimeHex => &mut e.runtime_hex,
                    FixupField::ContractName => &mut e.contract_name,
                };
                *slot = (!value.is_empty()).then(|| value.clone());
            }
            for r in &fixup.relabel {
                for ra in e.raw_assessments.iter_mut().filter(|ra| ra.property_label == r.from) {
                    ra.property_label = r.to.trim().to_string();
                }
            }
            for lt in &fixup.set_judgment {
                for ra in e.raw_assessments.iter_mut().filter(|ra| ra.property_label == lt.label) {
                    ra.token = lt.token.clone();
                    ra.judgment = manifest.judgment_for(&lt.token).expect("validated with the manifest");
                }
            }
            for lt in &fixup.add_assessments {
                e.raw_assessments.push(RawAssessment {
                    property_label: lt.label.trim().to_string(),
                    token: lt.token.clone(),
                    judgment: manifest.judgment_for(&lt.token).expect("validated with the manifest"),
                });
            }
        }
        if hits == 0 {
            report.warn(format!("fixup {n} ({}) matched no entry", fixup.reason));
        }
        applied += hits;
    }
    applied
}

/// Source facts kept for the variability report, keyed by source fingerprint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceRecord {
    pub source_fp: Digest,
    pub pragma_versions: Vec<String>,
    pub contract_names: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct Canonical {
    pub assessments: Vec<Assessment>,
    pub sources: Vec<SourceRecord>,
    pub warnings: Vec<String>,
}

fn fingerprint_hex(entry: &DatasetEntry, hex: &str, what: &str, warnings: &mut Vec<String>) -> Option<Vec<u8>> {
    match decode_hex(hex) {
        Ok(bytes) if !bytes.is_empty() => Some(bytes),
        Ok(_) => None,
        Err(e) => {
            warnings.push(format!("{}:{}: {what} bytecode unusable: {e}", entry.dataset, entry.entry_id));
            None
        }
    }
}

/// Identity computed from whatever the entry carries, plus the source record if any.
pub fn entry_identity(entry: &DatasetEntry, warnings: &mut Vec<String>) -> (ContractIdentity, Option<SourceRecord>) {
    let mut id = ContractIdentity::default();
    if let Some(raw) = &entry.address {
        id.address = normalize_address(raw);
        if id.address.is_none() {
            warnings.push(format!("{}:{}: invalid address {raw:?}", entry.dataset, entry.entry_id));
        }
    }
    let mut record = None;
    if let Some(text) = &entry.source_text {
        let norm = normalize_source_bytes(text.as_bytes());
        if norm.text.is_empty() {
            warnings.push(format!("{}:{}: source is empty after normalization", entry.dataset, entry.entry_id));
        } else {
            let fps = fingerprint_source(&norm);
            id.source_fp = Some(fps.source_fp);
            id.source_fp_nopragma = Some(fps.source_fp_nopragma);
            id.contract_name = match &entry.contract_name {
                Some(name) => Some(name.clone()),
                None => {
                    if norm.contract_names.len() > 1 {
                        warnings.push(format!(
                            "{}:{}: {} contracts declared, assuming the last ({})",
                            entry.dataset,
                            entry.entry_id,
                            norm.contract_names.len(),
                            norm.contract_names.last().unwrap()
                        ));
                    }
                    norm.contract_names.last().cloned()
                }
            };
            record = Some(SourceRecord {
                source_fp: fps.source_fp,
                pragma_versions: norm.pragma_versions.clone(),
                contract_names: norm.contract_names.clone(),
            });
        }
    } else if let Some(path) = &entry.source_path {
        warnings.push(format!("{}:{}: missing source file {path:?}", entry.dataset, entry.entry_id));
    }
    if id.contract_name.is_none() {
        id.contract_name = entry.contract_name.clone();
    }
    if let Some(hex) = &entry.deploy_hex {
        if let Some(bytes) = fingerprint_hex(entry, hex, "deployment", warnings) {
            id.deploy_fp = Some(fingerprint_bytecode(&bytes));
            if entry.runtime_hex.is_none() {
                id.runtime_fp = extract_runtime(&bytes).map(|r| fingerprint_bytecode(&r));
            }
        }
    }
    if let Some(hex) = &entry.runtime_hex {
        if let Some(bytes) = fingerprint_hex(entry, hex, "runtime", warnings) {
            id.runtime_fp = Some(fingerprint_bytecode(&bytes));
        }
    }
    (id, record)
}

/// Expands entries into assessments, one per raw `(label, judgment)` pair.
///
/// An entry id seen again within a dataset gets an occurrence suffix on its
/// assessment ids, so nothing collapses before the exclusion pass. Output is
/// in canonical order.
pub fn canonicalize(entries: &[DatasetEntry]) -> Result<Canonical> {
    let mut out = Canonical::default();
    let mut seen: HashMap<(&str, &str, &str), u32> = HashMap::new();
    let mut sources: BTreeMap<Digest, SourceRecord> = BTreeMap::new();
    for entry in entries {
        let (identity, record) = entry_identity(entry, &mut out.warnings);
        if let Some(r) = record {
            sources.entry(r.source_fp).or_insert(r);
        }
        for ra in &entry.raw_assessments {
            let occ = seen
                .entry((&entry.dataset, &entry.entry_id, &ra.property_label))
                .and_modify(|n| *n += 1)
                .or_insert(1);
            out.assessments.push(Assessment {
                id: make_occurrence_id(&entry.dataset, &entry.entry_id, &ra.property_label, *occ)?,
                dataset: entry.dataset.clone(),
                entry_id: entry.entry_id.clone(),
                contract: identity.clone(),
                property_label: ra.property_label.clone(),
                judgment: ra.judgment,
                swc_id: None,
                dasp_id: None,
                ignored: false,
                ignore_reason: None,
            });
        }
    }
    sort_canonical(&mut out.assessments);
    out.sources = sources.into_values().collect();
    Ok(out)
}

/// Merges source catalogs, keeping the first record per fingerprint.
pub fn merge_sources<I: IntoIterator<Item = SourceRecord>>(records: I) -> Vec<SourceRecord> {
    let mut seen = BTreeSet::new();
    let mut out: Vec<SourceRecord> = records.into_iter().filter(|r| seen.insert(r.source_fp)).collect();
    out.sort_by_key(|r| r.source_fp);
    out
}
