//! Contract matching, exclusion of unusable/redundant/contradictory assessments,
//! and cross-dataset match groups.
//!
//! Two assessments refer to the same contract when they share a match key:
//!
//! * the same address on the same chain;
//! * the same source fingerprint and contract name;
//! * the same deployment-code fingerprint, unless the weakness is only
//!   comparable on source;
//! * the same runtime-code fingerprint, if the weakness is guaranteed to be
//!   visible in runtime code.
//!
//! Within a dataset, the exclusion pass marks (never deletes) assessments in a
//! fixed order: invalid contract reference, n/a judgment, then per level
//! (own id, address, source, deployment code, runtime code) contradictions and
//! duplicates. Across datasets nothing is excluded; shared keys only build
//! match groups for the overlap and disagreement reports.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_store, Assessment, ChainId, IgnoreReason, Visibility};
use crate::taxonomy::visibility_of;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MatchLevel {
    Address,
    Source,
    Deploy,
    Runtime,
}

impl MatchLevel {
    pub const ALL: [MatchLevel; 4] = [
        MatchLevel::Address,
        MatchLevel::Source,
        MatchLevel::Deploy,
        MatchLevel::Runtime,
    ];

    fn conflict_reason(self) -> IgnoreReason {
        match self {
            MatchLevel::Address => IgnoreReason::ConflictForAddress,
            MatchLevel::Source => IgnoreReason::ConflictForSource,
            MatchLevel::Deploy => IgnoreReason::ConflictForBytecode,
            MatchLevel::Runtime => IgnoreReason::ConflictForRuntime,
        }
    }

    fn duplicate_reason(self) -> IgnoreReason {
        match self {
            MatchLevel::Address => IgnoreReason::DuplicateAddress,
            MatchLevel::Source => IgnoreReason::DuplicateSource,
            MatchLevel::Deploy => IgnoreReason::DuplicateBytecode,
            MatchLevel::Runtime => IgnoreReason::DuplicateRuntime,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MatchKey {
    pub level: MatchLevel,
    pub key: String,
}

/// Keys under which `a` may be matched with other assessments.
///
/// ```
/// use scgt::consolidate::{match_keys, MatchLevel};
/// # use scgt::*;
/// let mut a = Assessment {
///     id: "Z:e:p".into(), dataset: "Z".into(), entry_id: "e".into(),
///     contract: ContractIdentity {
///         address: normalize_address("0x00000000000000000000000000000000000000aa"),
///         chain: Some(ChainId::Mainnet),
///         deploy_fp: Some(Digest::of(b"deploy")),
///         runtime_fp: Some(Digest::of(b"runtime")),
///         ..Default::default()
///     },
///     property_label: "p".into(), judgment: Judgment::Positive,
///     swc_id: Some(101), dasp_id: Some(3), ignored: false, ignore_reason: None,
/// };
/// let levels: Vec<_> = match_keys(&a).into_iter().map(|k| k.level).collect();
/// assert_eq!(levels, [MatchLevel::Address, MatchLevel::Deploy]);
/// ```
pub fn match_keys(a: &Assessment) -> Vec<MatchKey> {
    let c = &a.contract;
    let visibility = visibility_of(a.swc_id.unwrap_or(0));
    let mut keys = Vec::with_capacity(4);
    if let (Some(addr), Some(chain)) = (c.address, c.chain) {
        if chain != ChainId::Unknown {
            keys.push(MatchKey {
                level: MatchLevel::Address,
                key: format!("{chain}:{addr}"),
            });
        }
    }
    if let Some(fp) = c.source_fp {
        keys.push(MatchKey {
            level: MatchLevel::Source,
            key: format!("{fp}:{}", c.contract_name.as_deref().unwrap_or("")),
        });
    }
    if let Some(fp) = c.deploy_fp {
        if visibility != Visibility::SourceOnly {
            keys.push(MatchKey {
                level: MatchLevel::Deploy,
                key: fp.to_hex(),
            });
        }
    }
    if let Some(fp) = c.runtime_fp {
        if visibility == Visibility::Runtime {
            keys.push(MatchKey {
                level: MatchLevel::Runtime,
                key: fp.to_hex(),
            });
        }
    }
    keys
}

/// What "the same property" means when grouping: the mapped SWC class, or the
/// raw label for assessments without one.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PropertyKey {
    Swc(u16),
    Label(String),
}

impl PropertyKey {
    pub fn of(a: &Assessment) -> Self {
        match a.mapped_swc() {
            Some(swc) => PropertyKey::Swc(swc),
            None => PropertyKey::Label(a.property_label.clone()),
        }
    }
}

impl fmt::Display for PropertyKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PropertyKey::Swc(id) => write!(f, "SWC-{id}"),
            PropertyKey::Label(l) => write!(f, "label:{l}"),
        }
    }
}

/// "Keep first" order: entry id, property label, occurrence, id.
pub fn canonical_cmp(a: &Assessment, b: &Assessment) -> Ordering {
    (&a.entry_id, &a.property_label, a.occurrence(), &a.id).cmp(&(
        &b.entry_id,
        &b.property_label,
        b.occurrence(),
        &b.id,
    ))
}

/// Marks groups of still-retained assessments that share `key` within a dataset.
fn mark_groups<K, F>(assessments: &mut [Assessment], conflict: IgnoreReason, duplicate: IgnoreReason, key: F)
where
    K: std::hash::Hash + Eq,
    F: Fn(&Assessment) -> Option<K>,
{
    let mut groups: HashMap<(String, PropertyKey, K), Vec<usize>> = HashMap::new();
    for (i, a) in assessments.iter().enumerate() {
        if a.ignored {
            continue;
        }
        if let Some(k) = key(a) {
            groups
                .entry((a.dataset.clone(), PropertyKey::of(a), k))
                .or_default()
                .push(i);
        }
    }
    for members in groups.into_values() {
        if members.len() < 2 {
            continue;
        }
        let first = assessments[members[0]].judgment;
        let contradictory = members
            .iter()
            .any(|&i| assessments[i].judgment.opposes(first));
        if contradictory {
            for &i in &members {
                assessments[i].ignore(conflict);
            }
        } else {
            let keep = *members
                .iter()
                .min_by(|&&x, &&y| canonical_cmp(&assessments[x], &assessments[y]))
                .expect("non-empty group");
            for &i in &members {
                if i != keep {
                    assessments[i].ignore(duplicate);
                }
            }
        }
    }
}

/// Marks invalid, n/a, contradictory and duplicate assessments in place.
///
/// Already-ignored assessments keep their reason. The pass is idempotent and
/// independent of input order.
pub fn exclusion_pass(assessments: &mut [Assessment]) {
    for a in assessments.iter_mut().filter(|a| !a.ignored) {
        if !a.contract.is_usable() {
            a.ignore(IgnoreReason::InvalidContractReference);
        }
    }
    for a in assessments.iter_mut().filter(|a| !a.ignored) {
        if a.judgment == crate::model::Judgment::Na {
            a.ignore(IgnoreReason::StatusNa);
        }
    }
    mark_groups(
        assessments,
        IgnoreReason::ContradictionForId,
        IgnoreReason::DuplicateOwnId,
        |a| Some(a.entry_id.clone()),
    );
    for level in MatchLevel::ALL {
        mark_groups(assessments, level.conflict_reason(), level.duplicate_reason(), |a| {
            match_keys(a)
                .into_iter()
                .find(|k| k.level == level)
                .map(|k| k.key)
        });
    }
}

/// Assessments of one property transitively linked by match keys.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchGroup {
    pub group_id: u32,
    pub property: String,
    pub members: Vec<String>,
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller index becomes root so roots are stable
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.0[hi] = lo;
        }
    }
}

/// All assessments (retained and ignored) plus match groups across datasets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConsolidatedStore {
    /// Canonical order: dataset, entry id, property label, occurrence.
    pub assessments: Vec<Assessment>,
    pub groups: Vec<MatchGroup>,
    group_of: HashMap<String, u32>,
}

impl ConsolidatedStore {
    /// Builds a store from finished assessments: sorts canonically and computes groups.
    ///
    /// Assessments with an invalid contract reference belong to no group.
    pub fn from_assessments(mut assessments: Vec<Assessment>) -> Result<Self> {
        crate::model::sort_canonical(&mut assessments);
        validate_store(&assessments)?;
        let groups = build_groups(&assessments);
        Ok(Self::with_groups(assessments, groups))
    }

    fn with_groups(assessments: Vec<Assessment>, groups: Vec<MatchGroup>) -> Self {
        let group_of = groups
            .iter()
            .flat_map(|g| g.members.iter().map(move |m| (m.clone(), g.group_id)))
            .collect();
        ConsolidatedStore {
            assessments,
            groups,
            group_of,
        }
    }

    pub fn group_of(&self, assessment_id: &str) -> Option<u32> {
        self.group_of.get(assessment_id).copied()
    }

    pub fn retained(&self) -> impl Iterator<Item = &Assessment> {
        self.assessments.iter().filter(|a| a.is_retained())
    }

    pub fn ignored(&self) -> impl Iterator<Item = &Assessment> {
        self.assessments.iter().filter(|a| a.ignored)
    }

    /// Dataset names in sorted order.
    pub fn datasets(&self) -> Vec<String> {
        let mut v: Vec<String> = self.assessments.iter().map(|a| a.dataset.clone()).collect();
        v.sort();
        v.dedup();
        v
    }

    pub fn write_jsonl<W: Write, G: Write>(&self, mut assessments: W, mut groups: G) -> Result<()> {
        for a in &self.assessments {
            serde_json::to_writer(&mut assessments, a)?;
            assessments
                .write_all(b"\n")
                .map_err(|e| Error::io("<assessments>", e))?;
        }
        for g in &self.groups {
            serde_json::to_writer(&mut groups, g)?;
            groups.write_all(b"\n").map_err(|e| Error::io("<groups>", e))?;
        }
        Ok(())
    }

    /// Reads `assessments.jsonl` and `groups.jsonl`.
    pub fn load(assessments_path: &Path, groups_path: &Path) -> Result<Self> {
        let mut assessments: Vec<Assessment> = read_jsonl(assessments_path)?;
        let groups: Vec<MatchGroup> = read_jsonl(groups_path)?;
        crate::model::sort_canonical(&mut assessments);
        validate_store(&assessments)?;
        Ok(Self::with_groups(assessments, groups))
    }
}

/// Reads one JSON value per non-blank line, reporting the line number on failure.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

fn build_groups(assessments: &[Assessment]) -> Vec<MatchGroup> {
    let mut uf = UnionFind::new(assessments.len());
    let mut first_with: HashMap<(PropertyKey, MatchKey), usize> = HashMap::new();
    let linkable = |a: &Assessment| a.ignore_reason != Some(IgnoreReason::InvalidContractReference);
    for (i, a) in assessments.iter().enumerate() {
        if !linkable(a) {
            continue;
        }
        let prop = PropertyKey::of(a);
        for key in match_keys(a) {
            match first_with.entry((prop.clone(), key)) {
                std::collections::hash_map::Entry::Occupied(e) => uf.union(*e.get(), i),
                std::collections::hash_map::Entry::Vacant(e) => {
                    e.insert(i);
                }
            }
        }
    }
    // Roots are minimal indices, and input is canonically sorted, so ordering
    // groups by root is ordering by first member.
    let mut by_root: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, a) in assessments.iter().enumerate() {
        if linkable(a) {
            by_root.entry(uf.find(i)).or_default().push(i);
        }
    }
    by_root
        .into_values()
        .enumerate()
        .map(|(n, members)| MatchGroup {
            group_id: n as u32 + 1,
            property: PropertyKey::of(&assessments[members[0]]).to_string(),
            members: members.iter().map(|&i| assessments[i].id.clone()).collect(),
        })
        .collect()
}

/// Exclusion pass followed by grouping.
pub fn consolidate(mut assessments: Vec<Assessment>) -> Result<ConsolidatedStore> {
    exclusion_pass(&mut assessments);
    ConsolidatedStore::from_assessments(assessments)
}
