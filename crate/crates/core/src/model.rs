//! Canonical records shared by every pipeline stage.
//!
//! An [`Assessment`] is the atomic unit of the corpus: one contract, one
//! property, one judgment. Everything downstream (matching, exclusion,
//! reports) works on lists of assessments serialized as JSON Lines.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Outcome of assessing one property on one contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Judgment {
    Positive,
    Negative,
    Na,
}

impl Judgment {
    /// `true` for a POSITIVE/NEGATIVE pair, the only combination that counts as a contradiction.
    pub fn opposes(self, other: Judgment) -> bool {
        matches!(
            (self, other),
            (Judgment::Positive, Judgment::Negative) | (Judgment::Negative, Judgment::Positive)
        )
    }
}

impl FromStr for Judgment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "POSITIVE" => Ok(Judgment::Positive),
            "NEGATIVE" => Ok(Judgment::Negative),
            "NA" | "N/A" => Ok(Judgment::Na),
            other => Err(Error::validation("judgment", format!("unknown judgment {other:?}"))),
        }
    }
}

/// Chains probed during resolution, in probe order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ChainId {
    Mainnet,
    Ropsten,
    Rinkeby,
    Unknown,
}

impl ChainId {
    /// Supported public chains in the order they are probed.
    pub const PROBE_ORDER: [ChainId; 3] = [ChainId::Mainnet, ChainId::Ropsten, ChainId::Rinkeby];

    pub fn as_str(self) -> &'static str {
        match self {
            ChainId::Mainnet => "MAINNET",
            ChainId::Ropsten => "ROPSTEN",
            ChainId::Rinkeby => "RINKEBY",
            ChainId::Unknown => "UNKNOWN",
        }
    }
}

impl fmt::Display for ChainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Canonical 20-byte chain address, rendered as 40 lowercase hex digits without `0x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Address([u8; 20]);

impl Address {
    pub fn from_bytes(bytes: [u8; 20]) -> Self {
        Address(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 20] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromStr for Address {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        normalize_address(s)
            .ok_or_else(|| Error::validation("address", format!("not a 20-byte address: {s:?}")))
    }
}

impl Serialize for Address {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parses a chain address leniently: optional `0x`/`0X`, surrounding whitespace, any case.
///
/// Returns `None` unless exactly 40 hex digits remain. Checksum casing is not validated.
pub fn normalize_address(raw: &str) -> Option<Address> {
    let s = raw.trim();
    let s = s
        .strip_prefix("0x")
        .or_else(|| s.strip_prefix("0X"))
        .unwrap_or(s);
    if s.len() != 40 || !s.bytes().all(|b| b.is_ascii_hexdigit()) {
        return None;
    }
    let mut out = [0u8; 20];
    hex::decode_to_slice(s, &mut out).ok()?;
    Some(Address(out))
}

/// 128-bit MD5 fingerprint, rendered as 32 lowercase hex digits.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Digest(pub [u8; 16]);

impl Digest {
    pub fn of(bytes: &[u8]) -> Self {
        use md5::Digest as _;
        Digest(md5::Md5::digest(bytes).into())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromStr for Digest {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut out = [0u8; 16];
        hex::decode_to_slice(s.trim(), &mut out)
            .map_err(|e| Error::validation("digest", format!("{s:?}: {e}")))?;
        Ok(Digest(out))
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Everything known about which contract an assessment refers to.
///
/// `chain` stays empty for an address that has not been through resolution yet;
/// resolution sets it to a concrete chain or to [`ChainId::Unknown`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractIdentity {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub address: Option<Address>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<ChainId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deployment_block: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_fp: Option<Digest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_fp_nopragma: Option<Digest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deploy_fp: Option<Digest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime_fp: Option<Digest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contract_name: Option<String>,
}

impl ContractIdentity {
    /// An identity is usable when at least one matchable reference is present.
    pub fn is_usable(&self) -> bool {
        self.address.is_some()
            || self.source_fp.is_some()
            || self.deploy_fp.is_some()
            || self.runtime_fp.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        if self.source_fp.is_some() && self.source_fp_nopragma.is_none() {
            return Err(Error::validation(
                "contract.source_fp_nopragma",
                "source_fp present without source_fp_nopragma",
            ));
        }
        if self.chain.is_some() && self.address.is_none() {
            return Err(Error::validation("contract.chain", "chain present without address"));
        }
        Ok(())
    }
}

/// Why an assessment is excluded from the consolidated corpus.
///
/// Variants are declared in the precedence order of the exclusion pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IgnoreReason {
    InvalidContractReference,
    StatusNa,
    ContradictionForId,
    ConflictForAddress,
    ConflictForSource,
    ConflictForBytecode,
    ConflictForRuntime,
    DuplicateOwnId,
    DuplicateAddress,
    DuplicateSource,
    DuplicateBytecode,
    DuplicateRuntime,
}

impl IgnoreReason {
    pub const ALL: [IgnoreReason; 12] = [
        IgnoreReason::InvalidContractReference,
        IgnoreReason::StatusNa,
        IgnoreReason::ContradictionForId,
        IgnoreReason::ConflictForAddress,
        IgnoreReason::ConflictForSource,
        IgnoreReason::ConflictForBytecode,
        IgnoreReason::ConflictForRuntime,
        IgnoreReason::DuplicateOwnId,
        IgnoreReason::DuplicateAddress,
        IgnoreReason::DuplicateSource,
        IgnoreReason::DuplicateBytecode,
        IgnoreReason::DuplicateRuntime,
    ];

    /// Serialized name, e.g. `DUPLICATE_SOURCE`.
    pub fn as_str(self) -> &'static str {
        match self {
            IgnoreReason::InvalidContractReference => "INVALID_CONTRACT_REFERENCE",
            IgnoreReason::StatusNa => "STATUS_NA",
            IgnoreReason::ContradictionForId => "CONTRADICTION_FOR_ID",
            IgnoreReason::ConflictForAddress => "CONFLICT_FOR_ADDRESS",
            IgnoreReason::ConflictForSource => "CONFLICT_FOR_SOURCE",
            IgnoreReason::ConflictForBytecode => "CONFLICT_FOR_BYTECODE",
            IgnoreReason::ConflictForRuntime => "CONFLICT_FOR_RUNTIME",
            IgnoreReason::DuplicateOwnId => "DUPLICATE_OWN_ID",
            IgnoreReason::DuplicateAddress => "DUPLICATE_ADDRESS",
            IgnoreReason::DuplicateSource => "DUPLICATE_SOURCE",
            IgnoreReason::DuplicateBytecode => "DUPLICATE_BYTECODE",
            IgnoreReason::DuplicateRuntime => "DUPLICATE_RUNTIME",
        }
    }

    /// Human-readable row label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            IgnoreReason::InvalidContractReference => "invalid contract reference",
            IgnoreReason::StatusNa => "status is na",
            IgnoreReason::ContradictionForId => "contradiction for id",
            IgnoreReason::ConflictForAddress => "conflict for address",
            IgnoreReason::ConflictForSource => "conflict for source",
            IgnoreReason::ConflictForBytecode => "conflict for bytecode",
            IgnoreReason::ConflictForRuntime => "conflict for runtime code",
            IgnoreReason::DuplicateOwnId => "duplicate own id",
            IgnoreReason::DuplicateAddress => "duplicate address",
            IgnoreReason::DuplicateSource => "duplicate source",
            IgnoreReason::DuplicateBytecode => "duplicate bytecode",
            IgnoreReason::DuplicateRuntime => "duplicate runtime",
        }
    }

    pub fn is_duplicate(self) -> bool {
        matches!(
            self,
            IgnoreReason::DuplicateOwnId
                | IgnoreReason::DuplicateAddress
                | IgnoreReason::DuplicateSource
                | IgnoreReason::DuplicateBytecode
                | IgnoreReason::DuplicateRuntime
        )
    }

    pub fn is_contradiction(self) -> bool {
        matches!(
            self,
            IgnoreReason::ContradictionForId
                | IgnoreReason::ConflictForAddress
                | IgnoreReason::ConflictForSource
                | IgnoreReason::ConflictForBytecode
                | IgnoreReason::ConflictForRuntime
        )
    }
}

impl fmt::Display for IgnoreReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for IgnoreReason {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        IgnoreReason::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::validation("ignore_reason", format!("unknown reason {s:?}")))
    }
}

/// Where a weakness class can be observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Visibility {
    /// Only comparable on Solidity source.
    SourceOnly,
    /// Visible in deployment code; may live exclusively in the constructor.
    Deployment,
    /// Visible in runtime code (and therefore in deployment code).
    Runtime,
}

impl Visibility {
    pub fn as_str(self) -> &'static str {
        match self {
            Visibility::SourceOnly => "SOURCE_ONLY",
            Visibility::Deployment => "DEPLOYMENT",
            Visibility::Runtime => "RUNTIME",
        }
    }
}

impl FromStr for Visibility {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "SOURCE_ONLY" | "" => Ok(Visibility::SourceOnly),
            "DEPLOYMENT" => Ok(Visibility::Deployment),
            "RUNTIME" => Ok(Visibility::Runtime),
            other => Err(Error::validation("visibility", format!("unknown visibility {other:?}"))),
        }
    }
}

/// One (contract, property, judgment) triple plus its consolidation status.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assessment {
    pub id: String,
    pub dataset: String,
    pub entry_id: String,
    pub contract: ContractIdentity,
    pub property_label: String,
    pub judgment: Judgment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub swc_id: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dasp_id: Option<u8>,
    #[serde(default)]
    pub ignored: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ignore_reason: Option<IgnoreReason>,
}

impl Assessment {
    pub fn ignore(&mut self, reason: IgnoreReason) {
        self.ignored = true;
        self.ignore_reason = Some(reason);
    }

    pub fn is_retained(&self) -> bool {
        !self.ignored
    }

    /// Mapped to a concrete SWC or extension class (not 0, not unmapped yet).
    pub fn mapped_swc(&self) -> Option<u16> {
        self.swc_id.filter(|&s| s != 0)
    }

    /// Which occurrence of `(dataset, entry_id)` this assessment came from (1-based).
    ///
    /// Datasets may list the same internal identifier several times; later
    /// occurrences carry a fourth id component.
    pub fn occurrence(&self) -> u32 {
        self.id
            .splitn(4, ':')
            .nth(3)
            .and_then(|s| s.parse().ok())
            .unwrap_or(1)
    }

    /// Key of the original dataset entry this assessment was expanded from.
    pub fn entry_key(&self) -> (&str, &str, u32) {
        (&self.dataset, &self.entry_id, self.occurrence())
    }

    pub fn validate(&self) -> Result<()> {
        if self.ignored != self.ignore_reason.is_some() {
            return Err(Error::validation(
                "ignore_reason",
                format!("{}: ignored flag and reason disagree", self.id),
            ));
        }
        if self.swc_id.is_some() != self.dasp_id.is_some() {
            return Err(Error::validation(
                "swc_id",
                format!("{}: swc_id and dasp_id must be set together", self.id),
            ));
        }
        if let Some(d) = self.dasp_id {
            if !(1..=10).contains(&d) {
                return Err(Error::validation("dasp_id", format!("{}: {d} out of range", self.id)));
            }
        }
        self.contract.validate()
    }
}

fn escape_component(s: &str) -> String {
    s.replace('%', "%25").replace(':', "%3A")
}

/// Builds the corpus-wide assessment id `{dataset}:{entry_id}:{property_label}`.
///
/// `:` and `%` inside components are percent-escaped so the id splits unambiguously.
///
/// ```
/// assert_eq!(scgt::make_assessment_id("A", "x:y", "p").unwrap(), "A:x%3Ay:p");
/// assert!(scgt::make_assessment_id("", "x", "p").is_err());
/// ```
pub fn make_assessment_id(dataset: &str, entry_id: &str, property_label: &str) -> Result<String> {
    for (name, value) in [
        ("dataset", dataset),
        ("entry_id", entry_id),
        ("property_label", property_label),
    ] {
        if value.trim().is_empty() {
            return Err(Error::validation(name, "must not be empty"));
        }
    }
    Ok(format!(
        "{}:{}:{}",
        escape_component(dataset),
        escape_component(entry_id),
        escape_component(property_label)
    ))
}

/// Like [`make_assessment_id`], appending `:{occurrence}` for repeated entry ids (occurrence ≥ 2).
pub fn make_occurrence_id(
    dataset: &str,
    entry_id: &str,
    property_label: &str,
    occurrence: u32,
) -> Result<String> {
    let base = make_assessment_id(dataset, entry_id, property_label)?;
    Ok(if occurrence <= 1 {
        base
    } else {
        format!("{base}:{occurrence}")
    })
}

/// Checks per-record invariants and id uniqueness over a whole store.
pub fn validate_store(assessments: &[Assessment]) -> Result<()> {
    let mut seen = HashSet::with_capacity(assessments.len());
    for a in assessments {
        a.validate()?;
        if !seen.insert(a.id.as_str()) {
            return Err(Error::DuplicateId(a.id.clone()));
        }
    }
    Ok(())
}

/// Canonical store order: dataset, entry id, property label, then id.
pub fn sort_canonical(assessments: &mut [Assessment]) {
    assessments.sort_by(|a, b| {
        (&a.dataset, &a.entry_id, &a.property_label, a.occurrence(), &a.id).cmp(&(
            &b.dataset,
            &b.entry_id,
            &b.property_label,
            b.occurrence(),
            &b.id,
        ))
    });
}
