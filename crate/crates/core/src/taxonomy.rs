//! Weakness taxonomy: SWC registry classes, DASP Top 10, and the per-dataset label mapping.
//!
//! The shipped mapping table (`assets/weakness_mapping.csv`) assigns each
//! dataset's own property label an SWC class and a DASP class. SWC id `0`
//! marks a property with no SWC counterpart. Ids 995–999 extend the registry
//! for weaknesses it lacks.
//!
//! Each SWC class also has a *visibility*: whether the weakness can be
//! compared on deployment or runtime bytecode, or only on source. Matching
//! uses it to decide which bytecode fingerprints may link two assessments.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Assessment, Visibility};

/// Mapping table shipped with the crate.
pub const SHIPPED_MAPPING_CSV: &str = include_str!("../assets/weakness_mapping.csv");

/// An SWC (or extension) class with its title and bytecode visibility.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SwcClass {
    pub id: u16,
    pub title: &'static str,
    /// `None` where no visibility has been established for the class.
    pub visibility: Option<Visibility>,
}

const fn class(id: u16, title: &'static str, visibility: Option<Visibility>) -> SwcClass {
    SwcClass {
        id,
        title,
        visibility,
    }
}

use Visibility::{Deployment as DEP, Runtime as RUN, SourceOnly as SRC};

/// Registry classes 100–136 plus the extension classes.
pub const SWC_CLASSES: &[SwcClass] = &[
    class(100, "Function Default Visibility", Some(SRC)),
    class(101, "Integer Overflow and Underflow", Some(DEP)),
    class(102, "Outdated Compiler Version", Some(SRC)),
    class(103, "Floating Pragma", Some(SRC)),
    class(104, "Unchecked Call Return Value", Some(DEP)),
    class(105, "Unprotected Ether Withdrawal", Some(RUN)),
    class(106, "Unprotected SELFDESTRUCT", Some(RUN)),
    class(107, "Reentrancy", Some(RUN)),
    class(108, "State Variable Default Visibility", Some(SRC)),
    class(109, "Uninitialized Storage Pointer", Some(SRC)),
    class(110, "Assert Violation", Some(DEP)),
    class(111, "Use of Deprecated Solidity Functions", Some(SRC)),
    class(112, "Delegatecall to Untrusted Callee", Some(DEP)),
    class(113, "DoS with Failed Call", Some(DEP)),
    class(114, "Transaction Order Dependence", Some(RUN)),
    class(115, "Authorization through tx.origin", Some(DEP)),
    class(116, "Block values as a proxy for time", Some(DEP)),
    class(117, "Signature Malleability", Some(DEP)),
    class(118, "Incorrect Constructor Name", Some(SRC)),
    class(119, "Shadowing State Variables", Some(SRC)),
    class(120, "Weak Sources of Randomness", Some(DEP)),
    class(121, "Missing Protection against Signature Replay Attacks", None),
    class(122, "Lack of Proper Signature Verification", None),
    class(123, "Requirement Violation", Some(DEP)),
    class(124, "Write to Arbitrary Storage Location", Some(RUN)),
    class(125, "Incorrect Inheritance Order", Some(SRC)),
    class(126, "Insufficient Gas Griefing", None),
    class(127, "Arbitrary Jump", Some(RUN)),
    class(128, "DoS With Block Gas Limit", Some(DEP)),
    class(129, "Typographical Error", Some(SRC)),
    class(130, "Right-To-Left-Override control character", Some(SRC)),
    class(131, "Presence of unused variables", Some(DEP)),
    class(132, "Unexpected Ether balance", Some(DEP)),
    class(133, "Hash Collisions", Some(DEP)),
    class(134, "Message call with hardcoded gas amount", Some(DEP)),
    class(135, "Code With No Effects", Some(DEP)),
    class(136, "Unencrypted Private Data On-Chain", Some(SRC)),
    class(995, "Short Address Attack", Some(RUN)),
    class(996, "Honey Pot", Some(RUN)),
    class(997, "Locked Ether", Some(DEP)),
    class(998, "Reserved Extension Class", None),
    class(999, "Other Arithmetic Issue", Some(DEP)),
];

/// DASP Top 10 class names, index `id - 1`.
pub const DASP_CLASSES: [&str; 10] = [
    "Reentrancy",
    "Access Control",
    "Arithmetic",
    "Unchecked Low Level Calls",
    "Denial of Service",
    "Bad Randomness",
    "Front Running",
    "Time Manipulation",
    "Short Addresses",
    "Other",
];

pub fn swc_class(id: u16) -> Option<&'static SwcClass> {
    SWC_CLASSES.iter().find(|c| c.id == id)
}

/// Whether `id` is an admissible SWC id in a mapping row (0, 100–136 or 995–999).
pub fn is_valid_swc_id(id: u16) -> bool {
    id == 0 || (100..=136).contains(&id) || (995..=999).contains(&id)
}

/// Visibility used for matching. Unknown classes and id 0 fall back to the most
/// conservative [`Visibility::SourceOnly`].
pub fn visibility_of(swc_id: u16) -> Visibility {
    swc_class(swc_id)
        .and_then(|c| c.visibility)
        .unwrap_or(Visibility::SourceOnly)
}

/// One row of the mapping table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeaknessMapping {
    pub dataset: String,
    pub property_label: String,
    pub swc_id: u16,
    pub dasp_id: u8,
    pub visibility: Visibility,
}

#[derive(Debug, Deserialize)]
struct MappingRow {
    dasp_id: u8,
    swc_id: u16,
    dataset: String,
    property_label: String,
    visibility: String,
}

/// Validated `(dataset, property_label) → class` table.
#[derive(Debug, Clone, Default)]
pub struct MappingTable {
    rows: BTreeMap<(String, String), WeaknessMapping>,
    /// Classes whose visibility was not established and defaulted to source-only.
    pub defaulted_visibility: Vec<u16>,
}

impl MappingTable {
    /// The table shipped with the crate.
    pub fn shipped() -> Self {
        Self::from_reader(SHIPPED_MAPPING_CSV.as_bytes()).expect("shipped mapping table is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file).map_err(|e| match e {
            Error::Validation { field, message } => Error::Validation {
                field: format!("{}: {field}", path.display()),
                message,
            },
            other => other,
        })
    }

    /// Parses and validates CSV with header `dasp_id,swc_id,dataset,property_label,visibility`.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut table = MappingTable::default();
        for (n, row) in csv.deserialize::<MappingRow>().enumerate() {
            let row = row?;
            let line = n + 2;
            let where_ = || format!("mapping row {line}");
            if !is_valid_swc_id(row.swc_id) {
                return Err(Error::validation(where_(), format!("swc_id {} out of range", row.swc_id)));
            }
            if !(1..=10).contains(&row.dasp_id) {
                return Err(Error::validation(where_(), format!("dasp_id {} out of range", row.dasp_id)));
            }
            if row.property_label.is_empty() || row.dataset.is_empty() {
                return Err(Error::validation(where_(), "empty dataset or property_label"));
            }
            let visibility = if row.swc_id == 0 {
                Visibility::SourceOnly
            } else {
                let declared: Visibility = row.visibility.parse()?;
                match swc_class(row.swc_id).and_then(|c| c.visibility) {
                    Some(known) if known != declared => {
                        return Err(Error::validation(
                            where_(),
                            format!(
                                "visibility {} contradicts class {} ({})",
                                declared.as_str(),
                                row.swc_id,
                                known.as_str()
                            ),
                        ))
                    }
                    Some(_) => declared,
                    None => {
                        if !table.defaulted_visibility.contains(&row.swc_id) {
                            log::warn!(
                                "SWC {} has no established bytecode visibility; using {}",
                                row.swc_id,
                                declared.as_str()
                            );
                            table.defaulted_visibility.push(row.swc_id);
                        }
                        declared
                    }
                }
            };
            let key = (row.dataset.clone(), row.property_label.clone());
            let mapping = WeaknessMapping {
                dataset: row.dataset,
                property_label: row.property_label,
                swc_id: row.swc_id,
                dasp_id: row.dasp_id,
                visibility,
            };
            if table.rows.insert(key, mapping).is_some() {
                return Err(Error::validation(where_(), "duplicate (dataset, property_label)"));
            }
        }
        table.defaulted_visibility.sort_unstable();
        Ok(table)
    }

    pub fn get(&self, dataset: &str, property_label: &str) -> Option<&WeaknessMapping> {
        self.rows
            .get(&(dataset.to_string(), property_label.to_string()))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &WeaknessMapping> {
        self.rows.values()
    }

    /// Labels of `dataset` known to the table.
    pub fn labels<'a>(&'a self, dataset: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.rows
            .values()
            .filter(move |m| m.dataset == dataset)
            .map(|m| m.property_label.as_str())
    }
}

/// Fills `swc_id`/`dasp_id` from the table. A missing row is a configuration error.
pub fn map_taxonomy(assessment: &mut Assessment, table: &MappingTable) -> Result<()> {
    let row = table
        .get(&assessment.dataset, &assessment.property_label)
        .ok_or_else(|| Error::MissingMapping {
            dataset: assessment.dataset.clone(),
            label: assessment.property_label.clone(),
        })?;
    assessment.swc_id = Some(row.swc_id);
    assessment.dasp_id = Some(row.dasp_id);
    Ok(())
}

/// Maps every assessment, reporting all missing labels at once.
pub fn map_all(assessments: &mut [Assessment], table: &MappingTable) -> Result<()> {
    let mut missing = std::collections::BTreeSet::new();
    for a in assessments.iter_mut() {
        if map_taxonomy(a, table).is_err() {
            missing.insert((a.dataset.clone(), a.property_label.clone()));
        }
    }
    match missing.len() {
        0 => Ok(()),
        1 => {
            let (dataset, label) = missing.into_iter().next().unwrap();
            Err(Error::MissingMapping { dataset, label })
        }
        _ => Err(Error::validation(
            "mapping",
            format!(
                "no mapping rows for {}",
                missing
                    .iter()
                    .map(|(d, l)| format!("{d} / {l:?}"))
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ContractIdentity, Judgment};

    fn assessment(dataset: &str, label: &str) -> Assessment {
        Assessment {
            id: format!("{dataset}:e:{label}"),
            dataset: dataset.into(),
            entry_id: "e".into(),
            contract: ContractIdentity::default(),
            property_label: label.into(),
            judgment: Judgment::Positive,
            swc_id: None,
            dasp_id: None,
            ignored: false,
            ignore_reason: None,
        }
    }

    #[test]
    fn shipped_table_loads() {
        let t = MappingTable::shipped();
        assert_eq!(t.len(), 181);
        assert_eq!(t.defaulted_visibility, vec![126]);
    }

    #[test]
    fn maps_labels() {
        let t = MappingTable::shipped();
        let mut a = assessment("Zeus", "Reentrancy");
        map_taxonomy(&mut a, &t).unwrap();
        assert_eq!((a.swc_id, a.dasp_id), (Some(107), Some(1)));

        let mut a = assessment("CodeSmells", "Hard Code Address");
        map_taxonomy(&mut a, &t).unwrap();
        assert_eq!((a.swc_id, a.dasp_id), (Some(0), Some(10)));
        assert_eq!(a.mapped_swc(), None);

        let mut a = assessment("Zeus", "NoSuchLabel");
        let err = map_taxonomy(&mut a, &t).unwrap_err();
        assert!(err.to_string().contains("NoSuchLabel"));
    }

    #[test]
    fn map_all_lists_every_missing_label() {
        let t = MappingTable::shipped();
        let mut v = vec![assessment("Zeus", "x"), assessment("Zeus", "y"), assessment("eThor", "reentrancy")];
        let err = map_all(&mut v, &t).unwrap_err().to_string();
        assert!(err.contains("\"x\"") && err.contains("\"y\""), "{err}");
    }

    #[test]
    fn rejects_bad_rows() {
        let header = "dasp_id,swc_id,dataset,property_label,visibility\n";
        for body in [
            "1,107,A,p,RUNTIME\n1,107,A,p,RUNTIME\n",
            "1,150,A,p,RUNTIME\n",
            "11,107,A,p,RUNTIME\n",
            "1,107,A,p,SOURCE_ONLY\n",
            "1,107,A,p,SOMETIMES\n",
        ] {
            assert!(MappingTable::from_reader(format!("{header}{body}").as_bytes()).is_err(), "{body}");
        }
        let ok = MappingTable::from_reader(format!("{header}10,0,A,p,\n").as_bytes()).unwrap();
        assert_eq!(ok.get("A", "p").unwrap().visibility, Visibility::SourceOnly);
    }

    #[test]
    fn visibility_defaults() {
        assert_eq!(visibility_of(107), Visibility::Runtime);
        assert_eq!(visibility_of(101), Visibility::Deployment);
        assert_eq!(visibility_of(103), Visibility::SourceOnly);
        assert_eq!(visibility_of(126), Visibility::SourceOnly);
        assert_eq!(visibility_of(0), Visibility::SourceOnly);
    }
}
