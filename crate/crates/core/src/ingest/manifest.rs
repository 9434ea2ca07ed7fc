use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Judgment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DatasetGroup {
    Wild,
    Crafted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Layout {
    /// CSV files, one entry per row.
    Tabular,
    /// JSON files holding an entry array or one entry object each.
    Structured,
    /// One entry per file; weakness and judgment encoded in the path.
    FilepathEncoded,
}

/// Where a value comes from within a record, plus optional extraction.
///
/// `from` names a CSV column, a JSON pointer (`/a/b`) or a named capture group
/// of the path pattern, depending on the layout. Built-ins `$path`, `$file`,
/// `$stem` and `$dir` refer to the file the record came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Selector {
    Field(String),
    Spec {
        from: String,
        /// Regex applied to the value; capture group 1 (or the whole match) is kept.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pattern: Option<String>,
        /// Output template; `{}` is replaced by the value.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        template: Option<String>,
    },
}

impl Selector {
    pub fn from(&self) -> &str {
        match self {
            Selector::Field(f) => f,
            Selector::Spec { from, .. } => from,
        }
    }

    pub fn pattern(&self) -> Option<&str> {
        match self {
            Selector::Field(_) => None,
            Selector::Spec { pattern, .. } => pattern.as_deref(),
        }
    }

    pub fn template(&self) -> Option<&str> {
        match self {
            Selector::Field(_) => None,
            Selector::Spec { template, .. } => template.as_deref(),
        }
    }
}

/// A value that is either read from the record or fixed for the whole dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueSource {
    From(Selector),
    Constant(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelColumn {
    pub from: String,
    pub label: String,
}

/// How a record yields `(property label, judgment token)` pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "SCREAMING_SNAKE_CASE", deny_unknown_fields)]
pub enum AssessmentBinding {
    /// One field per weakness; the field holds the judgment token.
    Wide { columns: Vec<LabelColumn> },
    /// One assessment per record.
    Single {
        label: ValueSource,
        judgment: ValueSource,
    },
    /// A JSON array of assessment objects (structured layout only).
    List {
        list: String,
        label: ValueSource,
        judgment: ValueSource,
    },
    /// A JSON object mapping label to token (structured layout only).
    Map { map: String },
}

/// Fields identifying the contract. Every selector is optional.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractBinding {
    /// Verbatim reference kept for traceability; defaults to the entry id.
    #[serde(default)]
    pub contract_ref: Option<Selector>,
    #[serde(default)]
    pub address: Option<Selector>,
    /// Path (relative to the dataset root) of a Solidity file.
    #[serde(default)]
    pub source_path: Option<Selector>,
    #[serde(default)]
    pub deploy_hex: Option<Selector>,
    #[serde(default)]
    pub runtime_hex: Option<Selector>,
    /// Path of a file holding deployment code as hex.
    #[serde(default)]
    pub deploy_hex_path: Option<Selector>,
    /// Path of a file holding runtime code as hex.
    #[serde(default)]
    pub runtime_hex_path: Option<Selector>,
    #[serde(default)]
    pub contract_name: Option<Selector>,
}

impl ContractBinding {
    fn selectors(&self) -> impl Iterator<Item = (&'static str, &Selector)> {
        [
            ("contract_ref", &self.contract_ref),
            ("address", &self.address),
            ("source_path", &self.source_path),
            ("deploy_hex", &self.deploy_hex),
            ("runtime_hex", &self.runtime_hex),
            ("deploy_hex_path", &self.deploy_hex_path),
            ("runtime_hex_path", &self.runtime_hex_path),
            ("contract_name", &self.contract_name),
        ]
        .into_iter()
        .filter_map(|(n, s)| s.as_ref().map(|s| (n, s)))
    }
}

/// Files of a dataset: explicit relative paths and/or a regex over relative paths.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSet {
    #[serde(default)]
    pub files: Vec<String>,
    #[serde(default)]
    pub file_pattern: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularBinding {
    #[serde(flatten)]
    pub files: FileSet,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    pub entry_id: Selector,
    #[serde(default)]
    pub contract: ContractBinding,
    pub assessments: AssessmentBinding,
}

fn default_delimiter() -> char {
    ','
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructuredBinding {
    #[serde(flatten)]
    pub files: FileSet,
    /// JSON pointer to the entry array; empty means the document root.
    #[serde(default)]
    pub entries: String,
    pub entry_id: Selector,
    #[serde(default)]
    pub contract: ContractBinding,
    pub assessments: AssessmentBinding,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FileContent {
    #[default]
    Source,
    DeployHex,
    RuntimeHex,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilepathBinding {
    /// Regex over the `/`-separated path relative to the root; named groups become fields.
    pub path_pattern: String,
    #[serde(default)]
    pub content: FileContent,
    /// Defaults to `$path`.
    #[serde(default)]
    pub entry_id: Option<Selector>,
    #[serde(default)]
    pub contract: ContractBinding,
    pub assessments: AssessmentBinding,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixupSelector {
    #[serde(default)]
    pub entry_id: Option<String>,
    #[serde(default)]
    pub entry_id_pattern: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Relabel {
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelToken {
    pub label: String,
    pub token: String,
}

/// Entry fields a fixup may overwrite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixupField {
    ContractRef,
    Address,
    SourcePath,
    DeployHex,
    RuntimeHex,
    ContractName,
}

/// An in-memory patch applied to matching entries at read time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fixup {
    pub selector: FixupSelector,
    #[serde(default)]
    pub set: BTreeMap<FixupField, String>,
    #[serde(default)]
    pub relabel: Vec<Relabel>,
    #[serde(default)]
    pub set_judgment: Vec<LabelToken>,
    #[serde(default)]
    pub add_assessments: Vec<LabelToken>,
    pub reason: String,
}

/// Declarative description of one original dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub name: String,
    pub group: DatasetGroup,
    pub layout: Layout,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tabular: Option<TabularBinding>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structured: Option<StructuredBinding>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filepath: Option<FilepathBinding>,
    /// Dataset-local judgment tokens (compared after trimming).
    pub judgment_map: BTreeMap<String, Judgment>,
    #[serde(default)]
    pub fixups: Vec<Fixup>,
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::validation(field, message)
}

fn check_regex(field: &str, pattern: &str) -> Result<Regex> {
    Regex::new(pattern).map_err(|e| invalid(field, e.to_string()))
}

fn check_selector(field: &str, sel: &Selector, layout: Layout) -> Result<()> {
    if sel.from().is_empty() && layout != Layout::Structured {
        return Err(invalid(field, "empty field name"));
    }
    if layout == Layout::Structured && !sel.from().is_empty() && !sel.from().starts_with('/') && !sel.from().starts_with('$') {
        return Err(invalid(field, format!("JSON pointer must start with '/': {:?}", sel.from())));
    }
    if let Some(p) = sel.pattern() {
        check_regex(field, p)?;
    }
    if let Some(t) = sel.template() {
        if !t.contains("{}") {
            return Err(invalid(field, "template must contain {}"));
        }
    }
    Ok(())
}

impl DatasetManifest {
    pub fn from_json(text: &str) -> Result<Self> {
        let manifest: DatasetManifest =
            serde_json::from_str(text).map_err(|e| invalid("manifest", e.to_string()))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(invalid("name", "must not be empty"));
        }
        let present = [
            (Layout::Tabular, self.tabular.is_some()),
            (Layout::Structured, self.structured.is_some()),
            (Layout::FilepathEncoded, self.filepath.is_some()),
        ];
        for (layout, is_set) in present {
            if (layout == self.layout) != is_set {
                let name = match layout {
                    Layout::Tabular => "tabular",
                    Layout::Structured => "structured",
                    Layout::FilepathEncoded => "filepath",
                };
                let msg = if is_set {
                    "binding does not match layout"
                } else {
                    "binding required by layout is missing"
                };
                return Err(invalid(name, msg));
            }
        }
        if self.judgment_map.is_empty() {
            return Err(invalid("judgment_map", "must declare at least one token"));
        }
        let layout = self.layout;
        let (entry_id, contract, assessments, files) = match (&self.tabular, &self.structured, &self.filepath) {
            (Some(t), _, _) => (Some(&t.entry_id), &t.contract, &t.assessments, Some(&t.files)),
            (_, Some(s), _) => (Some(&s.entry_id), &s.contract, &s.assessments, Some(&s.files)),
            (_, _, Some(f)) => {
                check_regex("filepath.path_pattern", &f.path_pattern)?;
                (f.entry_id.as_ref(), &f.contract, &f.assessments, None)
            }
            _ => unreachable!("layout binding checked above"),
        };
        if let Some(files) = files {
            if files.files.is_empty() && files.file_pattern.is_none() {
                return Err(invalid("files", "list files or give a file_pattern"));
            }
            if let Some(p) = &files.file_pattern {
                check_regex("file_pattern", p)?;
            }
        }
        if let Some(sel) = entry_id {
            check_selector("entry_id", sel, layout)?;
        }
        for (name, sel) in contract.selectors() {
            check_selector(&format!("contract.{name}"), sel, layout)?;
        }
        self.validate_assessments(assessments)?;
        for (n, fixup) in self.fixups.iter().enumerate() {
            let field = format!("fixups[{n}]");
            if fixup.reason.trim().is_empty() {
                return Err(invalid(field, "every fixup needs a reason"));
            }
            match (&fixup.selector.entry_id, &fixup.selector.entry_id_pattern) {
                (None, None) => return Err(invalid(field, "selector matches nothing")),
                (_, Some(p)) => {
                    check_regex(&field, p)?;
                }
                _ => {}
            }
            for lt in fixup.set_judgment.iter().chain(&fixup.add_assessments) {
                self.check_token(&field, &lt.token)?;
            }
        }
        Ok(())
    }

    fn check_token(&self, field: &str, token: &str) -> Result<()> {
        if self.judgment_map.contains_key(token.trim()) {
            Ok(())
        } else {
            Err(invalid(field, format!("token {token:?} missing from judgment_map")))
        }
    }

    fn validate_assessments(&self, binding: &AssessmentBinding) -> Result<()> {
        let check_source = |field: &str, v: &ValueSource, is_judgment: bool| -> Result<()> {
            match v {
                ValueSource::From(sel) => check_selector(field, sel, self.layout),
                ValueSource::Constant(c) if is_judgment => self.check_token(field, c),
                ValueSource::Constant(c) if c.trim().is_empty() => Err(invalid(field, "empty label")),
                ValueSource::Constant(_) => Ok(()),
            }
        };
        match binding {
            AssessmentBinding::Wide { columns } => {
                if columns.is_empty() {
                    return Err(invalid("assessments.columns", "no weakness columns"));
                }
                let mut froms = HashSet::new();
                let mut labels = HashSet::new();
                for c in columns {
                    if !froms.insert(c.from.as_str()) {
                        return Err(invalid("assessments.columns", format!("column {:?} bound twice", c.from)));
                    }
                    if c.label.trim().is_empty() || !labels.insert(c.label.trim()) {
                        return Err(invalid("assessments.columns", format!("label {:?} empty or bound twice", c.label)));
                    }
                }
                Ok(())
            }
            AssessmentBinding::Single { label, judgment } => {
                check_source("assessments.label", label, false)?;
                check_source("assessments.judgment", judgment, true)
            }
            AssessmentBinding::List { list, label, judgment } => {
                if self.layout != Layout::Structured {
                    return Err(invalid("assessments.mode", "LIST needs the STRUCTURED layout"));
                }
                if !list.starts_with('/') {
                    return Err(invalid("assessments.list", "must be a JSON pointer"));
                }
                check_source("assessments.label", label, false)?;
                check_source("assessments.judgment", judgment, true)
            }
            AssessmentBinding::Map { map } => {
                if self.layout != Layout::Structured {
                    return Err(invalid("assessments.mode", "MAP needs the STRUCTURED layout"));
                }
                if !map.starts_with('/') {
                    return Err(invalid("assessments.map", "must be a JSON pointer"));
                }
                Ok(())
            }
        }
    }

    pub fn judgment_for(&self, token: &str) -> Option<Judgment> {
        self.judgment_map.get(token.trim()).copied()
    }
}

/// Reads and validates a manifest file.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    DatasetManifest::from_json(&text).map_err(|e| match e {
        Error::Validation { field, message } => Error::Validation {
            field: format!("{}: {field}", path.display()),
            message,
        },
        other => other,
    })
}
