//! Layout adapters: turn files into raw entries.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use regex::{Captures, Regex};
use serde_json::Value;

use super::manifest::*;
use super::{DatasetEntry, IngestReport, RawAssessment};
use crate::model::Judgment;

enum Data<'a> {
    Csv {
        headers: &'a HashMap<String, usize>,
        row: &'a csv::StringRecord,
    },
    Json(&'a Value),
    Path(&'a Captures<'a>),
}

struct Record<'a> {
    data: Data<'a>,
    path: &'a str,
    index: usize,
}

impl Record<'_> {
    fn get(&self, field: &str) -> Option<String> {
        if let Some(builtin) = field.strip_prefix('$') {
            let p = Path::new(self.path);
            return match builtin {
                "path" => Some(self.path.to_string()),
                "file" => p.file_name().map(|s| s.to_string_lossy().into_owned()),
                "stem" => p.file_stem().map(|s| s.to_string_lossy().into_owned()),
                "dir" => p.parent().map(|s| s.to_string_lossy().into_owned()),
                "index" => Some(self.index.to_string()),
                _ => None,
            };
        }
        match &self.data {
            Data::Csv { headers, row } => headers.get(field).and_then(|&i| row.get(i)).map(str::to_string),
            Data::Json(v) => v.pointer(field).and_then(json_scalar),
            Data::Path(caps) => caps.name(field).map(|m| m.as_str().to_string()),
        }
    }
}

fn json_scalar(v: &Value) -> Option<String> {
    match v {
        Value::Null => None,
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        other => Some(other.to_string()),
    }
}

struct Reader<'m> {
    manifest: &'m DatasetManifest,
    regexes: HashMap<String, Regex>,
    unmapped: BTreeMap<String, usize>,
}

impl<'m> Reader<'m> {
    fn regex(&mut self, pattern: &str) -> &Regex {
        self.regexes
            .entry(pattern.to_string())
            .or_insert_with(|| Regex::new(pattern).expect("validated with the manifest"))
    }

    fn select(&mut self, rec: &Record, sel: &Selector) -> Option<String> {
        let raw = rec.get(sel.from())?;
        let mut value = raw.trim().to_string();
        if let Some(p) = sel.pattern() {
            let caps = self.regex(p).captures(&value)?;
            value = caps.get(1).or_else(|| caps.get(0))?.as_str().to_string();
        }
        if value.is_empty() {
            return None;
        }
        Some(match sel.template() {
            Some(t) => t.replace("{}", &value),
            None => value,
        })
    }

    fn value(&mut self, rec: &Record, src: &ValueSource) -> Option<String> {
        match src {
            ValueSource::Constant(c) => Some(c.clone()),
            ValueSource::From(sel) => self.select(rec, sel),
        }
    }

    fn judgment(&mut self, token: &str) -> Judgment {
        self.manifest.judgment_for(token).unwrap_or_else(|| {
            *self.unmapped.entry(token.trim().to_string()).or_default() += 1;
            Judgment::Na
        })
    }

    fn raw(&mut self, label: &str, token: String) -> RawAssessment {
        RawAssessment {
            property_label: label.trim().to_string(),
            judgment: self.judgment(&token),
            token,
        }
    }

    fn entry(
        &mut self,
        rec: &Record,
        entry_sel: Option<&Selector>,
        contract: &ContractBinding,
        root: &Path,
        report: &mut IngestReport,
    ) -> DatasetEntry {
        let entry_id = match entry_sel {
            Some(sel) => self.select(rec, sel),
            None => Some(rec.path.to_string()),
        };
        let entry_id = entry_id.unwrap_or_else(|| {
            let fallback = format!("{}#{}", rec.path, rec.index);
            report.warn(format!("no entry id at {fallback}; using the position instead"));
            fallback
        });
        let dataset = self.manifest.name.clone();
        let mut pick = |sel: &Option<Selector>| sel.as_ref().and_then(|s| self.select(rec, s));
        let raw_contract_ref = pick(&contract.contract_ref).unwrap_or_else(|| entry_id.clone());
        let mut e = DatasetEntry {
            dataset,
            entry_id,
            raw_contract_ref,
            address: pick(&contract.address),
            source_path: pick(&contract.source_path),
            source_text: None,
            deploy_hex: pick(&contract.deploy_hex),
            runtime_hex: pick(&contract.runtime_hex),
            contract_name: pick(&contract.contract_name),
            raw_assessments: Vec::new(),
        };
        for (sel, slot) in [
            (&contract.deploy_hex_path, &mut e.deploy_hex),
            (&contract.runtime_hex_path, &mut e.runtime_hex),
        ] {
            if let Some(path) = sel.as_ref().and_then(|s| self.select(rec, s)) {
                match std::fs::read_to_string(root.join(&path)) {
                    Ok(text) => *slot = Some(text.trim().to_string()),
                    Err(err) => report.warn(format!("entry {:?}: {path:?} unreadable: {err}", e.entry_id)),
                }
            }
        }
        e
    }

    /// WIDE and SINGLE bindings read straight from the record.
    fn flat_assessments(&mut self, rec: &Record, binding: &AssessmentBinding, e: &mut DatasetEntry, report: &mut IngestReport) {
        match binding {
            AssessmentBinding::Wide { columns } => {
                for c in columns {
                    let token = rec.get(&c.from).unwrap_or_default();
                    let ra = self.raw(&c.label, token);
                    e.raw_assessments.push(ra);
                }
            }
            AssessmentBinding::Single { label, judgment } => {
                let Some(l) = self.value(rec, label) else {
                    report.warn(format!("entry {:?}: no property label", e.entry_id));
                    return;
                };
                let token = self.value(rec, judgment).unwrap_or_default();
                let ra = self.raw(&l, token);
                e.raw_assessments.push(ra);
            }
            AssessmentBinding::List { .. } | AssessmentBinding::Map { .. } => {
                unreachable!("nested bindings are limited to the structured layout")
            }
        }
    }
}

fn rel_path(root: &Path, path: &Path) -> String {
    path.strip_prefix(root)
        .unwrap_or(path)
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

fn walk(root: &Path) -> Vec<String> {
    walkdir::WalkDir::new(root)
        .sort_by_file_name()
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file())
        .map(|e| rel_path(root, e.path()))
        .collect()
}

fn list_files(root: &Path, set: &FileSet) -> Vec<String> {
    let mut files = set.files.clone();
    if let Some(p) = &set.file_pattern {
        let re = Regex::new(p).expect("validated with the manifest");
        for f in walk(root) {
            if re.is_match(&f) && !files.contains(&f) {
                files.push(f);
            }
        }
    }
    files
}

pub(super) fn read_entries(manifest: &DatasetManifest, root: &Path, report: &mut IngestReport) -> Vec<DatasetEntry> {
    let mut reader = Reader {
        manifest,
        regexes: HashMap::new(),
        unmapped: BTreeMap::new(),
    };
    let entries = match manifest.layout {
        Layout::Tabular => read_tabular(&mut reader, manifest.tabular.as_ref().unwrap(), root, report),
        Layout::Structured => read_structured(&mut reader, manifest.structured.as_ref().unwrap(), root, report),
        Layout::FilepathEncoded => read_filepath(&mut reader, manifest.filepath.as_ref().unwrap(), root, report),
    };
    for (token, n) in std::mem::take(&mut reader.unmapped) {
        report.warn(format!("judgment token {token:?} not in judgment_map ({n}x); read as NA"));
    }
    entries
}

fn referenced_columns(b: &TabularBinding) -> Vec<&str> {
    let c = &b.contract;
    let mut cols: Vec<&str> = [
        Some(&b.entry_id),
        c.contract_ref.as_ref(),
        c.address.as_ref(),
        c.source_path.as_ref(),
        c.deploy_hex.as_ref(),
        c.runtime_hex.as_ref(),
        c.deploy_hex_path.as_ref(),
        c.runtime_hex_path.as_ref(),
        c.contract_name.as_ref(),
    ]
    .into_iter()
    .flatten()
    .map(Selector::from)
    .collect();
    match &b.assessments {
        AssessmentBinding::Wide { columns } => cols.extend(columns.iter().map(|c| c.from.as_str())),
        AssessmentBinding::Single { label, judgment } => {
            for v in [label, judgment] {
                if let ValueSource::From(s) = v {
                    cols.push(s.from());
                }
            }
        }
        _ => {}
    }
    cols.retain(|c| !c.starts_with('$'));
    cols
}

fn read_tabular(r: &mut Reader, b: &TabularBinding, root: &Path, report: &mut IngestReport) -> Vec<DatasetEntry> {
    let mut out = Vec::new();
    for file in list_files(root, &b.files) {
        let path = root.join(&file);
        let mut csv = match csv::ReaderBuilder::new()
            .delimiter(b.delimiter as u8)
            .flexible(true)
            .from_path(&path)
        {
            Ok(c) => c,
            Err(e) => {
                report.error(format!("{file}: {e}"));
                continue;
            }
        };
        let headers: HashMap<String, usize> = match csv.headers() {
            Ok(h) => h.iter().enumerate().map(|(i, h)| (h.trim().to_string(), i)).collect(),
            Err(e) => {
                report.error(format!("{file}: {e}"));
                continue;
            }
        };
        let missing: Vec<&str> = referenced_columns(b).into_iter().filter(|c| !headers.contains_key(*c)).collect();
        if !missing.is_empty() {
            report.error(format!("{file}: missing columns {missing:?}"));
            continue;
        }
        for (i, row) in csv.records().enumerate() {
            let row = match row {
                Ok(row) => row,
                Err(e) => {
                    report.error(format!("{file}: row {}: {e}", i + 1));
                    continue;
                }
            };
            if row.iter().all(|f| f.trim().is_empty()) {
                continue;
            }
            let rec = Record {
                data: Data::Csv { headers: &headers, row: &row },
                path: &file,
                index: i + 1,
            };
            let mut e = r.entry(&rec, Some(&b.entry_id), &b.contract, root, report);
            r.flat_assessments(&rec, &b.assessments, &mut e, report);
            out.push(e);
        }
    }
    out
}

fn read_structured(r: &mut Reader, b: &StructuredBinding, root: &Path, report: &mut IngestReport) -> Vec<DatasetEntry> {
    let mut out = Vec::new();
    for file in list_files(root, &b.files) {
        let doc: Value = match std::fs::read_to_string(root.join(&file))
            .map_err(|e| e.to_string())
            .and_then(|t| serde_json::from_str(&t).map_err(|e| e.to_string()))
        {
            Ok(v) => v,
            Err(e) => {
                report.error(format!("{file}: {e}"));
                continue;
            }
        };
        let items: Vec<&Value> = match doc.pointer(&b.entries) {
            Some(Value::Array(a)) => a.iter().collect(),
            Some(v @ Value::Object(_)) => vec![v],
            _ => {
                report.error(format!("{file}: no entry array or object at {:?}", b.entries));
                continue;
            }
        };
        for (i, item) in items.into_iter().enumerate() {
            let rec = Record {
                data: Data::Json(item),
                path: &file,
                index: i + 1,
            };
            let mut e = r.entry(&rec, Some(&b.entry_id), &b.contract, root, report);
            match &b.assessments {
                AssessmentBinding::List { list, label, judgment } => match item.pointer(list) {
                    Some(Value::Array(sub)) => {
                        for s in sub {
                            let srec = Record {
                                data: Data::Json(s),
                                path: &file,
                                index: i + 1,
                            };
                            let Some(l) = r.value(&srec, label) else {
                                report.warn(format!("entry {:?}: list item without label", e.entry_id));
                                continue;
                            };
                            let token = r.value(&srec, judgment).unwrap_or_default();
                            let ra = r.raw(&l, token);
                            e.raw_assessments.push(ra);
                        }
                    }
                    None => {}
                    Some(_) => report.warn(format!("entry {:?}: {list:?} is not an array", e.entry_id)),
                },
                AssessmentBinding::Map { map } => match item.pointer(map) {
                    Some(Value::Object(m)) => {
                        for (label, token) in m {
                            let ra = r.raw(label, json_scalar(token).unwrap_or_default());
                            e.raw_assessments.push(ra);
                        }
                    }
                    None => {}
                    Some(_) => report.warn(format!("entry {:?}: {map:?} is not an object", e.entry_id)),
                },
                flat => r.flat_assessments(&rec, flat, &mut e, report),
            }
            out.push(e);
        }
    }
    out
}

fn read_filepath(r: &mut Reader, b: &FilepathBinding, root: &Path, report: &mut IngestReport) -> Vec<DatasetEntry> {
    if !root.is_dir() {
        report.error(format!("{}: not a directory", root.display()));
        return Vec::new();
    }
    let re = Regex::new(&b.path_pattern).expect("validated with the manifest");
    let mut out = Vec::new();
    for (i, file) in walk(root).into_iter().enumerate() {
        let Some(caps) = re.captures(&file) else { continue };
        let rec = Record {
            data: Data::Path(&caps),
            path: &file,
            index: i + 1,
        };
        let mut e = r.entry(&rec, b.entry_id.as_ref(), &b.contract, root, report);
        match b.content {
            FileContent::Source => {
                if e.source_path.is_none() {
                    e.source_path = Some(file.clone());
                }
            }
            FileContent::DeployHex | FileContent::RuntimeHex => match std::fs::read_to_string(root.join(&file)) {
                Ok(text) => {
                    let slot = if b.content == FileContent::DeployHex {
                        &mut e.deploy_hex
                    } else {
                        &mut e.runtime_hex
                    };
                    *slot = Some(text.trim().to_string());
                }
                Err(err) => report.error(format!("{file}: {err}")),
            },
        }
        r.flat_assessments(&rec, &b.assessments, &mut e, report);
        out.push(e);
    }
    out
}
