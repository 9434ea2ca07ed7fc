//! All stages in memory, for small corpora and tests.
//!
//! ```no_run
//! use std::path::Path;
//! use scgt::{ingest::load_manifest, pipeline, resolve::load_cache, taxonomy::MappingTable};
//!
//! let manifest = load_manifest(Path::new("data/Zeus/manifest.json")).unwrap();
//! let cache = load_cache(Path::new("cache.jsonl")).unwrap();
//! let run = pipeline::run(&[(manifest, "data/Zeus".into())], &cache, &MappingTable::shipped()).unwrap();
//! println!("{} retained", run.store.retained().count());
//! ```
use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::consolidate::{consolidate, ConsolidatedStore};
use crate::error::Result;
use crate::ingest::{
    canonicalize, ingest_dataset, merge_sources, ContentProfile, DatasetManifest, IngestReport, SourceRecord,
};
use crate::resolve::{resolve_all, ChainCache, ResolveReport};
use crate::taxonomy::{map_all, MappingTable};

#[derive(Debug, Clone)]
pub struct Run {
    pub store: ConsolidatedStore,
    pub sources: Vec<SourceRecord>,
    pub ingest: Vec<IngestReport>,
    pub resolve: ResolveReport,
}

impl Run {
    pub fn content_profiles(&self) -> BTreeMap<String, ContentProfile> {
        self.ingest.iter().map(|r| (r.dataset.clone(), r.content)).collect()
    }
}

/// Ingest every `(manifest, root)`, resolve against `cache` only, map and consolidate.
pub fn run(datasets: &[(DatasetManifest, PathBuf)], cache: &ChainCache, mapping: &MappingTable) -> Result<Run> {
    let mut assessments = Vec::new();
    let mut sources = Vec::new();
    let mut ingest = Vec::new();
    for (manifest, root) in datasets {
        let (entries, mut report) = ingest_dataset(manifest, root);
        let canonical = canonicalize(&entries)?;
        for w in canonical.warnings {
            report.warn(w);
        }
        assessments.extend(canonical.assessments);
        sources.extend(canonical.sources);
        ingest.push(report);
    }
    let mut chain = cache.clone();
    let resolve = resolve_all(&mut assessments, &mut chain, cache)?;
    map_all(&mut assessments, mapping)?;
    Ok(Run {
        store: consolidate(assessments)?,
        sources: merge_sources(sources),
        ingest,
        resolve,
    })
}
