//! Consolidation of smart-contract weakness ground-truth datasets.
//!
//! The pipeline runs in stages, each a plain function over canonical records:
//!
//! 1. [`ingest`] turns each original dataset into [`Assessment`]s via a manifest.
//! 2. [`resolve`] completes contract identities from a chain cache.
//! 3. [`consolidate`] maps labels to SWC/DASP classes, matches contracts and
//!    marks duplicates and contradictions.
//! 4. [`report`] derives coverage, overlap, disagreement, exclusion, variability
//!    and data-quality tables from the consolidated store.
//!
//! Fingerprinting lives in [`source`] and [`bytecode`].

pub mod bytecode;
pub mod consolidate;
pub mod error;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod report;
pub mod resolve;
pub mod source;
pub mod taxonomy;

pub use error::{Error, ErrorKind, Result};
pub use model::{
    make_assessment_id, normalize_address, Address, Assessment, ChainId, ContractIdentity, Digest,
    IgnoreReason, Judgment, Visibility,
};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/manifests.md")]
    mod manifests {}
    #[doc = include_str!("../../../book/src/fingerprints.md")]
    mod fingerprints {}
    #[doc = include_str!("../../../book/src/resolution.md")]
    mod resolution {}
    #[doc = include_str!("../../../book/src/consolidation.md")]
    mod consolidation {}
    #[doc = include_str!("../../../book/src/reports.md")]
    mod reports {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
