//! Site-level detection of LLM-dominant websites.
//!
//! Pages are filtered down to content a text detector can judge reliably
//! (main-content extraction, cross-page boilerplate removal, quality gates),
//! scored through a pluggable detector protocol, and aggregated into a
//! per-site vector of score deciles that a linear SVM classifies.
//!
//! Around that core sit the supporting pieces: reproducible hash-based
//! sampling, a polite crawler, longitudinal and monetization analyses, and a
//! synthetic site generator used for desk-scale experiments.

pub mod analyze;
pub mod classify;
pub mod corpus;
pub mod crawl;
pub mod extract;
pub mod pipeline;
pub mod quality;
pub mod sample;
pub mod scorer;
pub mod sitegen;
pub mod synth;

pub use classify::{decile_vector, predict, train_svm, DecileVector, LabeledSite, SiteGroup, SiteLabel, SvmModel};
pub use corpus::{PageRecord, PageSource, SiteSample};
pub use quality::{assess_text, ComplianceResult, CompliancePolicy};
pub use scorer::{MockScorer, RemoteScorer, Scorer};

