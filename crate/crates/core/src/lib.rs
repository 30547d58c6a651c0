//! Ranking instability and brittleness of text-to-vector retrieval under
//! query perturbations.
//!
//! The pipeline is file based: perturbation suites are generated from
//! original queries ([`perturb`]), embedded externally into EMB1 files
//! ([`embedstore`]), ranked exactly against a corpus ([`ranker`]), compared
//! with rank-biased overlap and normalized into a brittleness index
//! ([`metrics`]), and aggregated into summary tables and a fixed-effects
//! regression ([`stats`]). [`pipeline`] drives each stage from files.

pub mod config;
pub mod embedstore;
pub mod metrics;
pub mod perturb;
pub mod pipeline;
pub mod ranker;
pub mod stats;
pub mod table;

pub use embedstore::{EmbeddingStore, PerturbationClass, QueryRecord};
pub use metrics::{MetricsConfig, MetricsRecord, OverlapMode, RboMode};
pub use perturb::{PerturbationSpec, PerturbationSuite, PerturbationType, Perturber};
pub use ranker::RankedList;
