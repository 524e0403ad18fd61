//! Cross-lingual transfer scoring with the Learning Quotient (LQ).
//!
//! The crate ingests zero-shot and few-shot evaluation scores, computes LQ values and
//! matrices, ranks and groups them, and recommends a model class for a target language
//! through a small rule engine with an explainable trace.

pub mod analysis;
pub mod cli;
pub mod harness;
pub mod lq;
pub mod recommender;
pub mod registry;
pub mod report;
pub mod scores;
mod tsv;

pub use lq::{learning_quotient, lq_for_pair, lq_matrix, simplified_lq, LqInputs, LqMatrix, LqResult};
pub use registry::{LanguageRecord, Registry, ResourceClass};
pub use scores::{EvalRecord, MetricKind, ScoreStore, Task, TransferProfile};

/// Crate-level error that prefixes each module's error with the module it came from.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("registry: {0}")]
    Registry(#[from] registry::RegistryError),
    #[error("scores: {0}")]
    Scores(#[from] scores::ScoreError),
    #[error("lq: {0}")]
    Lq(#[from] lq::LqError),
    #[error("analysis: {0}")]
    Analysis(#[from] analysis::AnalysisError),
    #[error("recommender: {0}")]
    Recommender(#[from] recommender::RecommenderError),
    #[error("harness: {0}")]
    Harness(#[from] harness::HarnessError),
    #[error("report: {0}")]
    Report(#[from] report::ReportError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
