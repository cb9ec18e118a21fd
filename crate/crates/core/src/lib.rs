//! Lexical simplification toolkit for small, locally hosted language models.
//!
//! The crate covers the whole batch side of the workflow:
//!
//! * [`corpus`]: picking context sentences and rare target words from an
//!   annotated corpus,
//! * [`prompting`]: few-shot and fine-tune prompt templates,
//! * [`gateway`]: completion backends returning token log-probabilities,
//!   plus extraction of the alternative word and its confidence score,
//! * [`distillation`]: teacher labelling, top-k confidence filtering and
//!   training-file export,
//! * [`dataset`]: gold data ingest, simplifiability selection, dev/test split,
//! * [`metrics`]: ACC@1@top1 / Potential@1 judging,
//! * [`safety`]: harm categories, score-threshold sweeps, AUC and
//!   beneficial-rate-under-harm-budget,
//! * [`annotations`]: the append-only human annotation log,
//! * [`latency`]: per-token latency profiles and response-time estimates.

pub mod annotations;
pub mod corpus;
pub mod dataset;
pub mod distillation;
pub mod gateway;
pub mod io;
pub mod latency;
pub mod metrics;
pub mod prompting;
pub mod safety;
pub mod service;
pub mod span;

pub use span::CharSpan;
