//! Annotator recruitment and annotation-quality analytics for crowdsourced
//! summarization evaluation.
//!
//! The crate reads batch-results exports, grades qualification submissions,
//! tracks endurance, measures inter-annotator agreement, estimates annotator
//! competence, resamples pass rates, flags rushed submissions, generates
//! synthetic populations and talks to an LLM judge.
//!
//! Data-parallel loops run on rayon when the `parallel` feature is enabled
//! (the default). Every random draw comes from a seeded stream keyed by
//! iteration, so results are identical with and without the feature.

pub mod agreement;
pub mod error;
pub mod ingest;
pub mod llmjudge;
pub mod mace;
pub mod matrix;
pub mod par;
pub mod pipeline;
pub mod rng;
pub mod stats;
pub mod synth;
pub mod timing;

pub use error::{Error, Result};
pub use ingest::{AnnotationRecord, ScaleDescriptor, ScaleKind, TaskSpec};
pub use matrix::{Item, RatingMatrix};

/// Toolkit version embedded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
