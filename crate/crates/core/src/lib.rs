//! Alignment between language-model answer likelihoods and the distractors
//! students actually choose on multiple-choice questions.
//!
//! The pipeline is: parse and filter a dataset ([`dataset`]), score every
//! option through a backend ([`backend`], [`scoring`]), correlate model and
//! student preferences over distractors ([`distractor_correlation`]),
//! characterize wrong answers ([`error_alignment`]) and emit tables
//! ([`report`]).
//!
//! Numeric routines are generic over [`num::Real`]; the aliases below fix
//! the scalar for the common cases.

pub mod backend;
pub mod dataset;
pub mod distractor_correlation;
pub mod error_alignment;
pub mod num;
pub mod report;
pub mod scoring;
pub mod stats;

pub use backend::{ModelSpec, ScoreCache, Scorer, ScoringBackend, Variant};
pub use dataset::{FilterCriteria, McqItem, McqQuestion, StudentDistribution};
pub use distractor_correlation::{Aggregation, CorrelationMethod};
pub use num::Real;
pub use scoring::Approach;
pub use stats::Coefficient;

pub type LikelihoodVector64 = scoring::LikelihoodVector<f64>;
pub type LikelihoodVectorF32 = scoring::LikelihoodVector<f32>;
pub type ChoiceProbabilities64 = scoring::ChoiceProbabilities<f64>;
pub type ChoiceProbabilitiesF32 = scoring::ChoiceProbabilities<f32>;
pub type CorrelationSummary64 = distractor_correlation::CorrelationSummary<f64>;
pub type CorrelationSummaryF32 = distractor_correlation::CorrelationSummary<f32>;
pub type AlignmentSummary64 = error_alignment::AlignmentSummary<f64>;
pub type AlignmentSummaryF32 = error_alignment::AlignmentSummary<f32>;
pub type DistractorPoints64 = distractor_correlation::DistractorPoints<f64>;
