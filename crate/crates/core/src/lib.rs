//! Lexical-trajectory scoring of sampled reasoning traces.
//!
//! A prompt is answered K times; each response is split into reasoning
//! steps, and eleven features describing how the steps evolve are combined
//! into a single failure score. Oracle interventions (Force, Remove) and an
//! evaluation harness measure how much a scorer depends on the visible final
//! answer.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod batch;
pub mod emr;
pub mod error;
pub mod eval;
pub mod features;
pub mod interventions;
pub mod scorer;
pub mod steps;
pub mod text;
pub mod trace;

pub use batch::{prepare_batch, prefix_len, PreparedSample, TraceScorer};
pub use emr::{emr_from_answers, emr_score, EmrScorer};
pub use error::{Result, TractError};
pub use features::{compute_features, Block, FeatureConfig, FeatureName, FeatureVector, NUM_FEATURES};
pub use interventions::{apply_condition, apply_force, apply_remove, Condition, RemoveOutcome};
pub use scorer::{
    fit_scaling, gate_alpha, robust_scale, score_batch, tract_score, BatchScores, BlockMask,
    BlockWeights, ScalingStats, TractConfig, TractScorer,
};
pub use steps::{extract_final_answer, extract_trace, AnnouncementMarker, ExtractorConfig};
pub use text::{EntityRules, HedgeLexicon, WordList};
pub use trace::{parse_dataset, parse_dataset_str, IngestOptions, RawResponse, ReasoningTrace, SampleSet};
