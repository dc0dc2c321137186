//! Parsed views of sample sets shared by every scorer.

use rayon::prelude::*;

use crate::error::Result;
use crate::steps::{extract_final_answer, extract_trace, ExtractorConfig};
use crate::trace::{ReasoningTrace, SampleSet};

/// A sample set after step extraction.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSample {
    pub prompt_id: String,
    pub label: bool,
    /// Non-empty reasoning bodies, in response order.
    pub traces: Vec<ReasoningTrace>,
    /// One entry per response; `None` when no answer is visible.
    pub answers: Vec<Option<String>>,
}

impl PreparedSample {
    pub fn new(sample_set: &SampleSet, extractor: &ExtractorConfig) -> Self {
        let traces = sample_set
            .responses
            .iter()
            .filter_map(|r| extract_trace(&r.text, extractor).ok())
            .collect();
        let answers = sample_set
            .responses
            .iter()
            .map(|r| {
                r.final_answer
                    .clone()
                    .or_else(|| extract_final_answer(&r.text, extractor))
            })
            .collect();
        Self {
            prompt_id: sample_set.prompt_id.clone(),
            label: sample_set.label,
            traces,
            answers,
        }
    }

    /// Every trace cut to its first `ceil(fraction * T_k)` steps, with
    /// announcements and answers withheld.
    pub fn reveal_prefix(&self, fraction: f64) -> Self {
        Self {
            prompt_id: self.prompt_id.clone(),
            label: self.label,
            traces: self
                .traces
                .iter()
                .map(|t| t.prefix(prefix_len(fraction, t.len())))
                .collect(),
            answers: vec![None; self.answers.len()],
        }
    }
}

/// `ceil(fraction * t)`, at least 1. A small tolerance keeps grid values such
/// as `0.3 * 10` from rounding up past the intended step.
pub fn prefix_len(fraction: f64, t: usize) -> usize {
    let raw = fraction * t as f64;
    let n = (raw - 1e-9).ceil();
    (n.max(1.0) as usize).min(t)
}

pub fn prepare_batch(sample_sets: &[SampleSet], extractor: &ExtractorConfig) -> Vec<PreparedSample> {
    sample_sets
        .par_iter()
        .map(|s| PreparedSample::new(s, extractor))
        .collect()
}

/// Anything that assigns an incorrectness score to each prompt of a batch.
///
/// Scores may depend on the whole batch (TRACT fits its scaling on it).
/// `None` marks a prompt the scorer cannot handle.
pub trait TraceScorer: Sync {
    fn name(&self) -> &str;

    fn score(&self, batch: &[PreparedSample]) -> Result<Vec<Option<f64>>>;
}
