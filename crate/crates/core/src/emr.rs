//! Exact-match repetition over sampled final answers.
//!
//! `1 - (count of the modal normalized answer) / K`. Responses without a
//! visible answer share a single "missing" class.

use std::collections::HashMap;

use crate::batch::{PreparedSample, TraceScorer};
use crate::error::Result;
use crate::steps::ExtractorConfig;
use crate::trace::{normalize_answer, SampleSet};

pub fn emr_from_answers(answers: &[Option<String>]) -> f64 {
    if answers.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<Option<String>, usize> = HashMap::new();
    for a in answers {
        *counts.entry(a.as_deref().map(normalize_answer)).or_default() += 1;
    }
    let modal = counts.values().copied().max().unwrap_or(0);
    1.0 - modal as f64 / answers.len() as f64
}

pub fn emr_score(sample_set: &SampleSet, extractor: &ExtractorConfig) -> f64 {
    emr_from_answers(&PreparedSample::new(sample_set, extractor).answers)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EmrScorer;

impl TraceScorer for EmrScorer {
    fn name(&self) -> &str {
        "emr"
    }

    fn score(&self, batch: &[PreparedSample]) -> Result<Vec<Option<f64>>> {
        Ok(batch
            .iter()
            .map(|p| Some(emr_from_answers(&p.answers)))
            .collect())
    }
}
