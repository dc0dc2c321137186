//! Oracle interventions on sample sets.
//!
//! Force replaces every announcement with the canonical
//! `Final Answer: <ground truth>`; Remove deletes announcements outright.
//! Both rewrite a response as its surviving segments joined by blank lines,
//! so step extraction on the result sees exactly the original reasoning
//! body. A response without announcements is left byte-for-byte alone by
//! Remove.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::TractError;
use crate::steps::{is_answer_announcement, segment_response, ExtractorConfig};
use crate::trace::{RawResponse, SampleSet};

pub const CANONICAL_PREFIX: &str = "Final Answer: ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Original,
    Force,
    Remove,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::Original, Condition::Force, Condition::Remove];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Original => "original",
            Condition::Force => "force",
            Condition::Remove => "remove",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = TractError;

    fn from_str(s: &str) -> Result<Self, TractError> {
        match s.to_ascii_lowercase().as_str() {
            "original" | "none" => Ok(Condition::Original),
            "force" => Ok(Condition::Force),
            "remove" => Ok(Condition::Remove),
            other => Err(TractError::InvalidParameter(format!("unknown mode {other:?}"))),
        }
    }
}

/// The announcement line Force appends for `ground_truth`.
pub fn canonical_announcement(ground_truth: &str) -> String {
    let answer = ground_truth.split_whitespace().collect::<Vec<_>>().join(" ");
    format!("{CANONICAL_PREFIX}{answer}")
}

/// Segments of `text`, split into (kept, had_announcement).
fn strip_announcements(text: &str, extractor: &ExtractorConfig) -> (Vec<String>, bool) {
    let mut found = false;
    let kept = segment_response(text)
        .into_iter()
        .filter(|s| {
            let ann = is_answer_announcement(s, extractor);
            found |= ann;
            !ann && !s.is_empty()
        })
        .collect();
    (kept, found)
}

fn render(segments: &[String]) -> String {
    let mut text = segments.join("\n\n");
    // A lone segment that would re-split under the fallback levels keeps a
    // trailing blank line to pin it at paragraph level.
    if let [only] = segments {
        if segment_response(only).len() > 1 {
            text.push_str("\n\n");
        }
    }
    text
}

pub fn apply_force(sample_set: &SampleSet, extractor: &ExtractorConfig) -> SampleSet {
    let announcement = canonical_announcement(&sample_set.ground_truth);
    let responses = sample_set
        .responses
        .iter()
        .map(|r| {
            let (mut kept, _) = strip_announcements(&r.text, extractor);
            kept.push(announcement.clone());
            RawResponse {
                text: kept.join("\n\n"),
                final_answer: Some(sample_set.ground_truth.clone()),
                correct: r.correct,
            }
        })
        .collect();
    SampleSet {
        responses,
        ..sample_set.clone()
    }
}

/// Result of Remove. Responses that consisted only of announcements are
/// dropped and their original indices listed in `emptied`.
#[derive(Debug, Clone, PartialEq)]
pub struct RemoveOutcome {
    pub sample_set: SampleSet,
    pub emptied: Vec<usize>,
}

pub fn apply_remove(sample_set: &SampleSet, extractor: &ExtractorConfig) -> RemoveOutcome {
    let mut emptied = Vec::new();
    let mut responses = Vec::with_capacity(sample_set.responses.len());
    for (i, r) in sample_set.responses.iter().enumerate() {
        let (kept, found) = strip_announcements(&r.text, extractor);
        if !found {
            responses.push(r.clone());
        } else if kept.is_empty() {
            emptied.push(i);
        } else {
            responses.push(RawResponse {
                text: render(&kept),
                ..r.clone()
            });
        }
    }
    RemoveOutcome {
        sample_set: SampleSet {
            responses,
            ..sample_set.clone()
        },
        emptied,
    }
}

pub fn apply_condition(
    sample_set: &SampleSet,
    condition: Condition,
    extractor: &ExtractorConfig,
) -> SampleSet {
    match condition {
        Condition::Original => sample_set.clone(),
        Condition::Force => apply_force(sample_set, extractor),
        Condition::Remove => apply_remove(sample_set, extractor).sample_set,
    }
}
