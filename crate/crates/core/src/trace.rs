//! Core data types and dataset ingestion.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TractError};
use crate::steps::{extract_final_answer, ExtractorConfig};

/// One sampled model output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawResponse {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
}

impl RawResponse {
    pub fn new(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            final_answer: None,
            correct: None,
        }
    }
}

/// A prompt with its K sampled responses.
///
/// `label` is true when the first response is incorrect, the positive class
/// for detection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSet {
    pub prompt_id: String,
    pub question: String,
    pub ground_truth: String,
    pub responses: Vec<RawResponse>,
    pub label: bool,
}

impl SampleSet {
    pub fn k(&self) -> usize {
        self.responses.len()
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |message: &str| TractError::InvalidSampleSet {
            prompt_id: self.prompt_id.clone(),
            message: message.to_string(),
        };
        if self.prompt_id.is_empty() {
            return Err(invalid("prompt_id is empty"));
        }
        if self.ground_truth.trim().is_empty() {
            return Err(invalid("missing ground_truth"));
        }
        if self.responses.len() < 2 {
            return Err(TractError::TooFewResponses {
                prompt_id: self.prompt_id.clone(),
                k: self.responses.len(),
            });
        }
        for (i, r) in self.responses.iter().enumerate() {
            if r.text.trim().is_empty() {
                return Err(invalid(&format!("response {i} has empty text")));
            }
            if r.correct.is_some() && r.final_answer.is_none() {
                return Err(invalid(&format!(
                    "response {i} has a correct flag but no final answer"
                )));
            }
        }
        Ok(())
    }
}

/// The cleaned reasoning body of one response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReasoningTrace {
    steps: Vec<String>,
    announcements: Vec<String>,
    final_answer: Option<String>,
}

impl ReasoningTrace {
    pub fn new(
        steps: Vec<String>,
        announcements: Vec<String>,
        final_answer: Option<String>,
    ) -> Result<Self> {
        if steps.is_empty() {
            return Err(TractError::EmptyReasoningBody);
        }
        Ok(Self {
            steps,
            announcements,
            final_answer,
        })
    }

    /// A trace holding only the given steps.
    pub fn from_steps<S: Into<String>>(steps: impl IntoIterator<Item = S>) -> Result<Self> {
        Self::new(steps.into_iter().map(Into::into).collect(), Vec::new(), None)
    }

    pub fn steps(&self) -> &[String] {
        &self.steps
    }

    pub fn announcements(&self) -> &[String] {
        &self.announcements
    }

    pub fn final_answer(&self) -> Option<&str> {
        self.final_answer.as_deref()
    }

    /// Number of reasoning steps, `T_k`.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// The first `n` steps (at least one) with announcements withheld.
    pub fn prefix(&self, n: usize) -> Self {
        let n = n.clamp(1, self.steps.len());
        Self {
            steps: self.steps[..n].to_vec(),
            announcements: Vec::new(),
            final_answer: None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    pub extractor: ExtractorConfig,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetRecord {
    prompt_id: String,
    #[serde(default)]
    question: String,
    ground_truth: String,
    responses: Vec<RawResponse>,
}

/// Trim, lowercase, collapse whitespace, drop trailing periods.
pub fn normalize_answer(answer: &str) -> String {
    let collapsed = answer
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase();
    collapsed.trim_end_matches('.').trim_end().to_string()
}

/// Fills in missing `final_answer`s from the text and missing `correct`
/// flags by normalized exact match, then sets `label` from the first
/// response. Explicit flags are never overridden.
pub fn derive_labels(mut sample_set: SampleSet, extractor: &ExtractorConfig) -> Result<SampleSet> {
    let truth = normalize_answer(&sample_set.ground_truth);
    for r in &mut sample_set.responses {
        if r.final_answer.is_none() {
            r.final_answer = extract_final_answer(&r.text, extractor);
        }
        if r.correct.is_none() {
            r.correct = r
                .final_answer
                .as_deref()
                .map(|a| normalize_answer(a) == truth);
        }
    }
    let first = sample_set
        .responses
        .first()
        .and_then(|r| r.correct)
        .ok_or_else(|| TractError::Unlabelable {
            prompt_id: sample_set.prompt_id.clone(),
        })?;
    sample_set.label = !first;
    Ok(sample_set)
}

fn parse_record(line: &str, line_no: usize, options: &IngestOptions) -> Result<SampleSet> {
    let malformed = |message: String| TractError::MalformedLine {
        line: line_no,
        message,
    };
    let rec: DatasetRecord = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
    let set = SampleSet {
        prompt_id: rec.prompt_id,
        question: rec.question,
        ground_truth: rec.ground_truth,
        responses: rec.responses,
        label: false,
    };
    if set.responses.len() < 2 || set.ground_truth.trim().is_empty() {
        set.validate().map_err(|e| malformed(e.to_string()))?;
    }
    let set = derive_labels(set, &options.extractor).map_err(|e| malformed(e.to_string()))?;
    set.validate().map_err(|e| malformed(e.to_string()))?;
    Ok(set)
}

/// Parses JSON-Lines dataset text. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn parse_dataset_str(text: &str, options: &IngestOptions) -> Result<Vec<SampleSet>> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l))
        .collect();
    let parsed: Vec<Result<SampleSet>> = lines
        .par_iter()
        .map(|&(no, l)| parse_record(l, no, options))
        .collect();

    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(parsed.len());
    for ((no, _), set) in lines.iter().zip(parsed) {
        let set = set?;
        if !seen.insert(set.prompt_id.clone()) {
            return Err(TractError::DuplicatePromptId {
                line: *no,
                prompt_id: set.prompt_id,
            });
        }
        out.push(set);
    }
    Ok(out)
}

pub fn parse_dataset(path: impl AsRef<Path>, options: &IngestOptions) -> Result<Vec<SampleSet>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| TractError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_dataset_str(&text, options)
}

/// Serializes sample sets back to the JSON-Lines record format.
pub fn to_jsonl(sets: &[SampleSet]) -> Result<String> {
    let mut out = String::new();
    for s in sets {
        let rec = DatasetRecord {
            prompt_id: s.prompt_id.clone(),
            question: s.question.clone(),
            ground_truth: s.ground_truth.clone(),
            responses: s.responses.clone(),
        };
        out.push_str(&serde_json::to_string(&rec)?);
        out.push('\n');
    }
    Ok(out)
}
