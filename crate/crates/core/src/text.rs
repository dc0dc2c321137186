//! Lexical and numeric primitives shared by the feature computations.
//!
//! Two tokenizers are in play. [`word_count`] splits on any whitespace.
//! Everything else ([`unigram_set`], [`count_hedges`], [`extract_entities`])
//! splits on runs of non-alphanumeric characters and drops empty tokens.

use std::collections::HashSet;

use crate::error::{Result, TractError};

const DEFAULT_HEDGES: &str = include_str!("../data/hedges.txt");
const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords.txt");

/// A non-empty set of lowercase single-token words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordList {
    words: HashSet<String>,
}

/// Uncertainty and contrast markers counted by the hedge features.
pub type HedgeLexicon = WordList;

impl WordList {
    pub fn new<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set = HashSet::new();
        for w in words {
            let w = w.as_ref().trim();
            if w.is_empty() {
                continue;
            }
            if w.chars().any(char::is_whitespace) {
                return Err(TractError::InvalidParameter(format!(
                    "word list entry {w:?} is not a single token"
                )));
            }
            set.insert(w.to_lowercase());
        }
        if set.is_empty() {
            return Err(TractError::InvalidParameter("word list is empty".into()));
        }
        Ok(Self { words: set })
    }

    /// Parses a plain-text list, one token per line. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn from_lines(text: &str) -> Result<Self> {
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn default_hedges() -> Self {
        Self::from_lines(DEFAULT_HEDGES).expect("bundled hedge lexicon is valid")
    }

    pub fn default_stoplist() -> Self {
        Self::from_lines(DEFAULT_STOPWORDS).expect("bundled stoplist is valid")
    }

    pub fn contains(&self, lowercase_token: &str) -> bool {
        self.words.contains(lowercase_token)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Entries in sorted order.
    pub fn sorted(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.words.iter().map(String::as_str).collect();
        v.sort_unstable();
        v
    }
}

/// Word lists consulted by entity extraction.
#[derive(Debug, Clone)]
pub struct EntityRules {
    /// Function words ignored when they open a sentence.
    pub stoplist: WordList,
    /// Answer-formatting tokens ignored wherever they occur.
    pub formatting_tokens: HashSet<String>,
}

impl EntityRules {
    /// Formatting tokens are the words making up the announcement markers.
    pub fn new<S: AsRef<str>>(stoplist: WordList, markers: &[S]) -> Self {
        let formatting_tokens = markers
            .iter()
            .flat_map(|m| alnum_tokens(m.as_ref()))
            .map(str::to_lowercase)
            .collect();
        Self {
            stoplist,
            formatting_tokens,
        }
    }
}

/// Number of whitespace-separated tokens.
pub fn word_count(step: &str) -> usize {
    step.split_whitespace().count()
}

fn alnum_tokens(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
}

/// Lowercased set of alphanumeric tokens.
pub fn unigram_set(step: &str) -> HashSet<String> {
    alnum_tokens(step).map(str::to_lowercase).collect()
}

pub fn count_questions(step: &str) -> usize {
    step.chars().filter(|&c| c == '?').count()
}

/// Hedge tokens in `step`, counted with multiplicity.
pub fn count_hedges(step: &str, lexicon: &HedgeLexicon) -> usize {
    alnum_tokens(step)
        .filter(|t| lexicon.contains(&t.to_lowercase()))
        .count()
}

/// Capitalised tokens approximating named entities.
///
/// A sentence starts at the beginning of the step, at a line break, and
/// after `.`, `!`, `?` or `:`. A capitalised sentence-initial token is
/// skipped when its lowercase form is in the stoplist; answer-formatting
/// tokens are skipped everywhere.
pub fn extract_entities(step: &str, rules: &EntityRules) -> HashSet<String> {
    let mut out = HashSet::new();
    let mut sentence_start = true;
    let mut token_start: Option<usize> = None;
    let mut token_initial = false;

    let mut flush = |start: usize, end: usize, initial: bool| {
        let tok = &step[start..end];
        if !tok.chars().next().is_some_and(char::is_uppercase) {
            return;
        }
        let lower = tok.to_lowercase();
        if rules.formatting_tokens.contains(&lower) {
            return;
        }
        if initial && rules.stoplist.contains(&lower) {
            return;
        }
        out.insert(tok.to_string());
    };

    for (idx, c) in step.char_indices() {
        if c.is_alphanumeric() {
            if token_start.is_none() {
                token_start = Some(idx);
                token_initial = sentence_start;
                sentence_start = false;
            }
            continue;
        }
        if let Some(start) = token_start.take() {
            flush(start, idx, token_initial);
        }
        if matches!(c, '.' | '!' | '?' | ':' | '\n') {
            sentence_start = true;
        }
    }
    if let Some(start) = token_start {
        flush(start, step.len(), token_initial);
    }
    out
}

/// Least-squares slope of `values` regressed on `positions`.
///
/// Fewer than two points, mismatched lengths or zero spread in `positions`
/// all yield 0.
pub fn ols_slope(values: &[f64], positions: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 || positions.len() != n {
        return 0.0;
    }
    let nf = n as f64;
    let mean_x = positions.iter().sum::<f64>() / nf;
    let mean_y = values.iter().sum::<f64>() / nf;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (&x, &y) in positions.iter().zip(values) {
        let dx = x - mean_x;
        sxy += dx * (y - mean_y);
        sxx += dx * dx;
    }
    if sxx == 0.0 {
        return 0.0;
    }
    sxy / sxx
}

/// Slope of `values` against the normalised positions `i/T`, `i = 1..=T`.
pub fn ols_slope_normalized(values: &[f64]) -> f64 {
    let t = values.len() as f64;
    let positions: Vec<f64> = (1..=values.len()).map(|i| i as f64 / t).collect();
    ols_slope(values, &positions)
}

/// `|a ∩ b| / |a ∪ b|`, with two empty sets counting as identical.
pub fn jaccard<T: Eq + std::hash::Hash>(a: &HashSet<T>, b: &HashSet<T>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let inter = small.iter().filter(|x| large.contains(x)).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// Population variance of the three values ending at 1-indexed position `i`.
pub fn window_variance(values: &[f64], i: usize) -> Result<f64> {
    if i < 3 || i > values.len() {
        return Err(TractError::InvalidParameter(format!(
            "window index {i} outside 3..={}",
            values.len()
        )));
    }
    let w = &values[i - 3..i];
    let mean = (w[0] + w[1] + w[2]) / 3.0;
    Ok(w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 3.0)
}
