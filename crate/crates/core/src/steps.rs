//! Splits raw model output into reasoning steps.
//!
//! Segmentation is a three-level cascade. Blank lines come first; a text
//! with no blank-line break falls back to numbered or bulleted list items,
//! then to single lines. A level is used once it yields two or more
//! segments. A text whose content is followed by a trailing blank line is
//! treated as paragraph-structured even when it holds a single paragraph,
//! which keeps re-rendered single-step traces stable.
//!
//! Cleaning then drops short or punctuation-only steps and moves answer
//! announcements ("Final Answer: ...") out of the reasoning body.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TractError};
use crate::trace::ReasoningTrace;

pub const DEFAULT_MIN_STEP_CHARS: usize = 5;
pub const DEFAULT_MARKERS: [&str; 3] = ["final answer", "the answer is", "^answer:"];

/// A phrase that marks an answer announcement.
///
/// In text form a leading `^` anchors the phrase to the start of a line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnouncementMarker {
    phrase: String,
    line_start: bool,
}

impl AnnouncementMarker {
    pub fn parse(spec: &str) -> Result<Self> {
        let (line_start, phrase) = match spec.strip_prefix('^') {
            Some(rest) => (true, rest),
            None => (false, spec),
        };
        let phrase = phrase.trim().to_ascii_lowercase();
        if phrase.is_empty() {
            return Err(TractError::InvalidParameter(format!(
                "empty announcement marker {spec:?}"
            )));
        }
        Ok(Self { phrase, line_start })
    }

    pub fn phrase(&self) -> &str {
        &self.phrase
    }

    pub fn is_line_start(&self) -> bool {
        self.line_start
    }

    pub fn spec(&self) -> String {
        if self.line_start {
            format!("^{}", self.phrase)
        } else {
            self.phrase.clone()
        }
    }

    /// Byte ranges of every occurrence in `lower`, which must be the ASCII
    /// lowercase form of the searched text.
    fn occurrences<'a>(&'a self, lower: &'a str) -> impl Iterator<Item = (usize, usize)> + 'a {
        lower
            .match_indices(self.phrase.as_str())
            .map(|(i, m)| (i, i + m.len()))
            .filter(move |&(start, _)| !self.line_start || at_line_start(lower, start))
    }
}

impl Serialize for AnnouncementMarker {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.spec())
    }
}

impl<'de> Deserialize<'de> for AnnouncementMarker {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Self::parse(&s).map_err(serde::de::Error::custom)
    }
}

// Leading markdown such as `**` or `> ` may precede a line-anchored marker.
fn at_line_start(text: &str, idx: usize) -> bool {
    let line_begin = text[..idx].rfind('\n').map_or(0, |p| p + 1);
    text[line_begin..idx]
        .chars()
        .all(|c| c.is_whitespace() || matches!(c, '*' | '#' | '_' | '>' | '-' | '`'))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractorConfig {
    pub markers: Vec<AnnouncementMarker>,
    pub min_step_chars: usize,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        Self {
            markers: DEFAULT_MARKERS
                .iter()
                .map(|m| AnnouncementMarker::parse(m).expect("default markers parse"))
                .collect(),
            min_step_chars: DEFAULT_MIN_STEP_CHARS,
        }
    }
}

impl ExtractorConfig {
    pub fn with_markers<S: AsRef<str>>(markers: &[S]) -> Result<Self> {
        let markers = markers
            .iter()
            .map(|m| AnnouncementMarker::parse(m.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        if markers.is_empty() {
            return Err(TractError::InvalidParameter("no announcement markers".into()));
        }
        Ok(Self {
            markers,
            ..Self::default()
        })
    }

    pub fn marker_phrases(&self) -> Vec<&str> {
        self.markers.iter().map(AnnouncementMarker::phrase).collect()
    }
}

/// Splits a response into trimmed raw segments. Never returns an empty list.
pub fn segment_response(text: &str) -> Vec<String> {
    let lines: Vec<&str> = text.split('\n').collect();

    let paragraphs = split_paragraphs(&lines);
    if paragraphs.len() >= 2 || (paragraphs.len() == 1 && has_trailing_break(text)) {
        return paragraphs;
    }

    let items = split_list_items(&lines);
    if items.len() >= 2 {
        return items;
    }

    let single: Vec<String> = lines
        .iter()
        .map(|l| l.trim())
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    if single.len() >= 2 {
        return single;
    }

    vec![text.trim().to_string()]
}

fn is_blank(line: &str) -> bool {
    line.trim().is_empty()
}

fn push_trimmed(out: &mut Vec<String>, lines: &[&str]) {
    let joined = lines.join("\n");
    let t = joined.trim();
    if !t.is_empty() {
        out.push(t.to_string());
    }
}

fn split_paragraphs(lines: &[&str]) -> Vec<String> {
    let mut out = Vec::new();
    for block in lines.split(|l| is_blank(l)) {
        push_trimmed(&mut out, block);
    }
    out
}

fn has_trailing_break(text: &str) -> bool {
    let tail_start = text.trim_end().len();
    !text.trim().is_empty() && text[tail_start..].matches('\n').count() >= 2
}

fn split_list_items(lines: &[&str]) -> Vec<String> {
    let mut out = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for &line in lines {
        if starts_list_item(line) && !current.is_empty() {
            push_trimmed(&mut out, &current);
            current.clear();
        }
        current.push(line);
    }
    push_trimmed(&mut out, &current);
    out
}

/// `1.`, `2)`, `-`, `*`, `•` followed by whitespace, or `Step N:` / `Step N.`,
/// after optional indentation.
fn starts_list_item(line: &str) -> bool {
    let s = line.trim_start();
    let mut chars = s.chars();
    match chars.next() {
        Some('-' | '*' | '•') => return chars.next().is_some_and(char::is_whitespace),
        Some(c) if c.is_ascii_digit() => {
            let rest = s.trim_start_matches(|c: char| c.is_ascii_digit());
            let mut rc = rest.chars();
            return matches!(rc.next(), Some('.' | ')'))
                && rc.next().is_none_or(char::is_whitespace);
        }
        _ => {}
    }
    if s.len() >= 5 && s[..4].eq_ignore_ascii_case("step") {
        let rest = s[4..].trim_start();
        let digits = rest.len() - rest.trim_start_matches(|c: char| c.is_ascii_digit()).len();
        if digits > 0 {
            return matches!(rest[digits..].chars().next(), Some(':' | '.'));
        }
    }
    false
}

/// True when the trimmed step contains a marker (line-anchored markers must
/// open a line).
pub fn is_answer_announcement(step: &str, config: &ExtractorConfig) -> bool {
    let lower = step.trim().to_ascii_lowercase();
    config
        .markers
        .iter()
        .any(|m| m.occurrences(&lower).next().is_some())
}

fn is_markdown_only(step: &str) -> bool {
    step.split_whitespace().all(|tok| {
        let rest = tok.trim_start_matches(|c: char| c.is_ascii_digit());
        let rest = if rest.len() < tok.len() {
            // digits must be a list marker like `3.` or `3)`
            match rest.chars().next() {
                Some('.' | ')') => rest,
                _ => return false,
            }
        } else {
            rest
        };
        rest.chars().all(is_markdown_char)
    })
}

fn is_markdown_char(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '•' | '–' | '—' | '…' | '·' | '“' | '”' | '‘' | '’' | '«' | '»' | '│' | '─'
        )
}

/// Drops short and punctuation-only steps and routes announcements aside.
pub fn clean_steps<S: AsRef<str>>(
    raw_steps: &[S],
    config: &ExtractorConfig,
) -> Result<ReasoningTrace> {
    let mut steps = Vec::new();
    let mut announcements = Vec::new();
    for raw in raw_steps {
        let s = raw.as_ref().trim();
        if is_answer_announcement(s, config) {
            announcements.push(s.to_string());
        } else if s.chars().count() >= config.min_step_chars && !is_markdown_only(s) {
            steps.push(s.to_string());
        }
    }
    let final_answer = announcements
        .iter()
        .rev()
        .find_map(|a| extract_final_answer(a, config));
    ReasoningTrace::new(steps, announcements, final_answer)
}

/// Segments and cleans a response in one go.
pub fn extract_trace(text: &str, config: &ExtractorConfig) -> Result<ReasoningTrace> {
    clean_steps(&segment_response(text), config)
}

/// Text following the last announcement marker, up to the end of its line.
/// When that line is empty after the marker the next non-empty line is used.
pub fn extract_final_answer(text: &str, config: &ExtractorConfig) -> Option<String> {
    let lower = text.to_ascii_lowercase();
    let (_, end) = config
        .markers
        .iter()
        .flat_map(|m| m.occurrences(&lower))
        .max_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)))?;

    let rest = &text[end..];
    let mut lines = rest.split('\n');
    let first = clean_answer(lines.next().unwrap_or(""));
    if !first.is_empty() {
        return Some(first);
    }
    lines
        .map(clean_answer)
        .find(|l| !l.is_empty())
}

fn clean_answer(raw: &str) -> String {
    let trimmed = raw.trim_start_matches(|c: char| {
        c.is_whitespace() || matches!(c, ':' | '*' | '_' | '=' | '-' | '`')
    });
    let trimmed = match trimmed.get(..3) {
        Some(p) if p.eq_ignore_ascii_case("is ") => trimmed[3..].trim_start(),
        _ => trimmed,
    };
    trimmed
        .trim_end_matches(|c: char| c.is_whitespace() || matches!(c, '*' | '_' | '`'))
        .to_string()
}
