//! The eleven trajectory features, grouped into coherence, structure and
//! content blocks.
//!
//! Per-trace statistics are averaged over the K surviving traces; the two
//! divergence features average `1 - jaccard` over all unordered trace pairs.
//! Trend features for traces too short to have a trend contribute 0.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TractError};
use crate::steps::{extract_trace, ExtractorConfig};
use crate::text::{
    count_hedges, count_questions, extract_entities, jaccard, ols_slope, unigram_set,
    window_variance, word_count, EntityRules, HedgeLexicon, WordList,
};
use crate::trace::{ReasoningTrace, SampleSet};

pub const NUM_FEATURES: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Coherence,
    Structure,
    Content,
}

impl Block {
    pub const ALL: [Block; 3] = [Block::Coherence, Block::Structure, Block::Content];

    pub fn name(self) -> &'static str {
        match self {
            Block::Coherence => "coherence",
            Block::Structure => "structure",
            Block::Content => "content",
        }
    }

    pub fn size(self) -> usize {
        FeatureName::ALL.iter().filter(|f| f.block() == self).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureName {
    QuestionRate,
    WordsPerStep,
    PlateauFrac,
    HedgeSlope,
    ColonFrac,
    MaxStepWc,
    ScMax,
    WcVarSlope,
    MidUnigramDiv,
    FinalUnigramDiv,
    EntityRepeat,
}

impl FeatureName {
    /// Canonical column order.
    pub const ALL: [FeatureName; NUM_FEATURES] = [
        FeatureName::QuestionRate,
        FeatureName::WordsPerStep,
        FeatureName::PlateauFrac,
        FeatureName::HedgeSlope,
        FeatureName::ColonFrac,
        FeatureName::MaxStepWc,
        FeatureName::ScMax,
        FeatureName::WcVarSlope,
        FeatureName::MidUnigramDiv,
        FeatureName::FinalUnigramDiv,
        FeatureName::EntityRepeat,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureName::QuestionRate => "question_rate",
            FeatureName::WordsPerStep => "words_per_step",
            FeatureName::PlateauFrac => "plateau_frac",
            FeatureName::HedgeSlope => "hedge_slope",
            FeatureName::ColonFrac => "colon_frac",
            FeatureName::MaxStepWc => "max_step_wc",
            FeatureName::ScMax => "sc_max",
            FeatureName::WcVarSlope => "wc_var_slope",
            FeatureName::MidUnigramDiv => "mid_unigram_div",
            FeatureName::FinalUnigramDiv => "final_unigram_div",
            FeatureName::EntityRepeat => "entity_repeat",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.as_str() == name)
            .ok_or_else(|| TractError::UnknownFeature(name.to_string()))
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn block(self) -> Block {
        match self.index() {
            0..=2 => Block::Coherence,
            3..=7 => Block::Structure,
            _ => Block::Content,
        }
    }

    /// Direction in which the feature moves the incorrectness score.
    pub fn sign(self) -> f64 {
        match self {
            FeatureName::ColonFrac | FeatureName::MaxStepWc => -1.0,
            _ => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Coherence {
    /// Mean `?` count per step; exceeds 1 when steps ask several questions.
    pub question_rate: f64,
    pub words_per_step: f64,
    pub plateau_frac: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Structure {
    pub hedge_slope: f64,
    pub colon_frac: f64,
    pub max_step_wc: f64,
    pub sc_max: f64,
    pub wc_var_slope: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Content {
    pub mid_unigram_div: f64,
    pub final_unigram_div: f64,
    pub entity_repeat: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureVector {
    pub coherence: Coherence,
    pub structure: Structure,
    pub content: Content,
    /// Unscaled mean words per step, read by the verbosity gate.
    pub raw_words_per_step: f64,
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; NUM_FEATURES] {
        let c = &self.coherence;
        let s = &self.structure;
        let t = &self.content;
        [
            c.question_rate,
            c.words_per_step,
            c.plateau_frac,
            s.hedge_slope,
            s.colon_frac,
            s.max_step_wc,
            s.sc_max,
            s.wc_var_slope,
            t.mid_unigram_div,
            t.final_unigram_div,
            t.entity_repeat,
        ]
    }

    pub fn get(&self, name: FeatureName) -> f64 {
        self.to_array()[name.index()]
    }
}

/// Lexicons and extraction rules used to turn responses into features.
#[derive(Debug, Clone)]
pub struct FeatureConfig {
    pub extractor: ExtractorConfig,
    pub hedges: HedgeLexicon,
    pub entities: EntityRules,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self::new(
            ExtractorConfig::default(),
            HedgeLexicon::default_hedges(),
            WordList::default_stoplist(),
        )
    }
}

impl FeatureConfig {
    pub fn new(extractor: ExtractorConfig, hedges: HedgeLexicon, stoplist: WordList) -> Self {
        let entities = EntityRules::new(stoplist, &extractor.marker_phrases());
        Self {
            extractor,
            hedges,
            entities,
        }
    }
}

struct StepStats {
    words: f64,
    questions: f64,
    hedges: f64,
    has_colon: bool,
}

fn step_stats(step: &str, hedges: Option<&HedgeLexicon>) -> StepStats {
    StepStats {
        words: word_count(step) as f64,
        questions: count_questions(step) as f64,
        hedges: hedges.map_or(0.0, |h| count_hedges(step, h) as f64),
        has_colon: step.contains(':'),
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut n = 0usize;
    let mut sum = 0.0;
    for v in values {
        sum += v;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn ensure_nonempty(traces: &[ReasoningTrace]) -> Result<()> {
    if traces.is_empty() {
        return Err(TractError::NotEnoughData { needed: 1, got: 0 });
    }
    Ok(())
}

/// Positions `i/T` for the 1-indexed steps `from..=T`.
fn positions(from: usize, t: usize) -> Vec<f64> {
    (from..=t).map(|i| i as f64 / t as f64).collect()
}

fn coherence_of(stats: &[Vec<StepStats>]) -> Coherence {
    let question_rate = mean(stats.iter().map(|s| mean(s.iter().map(|x| x.questions))));
    let words_per_step = mean(stats.iter().map(|s| mean(s.iter().map(|x| x.words))));
    let plateau_frac = mean(stats.iter().map(|s| {
        if s.len() < 2 {
            return 0.0;
        }
        let flat = s.windows(2).filter(|w| w[1].words <= w[0].words).count();
        flat as f64 / (s.len() - 1) as f64
    }));
    Coherence {
        question_rate,
        words_per_step,
        plateau_frac,
    }
}

fn structure_of(stats: &[Vec<StepStats>]) -> Structure {
    let hedge_slope = mean(stats.iter().map(|s| {
        let t = s.len();
        if t < 2 {
            return 0.0;
        }
        let h: Vec<f64> = s.iter().map(|x| x.hedges).collect();
        ols_slope(&h, &positions(1, t))
    }));
    let colon_frac = mean(stats.iter().map(|s| {
        s.iter().filter(|x| x.has_colon).count() as f64 / s.len() as f64
    }));
    let max_step_wc = mean(
        stats
            .iter()
            .map(|s| s.iter().map(|x| x.words).fold(0.0, f64::max)),
    );
    let sc_max = stats.iter().map(Vec::len).max().unwrap_or(0) as f64;
    let wc_var_slope = mean(stats.iter().map(|s| {
        let t = s.len();
        if t < 4 {
            return 0.0;
        }
        let w: Vec<f64> = s.iter().map(|x| x.words).collect();
        let vars: Vec<f64> = (3..=t)
            .map(|i| window_variance(&w, i).expect("window index in range"))
            .collect();
        ols_slope(&vars, &positions(3, t))
    }));
    Structure {
        hedge_slope,
        colon_frac,
        max_step_wc,
        sc_max,
        wc_var_slope,
    }
}

/// 1-indexed middle step, `max(1, floor(T/2))`.
fn mid_index(t: usize) -> usize {
    (t / 2).max(1)
}

fn pairwise_divergence(sets: &[HashSet<String>]) -> f64 {
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for j in 0..sets.len() {
        for k in j + 1..sets.len() {
            sum += 1.0 - jaccard(&sets[j], &sets[k]);
            pairs += 1;
        }
    }
    if pairs == 0 {
        0.0
    } else {
        sum / pairs as f64
    }
}

fn content_of(traces: &[ReasoningTrace], rules: &EntityRules) -> Content {
    let mids: Vec<HashSet<String>> = traces
        .iter()
        .map(|t| unigram_set(&t.steps()[mid_index(t.len()) - 1]))
        .collect();
    let finals: Vec<HashSet<String>> = traces
        .iter()
        .map(|t| unigram_set(&t.steps()[t.len() - 1]))
        .collect();
    let entity_repeat = mean(traces.iter().map(|t| {
        let ents: Vec<HashSet<String>> =
            t.steps().iter().map(|s| extract_entities(s, rules)).collect();
        let repeats = ents
            .windows(2)
            .filter(|w| w[1].iter().any(|e| w[0].contains(e)))
            .count();
        repeats as f64 / t.len() as f64
    }));
    Content {
        mid_unigram_div: pairwise_divergence(&mids),
        final_unigram_div: pairwise_divergence(&finals),
        entity_repeat,
    }
}

fn all_stats(traces: &[ReasoningTrace], hedges: Option<&HedgeLexicon>) -> Vec<Vec<StepStats>> {
    traces
        .iter()
        .map(|t| t.steps().iter().map(|s| step_stats(s, hedges)).collect())
        .collect()
}

pub fn compute_coherence(traces: &[ReasoningTrace]) -> Result<Coherence> {
    ensure_nonempty(traces)?;
    Ok(coherence_of(&all_stats(traces, None)))
}

pub fn compute_structure(traces: &[ReasoningTrace], lexicon: &HedgeLexicon) -> Result<Structure> {
    ensure_nonempty(traces)?;
    Ok(structure_of(&all_stats(traces, Some(lexicon))))
}

pub fn compute_content(traces: &[ReasoningTrace], rules: &EntityRules) -> Result<Content> {
    if traces.len() < 2 {
        return Err(TractError::NotEnoughData {
            needed: 2,
            got: traces.len(),
        });
    }
    Ok(content_of(traces, rules))
}

/// Features of already-extracted traces. Needs at least two traces.
pub fn features_from_traces(traces: &[ReasoningTrace], config: &FeatureConfig) -> Result<FeatureVector> {
    if traces.len() < 2 {
        return Err(TractError::DegenerateSampleSet {
            found: traces.len(),
        });
    }
    let stats = all_stats(traces, Some(&config.hedges));
    let coherence = coherence_of(&stats);
    Ok(FeatureVector {
        coherence,
        structure: structure_of(&stats),
        content: content_of(traces, &config.entities),
        raw_words_per_step: coherence.words_per_step,
    })
}

/// Extracts every response's reasoning body, keeping the non-empty ones in
/// response order.
pub fn usable_traces(sample_set: &SampleSet, extractor: &ExtractorConfig) -> Vec<ReasoningTrace> {
    sample_set
        .responses
        .iter()
        .filter_map(|r| extract_trace(&r.text, extractor).ok())
        .collect()
}

/// Runs step extraction on every response, drops empty bodies and computes
/// the three blocks on the survivors.
pub fn compute_features(sample_set: &SampleSet, config: &FeatureConfig) -> Result<FeatureVector> {
    features_from_traces(&usable_traces(sample_set, &config.extractor), config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::RawResponse;

    fn trace(steps: &[&str]) -> ReasoningTrace {
        ReasoningTrace::from_steps(steps.iter().copied()).unwrap()
    }

    /// A step with exactly `n` words and no punctuation.
    fn words(n: usize) -> String {
        vec!["word"; n].join(" ")
    }

    fn trace_wc(counts: &[usize]) -> ReasoningTrace {
        ReasoningTrace::from_steps(counts.iter().map(|&n| words(n))).unwrap()
    }

    #[test]
    fn coherence_examples() {
        let t = trace(&["Sum the two halves"]);
        let c = compute_coherence(&[t.clone(), t]).unwrap();
        assert_eq!(c, Coherence { question_rate: 0.0, words_per_step: 4.0, plateau_frac: 0.0 });

        let c = compute_coherence(&[trace_wc(&[3, 5, 4, 4])]).unwrap();
        assert!((c.plateau_frac - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(c.question_rate, 0.0);

        let c = compute_coherence(&[trace(&["Why this? And that?", "Fine then"])]).unwrap();
        assert_eq!(c.question_rate, 1.0);
        assert!(compute_coherence(&[]).is_err());
    }

    #[test]
    fn structure_examples() {
        let lex = HedgeLexicon::default_hedges();
        let traces = [trace_wc(&[1; 4]), trace_wc(&[1; 7]), trace_wc(&[1; 5])];
        assert_eq!(compute_structure(&traces, &lex).unwrap().sc_max, 7.0);

        let t = trace(&["plain step", "maybe step", "maybe could step"]);
        let s = compute_structure(&[t], &lex).unwrap();
        assert!((s.hedge_slope - 3.0).abs() < 1e-12);
        assert_eq!(s.colon_frac, 0.0);

        let t = trace(&["Plan: a", "then b", "Case: c", "done now"]);
        assert_eq!(compute_structure(&[t], &lex).unwrap().colon_frac, 0.5);

        // word counts 2,2,2,8: windows (2,2,2) -> 0, (2,2,8) -> 8 at 3/4 and 1
        let s = compute_structure(&[trace_wc(&[2, 2, 2, 8])], &lex).unwrap();
        assert!((s.wc_var_slope - 32.0).abs() < 1e-9, "{}", s.wc_var_slope);
        assert_eq!(s.max_step_wc, 8.0);

        let s = compute_structure(&[trace_wc(&[9, 1, 5])], &lex).unwrap();
        assert_eq!(s.wc_var_slope, 0.0);
    }

    #[test]
    fn content_examples() {
        let rules = FeatureConfig::default().entities;
        let t = trace(&["alpha beta", "gamma delta"]);
        let c = compute_content(&[t.clone(), t.clone(), t], &rules).unwrap();
        assert_eq!(c.mid_unigram_div, 0.0);
        assert_eq!(c.final_unigram_div, 0.0);

        let a = trace(&["shared start", "a b c"]);
        let b = trace(&["shared start", "b c d"]);
        let c = compute_content(&[a, b], &rules).unwrap();
        assert_eq!(c.final_unigram_div, 0.5);
        assert_eq!(c.mid_unigram_div, 0.0);

        let alice = trace(&["Alice has five apples", "then Alice eats two", "three remain now"]);
        let other = trace(&["no entities here"]);
        let c = compute_content(&[alice, other], &rules).unwrap();
        // one repeating transition out of T=3 for the first trace, 0 for the second
        assert!((c.entity_repeat - (1.0 / 3.0) / 2.0).abs() < 1e-15);

        assert!(compute_content(&[trace(&["solo trace"])], &rules).is_err());
    }

    #[test]
    fn mid_index_uses_floor_with_floor_of_one() {
        assert_eq!(mid_index(1), 1);
        assert_eq!(mid_index(2), 1);
        assert_eq!(mid_index(5), 2);
        assert_eq!(mid_index(6), 3);
    }

    fn set(texts: &[&str]) -> SampleSet {
        SampleSet {
            prompt_id: "p".into(),
            question: String::new(),
            ground_truth: "7".into(),
            responses: texts.iter().map(|t| RawResponse::new(*t)).collect(),
            label: false,
        }
    }

    #[test]
    fn identical_responses() {
        let text = "First we add the values\n\nThen Alice checks: is it 7?\n\nFinal Answer: 7";
        let cfg = FeatureConfig::default();
        let fv = compute_features(&set(&[text, text, text]), &cfg).unwrap();
        assert_eq!(fv.content.mid_unigram_div, 0.0);
        assert_eq!(fv.content.final_unigram_div, 0.0);
        let single = features_from_traces(
            &[extract_trace(text, &cfg.extractor).unwrap(), extract_trace(text, &cfg.extractor).unwrap()],
            &cfg,
        )
        .unwrap();
        assert_eq!(fv, single);
        assert_eq!(fv.coherence.question_rate, 0.5);
        assert_eq!(fv.raw_words_per_step, fv.coherence.words_per_step);
    }

    #[test]
    fn degenerate_sets_error() {
        let cfg = FeatureConfig::default();
        let err = compute_features(&set(&["Final Answer: 7", "Final Answer: 7"]), &cfg).unwrap_err();
        assert!(matches!(err, TractError::DegenerateSampleSet { found: 0 }));
        // one usable trace is still not enough
        let err = compute_features(&set(&["Real reasoning here", "Final Answer: 7"]), &cfg).unwrap_err();
        assert!(matches!(err, TractError::DegenerateSampleSet { found: 1 }));
    }

    #[test]
    fn feature_names_round_trip() {
        for f in FeatureName::ALL {
            assert_eq!(FeatureName::from_name(f.as_str()).unwrap(), f);
        }
        assert_eq!(Block::Coherence.size(), 3);
        assert_eq!(Block::Structure.size(), 5);
        assert_eq!(Block::Content.size(), 3);
        assert!(FeatureName::from_name("nope").is_err());
    }
}
