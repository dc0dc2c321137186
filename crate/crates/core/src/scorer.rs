//! TRACT scoring: robust scaling, signed block weights and the verbosity
//! gate.
//!
//! ```text
//! score = w_struct·s + (1 - α)(w_coh·c + w_cont·t)
//! α     = exp(-(w̄ - μ)² / (2σ²))
//! ```
//!
//! where `s`, `c`, `t` are the robust-scaled block features and `w̄` is the
//! unscaled mean words per step.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::batch::{prepare_batch, PreparedSample, TraceScorer};
use crate::error::{Result, TractError};
use crate::features::{features_from_traces, Block, FeatureConfig, FeatureName, FeatureVector, NUM_FEATURES};
use crate::trace::SampleSet;

pub const DEFAULT_MU: f64 = 28.0;
pub const DEFAULT_SIGMA_SQ: f64 = 50.0;
pub const CLIP: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScale {
    pub median: f64,
    pub iqr: f64,
}

/// Per-feature median and interquartile range.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingStats {
    scales: [FeatureScale; NUM_FEATURES],
}

impl ScalingStats {
    pub fn new(scales: [FeatureScale; NUM_FEATURES]) -> Result<Self> {
        for (f, s) in FeatureName::ALL.iter().zip(&scales) {
            if !(s.iqr >= 0.0) || !s.median.is_finite() || !s.iqr.is_finite() {
                return Err(TractError::InvalidParameter(format!(
                    "bad scale for {}: median {}, iqr {}",
                    f.as_str(),
                    s.median,
                    s.iqr
                )));
            }
        }
        Ok(Self { scales })
    }

    pub fn get(&self, feature: FeatureName) -> FeatureScale {
        self.scales[feature.index()]
    }

    pub fn to_json(&self) -> Result<String> {
        let map: BTreeMap<&str, FeatureScale> = FeatureName::ALL
            .iter()
            .map(|f| (f.as_str(), self.get(*f)))
            .collect();
        Ok(serde_json::to_string_pretty(&map)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let map: BTreeMap<String, FeatureScale> = serde_json::from_str(text)?;
        let mut scales = [FeatureScale { median: 0.0, iqr: 0.0 }; NUM_FEATURES];
        let mut seen = [false; NUM_FEATURES];
        for (name, scale) in map {
            let f = FeatureName::from_name(&name)?;
            scales[f.index()] = scale;
            seen[f.index()] = true;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(TractError::InvalidParameter(format!(
                "scaling stats missing {}",
                FeatureName::ALL[i].as_str()
            )));
        }
        Self::new(scales)
    }
}

/// Linear interpolation between order statistics at `p * (n - 1)`.
/// `sorted` must be ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn fit_scaling(features: &[FeatureVector]) -> Result<ScalingStats> {
    if features.len() < 2 {
        return Err(TractError::NotEnoughData {
            needed: 2,
            got: features.len(),
        });
    }
    let rows: Vec<[f64; NUM_FEATURES]> = features.iter().map(FeatureVector::to_array).collect();
    let mut scales = [FeatureScale { median: 0.0, iqr: 0.0 }; NUM_FEATURES];
    for (j, scale) in scales.iter_mut().enumerate() {
        let mut col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        col.sort_by(f64::total_cmp);
        let q1 = quantile_sorted(&col, 0.25);
        let q3 = quantile_sorted(&col, 0.75);
        *scale = FeatureScale {
            median: quantile_sorted(&col, 0.5),
            iqr: (q3 - q1).max(0.0),
        };
    }
    ScalingStats::new(scales)
}

/// Robust-scaled features plus the unscaled words-per-step for the gate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledFeatures {
    pub values: [f64; NUM_FEATURES],
    pub raw_words_per_step: f64,
}

pub fn robust_scale(features: &FeatureVector, stats: &ScalingStats) -> ScaledFeatures {
    let raw = features.to_array();
    let mut values = [0.0; NUM_FEATURES];
    for (j, v) in values.iter_mut().enumerate() {
        let s = stats.scales[j];
        *v = if s.iqr > 0.0 {
            ((raw[j] - s.median) / s.iqr).clamp(-CLIP, CLIP)
        } else {
            0.0
        };
    }
    ScaledFeatures {
        values,
        raw_words_per_step: features.raw_words_per_step,
    }
}

pub fn gate_alpha(w_bar: f64, mu: f64, sigma_sq: f64) -> Result<f64> {
    if !(sigma_sq > 0.0) {
        return Err(TractError::InvalidParameter(format!(
            "sigma_sq must be positive, got {sigma_sq}"
        )));
    }
    let d = w_bar - mu;
    Ok((-(d * d) / (2.0 * sigma_sq)).exp())
}

/// Signed per-feature weights: equal magnitude `1/n_b` inside block `b`,
/// sign from the feature's direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockWeights {
    weights: [f64; NUM_FEATURES],
}

impl Default for BlockWeights {
    fn default() -> Self {
        let mut weights = [0.0; NUM_FEATURES];
        for f in FeatureName::ALL {
            weights[f.index()] = f.sign() / f.block().size() as f64;
        }
        Self { weights }
    }
}

impl BlockWeights {
    pub fn get(&self, feature: FeatureName) -> f64 {
        self.weights[feature.index()]
    }

    /// Uniformly rescales every block magnitude. Signs are kept.
    pub fn with_magnitudes(coherence: f64, structure: f64, content: f64) -> Result<Self> {
        let mut w = Self::default();
        for f in FeatureName::ALL {
            let m = match f.block() {
                Block::Coherence => coherence,
                Block::Structure => structure,
                Block::Content => content,
            };
            if !(m >= 0.0) || !m.is_finite() {
                return Err(TractError::InvalidParameter(format!("bad block magnitude {m}")));
            }
            w.weights[f.index()] = f.sign() * m;
        }
        Ok(w)
    }

    fn block_term(&self, scaled: &ScaledFeatures, block: Block) -> f64 {
        FeatureName::ALL
            .iter()
            .filter(|f| f.block() == block)
            .map(|f| self.weights[f.index()] * scaled.values[f.index()])
            .sum()
    }
}

/// Which blocks enter the score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockMask {
    pub coherence: bool,
    pub structure: bool,
    pub content: bool,
}

impl BlockMask {
    pub const ALL: BlockMask = BlockMask {
        coherence: true,
        structure: true,
        content: true,
    };

    pub fn from_blocks(blocks: &[Block]) -> Self {
        Self {
            coherence: blocks.contains(&Block::Coherence),
            structure: blocks.contains(&Block::Structure),
            content: blocks.contains(&Block::Content),
        }
    }

    pub fn is_empty(&self) -> bool {
        !(self.coherence || self.structure || self.content)
    }

    pub fn contains(&self, block: Block) -> bool {
        match block {
            Block::Coherence => self.coherence,
            Block::Structure => self.structure,
            Block::Content => self.content,
        }
    }

    /// The seven non-empty subsets: singles, pairs, then the full set.
    pub fn all_subsets() -> Vec<BlockMask> {
        let mut out: Vec<BlockMask> = (1u8..8)
            .map(|bits| BlockMask {
                structure: bits & 1 != 0,
                coherence: bits & 2 != 0,
                content: bits & 4 != 0,
            })
            .collect();
        out.sort_by_key(|m| (m.count(), !m.structure, !m.coherence));
        out
    }

    fn count(&self) -> usize {
        [self.coherence, self.structure, self.content]
            .iter()
            .filter(|b| **b)
            .count()
    }
}

impl Default for BlockMask {
    fn default() -> Self {
        Self::ALL
    }
}

impl fmt::Display for BlockMask {
    /// `S`, `Co`, `Ct` joined by `+`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if self.structure {
            parts.push("S");
        }
        if self.coherence {
            parts.push("Co");
        }
        if self.content {
            parts.push("Ct");
        }
        if parts.is_empty() {
            return f.write_str("none");
        }
        f.write_str(&parts.join("+"))
    }
}

impl FromStr for BlockMask {
    type Err = TractError;

    /// Accepts `all`, or block names / short codes separated by `,` or `+`.
    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("all") {
            return Ok(Self::ALL);
        }
        let mut blocks = Vec::new();
        for part in s.split([',', '+']).map(str::trim).filter(|p| !p.is_empty()) {
            let b = match part.to_ascii_lowercase().as_str() {
                "s" | "struct" | "structure" => Block::Structure,
                "co" | "coh" | "coherence" => Block::Coherence,
                "ct" | "cont" | "content" => Block::Content,
                other => {
                    return Err(TractError::InvalidParameter(format!("unknown block {other:?}")))
                }
            };
            blocks.push(b);
        }
        let mask = Self::from_blocks(&blocks);
        if mask.is_empty() {
            return Err(TractError::EmptyBlockMask);
        }
        Ok(mask)
    }
}

pub fn tract_score(
    scaled: &ScaledFeatures,
    alpha: f64,
    weights: &BlockWeights,
    blocks: BlockMask,
) -> Result<f64> {
    if blocks.is_empty() {
        return Err(TractError::EmptyBlockMask);
    }
    let mut score = 0.0;
    if blocks.structure {
        score += weights.block_term(scaled, Block::Structure);
    }
    let mut gated = 0.0;
    if blocks.coherence {
        gated += weights.block_term(scaled, Block::Coherence);
    }
    if blocks.content {
        gated += weights.block_term(scaled, Block::Content);
    }
    Ok(score + (1.0 - alpha) * gated)
}

#[derive(Debug, Clone)]
pub struct TractConfig {
    pub features: FeatureConfig,
    pub mu: f64,
    pub sigma_sq: f64,
    pub weights: BlockWeights,
    pub blocks: BlockMask,
}

impl Default for TractConfig {
    fn default() -> Self {
        Self {
            features: FeatureConfig::default(),
            mu: DEFAULT_MU,
            sigma_sq: DEFAULT_SIGMA_SQ,
            weights: BlockWeights::default(),
            blocks: BlockMask::ALL,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPrompt {
    pub prompt_id: String,
    pub label: bool,
    pub features: Option<FeatureVector>,
    /// `None` for degenerate prompts.
    pub score: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct BatchScores {
    pub prompts: Vec<ScoredPrompt>,
    pub stats: ScalingStats,
}

impl BatchScores {
    pub fn degenerate_count(&self) -> usize {
        self.prompts.iter().filter(|p| p.score.is_none()).count()
    }
}

/// Phase 1: features for every prompt, `None` where fewer than two traces
/// survive extraction.
pub fn batch_features(batch: &[PreparedSample], config: &FeatureConfig) -> Vec<Option<FeatureVector>> {
    batch
        .par_iter()
        .map(|p| features_from_traces(&p.traces, config).ok())
        .collect()
}

/// Phases 2 and 3: fit (or reuse) scaling, then scale, gate and score.
pub fn score_features(
    features: &[Option<FeatureVector>],
    stats: Option<&ScalingStats>,
    config: &TractConfig,
) -> Result<(Vec<Option<f64>>, ScalingStats)> {
    let stats = match stats {
        Some(s) => s.clone(),
        None => {
            let usable: Vec<FeatureVector> = features.iter().flatten().copied().collect();
            fit_scaling(&usable)?
        }
    };
    gate_alpha(config.mu, config.mu, config.sigma_sq)?;
    if config.blocks.is_empty() {
        return Err(TractError::EmptyBlockMask);
    }
    let scores = features
        .par_iter()
        .map(|fv| {
            fv.as_ref().map(|fv| {
                let scaled = robust_scale(fv, &stats);
                let alpha = gate_alpha(fv.raw_words_per_step, config.mu, config.sigma_sq)
                    .expect("sigma_sq checked above");
                tract_score(&scaled, alpha, &config.weights, config.blocks)
                    .expect("mask checked above")
            })
        })
        .collect();
    Ok((scores, stats))
}

/// Scores a batch end to end. Without persisted `stats`, scaling is fitted
/// on the batch itself and needs at least two scorable prompts.
pub fn score_batch(
    sample_sets: &[SampleSet],
    config: &TractConfig,
    stats: Option<&ScalingStats>,
) -> Result<BatchScores> {
    let prepared = prepare_batch(sample_sets, &config.features.extractor);
    let features = batch_features(&prepared, &config.features);
    let (scores, stats) = score_features(&features, stats, config)?;
    let prompts = prepared
        .into_iter()
        .zip(features)
        .zip(scores)
        .map(|((p, features), score)| ScoredPrompt {
            prompt_id: p.prompt_id,
            label: p.label,
            features,
            score,
        })
        .collect();
    Ok(BatchScores { prompts, stats })
}

/// TRACT as a batch scorer; scaling is refitted on each batch unless
/// persisted stats are supplied.
#[derive(Debug, Clone, Default)]
pub struct TractScorer {
    pub config: TractConfig,
    pub stats: Option<ScalingStats>,
}

impl TractScorer {
    pub fn new(config: TractConfig) -> Self {
        Self { config, stats: None }
    }
}

impl TraceScorer for TractScorer {
    fn name(&self) -> &str {
        "tract"
    }

    fn score(&self, batch: &[PreparedSample]) -> Result<Vec<Option<f64>>> {
        let features = batch_features(batch, &self.config.features);
        Ok(score_features(&features, self.stats.as_ref(), &self.config)?.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{Coherence, Content, Structure};

    fn fv_from(values: [f64; NUM_FEATURES]) -> FeatureVector {
        FeatureVector {
            coherence: Coherence {
                question_rate: values[0],
                words_per_step: values[1],
                plateau_frac: values[2],
            },
            structure: Structure {
                hedge_slope: values[3],
                colon_frac: values[4],
                max_step_wc: values[5],
                sc_max: values[6],
                wc_var_slope: values[7],
            },
            content: Content {
                mid_unigram_div: values[8],
                final_unigram_div: values[9],
                entity_repeat: values[10],
            },
            raw_words_per_step: values[1],
        }
    }

    fn column(values: &[f64]) -> Vec<FeatureVector> {
        values.iter().map(|&v| fv_from([v; NUM_FEATURES])).collect()
    }

    #[test]
    fn quartiles() {
        let s = fit_scaling(&column(&[1.0, 2.0, 3.0, 4.0, 100.0])).unwrap();
        let q = s.get(FeatureName::HedgeSlope);
        assert_eq!((q.median, q.iqr), (3.0, 2.0));

        let s = fit_scaling(&column(&[4.0, 4.0, 4.0])).unwrap();
        let q = s.get(FeatureName::ScMax);
        assert_eq!((q.median, q.iqr), (4.0, 0.0));

        let s = fit_scaling(&column(&[10.0, 0.0])).unwrap();
        let q = s.get(FeatureName::EntityRepeat);
        assert_eq!((q.median, q.iqr), (5.0, 5.0));

        assert!(fit_scaling(&column(&[1.0])).is_err());
    }

    #[test]
    fn scaling() {
        let stats = fit_scaling(&column(&[1.0, 2.0, 3.0, 4.0, 100.0])).unwrap();
        let at_median = robust_scale(&fv_from([3.0; NUM_FEATURES]), &stats);
        assert!(at_median.values.iter().all(|&v| v == 0.0));
        let far = robust_scale(&fv_from([100.0; NUM_FEATURES]), &stats);
        assert!(far.values.iter().all(|&v| v == 3.0));
        assert_eq!(far.raw_words_per_step, 100.0);

        let flat = fit_scaling(&column(&[7.0, 7.0])).unwrap();
        let s = robust_scale(&fv_from([123.0; NUM_FEATURES]), &flat);
        assert!(s.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gate() {
        assert_eq!(gate_alpha(28.0, 28.0, 50.0).unwrap(), 1.0);
        let a = gate_alpha(38.0, DEFAULT_MU, DEFAULT_SIGMA_SQ).unwrap();
        assert!((a - (-1.0f64).exp()).abs() < 1e-12);
        assert_eq!(a, gate_alpha(18.0, 28.0, 50.0).unwrap());
        assert!(gate_alpha(1.0, 28.0, 0.0).is_err());
        assert!(gate_alpha(1.0, 28.0, -2.0).is_err());
    }

    fn scaled(values: [f64; NUM_FEATURES]) -> ScaledFeatures {
        ScaledFeatures {
            values,
            raw_words_per_step: 0.0,
        }
    }

    #[test]
    fn weights_follow_signs() {
        let w = BlockWeights::default();
        assert_eq!(w.get(FeatureName::QuestionRate), 1.0 / 3.0);
        assert_eq!(w.get(FeatureName::HedgeSlope), 0.2);
        assert_eq!(w.get(FeatureName::ColonFrac), -0.2);
        assert_eq!(w.get(FeatureName::MaxStepWc), -0.2);
        assert_eq!(w.get(FeatureName::ScMax), 0.2);
        assert_eq!(w.get(FeatureName::WcVarSlope), 0.2);
        assert_eq!(w.get(FeatureName::EntityRepeat), 1.0 / 3.0);
    }

    #[test]
    fn score_formula() {
        let w = BlockWeights::default();
        let zero = scaled([0.0; NUM_FEATURES]);
        for mask in BlockMask::all_subsets() {
            assert_eq!(tract_score(&zero, 0.3, &w, mask).unwrap(), 0.0);
        }

        let mut v = [1.0; NUM_FEATURES];
        v[FeatureName::ColonFrac.index()] = -1.0;
        let x = scaled(v);
        let structure_only = tract_score(&x, 0.0, &w, BlockMask::from_blocks(&[Block::Structure])).unwrap();
        assert_eq!(tract_score(&x, 1.0, &w, BlockMask::ALL).unwrap(), structure_only);

        let mut v = [0.0; NUM_FEATURES];
        v[FeatureName::HedgeSlope.index()] = 1.0;
        assert_eq!(tract_score(&scaled(v), 0.0, &w, BlockMask::ALL).unwrap(), 0.2);

        let mask = BlockMask::from_blocks(&[Block::Coherence, Block::Content]);
        let v = [0.5, -1.0, 2.0, 3.0, 3.0, 3.0, 3.0, 3.0, 1.0, -2.0, 0.25];
        let alpha = 0.4;
        let direct = (1.0 - alpha)
            * ((0.5 - 1.0 + 2.0) / 3.0 + (1.0 - 2.0 + 0.25) / 3.0);
        let got = tract_score(&scaled(v), alpha, &w, mask).unwrap();
        assert!((got - direct).abs() < 1e-15);

        assert!(matches!(
            tract_score(&zero, 0.0, &w, BlockMask::from_blocks(&[])),
            Err(TractError::EmptyBlockMask)
        ));
    }

    #[test]
    fn masks() {
        assert_eq!("all".parse::<BlockMask>().unwrap(), BlockMask::ALL);
        assert_eq!("s+co+ct".parse::<BlockMask>().unwrap(), BlockMask::ALL);
        let m: BlockMask = "structure,content".parse().unwrap();
        assert_eq!(m.to_string(), "S+Ct");
        assert!("".parse::<BlockMask>().is_err());
        assert!("bogus".parse::<BlockMask>().is_err());
        let subsets = BlockMask::all_subsets();
        assert_eq!(subsets.len(), 7);
        assert_eq!(subsets[0].to_string(), "S");
        assert_eq!(subsets[6], BlockMask::ALL);
    }

    #[test]
    fn stats_json_round_trip() {
        let stats = fit_scaling(&column(&[1.0, 2.0, 3.0, 4.0, 100.0])).unwrap();
        let json = stats.to_json().unwrap();
        assert!(json.contains("\"hedge_slope\""));
        assert_eq!(ScalingStats::from_json(&json).unwrap(), stats);
        assert!(ScalingStats::from_json("{}").is_err());
        assert!(ScalingStats::from_json(r#"{"bogus": {"median": 0, "iqr": 1}}"#).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn scaled_values_bounded(
                cols in proptest::collection::vec(proptest::array::uniform11(-1e3f64..1e3), 2..20),
                probe in proptest::array::uniform11(-1e4f64..1e4),
            ) {
                let fvs: Vec<FeatureVector> = cols.into_iter().map(fv_from).collect();
                let stats = fit_scaling(&fvs).unwrap();
                for fv in fvs.iter().chain(std::iter::once(&fv_from(probe))) {
                    let s = robust_scale(fv, &stats);
                    prop_assert!(s.values.iter().all(|v| (-3.0..=3.0).contains(v)));
                }
            }

            #[test]
            fn score_monotone_in_signed_features(
                base in proptest::array::uniform11(-3.0f64..3.0),
                idx in 0usize..NUM_FEATURES,
                bump in 0.0f64..2.0,
                alpha in 0.0f64..=1.0,
            ) {
                let w = BlockWeights::default();
                let lo = tract_score(&scaled(base), alpha, &w, BlockMask::ALL).unwrap();
                let mut up = base;
                up[idx] += bump;
                let hi = tract_score(&scaled(up), alpha, &w, BlockMask::ALL).unwrap();
                let f = FeatureName::ALL[idx];
                if f.sign() > 0.0 {
                    prop_assert!(hi >= lo - 1e-12);
                } else {
                    prop_assert!(hi <= lo + 1e-12);
                }
            }

            #[test]
            fn gate_decreases_away_from_mu(a in 0.0f64..60.0, b in 0.0f64..60.0) {
                let (near, far) = if a < b { (a, b) } else { (b, a) };
                let an = gate_alpha(DEFAULT_MU + near, DEFAULT_MU, DEFAULT_SIGMA_SQ).unwrap();
                let af = gate_alpha(DEFAULT_MU - far, DEFAULT_MU, DEFAULT_SIGMA_SQ).unwrap();
                prop_assert!(an >= af);
                prop_assert!(an > 0.0 && an <= 1.0);
            }
        }
    }
}
