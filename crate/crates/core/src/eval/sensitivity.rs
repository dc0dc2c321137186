use serde::{Deserialize, Serialize};

use crate::batch::{PreparedSample, TraceScorer};
use crate::error::{Result, TractError};

pub const ANSWER_STAGE: &str = "+ans";

/// `0.1, 0.2, ..., 1.0`.
pub fn default_fraction_grid() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

/// Mean absolute score change per reveal transition, divided by the
/// largest transition.
///
/// `stages[i]` names the stage reached by transition `i`: every grid
/// fraction after the first, then `+ans`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityCurve {
    pub scorer: String,
    pub stages: Vec<String>,
    pub values: Vec<f64>,
    /// Set when the scorer never changed; `values` are then all zero.
    pub constant: bool,
    /// Prompts scored at every stage.
    pub n_prompts: usize,
}

impl SensitivityCurve {
    pub fn value_at(&self, stage: &str) -> Option<f64> {
        self.stages
            .iter()
            .position(|s| s == stage)
            .map(|i| self.values[i])
    }
}

fn stage_label(f: f64) -> String {
    let s = format!("{f:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Reveals each trace progressively (`ceil(f * T_k)` steps at fraction `f`,
/// answers withheld), then the full response with its answer, and measures
/// how much the scorer moves between consecutive stages.
///
/// Scores are min-max normalized across all stages and prompts; since that
/// map is affine the deltas are taken on raw scores and divided by the span.
pub fn sensitivity_curve(
    dataset: &[PreparedSample],
    scorer: &dyn TraceScorer,
    fractions: &[f64],
) -> Result<SensitivityCurve> {
    if fractions.is_empty() {
        return Err(TractError::InvalidParameter("empty fraction grid".into()));
    }
    let mut prev = 0.0;
    for &f in fractions {
        if !(f > prev && f <= 1.0) {
            return Err(TractError::InvalidParameter(format!(
                "fraction grid must be strictly increasing in (0, 1], got {fractions:?}"
            )));
        }
        prev = f;
    }

    let mut stage_scores: Vec<Vec<Option<f64>>> = Vec::with_capacity(fractions.len() + 1);
    for &f in fractions {
        let view: Vec<PreparedSample> = dataset.iter().map(|p| p.reveal_prefix(f)).collect();
        stage_scores.push(scorer.score(&view)?);
    }
    stage_scores.push(scorer.score(dataset)?);

    let keep: Vec<usize> = (0..dataset.len())
        .filter(|&i| stage_scores.iter().all(|s| s[i].is_some()))
        .collect();
    if keep.is_empty() {
        return Err(TractError::NotEnoughData { needed: 1, got: 0 });
    }
    let grid: Vec<Vec<f64>> = stage_scores
        .iter()
        .map(|s| keep.iter().map(|&i| s[i].expect("kept")).collect())
        .collect();

    let (lo, hi) = grid
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;

    let stages: Vec<String> = fractions[1..]
        .iter()
        .map(|&f| stage_label(f))
        .chain(std::iter::once(ANSWER_STAGE.to_string()))
        .collect();

    if !(span > 0.0) {
        return Ok(SensitivityCurve {
            scorer: scorer.name().to_string(),
            values: vec![0.0; stages.len()],
            stages,
            constant: true,
            n_prompts: keep.len(),
        });
    }

    let n = keep.len() as f64;
    let mut values: Vec<f64> = grid
        .windows(2)
        .map(|w| {
            w[0].iter()
                .zip(&w[1])
                .map(|(a, b)| (b - a).abs())
                .sum::<f64>()
                / n
                / span
        })
        .collect();
    let peak = values.iter().copied().fold(0.0, f64::max);
    let constant = !(peak > 0.0);
    if !constant {
        for v in &mut values {
            *v /= peak;
        }
    }
    Ok(SensitivityCurve {
        scorer: scorer.name().to_string(),
        stages,
        values,
        constant,
        n_prompts: keep.len(),
    })
}

/// One row per stage, one column per curve. Curves must share stages.
pub fn curves_csv(curves: &[SensitivityCurve]) -> String {
    let mut out = String::from("stage");
    for c in curves {
        out.push(',');
        out.push_str(&c.scorer);
    }
    out.push('\n');
    if let Some(first) = curves.first() {
        for (i, stage) in first.stages.iter().enumerate() {
            out.push_str(stage);
            for c in curves {
                out.push_str(&format!(",{:?}", c.values[i]));
            }
            out.push('\n');
        }
    }
    out
}
