use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::auc::roc_auc;
use super::scores::ScoreMap;
use crate::batch::{prepare_batch, PreparedSample, TraceScorer};
use crate::error::{Result, TractError};
use crate::interventions::{apply_condition, Condition};
use crate::steps::ExtractorConfig;
use crate::trace::SampleSet;

/// Scores computed elsewhere, one map per condition.
#[derive(Debug, Clone)]
pub struct ExternalScores {
    pub name: String,
    pub original: ScoreMap,
    pub force: Option<ScoreMap>,
    pub remove: Option<ScoreMap>,
}

pub enum ScoreSource<'a> {
    Builtin(&'a dyn TraceScorer),
    External(ExternalScores),
}

impl ScoreSource<'_> {
    pub fn name(&self) -> &str {
        match self {
            ScoreSource::Builtin(s) => s.name(),
            ScoreSource::External(e) => &e.name,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerReport {
    pub scorer: String,
    pub auc_original: f64,
    pub auc_force: Option<f64>,
    pub auc_remove: Option<f64>,
    /// Prompts scored under every available condition.
    pub n_prompts: usize,
    pub degenerate_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_dataset: usize,
    pub scorers: Vec<ScorerReport>,
}

impl EvalReport {
    /// Scatter rows: original AUC against the Force and Remove AUCs.
    pub fn scatter_csv(&self) -> String {
        let mut out = String::from("scorer,condition,auc_original,auc_condition\n");
        for s in &self.scorers {
            for (cond, auc) in [(Condition::Force, s.auc_force), (Condition::Remove, s.auc_remove)] {
                if let Some(a) = auc {
                    out.push_str(&format!("{},{},{:?},{:?}\n", s.scorer, cond, s.auc_original, a));
                }
            }
        }
        out
    }

    pub fn get(&self, scorer: &str) -> Option<&ScorerReport> {
        self.scorers.iter().find(|s| s.scorer == scorer)
    }
}

fn report_from_scores(
    name: &str,
    labels: &[bool],
    per_condition: &[Option<Vec<Option<f64>>>; 3],
) -> Result<ScorerReport> {
    let n = labels.len();
    let keep: Vec<usize> = (0..n)
        .filter(|&i| {
            per_condition
                .iter()
                .flatten()
                .all(|scores| scores[i].is_some())
        })
        .collect();
    let kept_labels: Vec<bool> = keep.iter().map(|&i| labels[i]).collect();
    let auc_for = |scores: &Vec<Option<f64>>| -> Result<f64> {
        let s: Vec<f64> = keep.iter().map(|&i| scores[i].expect("kept")).collect();
        roc_auc(&s, &kept_labels)
    };
    let [orig, force, remove] = per_condition;
    let orig = orig
        .as_ref()
        .ok_or_else(|| TractError::InvalidParameter(format!("{name}: no original scores")))?;
    Ok(ScorerReport {
        scorer: name.to_string(),
        auc_original: auc_for(orig)?,
        auc_force: force.as_ref().map(auc_for).transpose()?,
        auc_remove: remove.as_ref().map(auc_for).transpose()?,
        n_prompts: keep.len(),
        degenerate_count: n - keep.len(),
    })
}

fn lookup(map: &ScoreMap, ids: &[&str]) -> Vec<Option<f64>> {
    ids.iter().map(|id| map.get(*id).copied()).collect()
}

/// AUC of every scorer on the original, Force and Remove versions of the
/// dataset. Prompts a scorer cannot handle under any condition are excluded
/// from all three of its AUCs.
pub fn stability_report(
    dataset: &[SampleSet],
    sources: &[ScoreSource<'_>],
    extractor: &ExtractorConfig,
) -> Result<EvalReport> {
    if sources.is_empty() {
        return Err(TractError::InvalidParameter("no scorers given".into()));
    }
    let labels: Vec<bool> = dataset.iter().map(|s| s.label).collect();
    let ids: Vec<&str> = dataset.iter().map(|s| s.prompt_id.as_str()).collect();

    let needs_batches = sources.iter().any(|s| matches!(s, ScoreSource::Builtin(_)));
    let mut batches: HashMap<Condition, Vec<PreparedSample>> = HashMap::new();
    if needs_batches {
        for c in Condition::ALL {
            let perturbed: Vec<SampleSet> = dataset
                .iter()
                .map(|s| apply_condition(s, c, extractor))
                .collect();
            batches.insert(c, prepare_batch(&perturbed, extractor));
        }
    }

    let mut scorers = Vec::with_capacity(sources.len());
    for source in sources {
        let per_condition: [Option<Vec<Option<f64>>>; 3] = match source {
            ScoreSource::Builtin(scorer) => {
                let mut out: [Option<Vec<Option<f64>>>; 3] = [None, None, None];
                for (slot, c) in out.iter_mut().zip(Condition::ALL) {
                    *slot = Some(scorer.score(&batches[&c])?);
                }
                out
            }
            ScoreSource::External(ext) => [
                Some(lookup(&ext.original, &ids)),
                ext.force.as_ref().map(|m| lookup(m, &ids)),
                ext.remove.as_ref().map(|m| lookup(m, &ids)),
            ],
        };
        scorers.push(report_from_scores(source.name(), &labels, &per_condition)?);
    }
    Ok(EvalReport {
        n_dataset: dataset.len(),
        scorers,
    })
}
