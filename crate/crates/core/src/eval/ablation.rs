use serde::{Deserialize, Serialize};

use super::auc::roc_auc;
use crate::batch::PreparedSample;
use crate::error::{Result, TractError};
use crate::scorer::{batch_features, fit_scaling, robust_scale, gate_alpha, tract_score, BlockMask, TractConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub blocks: String,
    pub auc: f64,
    pub n_prompts: usize,
}

/// TRACT AUC under each block mask. Features and scaling are computed once;
/// only the score combination changes between masks.
pub fn ablate_blocks(
    dataset: &[PreparedSample],
    config: &TractConfig,
    masks: &[BlockMask],
) -> Result<Vec<AblationResult>> {
    if masks.is_empty() {
        return Err(TractError::InvalidParameter("no block masks given".into()));
    }
    if masks.iter().any(BlockMask::is_empty) {
        return Err(TractError::EmptyBlockMask);
    }
    let features = batch_features(dataset, &config.features);
    let scored: Vec<(usize, _)> = features
        .iter()
        .enumerate()
        .filter_map(|(i, f)| f.map(|f| (i, f)))
        .collect();
    let usable: Vec<_> = scored.iter().map(|(_, f)| *f).collect();
    let stats = fit_scaling(&usable)?;
    let labels: Vec<bool> = scored.iter().map(|(i, _)| dataset[*i].label).collect();
    let prepared: Vec<(f64, _)> = usable
        .iter()
        .map(|fv| {
            gate_alpha(fv.raw_words_per_step, config.mu, config.sigma_sq)
                .map(|a| (a, robust_scale(fv, &stats)))
        })
        .collect::<Result<_>>()?;

    masks
        .iter()
        .map(|&mask| {
            let scores = prepared
                .iter()
                .map(|(alpha, scaled)| tract_score(scaled, *alpha, &config.weights, mask))
                .collect::<Result<Vec<f64>>>()?;
            Ok(AblationResult {
                blocks: mask.to_string(),
                auc: roc_auc(&scores, &labels)?,
                n_prompts: scores.len(),
            })
        })
        .collect()
}
