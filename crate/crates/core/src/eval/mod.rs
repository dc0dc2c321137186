//! Evaluation harness: AUC, Force/Remove stability, step-wise
//! sensitivity, block ablations and logistic fusion.

mod ablation;
mod auc;
mod fusion;
mod scores;
mod sensitivity;
mod stability;

pub use ablation::{ablate_blocks, AblationResult};
pub use auc::roc_auc;
pub use fusion::{fuse, stratified_folds, FusionResult, LogisticModel};
pub use scores::{read_score_file, read_scores, write_scores, ScoreMap};
pub use sensitivity::{curves_csv, default_fraction_grid, ANSWER_STAGE, sensitivity_curve, SensitivityCurve};
pub use stability::{stability_report, EvalReport, ExternalScores, ScoreSource, ScorerReport};
