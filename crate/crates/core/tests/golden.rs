//! Compares the library against golden values produced by the independent
//! reference in `tests/fixtures/oracle.py`.

use std::path::PathBuf;

use serde_json::Value;
use tract_core::features::FeatureName;
use tract_core::{parse_dataset, score_batch, IngestOptions, TractConfig};

const TOL: f64 = 1e-12;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn golden() -> Vec<Value> {
    let text = std::fs::read_to_string(fixture("golden_features.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn fixture_features_labels_and_scores_match_reference() {
    let data = parse_dataset(fixture("dataset.jsonl"), &IngestOptions::default()).unwrap();
    let batch = score_batch(&data, &TractConfig::default(), None).unwrap();
    let expected = golden();
    assert_eq!(batch.prompts.len(), expected.len());

    for (got, want) in batch.prompts.iter().zip(&expected) {
        let id = want["prompt_id"].as_str().unwrap();
        assert_eq!(got.prompt_id, id);
        assert_eq!(got.label, want["label"].as_bool().unwrap(), "{id}: label");
        match (&got.features, want.get("features")) {
            (None, None) => assert!(got.score.is_none(), "{id}: degenerate prompt scored"),
            (Some(fv), Some(wf)) => {
                for f in FeatureName::ALL {
                    let w = wf[f.as_str()].as_f64().unwrap();
                    let g = fv.get(f);
                    assert!((g - w).abs() <= TOL, "{id}: {} = {g}, reference {w}", f.as_str());
                }
                let w = want["raw_words_per_step"].as_f64().unwrap();
                assert!((fv.raw_words_per_step - w).abs() <= TOL, "{id}: raw_words_per_step");
                let ws = want["score"].as_f64().unwrap();
                let gs = got.score.unwrap();
                assert!((gs - ws).abs() <= 1e-9, "{id}: score {gs}, reference {ws}");
            }
            (g, w) => panic!("{id}: degenerate mismatch, library {g:?}, reference {w:?}"),
        }
    }
}

#[test]
fn fixture_has_both_classes_and_a_degenerate_prompt() {
    let expected = golden();
    let labels: Vec<bool> = expected.iter().map(|e| e["label"].as_bool().unwrap()).collect();
    assert!(labels.contains(&true) && labels.contains(&false));
    assert!(expected.iter().any(|e| e.get("features").is_none()));
}
