use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use crate::error::{Result, TractError};

/// Scores keyed by prompt id.
pub type ScoreMap = BTreeMap<String, f64>;

/// Reads a `prompt_id,score` CSV with a header row.
pub fn read_scores<R: Read>(reader: R) -> Result<ScoreMap> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = ScoreMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let (Some(id), Some(score)) = (rec.get(0), rec.get(1)) else {
            return Err(TractError::MalformedLine {
                line,
                message: "expected prompt_id,score".into(),
            });
        };
        let score: f64 = score.parse().map_err(|_| TractError::MalformedLine {
            line,
            message: format!("bad score {score:?}"),
        })?;
        if out.insert(id.to_string(), score).is_some() {
            return Err(TractError::DuplicatePromptId {
                line,
                prompt_id: id.to_string(),
            });
        }
    }
    Ok(out)
}

pub fn read_score_file(path: impl AsRef<Path>) -> Result<ScoreMap> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| TractError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_scores(file)
}

/// Renders `(prompt_id, score)` rows as CSV; `None` scores are skipped.
pub fn write_scores<'a, I>(rows: I) -> Result<String>
where
    I: IntoIterator<Item = (&'a str, Option<f64>)>,
{
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["prompt_id", "score"])?;
    for (id, score) in rows {
        if let Some(s) = score {
            wtr.write_record([id, &format!("{s:?}")])?;
        }
    }
    let bytes = wtr.into_inner().map_err(|e| TractError::InvalidParameter(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
