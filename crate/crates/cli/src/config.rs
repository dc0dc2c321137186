//! JSON run configuration. Every field is optional; flags override it.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use tract_core::eval::default_fraction_grid;
use tract_core::scorer::{DEFAULT_MU, DEFAULT_SIGMA_SQ};
use tract_core::steps::DEFAULT_MIN_STEP_CHARS;
use tract_core::{BlockMask, ExtractorConfig, FeatureConfig, HedgeLexicon, TractConfig, WordList};

pub const CONFIG_ENV: &str = "TRACT_CONFIG";
pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_FOLDS: usize = 4;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub mu: Option<f64>,
    pub sigma_sq: Option<f64>,
    /// Hedge word list, one token per line.
    pub hedge_lexicon: Option<PathBuf>,
    /// Stoplist for entity extraction, one token per line.
    pub stoplist: Option<PathBuf>,
    pub markers: Option<Vec<String>>,
    pub min_step_chars: Option<usize>,
    pub fraction_grid: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub folds: Option<usize>,
    pub blocks: Option<String>,
    pub threads: Option<usize>,
}

impl ConfigFile {
    /// Loads `path`, or the file named by `TRACT_CONFIG`, or nothing.
    /// Relative word-list paths resolve against the config file's directory.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let path = match path {
            Some(p) => p.to_path_buf(),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => PathBuf::from(p),
                _ => return Ok(Self::default()),
            },
        };
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: ConfigFile = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.hedge_lexicon, &mut cfg.stoplist].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

/// Fully resolved settings for one run.
#[derive(Debug, Clone)]
pub struct Settings {
    pub tract: TractConfig,
    pub fraction_grid: Vec<f64>,
    pub seed: u64,
    pub folds: usize,
    pub threads: Option<usize>,
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Default)]
pub struct Overrides {
    pub hedge_lexicon: Option<PathBuf>,
    pub stoplist: Option<PathBuf>,
    pub blocks: Option<String>,
    pub seed: Option<u64>,
    pub folds: Option<usize>,
    pub threads: Option<usize>,
}

fn read_word_list(path: &Path) -> Result<WordList> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading word list {}", path.display()))?;
    WordList::from_lines(&text).with_context(|| format!("word list {}", path.display()))
}

impl Settings {
    pub fn resolve(file: ConfigFile, over: Overrides) -> Result<Self> {
        let mut extractor = match &file.markers {
            Some(m) => ExtractorConfig::with_markers(m)?,
            None => ExtractorConfig::default(),
        };
        extractor.min_step_chars = file.min_step_chars.unwrap_or(DEFAULT_MIN_STEP_CHARS);

        let hedges = match over.hedge_lexicon.or(file.hedge_lexicon) {
            Some(p) => read_word_list(&p)?,
            None => HedgeLexicon::default_hedges(),
        };
        let stoplist = match over.stoplist.or(file.stoplist) {
            Some(p) => read_word_list(&p)?,
            None => WordList::default_stoplist(),
        };
        let blocks = match over.blocks.or(file.blocks) {
            Some(b) => b.parse::<BlockMask>()?,
            None => BlockMask::ALL,
        };
        let tract = TractConfig {
            features: FeatureConfig::new(extractor, hedges, stoplist),
            mu: file.mu.unwrap_or(DEFAULT_MU),
            sigma_sq: file.sigma_sq.unwrap_or(DEFAULT_SIGMA_SQ),
            blocks,
            ..TractConfig::default()
        };
        tract_core::gate_alpha(tract.mu, tract.mu, tract.sigma_sq)?;

        let folds = over.folds.or(file.folds).unwrap_or(DEFAULT_FOLDS);
        if folds < 2 {
            bail!("folds must be at least 2, got {folds}");
        }
        Ok(Self {
            tract,
            fraction_grid: file.fraction_grid.unwrap_or_else(default_fraction_grid),
            seed: over.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            folds,
            threads: over.threads.or(file.threads),
        })
    }
}
