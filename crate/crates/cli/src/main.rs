mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use tract_core::eval::{
    ablate_blocks, curves_csv, fuse, read_score_file, sensitivity_curve, stability_report,
    write_scores, ExternalScores, ScoreMap, ScoreSource,
};
use tract_core::features::FeatureName;
use tract_core::scorer::batch_features;
use tract_core::{
    apply_force, apply_remove, fit_scaling, parse_dataset, prepare_batch, score_batch, trace,
    BlockMask, Condition, EmrScorer, IngestOptions, SampleSet, ScalingStats, TraceScorer,
    TractScorer,
};

use config::{ConfigFile, Overrides, Settings};

#[derive(Args)]
struct Common {
    /// JSON config file (falls back to $TRACT_CONFIG).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Hedge word list, one token per line.
    #[arg(long, global = true)]
    hedges: Option<PathBuf>,
    /// Entity stoplist, one token per line.
    #[arg(long, global = true)]
    stoplist: Option<PathBuf>,
}

#[derive(Args)]
struct Io {
    /// Dataset in JSONL format.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Per-prompt feature table (CSV).
    Features {
        #[command(flatten)]
        io: Io,
    },
    /// TRACT scores as `prompt_id,score` CSV.
    Score {
        #[command(flatten)]
        io: Io,
        /// Persisted scaling statistics; fitted on the input when absent.
        #[arg(long)]
        stats: Option<PathBuf>,
        /// Feature blocks to include, e.g. `S+Co` or `all`.
        #[arg(long)]
        blocks: Option<String>,
    },
    /// Apply the Force or Remove intervention to a dataset.
    Perturb {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        mode: Condition,
    },
    /// AUC under original, Force and Remove conditions (JSON, or CSV scatter
    /// rows when the output ends in `.csv`).
    Eval {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        scorers: ScorerArgs,
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// TRACT AUC per feature-block subset.
    Ablate {
        #[command(flatten)]
        io: Io,
        /// Masks to evaluate; all seven subsets when omitted.
        #[arg(long, num_args = 1..)]
        blocks: Vec<String>,
    },
    /// Normalized score change as more of each trace is revealed (CSV).
    Sensitivity {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        scorers: ScorerArgs,
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Cross-validated logistic fusion of two scorers (JSON).
    Fuse {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        scorers: ScorerArgs,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Fit scaling statistics on a dataset and write them as JSON.
    Calibrate {
        #[command(flatten)]
        io: Io,
    },
}

#[derive(Args)]
struct ScorerArgs {
    /// Comma-separated scorer names: `tract`, `emr`, or an `--external` name.
    #[arg(long, default_value = "tract,emr")]
    scorers: String,
    /// Externally computed scores: `name=original.csv[,force.csv,remove.csv]`.
    #[arg(long)]
    external: Vec<String>,
}

#[derive(Parser)]
#[command(name = "tract", version, about = "Score sampled reasoning traces and evaluate scorer robustness")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<String> {
    let file = ConfigFile::load(cli.common.config.as_deref())?;
    let (blocks, seed, folds) = match &cli.command {
        Command::Score { blocks, .. } => (blocks.clone(), None, None),
        Command::Fuse { seed, folds, .. } => (None, *seed, *folds),
        _ => (None, None, None),
    };
    let settings = Settings::resolve(
        file,
        Overrides {
            hedge_lexicon: cli.common.hedges,
            stoplist: cli.common.stoplist,
            blocks,
            seed,
            folds,
            threads: cli.common.threads,
        },
    )?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.threads.unwrap_or(0))
        .build()
        .context("building thread pool")?;
    pool.install(|| dispatch(cli.command, &settings))
}

fn dispatch(command: Command, s: &Settings) -> Result<String> {
    match command {
        Command::Features { io } => cmd_features(&io, s),
        Command::Score { io, stats, .. } => cmd_score(&io, stats.as_deref(), s),
        Command::Perturb { io, mode } => cmd_perturb(&io, mode, s),
        Command::Eval { io, scorers, stats } => cmd_eval(&io, &scorers, stats.as_deref(), s),
        Command::Ablate { io, blocks } => cmd_ablate(&io, &blocks, s),
        Command::Sensitivity { io, scorers, stats } => {
            cmd_sensitivity(&io, &scorers, stats.as_deref(), s)
        }
        Command::Fuse { io, scorers, stats, .. } => cmd_fuse(&io, &scorers, stats.as_deref(), s),
        Command::Calibrate { io } => cmd_calibrate(&io, s),
    }
}

fn load_dataset(path: &Path, s: &Settings) -> Result<Vec<SampleSet>> {
    let opts = IngestOptions {
        extractor: s.tract.features.extractor.clone(),
    };
    parse_dataset(path, &opts).with_context(|| format!("reading {}", path.display()))
}

fn load_stats(path: Option<&Path>) -> Result<Option<ScalingStats>> {
    path.map(|p| {
        let text =
            std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        ScalingStats::from_json(&text).with_context(|| format!("parsing {}", p.display()))
    })
    .transpose()
}

/// Writes next to the destination, then renames over it.
fn write_atomic(input: &Path, output: &Path, contents: &str) -> Result<()> {
    if let (Ok(a), Ok(b)) = (input.canonicalize(), output.canonicalize()) {
        if a == b {
            bail!("output {} would overwrite the input", output.display());
        }
    }
    let dir = match output.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating temporary file in {}", dir.display()))?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(output)
        .with_context(|| format!("writing {}", output.display()))?;
    Ok(())
}

fn cmd_features(io: &Io, s: &Settings) -> Result<String> {
    let data = load_dataset(&io.input, s)?;
    let prepared = prepare_batch(&data, &s.tract.features.extractor);
    let features = batch_features(&prepared, &s.tract.features);
    let mut out = String::from("prompt_id");
    for f in FeatureName::ALL {
        out.push(',');
        out.push_str(f.as_str());
    }
    out.push_str(",raw_words_per_step,label\n");
    let mut written = 0;
    for (p, fv) in prepared.iter().zip(&features) {
        let Some(fv) = fv else { continue };
        out.push_str(&csv_field(&p.prompt_id));
        for v in fv.to_array() {
            out.push_str(&format!(",{v:?}"));
        }
        out.push_str(&format!(",{:?},{}\n", fv.raw_words_per_step, p.label));
        written += 1;
    }
    write_atomic(&io.input, &io.output, &out)?;
    Ok(format!(
        "features: {written} prompts ({} degenerate) -> {}",
        data.len() - written,
        io.output.display()
    ))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn cmd_score(io: &Io, stats: Option<&Path>, s: &Settings) -> Result<String> {
    let data = load_dataset(&io.input, s)?;
    let stats = load_stats(stats)?;
    let batch = score_batch(&data, &s.tract, stats.as_ref())?;
    let csv = write_scores(batch.prompts.iter().map(|p| (p.prompt_id.as_str(), p.score)))?;
    write_atomic(&io.input, &io.output, &csv)?;
    Ok(format!(
        "score: {} prompts ({} degenerate) -> {}",
        batch.prompts.len() - batch.degenerate_count(),
        batch.degenerate_count(),
        io.output.display()
    ))
}

fn cmd_perturb(io: &Io, mode: Condition, s: &Settings) -> Result<String> {
    let data = load_dataset(&io.input, s)?;
    let extractor = &s.tract.features.extractor;
    let mut emptied = 0;
    let perturbed: Vec<SampleSet> = data
        .iter()
        .map(|set| match mode {
            Condition::Original => set.clone(),
            Condition::Force => apply_force(set, extractor),
            Condition::Remove => {
                let out = apply_remove(set, extractor);
                emptied += out.emptied.len();
                out.sample_set
            }
        })
        .collect();
    write_atomic(&io.input, &io.output, &trace::to_jsonl(&perturbed)?)?;
    let mut summary = format!("perturb {mode}: {} prompts -> {}", perturbed.len(), io.output.display());
    if emptied > 0 {
        summary.push_str(&format!(" ({emptied} responses emptied and dropped)"));
    }
    Ok(summary)
}

fn parse_external(spec: &str) -> Result<ExternalScores> {
    let Some((name, files)) = spec.split_once('=') else {
        bail!("--external expects name=original.csv[,force.csv,remove.csv], got {spec:?}");
    };
    let paths: Vec<&str> = files.split(',').collect();
    let read = |p: &str| -> Result<ScoreMap> {
        read_score_file(p).with_context(|| format!("reading scores {p}"))
    };
    let (original, force, remove) = match paths.as_slice() {
        [o] => (read(o)?, None, None),
        [o, f, r] => (read(o)?, Some(read(f)?), Some(read(r)?)),
        _ => bail!("--external {name}: give one file or three (original,force,remove)"),
    };
    Ok(ExternalScores {
        name: name.to_string(),
        original,
        force,
        remove,
    })
}

/// Builtin scorers available by name.
struct Builtins {
    tract: TractScorer,
    emr: EmrScorer,
}

impl Builtins {
    fn new(s: &Settings, stats: Option<&Path>) -> Result<Self> {
        Ok(Self {
            tract: TractScorer {
                config: s.tract.clone(),
                stats: load_stats(stats)?,
            },
            emr: EmrScorer,
        })
    }

    fn get(&self, name: &str) -> Option<&dyn TraceScorer> {
        match name {
            "tract" => Some(&self.tract),
            "emr" => Some(&self.emr),
            _ => None,
        }
    }
}

fn scorer_names(args: &ScorerArgs) -> Vec<String> {
    args.scorers
        .split(',')
        .map(str::trim)
        .filter(|n| !n.is_empty())
        .map(str::to_string)
        .collect()
}

fn resolve_sources<'a>(args: &ScorerArgs, builtins: &'a Builtins) -> Result<Vec<ScoreSource<'a>>> {
    let mut externals: Vec<ExternalScores> =
        args.external.iter().map(|e| parse_external(e)).collect::<Result<_>>()?;
    let mut names = scorer_names(args);
    // external scorers not listed in --scorers are still included
    for e in &externals {
        if !names.contains(&e.name) {
            names.push(e.name.clone());
        }
    }
    let mut sources = Vec::new();
    for name in names {
        if let Some(pos) = externals.iter().position(|e| e.name == name) {
            sources.push(ScoreSource::External(externals.swap_remove(pos)));
        } else if let Some(b) = builtins.get(&name) {
            sources.push(ScoreSource::Builtin(b));
        } else {
            bail!("unknown scorer {name:?} (builtin: tract, emr)");
        }
    }
    Ok(sources)
}

fn cmd_eval(io: &Io, args: &ScorerArgs, stats: Option<&Path>, s: &Settings) -> Result<String> {
    let data = load_dataset(&io.input, s)?;
    let builtins = Builtins::new(s, stats)?;
    let sources = resolve_sources(args, &builtins)?;
    let report = stability_report(&data, &sources, &s.tract.features.extractor)?;
    let text = if has_extension(&io.output, "csv") {
        report.scatter_csv()
    } else {
        serde_json::to_string_pretty(&report)? + "\n"
    };
    write_atomic(&io.input, &io.output, &text)?;
    let cells: Vec<String> = report
        .scorers
        .iter()
        .map(|r| {
            let fmt = |a: Option<f64>| a.map_or("-".to_string(), |v| format!("{v:.4}"));
            format!("{} {:.4}/{}/{}", r.scorer, r.auc_original, fmt(r.auc_force), fmt(r.auc_remove))
        })
        .collect();
    Ok(format!(
        "eval: {} prompts; AUC original/force/remove: {} -> {}",
        report.n_dataset,
        cells.join(", "),
        io.output.display()
    ))
}

fn has_extension(path: &Path, ext: &str) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

fn cmd_ablate(io: &Io, blocks: &[String], s: &Settings) -> Result<String> {
    let data = load_dataset(&io.input, s)?;
    let masks: Vec<BlockMask> = if blocks.is_empty() {
        BlockMask::all_subsets()
    } else {
        blocks.iter().map(|b| b.parse()).collect::<Result<_, _>>()?
    };
    let prepared = prepare_batch(&data, &s.tract.features.extractor);
    let results = ablate_blocks(&prepared, &s.tract, &masks)?;
    let text = if has_extension(&io.output, "json") {
        serde_json::to_string_pretty(&results)? + "\n"
    } else {
        let mut out = String::from("blocks,auc,n_prompts\n");
        for r in &results {
            out.push_str(&format!("{},{:?},{}\n", r.blocks, r.auc, r.n_prompts));
        }
        out
    };
    write_atomic(&io.input, &io.output, &text)?;
    let best = results
        .iter()
        .max_by(|a, b| a.auc.total_cmp(&b.auc))
        .expect("at least one mask");
    Ok(format!(
        "ablate: {} masks, best {} (AUC {:.4}) -> {}",
        results.len(),
        best.blocks,
        best.auc,
        io.output.display()
    ))
}

fn cmd_sensitivity(io: &Io, args: &ScorerArgs, stats: Option<&Path>, s: &Settings) -> Result<String> {
    if !args.external.is_empty() {
        bail!("sensitivity needs scorers that can be re-run on truncated traces; --external is not supported");
    }
    let data = load_dataset(&io.input, s)?;
    let builtins = Builtins::new(s, stats)?;
    let prepared = prepare_batch(&data, &s.tract.features.extractor);
    let mut curves = Vec::new();
    for name in scorer_names(args) {
        let scorer = builtins
            .get(&name)
            .with_context(|| format!("unknown scorer {name:?} (builtin: tract, emr)"))?;
        curves.push(sensitivity_curve(&prepared, scorer, &s.fraction_grid)?);
    }
    if curves.is_empty() {
        bail!("no scorers given");
    }
    write_atomic(&io.input, &io.output, &curves_csv(&curves))?;
    Ok(format!(
        "sensitivity: {} scorers over {} stages -> {}",
        curves.len(),
        curves[0].stages.len(),
        io.output.display()
    ))
}

fn cmd_fuse(io: &Io, args: &ScorerArgs, stats: Option<&Path>, s: &Settings) -> Result<String> {
    let data = load_dataset(&io.input, s)?;
    let builtins = Builtins::new(s, stats)?;
    let names = scorer_names(args);
    let [primary_name, partner_name] = names.as_slice() else {
        bail!("fuse needs exactly two scorers, got {names:?}");
    };
    let externals: Vec<ExternalScores> =
        args.external.iter().map(|e| parse_external(e)).collect::<Result<_>>()?;
    let ids: Vec<&str> = data.iter().map(|d| d.prompt_id.as_str()).collect();
    let prepared = prepare_batch(&data, &s.tract.features.extractor);
    let scores_for = |name: &str| -> Result<Vec<Option<f64>>> {
        if let Some(e) = externals.iter().find(|e| e.name == name) {
            return Ok(ids.iter().map(|id| e.original.get(*id).copied()).collect());
        }
        let scorer = builtins
            .get(name)
            .with_context(|| format!("unknown scorer {name:?} (builtin: tract, emr)"))?;
        Ok(scorer.score(&prepared)?)
    };
    let a = scores_for(primary_name)?;
    let b = scores_for(partner_name)?;
    let keep: Vec<usize> = (0..data.len())
        .filter(|&i| a[i].is_some() && b[i].is_some())
        .collect();
    let pick = |v: &[Option<f64>]| -> Vec<f64> { keep.iter().map(|&i| v[i].expect("kept")).collect() };
    let labels: Vec<bool> = keep.iter().map(|&i| data[i].label).collect();
    let kept_ids: Vec<&str> = keep.iter().map(|&i| ids[i]).collect();
    let result = fuse(&pick(&a), &pick(&b), &labels, &kept_ids, s.folds, s.seed)?;

    #[derive(serde::Serialize)]
    struct FuseReport<'a> {
        primary: &'a str,
        partner: &'a str,
        n_prompts: usize,
        #[serde(flatten)]
        result: &'a tract_core::eval::FusionResult,
    }
    let report = FuseReport {
        primary: primary_name,
        partner: partner_name,
        n_prompts: keep.len(),
        result: &result,
    };
    write_atomic(&io.input, &io.output, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    Ok(format!(
        "fuse: {primary_name}+{partner_name} out-of-fold AUC {:.4} ({primary_name} {:.4}, {partner_name} {:.4}) -> {}",
        result.auc,
        result.primary_auc,
        result.partner_auc,
        io.output.display()
    ))
}

fn cmd_calibrate(io: &Io, s: &Settings) -> Result<String> {
    let data = load_dataset(&io.input, s)?;
    let prepared = prepare_batch(&data, &s.tract.features.extractor);
    let features: Vec<_> = batch_features(&prepared, &s.tract.features)
        .into_iter()
        .flatten()
        .collect();
    let stats = fit_scaling(&features)?;
    write_atomic(&io.input, &io.output, &(stats.to_json()? + "\n"))?;
    Ok(format!(
        "calibrate: scaling fitted on {} prompts -> {}",
        features.len(),
        io.output.display()
    ))
}
