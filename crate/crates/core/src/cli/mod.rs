//! The `leda` command line: dataset generation, scoring, both training
//! stages, evaluation, token reports and plots.
//!
//! Every command except `gen-phantoms` writes into a fresh run directory
//! `<out>/<command>-<UTC timestamp>` holding its artifacts and a
//! `config.txt` echo (resolved settings plus input digests).

mod plot;
mod rundir;
mod settings;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

pub use plot::{bar_chart, history_charts, line_chart, metric_charts, HistoryKind, Series, Table};
pub use rundir::{
    create_run_dir, hash_file, hash_tree, list_files, tree_digest, verify_manifest, write_config_echo, write_manifest,
    CONFIG_ECHO, MANIFEST,
};
pub use settings::{CodebookSource, DataConfig, RunConfig};

use crate::autoencoder::{train_autoencoder, AeDataset, AE_CHECKPOINT};
use crate::codebook::LlmCodebook;
use crate::config::parse_override;
use crate::ctdata::{load_images, load_split, phantom_seed, read_cti, split_dir, synthesize_pair, write_pair, CtImage, Split};
use crate::error::{Error, Result};
use crate::explain::{render_report, tokens_for_image, LayerSelection};
use crate::history::write_csv;
use crate::leda::{train_denoiser, Denoiser, DenoiserDataset, FrozenAutoencoder, LatentEncoder, DENOISER_CHECKPOINT};
use crate::metrics::{evaluate_pairs, render_table, EvaluationReport, Metric};
use crate::nn::{checkpoint_file_hash, manifest_path, normalize_stem};
use crate::scorer::{score_image, PrecomputedScores, ScoreFileKind, Scorer, SyntheticScorer};

/// Codebook files stored next to an autoencoder checkpoint.
pub const CODEBOOK_VOCAB: &str = "codebook.vocab.txt";
pub const CODEBOOK_EMBEDDINGS: &str = "codebook.emb";
pub const SCORES_FILE: &str = "scores.bin";

#[derive(Debug, Parser)]
#[command(name = "leda", version, about = "LLM-codebook CT autoencoder and aligned denoiser training")]
pub struct Cli {
    /// Key/value config file (`section.key = value` per line).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Seed for every stochastic stage; overrides seeds set in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output root (run directories), or the dataset directory for `gen-phantoms`.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Allow `gen-phantoms` to replace an existing dataset.
    #[arg(long, global = true)]
    pub force: bool,

    /// Config override, applied after the file. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,

    /// No progress output on stderr.
    #[arg(long, short, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate paired synthetic phantoms (train and test splits).
    GenPhantoms(GenArgs),
    /// Score a split's normal-dose images against the codebook.
    Score(ScoreArgs),
    /// Train the codebook-quantized autoencoder.
    TrainAe(TrainAeArgs),
    /// Train a denoiser against a frozen autoencoder.
    TrainDenoiser(TrainDenoiserArgs),
    /// Evaluate denoisers on the test split.
    Eval(EvalArgs),
    /// Render the tokens images quantize to.
    Explain(ExplainArgs),
    /// Draw loss curves and metric charts.
    Plot(PlotArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Ndct,
    Ldct,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub count_train: Option<usize>,
    #[arg(long)]
    pub count_test: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "train")]
    pub split: SplitArg,
    /// Store only non-negative scores.
    #[arg(long)]
    pub sparse: bool,
}

#[derive(Debug, Args)]
pub struct TrainAeArgs {
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Precomputed scores; without it images are scored on the fly.
    #[arg(long, value_name = "FILE")]
    pub scores: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainDenoiserArgs {
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Autoencoder checkpoint, or the `train-ae` run directory.
    #[arg(long, value_name = "PATH")]
    pub autoencoder: PathBuf,
    /// Loss variant: full, continuous-only, discrete-only or mse-only.
    #[arg(long)]
    pub mode: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Denoiser checkpoint or `train-denoiser` run directory. Repeatable.
    #[arg(long, value_name = "PATH")]
    pub denoiser: Vec<PathBuf>,
    /// Row label per denoiser, in order. Defaults to the loss variant.
    #[arg(long)]
    pub label: Vec<String>,
    /// Also evaluate the unprocessed low-dose input.
    #[arg(long)]
    pub passthrough: bool,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long, value_name = "PATH")]
    pub autoencoder: PathBuf,
    #[arg(long, value_name = "DIR", conflicts_with = "image")]
    pub data: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub image: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    #[arg(long, value_enum, default_value = "ndct")]
    pub kind: KindArg,
    /// Comma-separated 1-based layers.
    #[arg(long, value_delimiter = ',', conflicts_with = "all_layers")]
    pub layers: Vec<usize>,
    #[arg(long)]
    pub all_layers: bool,
    /// Images reported from `--data`.
    #[arg(long, default_value_t = 4)]
    pub limit: usize,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Loss history CSV from a training run. Repeatable.
    #[arg(long, value_name = "FILE")]
    pub history: Vec<PathBuf>,
    /// `summary.csv` from an eval run.
    #[arg(long, value_name = "FILE")]
    pub metrics: Option<PathBuf>,
}

struct Ctx {
    config: RunConfig,
    out: PathBuf,
    force: bool,
    quiet: bool,
}

impl Ctx {
    fn progress(&self, msg: impl FnOnce() -> String) {
        if !self.quiet {
            eprintln!("{}", msg());
        }
    }
}

/// Parses `args` and runs the command; returns the process exit code.
/// Failures print `error [<category>]: <message>` on stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            eprintln!("error [config]: {}", e.render().to_string().trim_end());
            return crate::ErrorCategory::Config.exit_code();
        }
    };
    match run(cli) {
        Ok(path) => {
            println!("{}", path.display());
            0
        }
        Err(e) => {
            let cat = e.category();
            eprintln!("error [{}]: {e}", cat.label());
            cat.exit_code()
        }
    }
}

/// Runs one command and returns the directory it wrote.
pub fn run(cli: Cli) -> Result<PathBuf> {
    let mut overrides = cli.set.iter().map(|s| parse_override(s)).collect::<Result<Vec<_>>>()?;
    match &cli.command {
        Command::GenPhantoms(a) => {
            if let Some(n) = a.count_train {
                overrides.push(("data.count_train".into(), n.to_string()));
            }
            if let Some(n) = a.count_test {
                overrides.push(("data.count_test".into(), n.to_string()));
            }
        }
        Command::TrainDenoiser(a) => {
            if let Some(m) = &a.mode {
                overrides.push(("denoiser.mode".into(), m.clone()));
            }
        }
        _ => {}
    }
    let config = RunConfig::load(cli.config.as_deref(), &overrides, cli.seed)?;
    let default_out = match cli.command {
        Command::GenPhantoms(_) => "data",
        _ => "runs",
    };
    let ctx = Ctx {
        config,
        out: cli.out.clone().unwrap_or_else(|| PathBuf::from(default_out)),
        force: cli.force,
        quiet: cli.quiet,
    };
    match &cli.command {
        Command::GenPhantoms(_) => gen_phantoms(&ctx),
        Command::Score(a) => score(&ctx, a),
        Command::TrainAe(a) => train_ae(&ctx, a),
        Command::TrainDenoiser(a) => train_denoiser_cmd(&ctx, a),
        Command::Eval(a) => eval(&ctx, a),
        Command::Explain(a) => explain(&ctx, a),
        Command::Plot(a) => plot_cmd(&ctx, a),
    }
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn require_dataset(dir: &Path) -> Result<()> {
    if !dir.is_dir() {
        return Err(Error::MissingPrerequisite(format!(
            "dataset directory {} does not exist (run gen-phantoms first)",
            dir.display()
        )));
    }
    if dir.join(MANIFEST).is_file() {
        let bad = verify_manifest(dir)?;
        if !bad.is_empty() {
            return Err(Error::Invalid(format!(
                "dataset {} no longer matches its manifest: {}",
                dir.display(),
                bad.join(", ")
            )));
        }
    }
    Ok(())
}

fn dataset_digest(dir: &Path) -> Result<String> {
    tree_digest(dir, &[CONFIG_ECHO])
}

/// Accepts a checkpoint stem, one of its files, or a run directory that
/// holds `default_stem`.
fn resolve_checkpoint(path: &Path, default_stem: &str, what: &str) -> Result<PathBuf> {
    let stem = if path.is_dir() {
        path.join(default_stem)
    } else {
        normalize_stem(path)
    };
    if !manifest_path(&stem).is_file() {
        return Err(Error::MissingPrerequisite(format!(
            "{what} checkpoint {} does not exist",
            stem.display()
        )));
    }
    Ok(stem)
}

/// The codebook an autoencoder was trained with: the copy next to its
/// checkpoint if present, otherwise the configured one.
fn codebook_for(ckpt: &Path, config: &RunConfig) -> Result<LlmCodebook> {
    let dir = ckpt.parent().unwrap_or(Path::new("."));
    let (v, e) = (dir.join(CODEBOOK_VOCAB), dir.join(CODEBOOK_EMBEDDINGS));
    if v.is_file() && e.is_file() {
        LlmCodebook::load(&v, &e)
    } else {
        config.load_codebook()
    }
}

fn load_autoencoder(path: &Path, config: &RunConfig) -> Result<(FrozenAutoencoder, String)> {
    let stem = resolve_checkpoint(path, AE_CHECKPOINT, "autoencoder")?;
    let hash = checkpoint_file_hash(&stem)?;
    let ae = FrozenAutoencoder::load(&stem, codebook_for(&stem, config)?)?;
    Ok((ae, hash))
}

fn gen_phantoms(ctx: &Ctx) -> Result<PathBuf> {
    let dir = &ctx.out;
    let data = &ctx.config.data;
    if dir.exists() {
        let occupied = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?.next().is_some();
        if occupied {
            if !ctx.force {
                return Err(Error::Invalid(format!(
                    "{} is not empty (use --force to replace the dataset)",
                    dir.display()
                )));
            }
            for split in [Split::Train, Split::Test] {
                let p = dir.join(split.dir_name());
                if p.exists() {
                    fs::remove_dir_all(&p).map_err(|e| Error::io(&p, e))?;
                }
            }
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (split, count) in [(Split::Train, data.count_train), (Split::Test, data.count_test)] {
        ctx.progress(|| format!("generating {count} {} pairs", split.dir_name()));
        let pairs = (0..count as u64)
            .into_par_iter()
            .map(|i| {
                let spec = data.phantom.with_seed(phantom_seed(data.phantom.seed, split, i));
                synthesize_pair(&spec, data.photon_count)
            })
            .collect::<Result<Vec<_>>>()?;
        for kind in ["ldct", "ndct"] {
            let p = split_dir(dir, split, kind);
            fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        for pair in &pairs {
            write_pair(dir, split, pair)?;
        }
    }
    write_config_echo(dir, "gen-phantoms", &ctx.config, &[])?;
    write_manifest(dir)?;
    Ok(dir.clone())
}

fn score(ctx: &Ctx, a: &ScoreArgs) -> Result<PathBuf> {
    require_dataset(&a.data)?;
    let split: Split = a.split.into();
    let images = load_images(&split_dir(&a.data, split, "ndct"))?;
    let codebook = ctx.config.load_codebook()?;
    let scorer = SyntheticScorer::new(codebook);
    ctx.progress(|| format!("scoring {} images against {} tokens", images.len(), scorer.vocab_size()));
    let sims = images.par_iter().map(|img| score_image(img, &scorer)).collect::<Result<Vec<_>>>()?;
    let mut scores = PrecomputedScores::new(scorer.vocab_size());
    for s in sims {
        scores.insert(s)?;
    }
    let run = create_run_dir(&ctx.out, "score")?;
    let kind = if a.sparse { ScoreFileKind::Sparse } else { ScoreFileKind::Dense };
    scores.write(&run.join(SCORES_FILE), kind)?;
    write_config_echo(
        &run,
        "score",
        &ctx.config,
        &[
            ("data", dataset_digest(&a.data)?),
            ("split", split.dir_name().into()),
            ("format", if a.sparse { "sparse" } else { "dense" }.into()),
        ],
    )?;
    Ok(run)
}

fn train_ae(ctx: &Ctx, a: &TrainAeArgs) -> Result<PathBuf> {
    require_dataset(&a.data)?;
    let cfg = &ctx.config.autoencoder;
    let codebook = ctx.config.load_codebook()?;
    let images: Vec<CtImage> = load_split(&a.data, Split::Train)?
        .into_iter()
        .map(|p| p.ndct().clone())
        .collect();
    let mut inputs = vec![("data", dataset_digest(&a.data)?)];
    let data = match &a.scores {
        Some(p) => {
            if !p.is_file() {
                return Err(Error::MissingPrerequisite(format!("score file {} does not exist", p.display())));
            }
            inputs.push(("scores", hash_file(p)?));
            let scores = PrecomputedScores::read(p)?;
            AeDataset::prepare(&images, &scores, &cfg.thresholds)?
        }
        None => AeDataset::prepare(&images, &SyntheticScorer::new(codebook.clone()), &cfg.thresholds)?,
    };
    let run = create_run_dir(&ctx.out, "train-ae")?;
    write_config_echo(&run, "train-ae", &ctx.config, &inputs)?;
    codebook.save(&run.join(CODEBOOK_VOCAB), &run.join(CODEBOOK_EMBEDDINGS))?;
    ctx.progress(|| format!("training autoencoder for {} steps on {} images", cfg.steps, data.len()));
    let every = (cfg.steps / 10).max(1);
    train_autoencoder(&data, &codebook, cfg, Some(&run), |r| {
        if r.step % every == 0 || r.step + 1 == cfg.steps {
            ctx.progress(|| {
                format!(
                    "step {:>5}  recon {:.4e}  semantic {:.4e}  total {:.4e}",
                    r.step, r.recon, r.semantic, r.total
                )
            });
        }
    })?;
    Ok(run)
}

fn train_denoiser_cmd(ctx: &Ctx, a: &TrainDenoiserArgs) -> Result<PathBuf> {
    require_dataset(&a.data)?;
    let (ae, ae_hash) = load_autoencoder(&a.autoencoder, &ctx.config)?;
    let cfg = &ctx.config.denoiser;
    let data = DenoiserDataset::prepare(&load_split(&a.data, Split::Train)?)?;
    let run = create_run_dir(&ctx.out, "train-denoiser")?;
    write_config_echo(
        &run,
        "train-denoiser",
        &ctx.config,
        &[("data", dataset_digest(&a.data)?), ("autoencoder", ae_hash)],
    )?;
    ctx.progress(|| format!("training {} denoiser for {} steps on {} pairs", cfg.mode.label(), cfg.steps, data.len()));
    let every = (cfg.steps / 10).max(1);
    let out = train_denoiser(&data, &ae, cfg, Some(&run), |r| {
        if r.step % every == 0 || r.step + 1 == cfg.steps {
            ctx.progress(|| {
                format!(
                    "step {:>5}  mse {:.4e}  continuous {:.4e}  discrete {:.4e}  total {:.4e}",
                    r.step, r.mse, r.continuous, r.discrete, r.total
                )
            });
        }
    })?;
    let mut archive = out.archive;
    archive.set_meta("autoencoder.checkpoint", ae.checkpoint_hash());
    archive.write(&run.join(DENOISER_CHECKPOINT))?;
    Ok(run)
}

/// One row of the eval `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct SummaryRow {
    pub label: String,
    pub n: usize,
    pub psnr_mean: f64,
    pub psnr_std: f64,
    pub psnr_excluded: usize,
    pub ssim_mean: f64,
    pub ssim_std: f64,
    pub fsim_mean: f64,
    pub fsim_std: f64,
}

impl SummaryRow {
    pub fn new(label: &str, r: &EvaluationReport) -> Self {
        let m = |k: Metric| r.metric(k);
        Self {
            label: label.to_string(),
            n: r.pairs.len(),
            psnr_mean: m(Metric::Psnr).mean,
            psnr_std: m(Metric::Psnr).std,
            psnr_excluded: m(Metric::Psnr).excluded,
            ssim_mean: m(Metric::Ssim).mean,
            ssim_std: m(Metric::Ssim).std,
            fsim_mean: m(Metric::Fsim).mean,
            fsim_std: m(Metric::Fsim).std,
        }
    }
}

fn file_label(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Denoises in fixed-size batches.
fn denoise_all(den: &Denoiser, images: &[CtImage]) -> Result<Vec<CtImage>> {
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(8) {
        out.extend(den.denoise(chunk)?);
    }
    Ok(out)
}

fn eval(ctx: &Ctx, a: &EvalArgs) -> Result<PathBuf> {
    if a.denoiser.is_empty() && !a.passthrough {
        return Err(Error::Config("eval needs at least one --denoiser or --passthrough".into()));
    }
    if a.label.len() > a.denoiser.len() {
        return Err(Error::Config(format!(
            "{} labels for {} denoisers",
            a.label.len(),
            a.denoiser.len()
        )));
    }
    require_dataset(&a.data)?;
    let mut inputs = vec![("data".to_string(), dataset_digest(&a.data)?)];
    let mut models: Vec<(String, Denoiser)> = Vec::new();
    if a.passthrough {
        models.push(("noisy".into(), Denoiser::Passthrough));
    }
    for (i, p) in a.denoiser.iter().enumerate() {
        let stem = resolve_checkpoint(p, DENOISER_CHECKPOINT, "denoiser")?;
        inputs.push((format!("denoiser.{i}"), checkpoint_file_hash(&stem)?));
        let den = Denoiser::load(&stem)?;
        let label = match (a.label.get(i), &den) {
            (Some(l), _) => l.clone(),
            (None, Denoiser::Network { config, .. }) => config.mode.label().to_string(),
            (None, Denoiser::Passthrough) => "noisy".into(),
        };
        models.push((label, den));
    }
    // Repeated labels get a numeric suffix so file names stay unique.
    let mut seen = std::collections::BTreeMap::<String, usize>::new();
    for (label, _) in models.iter_mut() {
        let n = seen.entry(label.clone()).or_insert(0);
        *n += 1;
        if *n > 1 {
            *label = format!("{label}-{n}");
        }
    }

    let pairs = load_split(&a.data, Split::Test)?;
    let noisy: Vec<CtImage> = pairs.iter().map(|p| p.ldct().clone()).collect();
    let refs: Vec<CtImage> = pairs.iter().map(|p| p.ndct().clone()).collect();
    let run = create_run_dir(&ctx.out, "eval")?;
    let input_refs: Vec<(&str, String)> = inputs.iter().map(|(k, v)| (k.as_str(), v.clone())).collect();
    write_config_echo(&run, "eval", &ctx.config, &input_refs)?;

    let mut reports = Vec::new();
    for (label, den) in &models {
        ctx.progress(|| format!("evaluating {label} on {} test pairs", pairs.len()));
        let outputs = denoise_all(den, &noisy)?;
        let report = evaluate_pairs(&outputs, &refs, ctx.config.metric_window)?;
        report.write_csv(&run.join(format!("metrics-{}.csv", file_label(label))))?;
        reports.push((label.clone(), report));
    }
    let rows: Vec<(String, &EvaluationReport)> = reports.iter().map(|(l, r)| (l.clone(), r)).collect();
    let table = render_table(&rows);
    write_file(&run.join("table.md"), &table)?;
    let summary: Vec<SummaryRow> = reports.iter().map(|(l, r)| SummaryRow::new(l, r)).collect();
    write_csv(&run.join("summary.csv"), &summary)?;
    ctx.progress(|| table.clone());
    Ok(run)
}

fn explain(ctx: &Ctx, a: &ExplainArgs) -> Result<PathBuf> {
    let (ae, ae_hash) = load_autoencoder(&a.autoencoder, &ctx.config)?;
    let mut inputs = vec![("autoencoder".to_string(), ae_hash)];
    let images: Vec<CtImage> = match (&a.image, &a.data) {
        (Some(p), _) => {
            if !p.is_file() {
                return Err(Error::MissingPrerequisite(format!("image {} does not exist", p.display())));
            }
            inputs.push(("image".into(), hash_file(p)?));
            vec![read_cti(p)?]
        }
        (None, Some(d)) => {
            require_dataset(d)?;
            inputs.push(("data".into(), dataset_digest(d)?));
            let kind = match a.kind {
                KindArg::Ndct => "ndct",
                KindArg::Ldct => "ldct",
            };
            let mut imgs = load_images(&split_dir(d, a.split.into(), kind))?;
            imgs.truncate(a.limit);
            imgs
        }
        (None, None) => return Err(Error::Config("explain needs --image or --data".into())),
    };
    let selection = if a.all_layers {
        LayerSelection::All
    } else if !a.layers.is_empty() {
        LayerSelection::Only(a.layers.clone())
    } else {
        LayerSelection::Default
    };
    let reports = images
        .iter()
        .map(|img| render_report(&tokens_for_image(img, &ae)?, ae.codebook(), &selection))
        .collect::<Result<Vec<_>>>()?;
    let run = create_run_dir(&ctx.out, "explain")?;
    let input_refs: Vec<(&str, String)> = inputs.iter().map(|(k, v)| (k.as_str(), v.clone())).collect();
    write_config_echo(&run, "explain", &ctx.config, &input_refs)?;
    for r in &reports {
        r.write(&run.join(format!("tokens-{}", file_label(&r.image_id))))?;
        ctx.progress(|| r.to_text());
    }
    Ok(run)
}

fn plot_cmd(ctx: &Ctx, a: &PlotArgs) -> Result<PathBuf> {
    if a.history.is_empty() && a.metrics.is_none() {
        return Err(Error::Config("plot needs --history or --metrics".into()));
    }
    let mut files = Vec::new();
    let mut inputs = Vec::new();
    for (i, h) in a.history.iter().enumerate() {
        if !h.is_file() {
            return Err(Error::MissingPrerequisite(format!("history {} does not exist", h.display())));
        }
        inputs.push((format!("history.{i}"), hash_file(h)?));
        let prefix = if a.history.len() > 1 { format!("h{i}-") } else { String::new() };
        for (name, svg) in history_charts(&Table::read(h)?)? {
            files.push((format!("{prefix}{name}"), svg));
        }
    }
    if let Some(m) = &a.metrics {
        if !m.is_file() {
            return Err(Error::MissingPrerequisite(format!("metrics {} does not exist", m.display())));
        }
        inputs.push(("metrics".into(), hash_file(m)?));
        files.extend(metric_charts(&Table::read(m)?)?);
    }
    let run = create_run_dir(&ctx.out, "plot")?;
    let input_refs: Vec<(&str, String)> = inputs.iter().map(|(k, v)| (k.as_str(), v.clone())).collect();
    write_config_echo(&run, "plot", &ctx.config, &input_refs)?;
    for (name, svg) in files {
        write_file(&run.join(name), svg)?;
    }
    Ok(run)
}
