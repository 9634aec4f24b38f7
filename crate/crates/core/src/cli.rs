//! `crossfuse` command line: synthetic data, fold plans, training,
//! evaluation, gradient checks, alignment inspection and result tables.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::{align, apportion_frames, subword_group_sizes, AlignmentMethod};
use crate::dataio::{make_folds, read_bundle, synth_generate, write_bundle, DataError, FoldPlan, SegmentRecord, Split, SynthSpec};
use crate::fusion::gradcheck::{run_suite, GradcheckSetup, GRADCHECK_TOLERANCE};
use crate::fusion::{Architecture, FusionError, FusionModel, ModelConfig, ModelSize};
use crate::numkit::{Matrix, Real};
use crate::train::report::{render_table, CellReport, MetricsReport, RunReport};
use crate::train::{
    cross_validate, evaluate, load_model, prepare_segments, save_model, train_fold, EpochRecord, Hyper, Precision,
    Prediction, TrainError,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_TRAINING: i32 = 5;
pub const EXIT_GRADCHECK: i32 = 6;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(TrainError),
    #[error("{failed} of {total} gradient checks exceed the tolerance")]
    GradcheckFailed { failed: usize, total: usize },
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Data(d) => CliError::Data(d),
            TrainError::Fusion(f) => f.into(),
            TrainError::InvalidHyper(m) => CliError::Config(m),
            other => CliError::Train(other),
        }
    }
}

impl From<FusionError> for CliError {
    fn from(e: FusionError) -> Self {
        match e {
            FusionError::InvalidConfig(_) | FusionError::WidthMismatch { .. } | FusionError::WrongArchitecture { .. } => {
                CliError::Config(e.to_string())
            }
            other => CliError::Train(TrainError::Fusion(other)),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(DataError::Io(e))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(DataError::Manifest(e))
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) => EXIT_IO,
            CliError::Train(_) => EXIT_TRAINING,
            CliError::GradcheckFailed { .. } => EXIT_GRADCHECK,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "crossfuse", version, about = "Late and cross-attention fusion of speech and text embeddings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic EMOB bundle.
    Synth(SynthArgs),
    /// Write a speaker-disjoint fold plan as JSON.
    Folds(FoldsArgs),
    /// Train one fold, all folds, or the full experiment grid.
    Train(TrainArgs),
    /// Evaluate a saved model.
    Eval(EvalArgs),
    /// Compare analytic and finite-difference gradients for every architecture.
    Gradcheck(GradcheckArgs),
    /// Dump the aligned paralinguistic matrix of one segment.
    Align(AlignArgs),
    /// Render one or more report.json files as a text table.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthPreset {
    /// d_model 32, 200 segments per class.
    Desk,
    /// Corpus-sized counts and length ranges.
    CorpusScale,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "desk")]
    pub preset: SynthPreset,
    /// JSON generator spec; overrides --preset.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub per_class: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f32>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FoldsArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Training settings as read from `--config`. Every field is optional and
/// command-line flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub bundle: Option<PathBuf>,
    pub architecture: Option<Architecture>,
    pub size: Option<ModelSize>,
    pub d_model: Option<usize>,
    pub n_heads: Option<usize>,
    pub alignment: Option<AlignmentMethod>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub max_epochs: Option<usize>,
    pub clip_norm: Option<f64>,
    pub seed: Option<u64>,
    pub precision: Option<Precision>,
    pub k: Option<usize>,
    pub fold_seed: Option<u64>,
    pub plan: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Run configuration JSON; flags given alongside it take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input EMOB bundle.
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    #[arg(long = "arch", value_enum)]
    pub architecture: Option<Architecture>,
    /// Preset size. Inferred from the bundle width when omitted.
    #[arg(long, value_enum)]
    pub size: Option<ModelSize>,
    /// Embedding width for `--size custom`.
    #[arg(long)]
    pub d_model: Option<usize>,
    /// Attention heads for `--size custom`.
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long = "align", value_enum)]
    pub alignment: Option<AlignmentMethod>,
    /// Adam learning rate [default: 1e-5].
    #[arg(long)]
    pub lr: Option<f64>,
    /// Segments per step [default: 8].
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Maximum training epochs [default: 50].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Global gradient-norm clip [default: 1.0].
    #[arg(long)]
    pub clip_norm: Option<f64>,
    /// Seed for initialization and shuffling; fold i uses seed + i.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub precision: Option<Precision>,
    /// Number of folds when no --plan is given.
    #[arg(long)]
    pub k: Option<usize>,
    /// Seed for the speaker shuffle when no --plan is given.
    #[arg(long)]
    pub fold_seed: Option<u64>,
    /// Fold plan JSON written by `folds`.
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// Train a single fold.
    #[arg(long, conflicts_with_all = ["all_folds", "grid"])]
    pub fold: Option<usize>,
    /// Train every fold and report pooled metrics.
    #[arg(long, conflicts_with = "grid")]
    pub all_folds: bool,
    /// Every architecture and alignment at the chosen size, all folds.
    #[arg(long)]
    pub grid: bool,
    /// Output directory for report.json, plan.json, history.jsonl and models.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Restrict to one split of a fold; needs --fold.
    #[arg(long)]
    pub plan: Option<PathBuf>,
    #[arg(long, requires = "plan")]
    pub fold: Option<usize>,
    #[arg(long, value_enum, default_value = "test", requires = "fold")]
    pub split: Split,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 8)]
    pub d_model: usize,
    #[arg(long, default_value_t = 2)]
    pub heads: usize,
    #[arg(long, default_value_t = 3)]
    pub subwords: usize,
    #[arg(long, default_value_t = 7)]
    pub frames: usize,
    #[arg(long, default_value_t = 2)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Print the cases as JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub segment: String,
    /// One method only; both when omitted.
    #[arg(long, value_enum)]
    pub method: Option<AlignmentMethod>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
    /// Print the merged report as JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("crossfuse: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Synth(a) => synth(a),
        Command::Folds(a) => folds(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Align(a) => align_cmd(a),
        Command::Report(a) => report(a),
    }
}

fn write_json<V: Serialize>(value: &V, path: &Path) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    crate::dataio::container::write_atomic(path, &bytes)?;
    Ok(())
}

fn read_json<V: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<V> {
    let bytes = fs::read(path)?;
    Ok(serde_json::from_slice(&bytes)?)
}

fn synth(a: SynthArgs) -> CliResult<()> {
    let mut spec = match &a.spec {
        Some(path) => read_json::<SynthSpec>(path)?,
        None => match a.preset {
            SynthPreset::Desk => SynthSpec::desk(a.seed),
            SynthPreset::CorpusScale => SynthSpec::corpus_scale(a.d_model.unwrap_or(32), a.seed),
        },
    };
    if a.spec.is_none() {
        if let Some(d) = a.d_model {
            let base = SynthSpec::partial_information(d, spec.segments_per_class, a.seed);
            spec = SynthSpec {
                d_p: base.d_p,
                d_s: base.d_s,
                mean_p: base.mean_p,
                mean_s: base.mean_s,
                ..spec
            };
        }
    }
    if let Some(n) = a.per_class {
        spec.segments_per_class = n;
    }
    if let Some(s) = a.sigma {
        spec.noise_sigma = s;
    }
    spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let records = synth_generate(&spec)?;
    write_bundle(&records, &a.out)?;
    eprintln!("wrote {} segments (d_p={}, d_s={}) to {}", records.len(), spec.d_p, spec.d_s, a.out.display());
    Ok(())
}

fn folds(a: FoldsArgs) -> CliResult<()> {
    let records = read_bundle(&a.bundle)?;
    let plan = make_folds(&records, a.k, a.seed).map_err(data_config)?;
    match &a.out {
        Some(path) => write_json(&plan, path),
        None => {
            println!("{}", serde_json::to_string_pretty(&plan)?);
            Ok(())
        }
    }
}

/// Plan and parameter problems are configuration errors, not format errors.
fn data_config(e: DataError) -> CliError {
    match e {
        DataError::TooFewSpeakers { .. } | DataError::InvalidPlan(_) => CliError::Config(e.to_string()),
        other => CliError::Data(other),
    }
}

/// Fully resolved training settings.
#[derive(Debug, Clone)]
struct Resolved {
    bundle: PathBuf,
    architecture: Architecture,
    size: Option<ModelSize>,
    d_model: Option<usize>,
    n_heads: Option<usize>,
    alignment: AlignmentMethod,
    hyper: Hyper,
    k: usize,
    fold_seed: u64,
    plan: Option<PathBuf>,
    out: Option<PathBuf>,
}

fn resolve(a: &TrainArgs) -> CliResult<Resolved> {
    let file = match &a.config {
        Some(p) => read_json::<RunConfig>(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
        None => RunConfig::default(),
    };
    let d = Hyper::default();
    let hyper = Hyper {
        lr: a.lr.or(file.lr).unwrap_or(d.lr),
        batch_size: a.batch_size.or(file.batch_size).unwrap_or(d.batch_size),
        max_epochs: a.epochs.or(file.max_epochs).unwrap_or(d.max_epochs),
        clip_norm: a.clip_norm.or(file.clip_norm).unwrap_or(d.clip_norm),
        seed: a.seed.or(file.seed).unwrap_or(d.seed),
        precision: a.precision.or(file.precision).unwrap_or(d.precision),
    };
    hyper.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let bundle = a
        .bundle
        .clone()
        .or(file.bundle)
        .ok_or_else(|| CliError::Config("no bundle given (--bundle or \"bundle\" in --config)".into()))?;
    Ok(Resolved {
        bundle,
        architecture: a.architecture.or(file.architecture).unwrap_or(Architecture::SymmetricCrossAttn),
        size: a.size.or(file.size),
        d_model: a.d_model.or(file.d_model),
        n_heads: a.heads.or(file.n_heads),
        alignment: a.alignment.or(file.alignment).unwrap_or(AlignmentMethod::Subwords),
        hyper,
        k: a.k.or(file.k).unwrap_or(5),
        fold_seed: a.fold_seed.or(file.fold_seed).unwrap_or(0),
        plan: a.plan.clone().or(file.plan),
        out: a.out.clone().or(file.out),
    })
}

/// Builds the model configuration, inferring the size from the bundle width
/// when neither a preset nor explicit dimensions were given.
fn model_config(r: &Resolved, arch: Architecture, alignment: AlignmentMethod, width: usize) -> CliResult<ModelConfig> {
    let size = match (r.size, r.d_model) {
        (Some(s), _) => s,
        (None, Some(_)) => ModelSize::Custom,
        (None, None) => match width {
            768 if r.n_heads.is_none() => ModelSize::Base,
            1024 if r.n_heads.is_none() => ModelSize::Large,
            _ => ModelSize::Custom,
        },
    };
    let cfg = match size {
        ModelSize::Custom => {
            let d_model = r.d_model.unwrap_or(width);
            let n_heads = r.n_heads.unwrap_or(if d_model.is_multiple_of(4) { 4 } else { 1 });
            ModelConfig::custom(arch, d_model, n_heads, alignment)?
        }
        preset => {
            let cfg = ModelConfig::preset(arch, preset, alignment)?;
            for (flag, given, want) in [("--d-model", r.d_model, cfg.d_model), ("--heads", r.n_heads, cfg.n_heads)] {
                if given.is_some_and(|g| g != want) {
                    return Err(CliError::Config(format!(
                        "{flag} {} contradicts --size {}",
                        given.unwrap_or_default(),
                        preset.label().to_lowercase()
                    )));
                }
            }
            cfg
        }
    };
    if cfg.d_model != width {
        return Err(CliError::Config(format!(
            "bundle embeddings have width {width} but the {} configuration needs d_model = {}",
            cfg.size.label(),
            cfg.d_model
        )));
    }
    Ok(cfg)
}

fn bundle_width(records: &[SegmentRecord]) -> CliResult<usize> {
    let first = records
        .first()
        .ok_or_else(|| CliError::Config("bundle has no segments".into()))?;
    let width = first.h_p.cols();
    if first.h_s.cols() != width {
        return Err(CliError::Config(format!(
            "paralinguistic width {} differs from semantic width {}; fusion needs equal widths",
            width,
            first.h_s.cols()
        )));
    }
    Ok(width)
}

fn load_plan(r: &Resolved, records: &[SegmentRecord]) -> CliResult<FoldPlan> {
    let plan = match &r.plan {
        Some(p) => read_json::<FoldPlan>(p)?,
        None => make_folds(records, r.k, r.fold_seed).map_err(data_config)?,
    };
    plan.validate(records).map_err(data_config)?;
    Ok(plan)
}

#[derive(Serialize)]
struct HistoryLine<'a> {
    architecture: Architecture,
    alignment: AlignmentMethod,
    #[serde(flatten)]
    record: &'a EpochRecord,
}

/// Outputs of one trained cell.
struct CellRun {
    report: CellReport,
    history: Vec<EpochRecord>,
    models: Vec<(usize, FusionModel<f32>)>,
}

fn run_cell<T: Real>(
    cfg: &ModelConfig,
    hyper: &Hyper,
    records: &[SegmentRecord],
    plan: &FoldPlan,
    fold: Option<usize>,
) -> CliResult<CellRun> {
    match fold {
        Some(i) => {
            let f = train_fold::<T>(cfg, hyper, records, i, plan)?;
            Ok(CellRun {
                report: CellReport::single(cfg, hyper, plan.k, plan.seed, &f),
                history: f.history.clone(),
                models: vec![(i, f.best_model.cast())],
            })
        }
        None => {
            let cv = cross_validate::<T>(cfg, hyper, records, plan)?;
            Ok(CellRun {
                report: CellReport::cross_validated(cfg, hyper, plan.seed, &cv),
                history: cv.folds.iter().flat_map(|f| f.history.clone()).collect(),
                models: cv.folds.iter().map(|f| (f.fold, f.best_model.cast())).collect(),
            })
        }
    }
}

fn run_cell_any(
    cfg: &ModelConfig,
    hyper: &Hyper,
    records: &[SegmentRecord],
    plan: &FoldPlan,
    fold: Option<usize>,
) -> CliResult<CellRun> {
    match hyper.precision {
        Precision::F32 => run_cell::<f32>(cfg, hyper, records, plan, fold),
        Precision::F64 => run_cell::<f64>(cfg, hyper, records, plan, fold),
    }
}

/// Grid cells: every architecture, with both alignments for the
/// cross-attention ones.
pub fn grid_cells() -> Vec<(Architecture, AlignmentMethod)> {
    Architecture::ALL
        .iter()
        .flat_map(|&a| {
            if a.is_cross_attention() {
                AlignmentMethod::ALL.iter().map(|&m| (a, m)).collect::<Vec<_>>()
            } else {
                vec![(a, AlignmentMethod::Subwords)]
            }
        })
        .collect()
}

fn train(a: TrainArgs) -> CliResult<()> {
    let r = resolve(&a)?;
    let records = read_bundle(&r.bundle)?;
    let width = bundle_width(&records)?;
    let plan = load_plan(&r, &records)?;
    if let Some(i) = a.fold {
        if i >= plan.k {
            return Err(CliError::Config(format!("--fold {i} out of range for k = {}", plan.k)));
        }
    }
    let fold = if a.all_folds || a.grid { None } else { Some(a.fold.unwrap_or(0)) };
    let cells: Vec<(Architecture, AlignmentMethod)> = if a.grid {
        grid_cells()
    } else {
        vec![(r.architecture, r.alignment)]
    };
    let configs = cells
        .iter()
        .map(|&(arch, align)| model_config(&r, arch, align, width))
        .collect::<CliResult<Vec<_>>>()?;

    let runs = configs
        .par_iter()
        .map(|cfg| run_cell_any(cfg, &r.hyper, &records, &plan, fold))
        .collect::<CliResult<Vec<_>>>()?;

    let report = RunReport {
        cells: runs.iter().map(|c| c.report.clone()).collect(),
    };
    for c in &runs {
        let cfg = c.report.config;
        let align = if cfg.architecture.is_cross_attention() { cfg.alignment.label() } else { "-" };
        let ua = c.report.headline().map_or(f64::NAN, |m| m.ua);
        eprintln!("{:<31} {:<12} UA {ua:.4}", cfg.architecture.display_name(), align);
    }

    let Some(out) = &r.out else {
        println!("{}", serde_json::to_string_pretty(&report)?);
        return Ok(());
    };
    fs::create_dir_all(out)?;
    write_json(&report, &out.join("report.json"))?;
    write_json(&plan, &out.join("plan.json"))?;
    let mut history = Vec::new();
    for c in &runs {
        for rec in &c.history {
            serde_json::to_writer(
                &mut history,
                &HistoryLine {
                    architecture: c.report.config.architecture,
                    alignment: c.report.config.alignment,
                    record: rec,
                },
            )?;
            history.push(b'\n');
        }
    }
    crate::dataio::container::write_atomic(&out.join("history.jsonl"), &history)?;
    for c in &runs {
        let dir = if a.grid {
            let cfg = c.report.config;
            out.join(format!("{}-{}", cfg.architecture, cfg.alignment))
        } else {
            out.clone()
        };
        for (i, model) in &c.models {
            let path = if fold.is_some() { dir.clone() } else { dir.join(format!("fold{i}")) };
            fs::create_dir_all(&path)?;
            save_model(model, path.join("model.bin"))?;
        }
    }
    eprintln!("wrote report.json, plan.json, history.jsonl and models under {}", out.display());
    Ok(())
}

#[derive(Serialize)]
struct EvalOutput {
    config: ModelConfig,
    metrics: MetricsReport,
    predictions: Vec<Prediction>,
}

fn eval(a: EvalArgs) -> CliResult<()> {
    let records = read_bundle(&a.bundle)?;
    let model = load_model(&a.model)?;
    let cfg = *model.config();
    let selected: Vec<&SegmentRecord> = match (&a.plan, a.fold) {
        (Some(p), Some(i)) => {
            let plan: FoldPlan = read_json(p)?;
            plan.validate(&records).map_err(data_config)?;
            let fold = plan
                .folds
                .get(i)
                .ok_or_else(|| CliError::Config(format!("--fold {i} out of range for k = {}", plan.k)))?;
            let by_id: std::collections::HashMap<&str, &SegmentRecord> =
                records.iter().map(|r| (r.id.as_str(), r)).collect();
            fold.ids(a.split).iter().map(|id| by_id[id.as_str()]).collect()
        }
        (Some(_), None) => return Err(CliError::Config("--plan needs --fold".into())),
        _ => records.iter().collect(),
    };
    let segments = prepare_segments::<f32>(&cfg, &selected)?;
    let metrics = evaluate(&model, &segments)?;
    let output = EvalOutput {
        config: cfg,
        metrics: (&metrics).into(),
        predictions: metrics.predictions.clone(),
    };
    match &a.out {
        Some(p) => write_json(&output, p)?,
        None => println!("{}", serde_json::to_string_pretty(&output)?),
    }
    eprintln!("UA {:.4} over {} segments", metrics.ua, metrics.n_segments());
    Ok(())
}

fn gradcheck(a: GradcheckArgs) -> CliResult<()> {
    let setup = GradcheckSetup {
        d_model: a.d_model,
        n_heads: a.heads,
        n_subwords: a.subwords,
        n_frames: a.frames,
        batch: a.batch,
        seed: a.seed,
    };
    let cases = run_suite(&setup)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&cases)?);
    } else {
        for c in &cases {
            println!(
                "{} {:<22} {:<12} params {:>6}  max rel err {:.3e}",
                if c.passed { "ok  " } else { "FAIL" },
                c.architecture.display_name(),
                c.alignment.label(),
                c.n_params,
                c.max_rel_error
            );
        }
        println!("tolerance {GRADCHECK_TOLERANCE:e}");
    }
    let failed = cases.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(CliError::GradcheckFailed {
            failed,
            total: cases.len(),
        });
    }
    Ok(())
}

#[derive(Serialize)]
struct AlignedDump {
    method: AlignmentMethod,
    /// Frames assigned to each subword.
    group_sizes: Vec<usize>,
    rows: usize,
    cols: usize,
    data: Vec<Vec<f32>>,
}

#[derive(Serialize)]
struct AlignOutput {
    id: String,
    n_frames: usize,
    n_subwords: usize,
    char_lengths: Vec<usize>,
    aligned: Vec<AlignedDump>,
}

fn align_cmd(a: AlignArgs) -> CliResult<()> {
    let records = read_bundle(&a.bundle)?;
    let r = records
        .iter()
        .find(|r| r.id == a.segment)
        .ok_or_else(|| CliError::Config(format!("segment {:?} not in bundle", a.segment)))?;
    let methods: Vec<AlignmentMethod> = match a.method {
        Some(m) => vec![m],
        None => AlignmentMethod::ALL.to_vec(),
    };
    let aligned = methods
        .into_iter()
        .map(|m| {
            let h: Matrix<f32> = align(m, &r.h_p, r.n_subwords(), &r.char_lengths).map_err(FusionError::from)?;
            let group_sizes = match m {
                AlignmentMethod::Subwords => subword_group_sizes(r.n_frames(), r.n_subwords()),
                AlignmentMethod::Characters => apportion_frames(r.n_frames(), &r.char_lengths),
            };
            Ok(AlignedDump {
                method: m,
                group_sizes,
                rows: h.rows(),
                cols: h.cols(),
                data: (0..h.rows()).map(|i| h.row(i).to_vec()).collect(),
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let out = AlignOutput {
        id: r.id.clone(),
        n_frames: r.n_frames(),
        n_subwords: r.n_subwords(),
        char_lengths: r.char_lengths.clone(),
        aligned,
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn report(a: ReportArgs) -> CliResult<()> {
    let mut cells = Vec::new();
    for p in &a.reports {
        let r: RunReport = read_json(p)?;
        cells.extend(r.cells);
    }
    let merged = RunReport { cells };
    let text = if a.json {
        serde_json::to_string_pretty(&merged)? + "\n"
    } else {
        render_table(&merged.cells)
    };
    std::io::stdout().write_all(text.as_bytes())?;
    Ok(())
}
