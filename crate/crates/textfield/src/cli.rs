//! Command-line pipeline: subcommands wiring annotation, DFF1, and PGM files
//! through field generation, detection, evaluation, loss, and synthesis.

use std::env;
use std::ffi::OsString;
use std::fs;
use std::io;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{match_and_score, EvalReport};
use crate::field::generate_scene_field;
use crate::formats::{
    read_annotation, read_field_dff, read_labels_pgm, write_annotation, write_field_dff,
    write_labels_pgm, FormatError,
};
use crate::geometry::rasterize;
use crate::grid::{BinaryMask, InstanceMap};
use crate::inference::{detect, InferenceConfig, InferenceError, Preset};
use crate::loss::{compute_weights, per_pixel_loss, select_hard_negatives, total_loss, LossError};
use crate::morph::connected_components;
use crate::synth::{generate_scene, perturb_field, NoiseModel, SynthError, SynthSpec};

/// Anything that should abort a run with exit code 1.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Eval(#[from] crate::eval::EvalError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error("no .{ext} files in {dir}")]
    EmptyDirectory { dir: PathBuf, ext: &'static str },
    #[error("{gt} has no matching detection {det}")]
    MissingDetection { gt: PathBuf, det: PathBuf },
    #[error("{det} has no matching ground truth {gt}")]
    MissingTruth { det: PathBuf, gt: PathBuf },
    #[error("{path}: not valid JSON for a synthesis spec: {message}")]
    BadSpec { path: PathBuf, message: String },
    #[error("TEXTFIELD_THREADS must be a non-negative integer, got {0:?}")]
    BadThreadCap(String),
}

fn io_err(path: &Path, source: io::Error) -> CliError {
    CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Sidecar record of one run: enough to replay it bit-identically.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub version: String,
    /// Every resolved parameter, after presets and defaults were applied.
    pub config: serde_json::Value,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    /// Wall-clock per stage; informational, varies between replays.
    pub stages: Vec<StageTiming>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub ms: u64,
}

/// Stage stopwatch feeding `RunManifest::stages`.
struct Stages {
    last: Instant,
    list: Vec<StageTiming>,
}

impl Stages {
    fn start() -> Self {
        Stages {
            last: Instant::now(),
            list: Vec::new(),
        }
    }

    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.list.push(StageTiming {
            stage: stage.to_string(),
            ms: now.duration_since(self.last).as_millis() as u64,
        });
        self.last = now;
    }
}

fn write_manifest(
    path: &Path,
    subcommand: &str,
    config: serde_json::Value,
    inputs: Vec<String>,
    outputs: Vec<String>,
    stages: Stages,
) -> Result<(), CliError> {
    let manifest = RunManifest {
        subcommand: subcommand.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config,
        inputs,
        outputs,
        stages: stages.list,
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// `<file>.manifest.json` next to a file output.
fn sidecar_of(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_os_string();
    os.push(".manifest.json");
    PathBuf::from(os)
}

const ABOUT: &str = "Direction-field text detection: ground-truth generation, \
morphological instance extraction, loss kernels, evaluation, and synthetic scenes.";

#[derive(Parser, Debug)]
#[command(name = "textfield", version, about = ABOUT)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate ground-truth direction fields from polygon annotations.
    Genfield(GenfieldArgs),
    /// Segment a direction field into labeled text instances.
    Detect(DetectArgs),
    /// Score detection label maps against ground-truth annotations.
    Eval(EvalArgs),
    /// Generate synthetic scenes from a JSON spec.
    Synth(SynthArgs),
    /// Instance-balanced field loss with online hard negative mining.
    Loss(LossArgs),
    /// Scene -> field -> detect -> score round trip over seeded cases.
    Roundtrip(RoundtripArgs),
}

#[derive(Args, Debug)]
struct GenfieldArgs {
    /// Directory of annotation .txt files carrying "# size: W,H" headers.
    #[arg(long, value_name = "DIR")]
    annotations: PathBuf,
    /// Output directory; one .dff field per annotation file.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Write <out>/genfield.manifest.json describing the run.
    #[arg(long)]
    manifest: bool,
}

fn preset_help() -> String {
    let entries: Vec<String> = Preset::ALL
        .iter()
        .map(|p| format!("{}={}", p.name(), p.lambda_m()))
        .collect();
    format!(
        "Dataset preset choosing the magnitude threshold: {}",
        entries.join(", ")
    )
}

#[derive(Args, Debug)]
struct DetectArgs {
    /// Input direction field (.dff).
    #[arg(long, value_name = "FILE")]
    field: PathBuf,
    /// Output instance label map (16-bit binary PGM).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    #[arg(long, value_name = "NAME", value_parser = parse_preset, help = preset_help())]
    preset: Option<Preset>,
    /// Magnitude threshold in (0,1); overrides the preset.
    #[arg(long, value_name = "F")]
    lambda_m: Option<f64>,
    /// Minimum paired-direction ratio in [0,1] for a group to survive.
    #[arg(long, value_name = "F")]
    lambda_r: Option<f64>,
    /// Minimum instance area in pixels.
    #[arg(long, value_name = "N")]
    lambda_a: Option<u64>,
    /// Odd side of the representative-grouping dilation square.
    #[arg(long, value_name = "N")]
    k1: Option<u32>,
    /// Odd side of the per-instance closing square.
    #[arg(long, value_name = "N")]
    k2: Option<u32>,
    /// Odd side of the magnitude-averaging window; 1 disables it.
    #[arg(long, value_name = "N")]
    smooth_k: Option<u32>,
    /// Also write one boundary polygon per instance, annotation format.
    #[arg(long, value_name = "FILE")]
    contours: Option<PathBuf>,
    /// Write <out>.manifest.json describing the run.
    #[arg(long)]
    manifest: bool,
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    s.parse::<Preset>().map_err(|e| e.to_string())
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Directory of detection label maps (.pgm), one per image.
    #[arg(long, value_name = "DIR")]
    dets: PathBuf,
    /// Directory of ground-truth annotations (.txt), same file stems.
    #[arg(long, value_name = "DIR")]
    gt: PathBuf,
    /// IOU threshold a candidate pair must exceed to match.
    #[arg(long, value_name = "F", default_value_t = 0.5)]
    iou: f64,
    /// Also write a per-image CSV of counts and rates.
    #[arg(long, value_name = "FILE")]
    per_image: Option<PathBuf>,
    /// Write eval.manifest.json (next to --per-image if given, else here).
    #[arg(long)]
    manifest: bool,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// JSON scene spec; flat keys, see `SynthJob` for the full set.
    #[arg(long, value_name = "FILE")]
    spec: PathBuf,
    /// Output directory for scene_NNNN.txt (and .dff with emit_fields).
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Write <out>/synth.manifest.json describing the run.
    #[arg(long)]
    manifest: bool,
}

#[derive(Args, Debug)]
struct LossArgs {
    /// Ground-truth direction field (.dff).
    #[arg(long, value_name = "FILE")]
    gt: PathBuf,
    /// Predicted direction field (.dff).
    #[arg(long, value_name = "FILE")]
    pred: PathBuf,
    /// Instance label map (.pgm) driving weights and mining.
    #[arg(long, value_name = "FILE")]
    labels: PathBuf,
    /// Hard negatives kept per text pixel.
    #[arg(long, value_name = "F", default_value_t = 3.0)]
    gamma: f64,
    /// Write loss.manifest.json in the current directory.
    #[arg(long)]
    manifest: bool,
}

#[derive(Args, Debug)]
struct RoundtripArgs {
    /// Base RNG seed; case i uses seed + i.
    #[arg(long, value_name = "N", default_value_t = 7)]
    seed: u64,
    /// Number of synthetic scenes to push through the pipeline.
    #[arg(long, value_name = "N", default_value_t = 50)]
    cases: u32,
    /// Gaussian angle noise on the field, degrees.
    #[arg(long, value_name = "DEG", default_value_t = 0.0)]
    angle_sigma: f64,
    /// Gaussian multiplicative magnitude noise.
    #[arg(long, value_name = "F", default_value_t = 0.0)]
    mag_sigma: f64,
    /// Probability of zeroing each text pixel's vector.
    #[arg(long, value_name = "F", default_value_t = 0.0)]
    dropout: f64,
    /// Fraction of cases that must recover the exact instance count.
    #[arg(long, value_name = "F", default_value_t = 0.96)]
    min_exact_frac: f64,
    /// Write roundtrip.manifest.json in the current directory.
    #[arg(long)]
    manifest: bool,
}

/// Runs the CLI on the given argv (program name first). Returns the process
/// exit code: 0 success, 1 input error, 2 internal invariant violation.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap routes help/version to stdout, usage errors to stderr.
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let threads = match thread_cap() {
        Ok(n) => n,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool construction");
    match catch_unwind(AssertUnwindSafe(|| pool.install(|| dispatch(&cli.command)))) {
        Ok(Ok(code)) => code,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            1
        }
        Err(panic) => {
            eprintln!("internal error: {}", panic_text(panic.as_ref()));
            2
        }
    }
}

/// `TEXTFIELD_THREADS` caps worker parallelism; 0 or unset means automatic.
fn thread_cap() -> Result<usize, CliError> {
    match env::var("TEXTFIELD_THREADS") {
        Err(env::VarError::NotPresent) => Ok(0),
        Err(env::VarError::NotUnicode(v)) => Err(CliError::BadThreadCap(format!("{v:?}"))),
        Ok(s) if s.trim().is_empty() => Ok(0),
        Ok(s) => s
            .trim()
            .parse::<usize>()
            .map_err(|_| CliError::BadThreadCap(s)),
    }
}

fn panic_text(panic: &(dyn std::any::Any + Send)) -> &str {
    if let Some(s) = panic.downcast_ref::<&str>() {
        s
    } else if let Some(s) = panic.downcast_ref::<String>() {
        s
    } else {
        "unknown panic"
    }
}

fn dispatch(command: &Command) -> Result<i32, CliError> {
    match command {
        Command::Genfield(args) => cmd_genfield(args),
        Command::Detect(args) => cmd_detect(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Loss(args) => cmd_loss(args),
        Command::Roundtrip(args) => cmd_roundtrip(args),
    }
}

/// Regular files in `dir` with the given extension, sorted by name.
fn files_with_extension(dir: &Path, ext: &'static str) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| io_err(dir, e))? {
        let entry = entry.map_err(|e| io_err(dir, e))?;
        let path = entry.path();
        let is_file = entry.file_type().map(|t| t.is_file()).unwrap_or(false);
        if is_file && path.extension().and_then(|e| e.to_str()) == Some(ext) {
            out.push(path);
        }
    }
    if out.is_empty() {
        return Err(CliError::EmptyDirectory {
            dir: dir.to_path_buf(),
            ext,
        });
    }
    out.sort();
    Ok(out)
}

fn stem_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn cmd_genfield(args: &GenfieldArgs) -> Result<i32, CliError> {
    let mut stages = Stages::start();
    let inputs = files_with_extension(&args.annotations, "txt")?;
    fs::create_dir_all(&args.out).map_err(|e| io_err(&args.out, e))?;
    stages.lap("scan");
    let results: Vec<Result<PathBuf, CliError>> = inputs
        .par_iter()
        .map(|path| {
            let scene = read_annotation(path)?.into_scene(None)?;
            let (_, labels) = rasterize(&scene);
            let field = generate_scene_field(&labels);
            let out_path = args.out.join(format!("{}.dff", stem_of(path)));
            write_field_dff(&out_path, &field)?;
            Ok(out_path)
        })
        .collect();
    let mut outputs = Vec::with_capacity(results.len());
    for result in results {
        outputs.push(result?);
    }
    stages.lap("generate");
    println!("wrote {} field(s) to {}", outputs.len(), args.out.display());
    if args.manifest {
        write_manifest(
            &args.out.join("genfield.manifest.json"),
            "genfield",
            serde_json::json!({
                "annotations": args.annotations.display().to_string(),
                "out": args.out.display().to_string(),
            }),
            inputs.iter().map(|p| p.display().to_string()).collect(),
            outputs.iter().map(|p| p.display().to_string()).collect(),
            stages,
        )?;
    }
    Ok(0)
}

/// Flag overrides beat the preset, which beats the defaults.
fn resolve_detect_config(args: &DetectArgs) -> InferenceConfig {
    let mut config = args.preset.map(|p| p.config()).unwrap_or_default();
    if let Some(v) = args.lambda_m {
        config.lambda_m = v;
    }
    if let Some(v) = args.lambda_r {
        config.lambda_r = v;
    }
    if let Some(v) = args.lambda_a {
        config.lambda_a = v;
    }
    if let Some(v) = args.k1 {
        config.k1 = v;
    }
    if let Some(v) = args.k2 {
        config.k2 = v;
    }
    if let Some(v) = args.smooth_k {
        config.smooth_k = v;
    }
    config
}

fn cmd_detect(args: &DetectArgs) -> Result<i32, CliError> {
    let mut stages = Stages::start();
    let config = resolve_detect_config(args);
    let field = read_field_dff(&args.field)?;
    stages.lap("read");
    let labels = detect(&field, &config)?;
    stages.lap("detect");
    write_labels_pgm(&args.out, &labels)?;
    let mut outputs = vec![args.out.display().to_string()];
    if let Some(contour_path) = &args.contours {
        write_contours(contour_path, &labels)?;
        outputs.push(contour_path.display().to_string());
    }
    stages.lap("write");
    println!(
        "{} instance(s) -> {}",
        labels.label_areas().len(),
        args.out.display()
    );
    if args.manifest {
        write_manifest(
            &sidecar_of(&args.out),
            "detect",
            serde_json::json!({
                "preset": args.preset.map(|p| p.name()),
                "lambda_m": config.lambda_m,
                "lambda_r": config.lambda_r,
                "lambda_a": config.lambda_a,
                "k1": config.k1,
                "k2": config.k2,
                "smooth_k": config.smooth_k,
            }),
            vec![args.field.display().to_string()],
            outputs,
            stages,
        )?;
    }
    Ok(0)
}

fn cmd_eval(args: &EvalArgs) -> Result<i32, CliError> {
    let mut stages = Stages::start();
    let gt_files = files_with_extension(&args.gt, "txt")?;
    let det_files = files_with_extension(&args.dets, "pgm")?;
    // Stems must pair one to one; a silent drop would hide FNs or FPs.
    for gt in &gt_files {
        let det = args.dets.join(format!("{}.pgm", stem_of(gt)));
        if !det.is_file() {
            return Err(CliError::MissingDetection {
                gt: gt.clone(),
                det,
            });
        }
    }
    for det in &det_files {
        let gt = args.gt.join(format!("{}.txt", stem_of(det)));
        if !gt.is_file() {
            return Err(CliError::MissingTruth {
                det: det.clone(),
                gt,
            });
        }
    }
    stages.lap("scan");
    let reports: Vec<Result<EvalReport, CliError>> = gt_files
        .par_iter()
        .map(|gt_path| {
            let scene = read_annotation(gt_path)?.into_scene(None)?;
            let (_, truth) = rasterize(&scene);
            let det_path = args.dets.join(format!("{}.pgm", stem_of(gt_path)));
            let dets = read_labels_pgm(&det_path)?;
            Ok(match_and_score(&dets, &truth, args.iou)?)
        })
        .collect();
    let mut per_image = Vec::with_capacity(reports.len());
    for report in reports {
        per_image.push(report?);
    }
    stages.lap("score");
    let tp: u64 = per_image.iter().map(|r| r.true_positives).sum();
    let fp: u64 = per_image.iter().map(|r| r.false_positives).sum();
    let fneg: u64 = per_image.iter().map(|r| r.false_negatives).sum();
    let ratio = |num: u64, den: u64| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fneg);
    let f_measure = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    println!("P={precision:.6} R={recall:.6} F={f_measure:.6} TP={tp} FP={fp} FN={fneg}");
    let mut outputs = Vec::new();
    if let Some(csv_path) = &args.per_image {
        let mut csv = String::from("image,tp,fp,fn,precision,recall,f_measure\n");
        for (path, r) in gt_files.iter().zip(&per_image) {
            csv.push_str(&format!(
                "{},{},{},{},{:.6},{:.6},{:.6}\n",
                stem_of(path),
                r.true_positives,
                r.false_positives,
                r.false_negatives,
                r.precision,
                r.recall,
                r.f_measure
            ));
        }
        fs::write(csv_path, csv).map_err(|e| io_err(csv_path, e))?;
        outputs.push(csv_path.display().to_string());
    }
    stages.lap("write");
    if args.manifest {
        let manifest_path = match &args.per_image {
            Some(csv) => sidecar_of(csv),
            None => PathBuf::from("eval.manifest.json"),
        };
        write_manifest(
            &manifest_path,
            "eval",
            serde_json::json!({
                "dets": args.dets.display().to_string(),
                "gt": args.gt.display().to_string(),
                "iou": args.iou,
            }),
            gt_files.iter().map(|p| p.display().to_string()).collect(),
            outputs,
            stages,
        )?;
    }
    Ok(0)
}

/// Flat JSON job for `synth`: scene parameters plus batch controls.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthJob {
    /// Base RNG seed; scene i uses seed + i.
    pub seed: u64,
    /// Number of scenes to emit.
    pub scenes: u32,
    /// Also write a ground-truth .dff field per scene.
    pub emit_fields: bool,
    #[serde(flatten)]
    pub spec: SynthSpec,
}

impl Default for SynthJob {
    fn default() -> Self {
        SynthJob {
            seed: 0,
            scenes: 1,
            emit_fields: false,
            spec: SynthSpec::default(),
        }
    }
}

fn cmd_synth(args: &SynthArgs) -> Result<i32, CliError> {
    let mut stages = Stages::start();
    let text = fs::read_to_string(&args.spec).map_err(|e| io_err(&args.spec, e))?;
    let job: SynthJob = serde_json::from_str(&text).map_err(|e| CliError::BadSpec {
        path: args.spec.clone(),
        message: e.to_string(),
    })?;
    job.spec.validate()?;
    fs::create_dir_all(&args.out).map_err(|e| io_err(&args.out, e))?;
    stages.lap("read");
    let results: Vec<Result<Vec<PathBuf>, CliError>> = (0..job.scenes)
        .into_par_iter()
        .map(|i| {
            let scene = generate_scene(&job.spec, job.seed + i as u64)?;
            let base = args.out.join(format!("scene_{i:04}"));
            let txt = base.with_extension("txt");
            write_annotation(&txt, &scene)?;
            let mut written = vec![txt];
            if job.emit_fields {
                let (_, labels) = rasterize(&scene);
                let field = generate_scene_field(&labels);
                let dff = base.with_extension("dff");
                write_field_dff(&dff, &field)?;
                written.push(dff);
            }
            Ok(written)
        })
        .collect();
    let mut outputs = Vec::new();
    for result in results {
        outputs.extend(result?);
    }
    stages.lap("generate");
    println!("wrote {} scene(s) to {}", job.scenes, args.out.display());
    if args.manifest {
        write_manifest(
            &args.out.join("synth.manifest.json"),
            "synth",
            serde_json::to_value(&job).expect("job serializes"),
            vec![args.spec.display().to_string()],
            outputs.iter().map(|p| p.display().to_string()).collect(),
            stages,
        )?;
    }
    Ok(0)
}

fn cmd_loss(args: &LossArgs) -> Result<i32, CliError> {
    let mut stages = Stages::start();
    let gt = read_field_dff(&args.gt)?;
    let pred = read_field_dff(&args.pred)?;
    let labels = read_labels_pgm(&args.labels)?;
    stages.lap("read");
    let weights = compute_weights(&labels);
    let loss_map = per_pixel_loss(&gt, &pred)?;
    let selection = select_hard_negatives(&labels, &loss_map, args.gamma)?;
    let value = total_loss(&gt, &pred, &weights, Some(&selection))?;
    stages.lap("compute");
    println!("{value:.8e}");
    if args.manifest {
        write_manifest(
            Path::new("loss.manifest.json"),
            "loss",
            serde_json::json!({ "gamma": args.gamma }),
            vec![
                args.gt.display().to_string(),
                args.pred.display().to_string(),
                args.labels.display().to_string(),
            ],
            Vec::new(),
            stages,
        )?;
    }
    Ok(0)
}

/// Per-case outcome of the round-trip driver.
struct RoundtripCase {
    seed: u64,
    truth_count: usize,
    detected_count: usize,
    matched: usize,
    iou_sum: f64,
}

fn cmd_roundtrip(args: &RoundtripArgs) -> Result<i32, CliError> {
    let mut stages = Stages::start();
    let spec = SynthSpec::default();
    let noise = NoiseModel {
        angle_sigma: args.angle_sigma.to_radians(),
        mag_sigma: args.mag_sigma,
        dropout: args.dropout,
    };
    noise.validate()?;
    // The detector settings the round-trip property is stated for.
    let config = InferenceConfig {
        lambda_m: 0.3,
        lambda_r: 0.6,
        lambda_a: 200,
        k1: 3,
        k2: 11,
        smooth_k: 5,
    };
    let results: Vec<Result<RoundtripCase, CliError>> = (0..args.cases)
        .into_par_iter()
        .map(|i| {
            let seed = args.seed + i as u64;
            let scene = generate_scene(&spec, seed)?;
            let (_, truth) = rasterize(&scene);
            let mut field = generate_scene_field(&truth);
            if !noise.is_zero() {
                field = perturb_field(&field, &noise, seed)?;
            }
            let dets = detect(&field, &config)?;
            let report = match_and_score(&dets, &truth, 0.5)?;
            Ok(RoundtripCase {
                seed,
                truth_count: truth.label_areas().len(),
                detected_count: dets.label_areas().len(),
                matched: report.matches.len(),
                iou_sum: report.matches.iter().map(|m| m.iou).sum(),
            })
        })
        .collect();
    let mut cases = Vec::with_capacity(results.len());
    for result in results {
        cases.push(result?);
    }
    stages.lap("run");
    println!("case   seed  truth  detected  matched  mean IOU");
    let mut exact = 0u32;
    let mut iou_sum = 0.0;
    let mut match_count = 0usize;
    for (i, case) in cases.iter().enumerate() {
        let mean = if case.matched == 0 {
            0.0
        } else {
            case.iou_sum / case.matched as f64
        };
        let verdict = if case.detected_count == case.truth_count {
            exact += 1;
            "ok"
        } else {
            "MISCOUNT"
        };
        println!(
            "{i:>4} {:>6} {:>6} {:>9} {:>8}    {mean:.4}  {verdict}",
            case.seed, case.truth_count, case.detected_count, case.matched
        );
        iou_sum += case.iou_sum;
        match_count += case.matched;
    }
    let mean_iou = if match_count == 0 {
        0.0
    } else {
        iou_sum / match_count as f64
    };
    let exact_frac = if args.cases == 0 {
        1.0
    } else {
        exact as f64 / args.cases as f64
    };
    let pass = exact_frac >= args.min_exact_frac && mean_iou >= 0.90;
    println!(
        "exact count {exact}/{} (need {:.0}%), mean matched IOU {mean_iou:.4} (need 0.90)",
        args.cases,
        args.min_exact_frac * 100.0
    );
    println!("{}", if pass { "PASS" } else { "FAIL" });
    if args.manifest {
        write_manifest(
            Path::new("roundtrip.manifest.json"),
            "roundtrip",
            serde_json::json!({
                "seed": args.seed,
                "cases": args.cases,
                "angle_sigma_deg": args.angle_sigma,
                "mag_sigma": args.mag_sigma,
                "dropout": args.dropout,
                "min_exact_frac": args.min_exact_frac,
                "lambda_m": config.lambda_m,
                "lambda_r": config.lambda_r,
                "lambda_a": config.lambda_a,
                "k1": config.k1,
                "k2": config.k2,
                "smooth_k": config.smooth_k,
            }),
            Vec::new(),
            Vec::new(),
            stages,
        )?;
    }
    Ok(if pass { 0 } else { 1 })
}

// Directions for the boundary walk, screen coordinates (y grows downward).
const WALK: [(i64, i64); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];
// Cells flanking the edge leaving a corner along WALK[d].
const FLANK_LEFT: [(i64, i64); 4] = [(0, -1), (0, 0), (-1, 0), (-1, -1)];
const FLANK_RIGHT: [(i64, i64); 4] = [(0, 0), (-1, 0), (-1, -1), (0, -1)];

/// Outer boundary polygons of every instance, ascending label then scan
/// order, one loop per 8-connected piece. Corners are lattice points, the
/// interior stays on the right, and holes are not traced. A loop may touch
/// itself where two pixels of a piece meet only diagonally.
pub fn trace_boundaries(labels: &InstanceMap) -> Vec<(u32, Vec<(u32, u32)>)> {
    let mut loops = Vec::new();
    for (label, _) in labels.label_areas() {
        let mut mask = BinaryMask::new(labels.width(), labels.height());
        for y in 0..labels.height() {
            for x in 0..labels.width() {
                if labels.get(x, y) == label {
                    mask.set(x, y, true);
                }
            }
        }
        let (pieces, piece_count) = connected_components(&mask);
        let piece_count = piece_count as usize;
        let mut first: Vec<Option<(u32, u32)>> = vec![None; piece_count + 1];
        for y in 0..pieces.height() {
            for x in 0..pieces.width() {
                let id = pieces.get(x, y) as usize;
                if id != 0 && first[id].is_none() {
                    first[id] = Some((x, y));
                }
            }
        }
        for (id, head) in first.iter().enumerate().skip(1) {
            let start = head.expect("piece has pixels");
            loops.push((label, trace_piece(&pieces, id as u32, start)));
        }
    }
    loops
}

/// Walks pixel-edge cracks clockwise from the piece's first scan-order
/// pixel, keeping the piece on the right; corners where the heading turns
/// become vertices.
fn trace_piece(pieces: &InstanceMap, id: u32, start: (u32, u32)) -> Vec<(u32, u32)> {
    let inside = |x: i64, y: i64| pieces.in_bounds(x, y) && pieces.get(x as u32, y as u32) == id;
    let start_corner = (start.0 as i64, start.1 as i64);
    let start_dir = 0usize;
    let mut corner = start_corner;
    let mut dir = start_dir;
    let mut walk: Vec<((i64, i64), usize)> = Vec::new();
    // Every directed boundary edge is traversed at most once.
    let area: u64 = pieces.label_areas()[id as usize - 1].1;
    let budget = 4 * area + 8;
    loop {
        assert!(walk.len() as u64 <= budget, "boundary walk did not close");
        walk.push((corner, dir));
        corner = (corner.0 + WALK[dir].0, corner.1 + WALK[dir].1);
        let left = FLANK_LEFT[dir];
        let right = FLANK_RIGHT[dir];
        let left_in = inside(corner.0 + left.0, corner.1 + left.1);
        let right_in = inside(corner.0 + right.0, corner.1 + right.1);
        dir = if right_in && !left_in {
            dir
        } else if left_in {
            (dir + 3) % 4
        } else {
            (dir + 1) % 4
        };
        if corner == start_corner && dir == start_dir {
            break;
        }
    }
    let n = walk.len();
    let mut points = Vec::new();
    for i in 0..n {
        let incoming = walk[(i + n - 1) % n].1;
        let ((x, y), outgoing) = walk[i];
        if incoming != outgoing {
            points.push((x as u32, y as u32));
        }
    }
    points
}

/// Writes traced boundaries in the annotation text format, one polygon per
/// line under a "# size: W,H" header.
fn write_contours(path: &Path, labels: &InstanceMap) -> Result<(), CliError> {
    let mut out = format!("# size: {},{}\n", labels.width(), labels.height());
    for (_, points) in trace_boundaries(labels) {
        let coords: Vec<String> = points
            .iter()
            .flat_map(|&(x, y)| [x.to_string(), y.to_string()])
            .collect();
        out.push_str(&coords.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| io_err(path, e))?;
    Ok(())
}
