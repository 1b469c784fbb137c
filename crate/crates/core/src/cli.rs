//! The `flowcorrupt` command line.
//!
//! Exit codes: 0 success, 2 usage, 3 missing inputs, 4 external tool failure,
//! 5 incomplete grid, 1 anything else.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::baselines::{write_baseline_predictions, Baseline};
use crate::corruption::{CorruptionKind, Severity};
use crate::datasets::{build_gopro_fc, build_kitti_fc, BuildOptions};
use crate::error::{Error, Result};
use crate::evaluate::{evaluate, EvaluateOptions, GroundTruth};
use crate::flow_io::FlowFormat;
use crate::manifest::{Benchmark, BenchmarkManifest, Split};
use crate::metrics::{rank_models, RankKey};
use crate::pipeline::PsfSource;
use crate::psf::export_bundled_lenses;
use crate::report::{load_report, ranking_table, save_report, text_table, write_report_bundle};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_MISSING_INPUTS: i32 = 3;
pub const EXIT_EXTERNAL_TOOL: i32 = 4;
pub const EXIT_INCOMPLETE_GRID: i32 = 5;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Usage(_) | Error::UnknownKind { .. } | Error::InvalidSeverity(_) => EXIT_USAGE,
        Error::MissingInputs(_) => EXIT_MISSING_INPUTS,
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => EXIT_MISSING_INPUTS,
        Error::EncoderMissing { .. } | Error::ExternalTool { .. } => EXIT_EXTERNAL_TOOL,
        Error::IncompleteGrid(_) => EXIT_INCOMPLETE_GRID,
        _ => EXIT_FAILURE,
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "flowcorrupt",
    version,
    about = "Corrupted optical-flow benchmarks and robustness metrics"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Materialize KITTI-FC or GoPro-FC from the original dataset.
    Corrupt(CorruptArgs),
    /// Score a prediction directory against a benchmark manifest.
    Evaluate(EvaluateArgs),
    /// Tables, rankings and plot data from one or more reports.
    Report(ReportArgs),
    /// Write predictions of a built-in baseline for every manifest entry.
    Baseline(BaselineArgs),
    /// Write the bundled lens PSF grids as `lens_{s}.psfg` files.
    PsfExport(PsfExportArgs),
}

#[derive(Debug, Args)]
pub struct CorruptArgs {
    #[arg(long)]
    pub benchmark: String,
    /// KITTI 2015 training root, or the GoPro root holding the sequences.
    #[arg(long)]
    pub data_root: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// KITTI only: train (first 120 pairs) or eval (remaining 80).
    #[arg(long, default_value = "eval")]
    pub split: String,
    /// Comma-separated kind names; defaults to the benchmark's full set.
    #[arg(long, value_delimiter = ',')]
    pub kinds: Vec<String>,
    /// Comma-separated levels in 1..=5; defaults to all.
    #[arg(long, value_delimiter = ',')]
    pub severities: Vec<u8>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub jobs: Option<usize>,
    /// ffmpeg executable for the video corruptions.
    #[arg(long)]
    pub encoder: Option<PathBuf>,
    /// Regenerate every file even when its recorded hash matches.
    #[arg(long)]
    pub force: bool,
    /// Continue a run that was interrupted.
    #[arg(long)]
    pub resume: bool,
    /// Directory of `lens_{s}.psfg` files replacing the bundled lenses.
    #[arg(long)]
    pub psf_dir: Option<PathBuf>,
    /// GoPro only: 960 fps frames laid out as `<dir>/<sequence>/*.png`.
    #[arg(long)]
    pub frames_4x: Option<PathBuf>,
    /// GoPro only: blend neighbouring captures when no 960 fps frames are given.
    #[arg(long)]
    pub naive_interp: bool,
    /// GoPro only: comma-separated sequence names.
    #[arg(long, value_delimiter = ',')]
    pub sequences: Vec<String>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Benchmark directory or its manifest.json.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub pred_dir: PathBuf,
    #[arg(long)]
    pub model_id: Option<String>,
    /// Report JSON destination.
    #[arg(long)]
    pub out: PathBuf,
    /// Score against the ground truth paths recorded in the manifest.
    #[arg(long, conflicts_with = "gt_dir")]
    pub gt_from_manifest: bool,
    /// Ground truth as `<dir>/<pair_id>.png` or `.flo`.
    #[arg(long)]
    pub gt_dir: Option<PathBuf>,
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "crer")]
    pub rank_by: String,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// `zero_flow` or `constant:U,V`.
    #[arg(long, default_value = "zero_flow")]
    pub baseline: String,
    #[arg(long)]
    pub out: PathBuf,
    /// `flo` or `png`.
    #[arg(long, default_value = "flo")]
    pub format: String,
}

#[derive(Debug, Args)]
pub struct PsfExportArgs {
    #[arg(long)]
    pub out: PathBuf,
}

/// Everything that determines the content of a `corrupt` run. Stored in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub benchmark: Benchmark,
    pub split: Option<Split>,
    pub data_root: PathBuf,
    pub frames_4x: Option<PathBuf>,
    pub output_root: PathBuf,
    pub global_seed: u64,
    pub kinds: Option<Vec<CorruptionKind>>,
    pub severities: Vec<Severity>,
    pub encoder: Option<PathBuf>,
    pub psf_dir: Option<PathBuf>,
    pub naive_interp: bool,
    pub sequences: Option<Vec<String>>,
    pub jobs: Option<usize>,
}

impl RunConfig {
    /// Parses and checks the arguments without touching the output directory.
    pub fn from_args(a: &CorruptArgs) -> Result<Self> {
        let benchmark: Benchmark = a.benchmark.parse()?;
        let kinds = if a.kinds.is_empty() {
            None
        } else {
            Some(
                a.kinds
                    .iter()
                    .map(|k| k.parse())
                    .collect::<Result<Vec<CorruptionKind>>>()?,
            )
        };
        let severities = a
            .severities
            .iter()
            .map(|&s| Severity::new(s))
            .collect::<Result<Vec<_>>>()?;
        let split = match benchmark {
            Benchmark::KittiFc => Some(a.split.parse()?),
            Benchmark::GoproFc => None,
        };
        if benchmark == Benchmark::KittiFc && (a.frames_4x.is_some() || a.naive_interp || !a.sequences.is_empty()) {
            return Err(Error::Usage(
                "--frames-4x, --naive-interp and --sequences apply to gopro-fc only".into(),
            ));
        }
        if a.force && a.resume {
            return Err(Error::Usage("--force and --resume are mutually exclusive".into()));
        }
        if a.jobs == Some(0) {
            return Err(Error::Usage("--jobs must be at least 1".into()));
        }
        let mut missing = Vec::new();
        for p in std::iter::once(&a.data_root)
            .chain(a.frames_4x.iter())
            .chain(a.psf_dir.iter())
        {
            if !p.is_dir() {
                missing.push(p.clone());
            }
        }
        if !missing.is_empty() {
            return Err(Error::MissingInputs(missing));
        }
        Ok(RunConfig {
            command: "corrupt".into(),
            benchmark,
            split,
            data_root: a.data_root.clone(),
            frames_4x: a.frames_4x.clone(),
            output_root: a.out.clone(),
            global_seed: a.seed,
            kinds,
            severities,
            encoder: a.encoder.clone(),
            psf_dir: a.psf_dir.clone(),
            naive_interp: a.naive_interp,
            sequences: (!a.sequences.is_empty()).then(|| a.sequences.clone()),
            jobs: a.jobs,
        })
    }
}

pub fn cmd_corrupt(a: &CorruptArgs) -> Result<BenchmarkManifest> {
    let cfg = RunConfig::from_args(a)?;
    let opts = BuildOptions {
        kinds: cfg.kinds.clone(),
        severities: cfg.severities.clone(),
        jobs: cfg.jobs,
        force: a.force,
        resume: a.resume,
        encoder: cfg.encoder.clone(),
        psf_source: cfg.psf_dir.clone().map(PsfSource::Dir).unwrap_or_default(),
        naive_interp: cfg.naive_interp,
        sequences: cfg.sequences.clone(),
        run_config: serde_json::to_value(&cfg)?,
    };
    let outcome = match cfg.benchmark {
        Benchmark::KittiFc => build_kitti_fc(
            &cfg.data_root,
            cfg.split.expect("kitti split"),
            &cfg.output_root,
            cfg.global_seed,
            &opts,
        )?,
        Benchmark::GoproFc => build_gopro_fc(
            &cfg.data_root,
            cfg.frames_4x.as_deref(),
            &cfg.output_root,
            cfg.global_seed,
            &opts,
        )?,
    };
    let m = &outcome.manifest;
    println!(
        "{}: {} pairs, {} of {} cells, {} files generated, {} unchanged",
        m.benchmark,
        m.pairs.len(),
        m.cells.len(),
        m.corruption_set.len() * Severity::ALL.len(),
        outcome.generated_files,
        outcome.skipped_files
    );
    println!("manifest: {}", outcome.manifest_path.display());
    Ok(outcome.manifest)
}

fn manifest_root(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.to_path_buf()
    } else {
        path.parent().map(Path::to_path_buf).unwrap_or_default()
    }
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<crate::metrics::RobustnessReport> {
    let manifest = BenchmarkManifest::load(&a.manifest)?;
    if !a.pred_dir.is_dir() {
        return Err(Error::MissingInputs(vec![a.pred_dir.clone()]));
    }
    let ground_truth = match (&a.gt_dir, a.gt_from_manifest) {
        (Some(d), _) => GroundTruth::Dir(d.clone()),
        (None, true) => GroundTruth::FromManifest,
        (None, false) => GroundTruth::None,
    };
    if ground_truth == GroundTruth::None && manifest.has_ground_truth() {
        log::warn!("manifest records ground truth; pass --gt-from-manifest to report EPE and CRE");
    }
    let opts = EvaluateOptions {
        model_id: a.model_id.clone().unwrap_or_else(|| {
            a.pred_dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default()
        }),
        ground_truth,
        jobs: a.jobs,
    };
    let report = evaluate(&manifest, &manifest_root(&a.manifest), &a.pred_dir, &opts)?;
    save_report(&report, &a.out)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    print!("{}", text_table(std::slice::from_ref(&report)));
    Ok(report)
}

pub fn cmd_report(a: &ReportArgs) -> Result<Vec<PathBuf>> {
    let key: RankKey = a.rank_by.parse()?;
    let reports = a.reports.iter().map(load_report).collect::<Result<Vec<_>>>()?;
    let written = write_report_bundle(&reports, &a.out)?;
    print!("{}", text_table(&reports));
    if reports.iter().all(|r| key.of(r).is_some()) {
        println!();
        print!("{}", ranking_table(&rank_models(&reports, key)?, key));
    }
    Ok(written)
}

pub fn cmd_baseline(a: &BaselineArgs) -> Result<usize> {
    let baseline: Baseline = a.baseline.parse()?;
    let format = match a.format.as_str() {
        "flo" => FlowFormat::MiddleburyFlo,
        "png" | "kitti_png16" => FlowFormat::KittiPng16,
        other => {
            return Err(Error::Usage(format!(
                "unknown flow format {other:?}; expected flo or png"
            )))
        }
    };
    let manifest = BenchmarkManifest::load(&a.manifest)?;
    let n = write_baseline_predictions(&manifest, baseline, &a.out, format)?;
    println!("{baseline}: {n} prediction files in {}", a.out.display());
    Ok(n)
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Corrupt(a) => cmd_corrupt(a).map(drop),
        Command::Evaluate(a) => cmd_evaluate(a).map(drop),
        Command::Report(a) => cmd_report(a).map(drop),
        Command::Baseline(a) => cmd_baseline(a).map(drop),
        Command::PsfExport(a) => {
            for p in export_bundled_lenses(&a.out)? {
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}

/// Parses `args` (including the program name) and runs the command, returning the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
