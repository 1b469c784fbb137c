//! Scores a prediction directory against a benchmark manifest.
//!
//! Predictions live at `<pred>/clean/<pair_id>.<ext>` and
//! `<pred>/<kind>/<severity>/<pair_id>.<ext>`, with `.flo` or KITTI 16-bit
//! `.png` files.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::corruption::Severity;
use crate::error::{Error, Result};
use crate::flow::{FlowField, ValidMask};
use crate::flow_io::{read_flow, read_flow_auto, FlowFormat};
use crate::manifest::{BenchmarkManifest, Cell};
use crate::metrics::{
    aggregate, compensated_mean, epe, rcre, CellMeasure, ReportInput, ReportMetadata, RobustnessReport,
};

pub const CLEAN_DIR: &str = "clean";

/// Prediction path relative to the prediction root; `None` is the clean input.
pub fn prediction_rel_path(cell: Option<Cell>, pair_id: &str, format: FlowFormat) -> PathBuf {
    let dir = match cell {
        None => PathBuf::from(CLEAN_DIR),
        Some(c) => PathBuf::from(c.kind.name()).join(c.severity.to_string()),
    };
    dir.join(format!("{pair_id}.{}", format.extension()))
}

/// Finds a prediction in either format, preferring `.flo`.
pub fn find_prediction(root: &Path, cell: Option<Cell>, pair_id: &str) -> Option<PathBuf> {
    [FlowFormat::MiddleburyFlo, FlowFormat::KittiPng16]
        .into_iter()
        .map(|f| root.join(prediction_rel_path(cell, pair_id, f)))
        .find(|p| p.is_file())
}

/// Every (kind, severity) cell the benchmark declares, sorted.
pub fn declared_cells(manifest: &BenchmarkManifest) -> Vec<Cell> {
    let mut cells: Vec<Cell> = manifest
        .corruption_set
        .iter()
        .flat_map(|&kind| Severity::ALL.into_iter().map(move |severity| Cell { kind, severity }))
        .collect();
    cells.sort();
    cells
}

#[derive(Debug, Clone, Default, PartialEq)]
pub enum GroundTruth {
    /// Paths recorded in the manifest.
    FromManifest,
    /// `<dir>/<pair_id>.png` or `.flo`.
    Dir(PathBuf),
    /// RCRE only.
    #[default]
    None,
}

#[derive(Debug, Clone, Default)]
pub struct EvaluateOptions {
    pub model_id: String,
    pub ground_truth: GroundTruth,
    pub jobs: Option<usize>,
}

fn gt_path(manifest: &BenchmarkManifest, pair_id: &str, gt: &GroundTruth) -> Result<Option<PathBuf>> {
    Ok(match gt {
        GroundTruth::None => None,
        GroundTruth::FromManifest => Some(
            manifest
                .pair(pair_id)
                .and_then(|p| p.ground_truth.clone())
                .ok_or_else(|| Error::Usage(format!("manifest has no ground truth for {pair_id}")))?,
        ),
        GroundTruth::Dir(dir) => Some(
            [FlowFormat::KittiPng16, FlowFormat::MiddleburyFlo]
                .into_iter()
                .map(|f| dir.join(format!("{pair_id}.{}", f.extension())))
                .find(|p| p.is_file())
                .unwrap_or_else(|| dir.join(format!("{pair_id}.png"))),
        ),
    })
}

struct PairScores {
    epe_clean: Option<f64>,
    /// Per declared cell, in `declared_cells` order.
    cells: Vec<(Option<f64>, f64)>,
}

fn load_checked(path: &Path, dims: (usize, usize), problems: &mut Vec<String>) -> Option<FlowField> {
    match read_flow_auto(path) {
        Ok((f, _)) if f.dims() == dims => Some(f),
        Ok((f, _)) => {
            problems.push(format!(
                "{}: flow is {:?}, expected {:?}",
                path.display(),
                f.dims(),
                dims
            ));
            None
        }
        Err(e) => {
            problems.push(e.to_string());
            None
        }
    }
}

fn score_pair(
    manifest: &BenchmarkManifest,
    pred_dir: &Path,
    pair_id: &str,
    cells: &[Cell],
    gt: &GroundTruth,
) -> Result<std::result::Result<PairScores, Vec<String>>> {
    let rec = manifest.pair(pair_id).expect("pair from manifest");
    let (w, h) = image::image_dimensions(&rec.frame_a).map_err(Error::from)?;
    let dims = (w as usize, h as usize);
    let mut problems = Vec::new();

    let truth: Option<(FlowField, ValidMask)> = match gt_path(manifest, pair_id, gt)? {
        Some(p) => {
            let format = FlowFormat::from_path(&p).unwrap_or(FlowFormat::KittiPng16);
            let (f, m) = read_flow(&p, format)?;
            if f.dims() != dims {
                problems.push(format!(
                    "{}: ground truth is {:?}, frames are {:?}",
                    p.display(),
                    f.dims(),
                    dims
                ));
            }
            Some((f, m))
        }
        None => None,
    };
    let find = |cell| find_prediction(pred_dir, cell, pair_id).expect("presence checked");
    let clean = load_checked(&find(None), dims, &mut problems);
    let preds: Vec<Option<FlowField>> = cells
        .iter()
        .map(|&c| load_checked(&find(Some(c)), dims, &mut problems))
        .collect();
    if !problems.is_empty() {
        return Ok(Err(problems));
    }
    let clean = clean.expect("no problems");
    let mask = truth.as_ref().map(|(_, m)| m);
    let epe_clean = match &truth {
        Some((f, m)) => Some(epe(&clean, f, m)?.value),
        None => None,
    };
    let mut scores = Vec::with_capacity(cells.len());
    for pred in preds {
        let pred = pred.expect("no problems");
        let e = match &truth {
            Some((f, m)) => Some(epe(&pred, f, m)?.value),
            None => None,
        };
        scores.push((e, rcre(&pred, &clean, mask)?));
    }
    Ok(Ok(PairScores {
        epe_clean,
        cells: scores,
    }))
}

/// Every prediction file the manifest calls for that is absent.
pub fn missing_predictions(manifest: &BenchmarkManifest, pred_dir: &Path) -> Vec<PathBuf> {
    let cells = declared_cells(manifest);
    let mut missing = Vec::new();
    for p in &manifest.pairs {
        for cell in std::iter::once(None).chain(cells.iter().copied().map(Some)) {
            if find_prediction(pred_dir, cell, &p.pair_id).is_none() {
                missing.push(pred_dir.join(prediction_rel_path(cell, &p.pair_id, FlowFormat::MiddleburyFlo)));
            }
        }
    }
    missing
}

/// EPE and CRE per cell when ground truth is available, RCRE always.
pub fn evaluate(
    manifest: &BenchmarkManifest,
    manifest_root: &Path,
    pred_dir: &Path,
    opts: &EvaluateOptions,
) -> Result<RobustnessReport> {
    let check = manifest.validate(manifest_root, false)?;
    if !check.missing_cells.is_empty() {
        return Err(Error::IncompleteGrid(
            check.missing_cells.iter().map(|c| (c.kind, c.severity.get())).collect(),
        ));
    }
    let missing = missing_predictions(manifest, pred_dir);
    if !missing.is_empty() {
        return Err(Error::MissingInputs(missing));
    }
    let cells = declared_cells(manifest);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Usage(format!("thread pool: {e}")))?;
    let scored: Vec<Result<std::result::Result<PairScores, Vec<String>>>> = pool.install(|| {
        manifest
            .pairs
            .par_iter()
            .map(|p| score_pair(manifest, pred_dir, &p.pair_id, &cells, &opts.ground_truth))
            .collect()
    });
    let mut pairs = Vec::with_capacity(scored.len());
    let mut problems = Vec::new();
    for s in scored {
        match s? {
            Ok(p) => pairs.push(p),
            Err(mut e) => problems.append(&mut e),
        }
    }
    if !problems.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} file(s):\n  {}",
            problems.len(),
            problems.join("\n  ")
        )));
    }

    let has_gt = opts.ground_truth != GroundTruth::None;
    let epe_clean = if has_gt {
        compensated_mean(pairs.iter().map(|p| p.epe_clean.expect("ground truth")))
    } else {
        None
    };
    let measures = cells
        .iter()
        .enumerate()
        .map(|(i, c)| CellMeasure {
            kind: c.kind,
            severity: c.severity,
            epe: if has_gt {
                compensated_mean(pairs.iter().map(|p| p.cells[i].0.expect("ground truth")))
            } else {
                None
            },
            rcre: compensated_mean(pairs.iter().map(|p| p.cells[i].1)),
        })
        .collect();
    let mut notes = vec![format!("predictions: {}", pred_dir.display())];
    if !has_gt {
        notes.push("no ground truth: EPE, CRE and CREr omitted".into());
    }
    aggregate(ReportInput {
        model_id: opts.model_id.clone(),
        benchmark: manifest.benchmark.name().into(),
        corruption_set: manifest.corruption_set.clone(),
        epe_clean,
        cells: measures,
        metadata: ReportMetadata {
            global_seed: Some(manifest.global_seed),
            pair_count: manifest.pairs.len(),
            encoder_versions: manifest.encoder_version.iter().cloned().collect(),
            notes,
        },
    })
}
