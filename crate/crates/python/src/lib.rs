//! Python bindings. Images and flow fields cross the boundary as flat lists;
//! benchmarks, reports and manifests as JSON text.

use std::path::PathBuf;

use flowcorrupt::baselines::{write_baseline_predictions, Baseline};
use flowcorrupt::datasets::{build_gopro_fc, build_kitti_fc, BuildOptions};
use flowcorrupt::evaluate::{prediction_rel_path, EvaluateOptions, GroundTruth};
use flowcorrupt::flow_io::{self, FlowFormat};
use flowcorrupt::manifest::{corrupted_rel_path, BenchmarkManifest, Cell, Frame, Split};
use flowcorrupt::pipeline::CorruptionContext;
use flowcorrupt::{metrics, seed, CorruptionKind, Error, Severity};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyFileNotFoundError, PyValueError};
use pyo3::prelude::*;

create_exception!(flowcorrupt, FlowCorruptError, PyException);

fn to_py(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::InvalidSeverity(_)
        | Error::UnknownKind { .. }
        | Error::InvalidImage(_)
        | Error::DimensionMismatch(_)
        | Error::NonFiniteFlow { .. }
        | Error::EmptyMask
        | Error::FlowOutOfRange { .. }
        | Error::Usage(_) => PyValueError::new_err(msg),
        Error::MissingInputs(_) => PyFileNotFoundError::new_err(msg),
        Error::Io { ref source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
            PyFileNotFoundError::new_err(msg)
        }
        _ => FlowCorruptError::new_err(msg),
    }
}

fn kind(name: &str) -> PyResult<CorruptionKind> {
    name.parse().map_err(to_py)
}

fn severity(level: u8) -> PyResult<Severity> {
    Severity::new(level).map_err(to_py)
}

fn flow_format(name: &str) -> PyResult<FlowFormat> {
    match name {
        "flo" => Ok(FlowFormat::MiddleburyFlo),
        "kitti_png16" | "png" => Ok(FlowFormat::KittiPng16),
        _ => Err(PyValueError::new_err(format!(
            "unknown flow format {name:?}; expected flo or kitti_png16"
        ))),
    }
}

/// RGB image with float samples in [0, 1], stored row-major and interleaved.
#[pyclass(module = "flowcorrupt", name = "Image", from_py_object)]
#[derive(Clone)]
struct PyImage(flowcorrupt::Image);

#[pymethods]
impl PyImage {
    #[new]
    fn new(width: usize, height: usize, data: Vec<f32>) -> PyResult<Self> {
        flowcorrupt::Image::new(width, height, data).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        flowcorrupt::Image::load(path).map(Self).map_err(to_py)
    }

    /// The bundled 128x128 test photograph.
    #[staticmethod]
    fn sample() -> Self {
        Self(flowcorrupt::Image::sample())
    }

    fn save_png(&self, path: PathBuf) -> PyResult<()> {
        self.0.save_png(path).map_err(to_py)
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    fn data(&self) -> Vec<f32> {
        self.0.data().to_vec()
    }

    /// 8-bit samples as written to PNG.
    fn quantized(&self) -> Vec<u8> {
        flowcorrupt::static_ops::quantized(&self.0)
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.0 == other.0
    }

    fn __repr__(&self) -> String {
        format!("Image({}x{})", self.0.width(), self.0.height())
    }
}

/// Dense flow field with separate u and v planes.
#[pyclass(module = "flowcorrupt", name = "FlowField", from_py_object)]
#[derive(Clone)]
struct PyFlowField(flowcorrupt::FlowField);

#[pymethods]
impl PyFlowField {
    #[new]
    fn new(width: usize, height: usize, u: Vec<f32>, v: Vec<f32>) -> PyResult<Self> {
        flowcorrupt::FlowField::new(width, height, u, v)
            .map(Self)
            .map_err(to_py)
    }

    #[staticmethod]
    fn constant(width: usize, height: usize, u: f32, v: f32) -> Self {
        Self(flowcorrupt::FlowField::constant(width, height, u, v))
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    #[getter]
    fn u(&self) -> Vec<f32> {
        self.0.u().to_vec()
    }

    #[getter]
    fn v(&self) -> Vec<f32> {
        self.0.v().to_vec()
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.0 == other.0
    }

    fn __repr__(&self) -> String {
        format!("FlowField({}x{})", self.0.width(), self.0.height())
    }
}

fn mask_of(flow: &flowcorrupt::FlowField, valid: Option<Vec<bool>>) -> PyResult<flowcorrupt::ValidMask> {
    let (w, h) = flow.dims();
    match valid {
        Some(bits) => flowcorrupt::ValidMask::new(w, h, bits).map_err(to_py),
        None => Ok(flowcorrupt::ValidMask::all_valid(w, h)),
    }
}

#[pyfunction]
fn kinds() -> Vec<&'static str> {
    CorruptionKind::ALL.iter().map(|k| k.name()).collect()
}

#[pyfunction]
fn kitti_kinds() -> Vec<&'static str> {
    CorruptionKind::kitti_set().into_iter().map(|k| k.name()).collect()
}

#[pyfunction]
fn gopro_kinds() -> Vec<&'static str> {
    CorruptionKind::benchmark_set().into_iter().map(|k| k.name()).collect()
}

#[pyfunction]
fn derive_seed(global_seed: u64, pair_id: &str, kind_name: &str, level: u8) -> PyResult<u64> {
    Ok(seed::derive_seed(
        global_seed,
        pair_id,
        kind(kind_name)?,
        severity(level)?,
    ))
}

/// Corrupts one pair; stream-level kinds raise because they need a whole sequence.
#[pyfunction]
#[pyo3(signature = (frame_a, frame_b, kind_name, level, seed = 0, pair_id = "pair"))]
fn corrupt_pair(
    py: Python<'_>,
    frame_a: PyImage,
    frame_b: PyImage,
    kind_name: &str,
    level: u8,
    seed: u64,
    pair_id: &str,
) -> PyResult<(PyImage, PyImage)> {
    let (k, s) = (kind(kind_name)?, severity(level)?);
    let pair = flowcorrupt::ImagePair::new(frame_a.0, frame_b.0, pair_id, 0.1).map_err(to_py)?;
    let out = py
        .detach(|| flowcorrupt::pipeline::corrupt_pair(&pair, k, s, seed, &CorruptionContext::default()))
        .map_err(to_py)?;
    Ok((PyImage(out.frame_a), PyImage(out.frame_b)))
}

#[pyfunction]
#[pyo3(signature = (pred, gt, valid = None))]
fn epe(pred: &PyFlowField, gt: &PyFlowField, valid: Option<Vec<bool>>) -> PyResult<f64> {
    let mask = mask_of(&gt.0, valid)?;
    metrics::epe(&pred.0, &gt.0, &mask).map(|e| e.value).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (pred_corrupt, pred_clean, valid = None))]
fn rcre(pred_corrupt: &PyFlowField, pred_clean: &PyFlowField, valid: Option<Vec<bool>>) -> PyResult<f64> {
    let mask = valid.map(|v| mask_of(&pred_clean.0, Some(v))).transpose()?;
    metrics::rcre(&pred_corrupt.0, &pred_clean.0, mask.as_ref()).map_err(to_py)
}

/// Returns the field and its per-pixel validity.
#[pyfunction]
fn read_flow(path: PathBuf) -> PyResult<(PyFlowField, Vec<bool>)> {
    let (flow, mask) = flow_io::read_flow_auto(path).map_err(to_py)?;
    Ok((PyFlowField(flow), mask.valid().to_vec()))
}

#[pyfunction]
#[pyo3(signature = (path, flow, valid = None, format = "flo"))]
fn write_flow(path: PathBuf, flow: &PyFlowField, valid: Option<Vec<bool>>, format: &str) -> PyResult<()> {
    let mask = mask_of(&flow.0, valid)?;
    flow_io::write_flow(&flow.0, &mask, path, flow_format(format)?).map_err(to_py)
}

/// Where a model runner must write its prediction; `kind_name=None` is the clean input.
#[pyfunction]
#[pyo3(signature = (pair_id, kind_name = None, level = None, format = "flo"))]
fn prediction_path(pair_id: &str, kind_name: Option<&str>, level: Option<u8>, format: &str) -> PyResult<String> {
    let cell = match (kind_name, level) {
        (Some(k), Some(s)) => Some(Cell {
            kind: kind(k)?,
            severity: severity(s)?,
        }),
        (None, None) => None,
        _ => return Err(PyValueError::new_err("kind_name and level go together")),
    };
    Ok(prediction_rel_path(cell, pair_id, flow_format(format)?)
        .display()
        .to_string())
}

#[pyfunction]
#[pyo3(signature = (kind_name, level, pair_id, frame = "a"))]
fn corrupted_path(kind_name: &str, level: u8, pair_id: &str, frame: &str) -> PyResult<String> {
    let frame = match frame {
        "a" | "A" => Frame::A,
        "b" | "B" => Frame::B,
        _ => return Err(PyValueError::new_err("frame must be 'a' or 'b'")),
    };
    Ok(corrupted_rel_path(kind(kind_name)?, severity(level)?, pair_id, frame)
        .display()
        .to_string())
}

fn build_options(
    kinds: Option<Vec<String>>,
    severities: Option<Vec<u8>>,
    naive_interp: bool,
) -> PyResult<BuildOptions> {
    Ok(BuildOptions {
        kinds: kinds.map(|ks| ks.iter().map(|k| kind(k)).collect()).transpose()?,
        severities: severities
            .unwrap_or_default()
            .into_iter()
            .map(severity)
            .collect::<PyResult<_>>()?,
        naive_interp,
        ..Default::default()
    })
}

/// Builds KITTI-FC and returns the manifest as JSON.
#[pyfunction]
#[pyo3(signature = (kitti_root, out, split = "eval", seed = 0, kinds = None, severities = None))]
fn build_kitti(
    py: Python<'_>,
    kitti_root: PathBuf,
    out: PathBuf,
    split: &str,
    seed: u64,
    kinds: Option<Vec<String>>,
    severities: Option<Vec<u8>>,
) -> PyResult<String> {
    let split: Split = split.parse().map_err(to_py)?;
    let opts = build_options(kinds, severities, false)?;
    let done = py
        .detach(|| build_kitti_fc(&kitti_root, split, &out, seed, &opts))
        .map_err(to_py)?;
    done.manifest.to_json().map_err(to_py)
}

/// Builds GoPro-FC and returns the manifest as JSON.
#[pyfunction]
#[pyo3(signature = (gopro_root, out, seed = 0, kinds = None, severities = None, frames_4x = None, naive_interp = false))]
#[allow(clippy::too_many_arguments)]
fn build_gopro(
    py: Python<'_>,
    gopro_root: PathBuf,
    out: PathBuf,
    seed: u64,
    kinds: Option<Vec<String>>,
    severities: Option<Vec<u8>>,
    frames_4x: Option<PathBuf>,
    naive_interp: bool,
) -> PyResult<String> {
    let opts = build_options(kinds, severities, naive_interp)?;
    let done = py
        .detach(|| build_gopro_fc(&gopro_root, frames_4x.as_deref(), &out, seed, &opts))
        .map_err(to_py)?;
    done.manifest.to_json().map_err(to_py)
}

#[pyfunction]
fn load_manifest(path: PathBuf) -> PyResult<String> {
    BenchmarkManifest::load(path).and_then(|m| m.to_json()).map_err(to_py)
}

/// Writes `zero` or `constant:U,V` predictions for every input of a benchmark.
#[pyfunction]
#[pyo3(signature = (manifest, baseline, out, format = "flo"))]
fn write_baseline(manifest: PathBuf, baseline: &str, out: PathBuf, format: &str) -> PyResult<usize> {
    let m = BenchmarkManifest::load(manifest).map_err(to_py)?;
    let b: Baseline = baseline.parse().map_err(to_py)?;
    write_baseline_predictions(&m, b, &out, flow_format(format)?).map_err(to_py)
}

/// Scores a prediction tree and returns the report as JSON.
#[pyfunction]
#[pyo3(signature = (manifest, pred_dir, model_id = "model", gt_dir = None, gt_from_manifest = false))]
fn evaluate(
    py: Python<'_>,
    manifest: PathBuf,
    pred_dir: PathBuf,
    model_id: &str,
    gt_dir: Option<PathBuf>,
    gt_from_manifest: bool,
) -> PyResult<String> {
    let ground_truth = match (gt_dir, gt_from_manifest) {
        (Some(_), true) => return Err(PyValueError::new_err("gt_dir and gt_from_manifest are exclusive")),
        (Some(d), false) => GroundTruth::Dir(d),
        (None, true) => GroundTruth::FromManifest,
        (None, false) => GroundTruth::None,
    };
    let m = BenchmarkManifest::load(&manifest).map_err(to_py)?;
    let root = if manifest.is_dir() {
        manifest.clone()
    } else {
        manifest.parent().map(PathBuf::from).unwrap_or_default()
    };
    let opts = EvaluateOptions {
        model_id: model_id.into(),
        ground_truth,
        jobs: None,
    };
    let report = py
        .detach(|| flowcorrupt::evaluate::evaluate(&m, &root, &pred_dir, &opts))
        .map_err(to_py)?;
    serde_json::to_string_pretty(&report).map_err(|e| FlowCorruptError::new_err(e.to_string()))
}

/// Runs the command-line interface in-process and returns its exit code.
#[pyfunction]
fn run_cli(py: Python<'_>, args: Vec<String>) -> i32 {
    let argv: Vec<String> = std::iter::once("flowcorrupt".to_string()).chain(args).collect();
    py.detach(|| flowcorrupt::cli::run(argv))
}

#[pymodule]
#[pyo3(name = "flowcorrupt")]
fn flowcorrupt_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("FlowCorruptError", m.py().get_type::<FlowCorruptError>())?;
    m.add_class::<PyImage>()?;
    m.add_class::<PyFlowField>()?;
    m.add_function(wrap_pyfunction!(kinds, m)?)?;
    m.add_function(wrap_pyfunction!(kitti_kinds, m)?)?;
    m.add_function(wrap_pyfunction!(gopro_kinds, m)?)?;
    m.add_function(wrap_pyfunction!(derive_seed, m)?)?;
    m.add_function(wrap_pyfunction!(corrupt_pair, m)?)?;
    m.add_function(wrap_pyfunction!(epe, m)?)?;
    m.add_function(wrap_pyfunction!(rcre, m)?)?;
    m.add_function(wrap_pyfunction!(read_flow, m)?)?;
    m.add_function(wrap_pyfunction!(write_flow, m)?)?;
    m.add_function(wrap_pyfunction!(prediction_path, m)?)?;
    m.add_function(wrap_pyfunction!(corrupted_path, m)?)?;
    m.add_function(wrap_pyfunction!(build_kitti, m)?)?;
    m.add_function(wrap_pyfunction!(build_gopro, m)?)?;
    m.add_function(wrap_pyfunction!(load_manifest, m)?)?;
    m.add_function(wrap_pyfunction!(write_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
