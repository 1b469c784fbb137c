//! The `manifest.json` that describes a materialized benchmark.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corruption::{CorruptionKind, Severity};
use crate::error::{Error, Result};
use crate::video::VideoRunInfo;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Benchmark {
    #[serde(rename = "kitti-fc")]
    KittiFc,
    #[serde(rename = "gopro-fc")]
    GoproFc,
}

impl Benchmark {
    pub fn name(self) -> &'static str {
        match self {
            Benchmark::KittiFc => "kitti-fc",
            Benchmark::GoproFc => "gopro-fc",
        }
    }

    pub fn corruption_set(self) -> Vec<CorruptionKind> {
        match self {
            Benchmark::KittiFc => CorruptionKind::kitti_set(),
            Benchmark::GoproFc => CorruptionKind::benchmark_set(),
        }
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Benchmark {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "kitti-fc" | "kitti" => Ok(Benchmark::KittiFc),
            "gopro-fc" | "gopro" => Ok(Benchmark::GoproFc),
            _ => Err(Error::Usage(format!(
                "unknown benchmark {s:?}; expected kitti-fc or gopro-fc"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Eval,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "eval" => Ok(Split::Eval),
            _ => Err(Error::Usage(format!("unknown split {s:?}; expected train or eval"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub pair_id: String,
    pub frame_a: PathBuf,
    pub frame_b: PathBuf,
    pub ground_truth: Option<PathBuf>,
    pub timestamp_gap: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence: Option<String>,
    /// Positions of the two frames in the 960 fps stream.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stream_indices: Option<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub kind: CorruptionKind,
    pub severity: Severity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    A,
    B,
}

impl Frame {
    pub fn file_name(self) -> &'static str {
        match self {
            Frame::A => "frame_a.png",
            Frame::B => "frame_b.png",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkManifest {
    pub schema_version: u32,
    pub benchmark: Benchmark,
    pub split: Option<Split>,
    pub global_seed: u64,
    /// Every kind the benchmark declares, in table order.
    pub corruption_set: Vec<CorruptionKind>,
    pub pairs: Vec<PairRecord>,
    /// Cells materialized on disk, sorted.
    pub cells: Vec<Cell>,
    pub psf_source: String,
    pub encoder_version: Option<String>,
    #[serde(default)]
    pub video_runs: Vec<VideoRunRecord>,
    pub run_config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRunRecord {
    pub sequence: String,
    #[serde(flatten)]
    pub info: VideoRunInfo,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Declared (kind, severity) cells that were never generated.
    pub missing_cells: Vec<Cell>,
    /// Files referenced by materialized cells that are absent.
    pub missing_files: Vec<PathBuf>,
    /// Corrupted frames whose size differs from the clean frame.
    pub size_mismatches: Vec<PathBuf>,
}

impl ValidationReport {
    pub fn is_complete(&self) -> bool {
        self.missing_cells.is_empty() && self.missing_files.is_empty() && self.size_mismatches.is_empty()
    }
}

/// Relative location of a corrupted frame inside a benchmark root.
pub fn corrupted_rel_path(kind: CorruptionKind, severity: Severity, pair_id: &str, frame: Frame) -> PathBuf {
    cell_dir(kind, severity).join(pair_id).join(frame.file_name())
}

pub fn cell_dir(kind: CorruptionKind, severity: Severity) -> PathBuf {
    PathBuf::from(kind.name()).join(severity.to_string())
}

impl BenchmarkManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let path = if path.is_dir() {
            path.join(MANIFEST_FILE)
        } else {
            path.to_path_buf()
        };
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: BenchmarkManifest = serde_json::from_str(&text)?;
        if m.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::Manifest(format!(
                "schema version {} is not supported (expected {MANIFEST_SCHEMA_VERSION})",
                m.schema_version
            )));
        }
        Ok(m)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save(&self, root: impl AsRef<Path>) -> Result<PathBuf> {
        let path = root.as_ref().join(MANIFEST_FILE);
        let tmp = root.as_ref().join(format!("{MANIFEST_FILE}.tmp"));
        fs::write(&tmp, self.to_json()?).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn pair(&self, pair_id: &str) -> Option<&PairRecord> {
        self.pairs.iter().find(|p| p.pair_id == pair_id)
    }

    pub fn has_ground_truth(&self) -> bool {
        !self.pairs.is_empty() && self.pairs.iter().all(|p| p.ground_truth.is_some())
    }

    /// Checks the declared grid against what is on disk under `root`.
    /// With `deep`, every corrupted frame is opened and its size compared.
    pub fn validate(&self, root: impl AsRef<Path>, deep: bool) -> Result<ValidationReport> {
        let root = root.as_ref();
        let present: BTreeSet<Cell> = self.cells.iter().copied().collect();
        let mut report = ValidationReport::default();
        for &kind in &self.corruption_set {
            for severity in Severity::ALL {
                let cell = Cell { kind, severity };
                if !present.contains(&cell) {
                    report.missing_cells.push(cell);
                }
            }
        }
        for pair in &self.pairs {
            let clean_dims = if deep {
                Some(
                    image::image_dimensions(&pair.frame_a)
                        .map_err(|e| Error::Manifest(format!("{}: {e}", pair.frame_a.display())))?,
                )
            } else {
                None
            };
            for cell in &self.cells {
                for frame in [Frame::A, Frame::B] {
                    let path = root.join(corrupted_rel_path(cell.kind, cell.severity, &pair.pair_id, frame));
                    if !path.is_file() {
                        report.missing_files.push(path);
                        continue;
                    }
                    if let Some(dims) = clean_dims {
                        match image::image_dimensions(&path) {
                            Ok(d) if d == dims => {}
                            _ => report.size_mismatches.push(path),
                        }
                    }
                }
            }
        }
        Ok(report)
    }
}
