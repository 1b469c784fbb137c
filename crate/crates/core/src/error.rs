use std::path::PathBuf;

use thiserror::Error;

use crate::corruption::CorruptionKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid severity {0}: must be in 1..=5")]
    InvalidSeverity(u8),

    #[error("unknown corruption kind {name:?}; valid kinds: {valid}")]
    UnknownKind { name: String, valid: String },

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("NaN intensity at sample {0}")]
    NanIntensity(usize),

    #[error("non-finite flow component at pixel ({x}, {y})")]
    NonFiniteFlow { x: usize, y: usize },

    #[error("metric requires at least one valid pixel")]
    EmptyMask,

    #[error("pixel count mismatch between corrupted ({corrupted}) and clean ({clean}) EPE")]
    MaskMismatch { corrupted: usize, clean: usize },

    #[error("clean EPE must be positive to compute CREr (got {0})")]
    NonPositiveCleanEpe(f64),

    #[error("incomplete grid, missing cells: {}", format_cells(.0))]
    IncompleteGrid(Vec<(CorruptionKind, u8)>),

    #[error("reports disagree on {0}")]
    ReportMismatch(String),

    #[error("no reports to rank")]
    NoReports,

    #[error("{0} needs a frame stream and cannot be applied to a single pair")]
    RequiresStream(CorruptionKind),

    #[error("accumulation window for keyframe {keyframe} (half-width {half_width}) exceeds sequence of {len} frames")]
    WindowOutOfBounds {
        keyframe: usize,
        half_width: usize,
        len: usize,
    },

    #[error("index {index} out of bounds for {len} frames")]
    IndexOutOfBounds { index: usize, len: usize },

    #[error("malformed PSF grid: {0}")]
    MalformedPsf(String),

    #[error("malformed flow file {path}: {reason}")]
    MalformedFlow { path: PathBuf, reason: String },

    #[error("flow value {value} out of range for 16-bit PNG encoding")]
    FlowOutOfRange { value: f32 },

    #[error("missing inputs:\n  {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join("\n  "))]
    MissingInputs(Vec<PathBuf>),

    #[error("external encoder not found ({tool}); install ffmpeg with libx264 or set FLOWCORRUPT_FFMPEG / --encoder")]
    EncoderMissing { tool: String },

    #[error("external tool failed ({status}): {command}\n{stderr}")]
    ExternalTool {
        command: String,
        status: String,
        stderr: String,
    },

    #[error("image codec error: {0}")]
    Codec(String),

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("{0}")]
    Usage(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn format_cells(cells: &[(CorruptionKind, u8)]) -> String {
    cells
        .iter()
        .map(|(k, s)| format!("{}/{}", k.name(), s))
        .collect::<Vec<_>>()
        .join(", ")
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<image::ImageError> for Error {
    fn from(e: image::ImageError) -> Self {
        Error::Codec(e.to_string())
    }
}
