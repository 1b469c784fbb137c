//! Content-independent flow baselines and a writer for prediction sets.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::evaluate::{declared_cells, prediction_rel_path};
use crate::flow::{FlowField, ValidMask};
use crate::flow_io::{decode_flo, decode_kitti_png, encode_flo, encode_kitti_png, FlowFormat};
use crate::manifest::{BenchmarkManifest, Cell};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Baseline {
    ZeroFlow,
    ConstantFlow { u: f32, v: f32 },
}

impl Baseline {
    /// Depends only on the frame size, so every corruption yields the same field.
    pub fn predict(self, width: usize, height: usize) -> FlowField {
        match self {
            Baseline::ZeroFlow => FlowField::zeros(width, height),
            Baseline::ConstantFlow { u, v } => FlowField::constant(width, height, u, v),
        }
    }

    pub fn model_id(self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Baseline::ZeroFlow => f.write_str("zero_flow"),
            Baseline::ConstantFlow { u, v } => write!(f, "constant_flow({u},{v})"),
        }
    }
}

impl FromStr for Baseline {
    type Err = Error;

    /// `zero`, `zero_flow`, `constant:U,V` or `constant_flow(U,V)`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Usage(format!("unknown baseline {s:?}; expected zero_flow or constant:U,V"));
        let t = s.trim();
        if t == "zero" || t == "zero_flow" {
            return Ok(Baseline::ZeroFlow);
        }
        let args = t
            .strip_prefix("constant:")
            .or_else(|| t.strip_prefix("constant_flow(").and_then(|r| r.strip_suffix(')')))
            .ok_or_else(bad)?;
        let (u, v) = args.split_once(',').ok_or_else(bad)?;
        let u = u.trim().parse().map_err(|_| bad())?;
        let v = v.trim().parse().map_err(|_| bad())?;
        Ok(Baseline::ConstantFlow { u, v })
    }
}

/// Writes one flow file after checking that it decodes back to the same values,
/// via a temporary file and rename.
pub fn write_prediction(
    root: &Path,
    cell: Option<Cell>,
    pair_id: &str,
    field: &FlowField,
    format: FlowFormat,
) -> Result<()> {
    let path = root.join(prediction_rel_path(cell, pair_id, format));
    let mask = ValidMask::all_valid(field.width(), field.height());
    let bytes = match format {
        FlowFormat::MiddleburyFlo => encode_flo(field),
        FlowFormat::KittiPng16 => encode_kitti_png(field, &mask)?,
    };
    let decoded = match format {
        FlowFormat::MiddleburyFlo => decode_flo(&bytes),
        FlowFormat::KittiPng16 => decode_kitti_png(&bytes),
    }
    .map_err(|reason| Error::MalformedFlow {
        path: path.clone(),
        reason,
    })?;
    if decoded.0.dims() != field.dims() {
        return Err(Error::MalformedFlow {
            path,
            reason: "round trip changed dimensions".into(),
        });
    }
    let dir = path.parent().expect("nested path");
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let tmp = path.with_extension(format!("{}.tmp", format.extension()));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
}

/// One file per pair for the clean input and per pair and declared cell.
/// Returns the number of files written.
pub fn write_baseline_predictions(
    manifest: &BenchmarkManifest,
    baseline: Baseline,
    out: &Path,
    format: FlowFormat,
) -> Result<usize> {
    let cells = declared_cells(manifest);
    let mut written = 0;
    for pair in &manifest.pairs {
        let (w, h) = image::image_dimensions(&pair.frame_a).map_err(Error::from)?;
        let field = baseline.predict(w as usize, h as usize);
        for cell in std::iter::once(None).chain(cells.iter().copied().map(Some)) {
            write_prediction(out, cell, &pair.pair_id, &field, format)?;
            written += 1;
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_baselines() {
        assert_eq!("zero".parse::<Baseline>().unwrap(), Baseline::ZeroFlow);
        assert_eq!(
            "constant:3,4".parse::<Baseline>().unwrap(),
            Baseline::ConstantFlow { u: 3.0, v: 4.0 }
        );
        let b = Baseline::ConstantFlow { u: -1.5, v: 2.0 };
        assert_eq!(b.to_string().parse::<Baseline>().unwrap(), b);
        assert!("random".parse::<Baseline>().is_err());
    }

    #[test]
    fn prediction_ignores_content() {
        let f = Baseline::ConstantFlow { u: 3.0, v: 4.0 }.predict(4, 3);
        assert_eq!(f.dims(), (4, 3));
        assert!(f.u().iter().all(|&u| u == 3.0) && f.v().iter().all(|&v| v == 4.0));
    }
}
