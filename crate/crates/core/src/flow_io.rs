//! Middlebury `.flo` and KITTI 16-bit PNG flow files.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::{ImageBuffer, ImageFormat, Rgb};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{FlowField, ValidMask};

pub const FLO_MAGIC: f32 = 202021.25;
const KITTI_SCALE: f32 = 64.0;
const KITTI_OFFSET: f32 = 32768.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowFormat {
    MiddleburyFlo,
    KittiPng16,
}

impl FlowFormat {
    pub fn extension(self) -> &'static str {
        match self {
            FlowFormat::MiddleburyFlo => "flo",
            FlowFormat::KittiPng16 => "png",
        }
    }

    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "flo" => Some(FlowFormat::MiddleburyFlo),
            "png" => Some(FlowFormat::KittiPng16),
            _ => None,
        }
    }
}

fn malformed(path: &Path, reason: impl Into<String>) -> Error {
    Error::MalformedFlow {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

pub fn read_flow(path: impl AsRef<Path>, format: FlowFormat) -> Result<(FlowField, ValidMask)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    match format {
        FlowFormat::MiddleburyFlo => decode_flo(&bytes).map_err(|r| malformed(path, r)),
        FlowFormat::KittiPng16 => decode_kitti_png(&bytes).map_err(|r| malformed(path, r)),
    }
}

pub fn write_flow(field: &FlowField, mask: &ValidMask, path: impl AsRef<Path>, format: FlowFormat) -> Result<()> {
    let path = path.as_ref();
    let bytes = match format {
        FlowFormat::MiddleburyFlo => encode_flo(field),
        FlowFormat::KittiPng16 => encode_kitti_png(field, mask)?,
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Infers the format from the file extension.
pub fn read_flow_auto(path: impl AsRef<Path>) -> Result<(FlowField, ValidMask)> {
    let path = path.as_ref();
    let format = FlowFormat::from_path(path).ok_or_else(|| malformed(path, "unknown flow file extension"))?;
    read_flow(path, format)
}

pub fn encode_flo(field: &FlowField) -> Vec<u8> {
    let (w, h) = field.dims();
    let mut out = Vec::with_capacity(12 + w * h * 8);
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(w as i32).to_le_bytes());
    out.extend_from_slice(&(h as i32).to_le_bytes());
    for (u, v) in field.u().iter().zip(field.v()) {
        out.extend_from_slice(&u.to_le_bytes());
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Every pixel of a `.flo` file is valid.
pub fn decode_flo(bytes: &[u8]) -> std::result::Result<(FlowField, ValidMask), String> {
    if bytes.len() < 12 {
        return Err("truncated header".into());
    }
    let word = |i: usize| -> [u8; 4] { bytes[i..i + 4].try_into().unwrap() };
    let magic = f32::from_le_bytes(word(0));
    if magic != FLO_MAGIC {
        return Err(format!("bad magic {magic}"));
    }
    let w = i32::from_le_bytes(word(4));
    let h = i32::from_le_bytes(word(8));
    if w <= 0 || h <= 0 {
        return Err(format!("invalid dimensions {w}x{h}"));
    }
    let (w, h) = (w as usize, h as usize);
    let expected = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(8))
        .ok_or("dimensions overflow")?;
    let payload = &bytes[12..];
    if payload.len() < expected {
        return Err(format!("truncated payload: {} of {expected} bytes", payload.len()));
    }
    if payload.len() > expected {
        return Err(format!("{} trailing bytes", payload.len() - expected));
    }
    let mut u = Vec::with_capacity(w * h);
    let mut v = Vec::with_capacity(w * h);
    for px in payload.chunks_exact(8) {
        u.push(f32::from_le_bytes(px[..4].try_into().unwrap()));
        v.push(f32::from_le_bytes(px[4..].try_into().unwrap()));
    }
    let field = FlowField::new(w, h, u, v).map_err(|e| e.to_string())?;
    Ok((field, ValidMask::all_valid(w, h)))
}

fn kitti_quantize(value: f32) -> Result<u16> {
    let raw = (value * KITTI_SCALE).round() + KITTI_OFFSET;
    if !raw.is_finite() || !(0.0..=65535.0).contains(&raw) {
        return Err(Error::FlowOutOfRange { value });
    }
    Ok(raw as u16)
}

/// Raw 16-bit value stored for a flow component.
pub fn kitti_raw_value(value: f32) -> Result<u16> {
    kitti_quantize(value)
}

/// Channel 1 holds `u·64 + 2^15`, channel 2 `v·64 + 2^15`, channel 3 the valid flag.
/// Invalid pixels are written as zeros.
pub fn encode_kitti_png(field: &FlowField, mask: &ValidMask) -> Result<Vec<u8>> {
    let (w, h) = field.dims();
    if mask.dims() != (w, h) {
        return Err(Error::DimensionMismatch(format!(
            "flow {w}x{h} vs mask {}x{}",
            mask.width(),
            mask.height()
        )));
    }
    let mut raw = Vec::with_capacity(w * h * 3);
    for i in 0..w * h {
        if mask.valid()[i] {
            raw.push(kitti_quantize(field.u()[i])?);
            raw.push(kitti_quantize(field.v()[i])?);
            raw.push(1);
        } else {
            raw.extend_from_slice(&[0, 0, 0]);
        }
    }
    let buf: ImageBuffer<Rgb<u16>, Vec<u16>> =
        ImageBuffer::from_raw(w as u32, h as u32, raw).expect("buffer sized to image");
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

/// Invalid pixels decode to zero flow.
pub fn decode_kitti_png(bytes: &[u8]) -> std::result::Result<(FlowField, ValidMask), String> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png).map_err(|e| e.to_string())?;
    if !matches!(img.color(), image::ColorType::Rgb16 | image::ColorType::Rgba16) {
        return Err(format!("expected a 16-bit RGB PNG, found {:?}", img.color()));
    }
    let rgb = img.into_rgb16();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let mut u = vec![0f32; w * h];
    let mut v = vec![0f32; w * h];
    let mut valid = vec![false; w * h];
    for (i, px) in rgb.pixels().enumerate() {
        if px[2] > 0 {
            valid[i] = true;
            u[i] = (px[0] as f32 - KITTI_OFFSET) / KITTI_SCALE;
            v[i] = (px[1] as f32 - KITTI_OFFSET) / KITTI_SCALE;
        }
    }
    let field = FlowField::new(w, h, u, v).map_err(|e| e.to_string())?;
    let mask = ValidMask::new(w, h, valid).map_err(|e| e.to_string())?;
    Ok((field, mask))
}
