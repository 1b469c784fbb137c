//! Floating-point RGB frames and frame pairs.
//!
//! Intensities live in `[0, 1]`. 8-bit inputs are divided by 255 on load and
//! re-quantized with round-half-up on save.

use std::path::Path;

use crate::error::{Error, Result};

/// Interleaved RGB image with `f32` intensities, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Image {
    pub const CHANNELS: usize = 3;

    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "dimensions must be at least 1x1, got {width}x{height}"
            )));
        }
        if data.len() != width * height * Self::CHANNELS {
            return Err(Error::InvalidImage(format!(
                "expected {} samples for {width}x{height} RGB, got {}",
                width * height * Self::CHANNELS,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be nonzero");
        Self {
            width,
            height,
            data: vec![value; width * height * Self::CHANNELS],
        }
    }

    /// Builds an image by evaluating `f(x, y)` for every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be nonzero");
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn pixels(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(3)
    }

    pub fn pixels_mut(&mut self) -> impl Iterator<Item = &mut [f32]> {
        self.data.chunks_exact_mut(3)
    }

    /// Mean over all pixels and channels.
    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    /// Splits into three single-channel planes.
    pub fn to_planes(&self) -> [Vec<f32>; 3] {
        let n = self.width * self.height;
        let mut planes = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for (i, px) in self.data.chunks_exact(3).enumerate() {
            planes[0][i] = px[0];
            planes[1][i] = px[1];
            planes[2][i] = px[2];
        }
        planes
    }

    pub fn from_planes(width: usize, height: usize, planes: &[Vec<f32>; 3]) -> Self {
        let n = width * height;
        assert!(planes.iter().all(|p| p.len() == n));
        let mut data = Vec::with_capacity(n * 3);
        for i in 0..n {
            data.push(planes[0][i]);
            data.push(planes[1][i]);
            data.push(planes[2][i]);
        }
        Self { width, height, data }
    }

    /// Clamps every sample into `[0, 1]` in place. NaN is left untouched.
    pub(crate) fn clamp_in_place(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(width, height, bytes.iter().map(|&b| b as f32 / 255.0).collect())
    }

    /// Quantizes to 8 bits with round-half-up.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| quantize_u8(v)).collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path)
            .map_err(|e| Error::Codec(format!("{}: {e}", path.display())))?
            .to_rgb8();
        let (w, h) = img.dimensions();
        Self::from_rgb8(w as usize, h as usize, img.as_raw())
    }

    /// Decodes any supported encoded image (PNG or JPEG) to RGB.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory(bytes)?.to_rgb8();
        let (w, h) = img.dimensions();
        Self::from_rgb8(w as usize, h as usize, img.as_raw())
    }

    /// The bundled 128×128 natural photograph used for checks and demos.
    pub fn sample() -> Self {
        Self::decode(include_bytes!("../data/astronaut.png")).expect("bundled image decodes")
    }

    /// Writes an 8-bit RGB PNG.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.encode_png()?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        use image::ImageEncoder;
        let mut out = Vec::new();
        image::codecs::png::PngEncoder::new(&mut out).write_image(
            &self.to_rgb8(),
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::Rgb8,
        )?;
        Ok(out)
    }
}

/// Round-half-up quantization of a `[0, 1]` intensity to 8 bits.
pub fn quantize_u8(v: f32) -> u8 {
    let scaled = (v.clamp(0.0, 1.0) as f64) * 255.0;
    (scaled + 0.5).floor().min(255.0) as u8
}

/// Returns a copy with every intensity clamped into `[0, 1]`.
///
/// Fails on NaN; infinities clamp to the nearest bound.
pub fn clamp_image(img: &Image) -> Result<Image> {
    if let Some(i) = img.data.iter().position(|v| v.is_nan()) {
        return Err(Error::NanIntensity(i));
    }
    let mut out = img.clone();
    out.clamp_in_place();
    Ok(out)
}

/// Two consecutive frames of a flow sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePair {
    pub frame_a: Image,
    pub frame_b: Image,
    pub pair_id: String,
    /// Seconds between the two frames.
    pub timestamp_gap: f64,
}

impl ImagePair {
    pub fn new(frame_a: Image, frame_b: Image, pair_id: impl Into<String>, timestamp_gap: f64) -> Result<Self> {
        if frame_a.dims() != frame_b.dims() {
            return Err(Error::DimensionMismatch(format!(
                "frame_a is {:?}, frame_b is {:?}",
                frame_a.dims(),
                frame_b.dims()
            )));
        }
        Ok(Self {
            frame_a,
            frame_b,
            pair_id: pair_id.into(),
            timestamp_gap,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.frame_a.dims()
    }

    /// Applies `f` to both frames, keeping the pair metadata.
    pub fn map_frames(&self, mut f: impl FnMut(&Image) -> Image) -> ImagePair {
        ImagePair {
            frame_a: f(&self.frame_a),
            frame_b: f(&self.frame_b),
            pair_id: self.pair_id.clone(),
            timestamp_gap: self.timestamp_gap,
        }
    }

    pub(crate) fn with_frames(&self, frame_a: Image, frame_b: Image) -> ImagePair {
        ImagePair {
            frame_a,
            frame_b,
            pair_id: self.pair_id.clone(),
            timestamp_gap: self.timestamp_gap,
        }
    }
}
