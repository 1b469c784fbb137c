use crate::error::{Error, Result};

/// Dense 2D motion field in pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    u: Vec<f32>,
    v: Vec<f32>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, u: Vec<f32>, v: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::DimensionMismatch(format!(
                "flow field must be at least 1x1, got {width}x{height}"
            )));
        }
        let n = width * height;
        if u.len() != n || v.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "flow field {width}x{height} needs {n} samples per component, got u={} v={}",
                u.len(),
                v.len()
            )));
        }
        Ok(Self { width, height, u, v })
    }

    pub fn constant(width: usize, height: usize, u: f32, v: f32) -> Self {
        assert!(width > 0 && height > 0);
        let n = width * height;
        Self {
            width,
            height,
            u: vec![u; n],
            v: vec![v; n],
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::constant(width, height, 0.0, 0.0)
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

    pub fn u(&self) -> &[f32] {
        &self.u
    }

    pub fn v(&self) -> &[f32] {
        &self.v
    }

    pub fn at(&self, x: usize, y: usize) -> (f32, f32) {
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }

    pub fn set(&mut self, x: usize, y: usize, u: f32, v: f32) {
        let i = y * self.width + x;
        self.u[i] = u;
        self.v[i] = v;
    }

    /// Errors on the first NaN or infinite component.
    pub fn check_finite(&self) -> Result<()> {
        for (i, (u, v)) in self.u.iter().zip(&self.v).enumerate() {
            if !u.is_finite() || !v.is_finite() {
                return Err(Error::NonFiniteFlow {
                    x: i % self.width,
                    y: i / self.width,
                });
            }
        }
        Ok(())
    }
}

/// Per-pixel validity of a (possibly sparse) flow field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidMask {
    width: usize,
    height: usize,
    valid: Vec<bool>,
}

impl ValidMask {
    pub fn new(width: usize, height: usize, valid: Vec<bool>) -> Result<Self> {
        if valid.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "mask {width}x{height} needs {} entries, got {}",
                width * height,
                valid.len()
            )));
        }
        Ok(Self { width, height, valid })
    }

    pub fn all_valid(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            valid: vec![true; width * height],
        }
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

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}
