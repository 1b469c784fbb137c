//! Procedural weather layers: plasma-fractal fog, fractal frost, thresholded
//! spatter blobs and motion-streaked snow particles.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::corruption::Severity;
use crate::filter;
use crate::image::Image;
use crate::ladders;
use crate::seed::Rng;

/// Diamond-square plasma fractal on a `size x size` torus, normalized to `[0, 1]`.
///
/// `size` must be a power of two.
pub fn plasma_fractal(size: usize, wibble_decay: f64, rng: &mut Rng) -> Vec<f64> {
    assert!(size.is_power_of_two() && size >= 2);
    let mut map = vec![0f64; size * size];
    let idx = |x: usize, y: usize| (y % size) * size + (x % size);
    let mut step = size;
    let mut wibble = 100.0f64;
    let wibbled = |sum: f64, rng: &mut Rng, wibble: f64| sum / 4.0 + wibble * rng.random_range(-wibble..wibble);
    while step >= 2 {
        let half = step / 2;
        // Squares: centre of each cell from its four corners.
        for y in (0..size).step_by(step) {
            for x in (0..size).step_by(step) {
                let sum = map[idx(x, y)] + map[idx(x + step, y)] + map[idx(x, y + step)] + map[idx(x + step, y + step)];
                map[idx(x + half, y + half)] = wibbled(sum, rng, wibble);
            }
        }
        // Diamonds: edge midpoints from the two adjacent corners and centres.
        for y in (0..size).step_by(step) {
            for x in (0..size).step_by(step) {
                let top = idx(x + half, y);
                let sum = map[idx(x, y)]
                    + map[idx(x + step, y)]
                    + map[idx(x + half, y + half)]
                    + map[idx(x + half, y + size - half)];
                map[top] = wibbled(sum, rng, wibble);
                let left = idx(x, y + half);
                let sum = map[idx(x, y)]
                    + map[idx(x, y + step)]
                    + map[idx(x + half, y + half)]
                    + map[idx(x + size - half, y + half)];
                map[left] = wibbled(sum, rng, wibble);
            }
        }
        step /= 2;
        wibble /= wibble_decay;
    }
    let min = map.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = map.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = (max - min).max(f64::MIN_POSITIVE);
    map.iter_mut().for_each(|v| *v = (*v - min) / range);
    map
}

fn crop(map: &[f64], size: usize, width: usize, height: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        out.extend_from_slice(&map[y * size..y * size + width]);
    }
    out
}

/// Weather layer generated once per pair and blended identically into both frames.
#[derive(Debug, Clone, PartialEq)]
pub enum WeatherOverlay {
    Fog {
        layer: Vec<f64>,
        strength: f64,
    },
    Frost {
        texture: Image,
        image_weight: f64,
        frost_weight: f64,
    },
    Spatter {
        /// Per-pixel opacity in `[0, 1]`.
        alpha: Vec<f64>,
        color: [f64; 3],
        /// Mud covers (alpha-over); water adds a tinted sheen.
        mud: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeatherKind {
    Spatter,
    Fog,
    Frost,
}

impl WeatherOverlay {
    pub fn generate(kind: WeatherKind, width: usize, height: usize, severity: Severity, rng: &mut Rng) -> Self {
        match kind {
            WeatherKind::Fog => {
                let (strength, decay) = severity.pick(&ladders::FOG);
                let size = width.max(height).next_power_of_two().max(2);
                let map = plasma_fractal(size, decay, rng);
                WeatherOverlay::Fog {
                    layer: crop(&map, size, width, height),
                    strength,
                }
            }
            WeatherKind::Frost => {
                let (image_weight, frost_weight) = severity.pick(&ladders::FROST);
                WeatherOverlay::Frost {
                    texture: frost_texture(width, height, rng),
                    image_weight,
                    frost_weight,
                }
            }
            WeatherKind::Spatter => spatter_layer(width, height, severity, rng),
        }
    }

    /// Fraction of pixels the layer covers (spatter opacity > 0, frost texture above mid-gray).
    pub fn coverage(&self) -> f64 {
        match self {
            WeatherOverlay::Spatter { alpha, .. } => {
                alpha.iter().filter(|&&a| a > 0.0).count() as f64 / alpha.len() as f64
            }
            WeatherOverlay::Frost {
                texture, frost_weight, ..
            } => {
                let n = texture.width() * texture.height();
                texture.pixels().filter(|p| p[2] as f64 * frost_weight > 0.25).count() as f64 / n as f64
            }
            WeatherOverlay::Fog { strength, .. } => strength / (1.0 + strength),
        }
    }

    pub fn apply(&self, img: &Image) -> Image {
        let mut out = img.clone();
        let w = img.width();
        match self {
            WeatherOverlay::Fog { layer, strength } => {
                assert_eq!(layer.len(), w * img.height());
                let max = img.data().iter().cloned().fold(0f32, f32::max) as f64;
                for (i, px) in out.pixels_mut().enumerate() {
                    for v in px.iter_mut() {
                        *v = ((*v as f64 + strength * layer[i]) * max / (max + strength)) as f32;
                    }
                }
            }
            WeatherOverlay::Frost {
                texture,
                image_weight,
                frost_weight,
            } => {
                assert_eq!(texture.dims(), img.dims());
                for (px, fr) in out.pixels_mut().zip(texture.pixels()) {
                    for c in 0..3 {
                        px[c] = (image_weight * px[c] as f64 + frost_weight * fr[c] as f64) as f32;
                    }
                }
            }
            WeatherOverlay::Spatter { alpha, color, mud } => {
                assert_eq!(alpha.len(), w * img.height());
                for (i, px) in out.pixels_mut().enumerate() {
                    let a = alpha[i];
                    for c in 0..3 {
                        px[c] = if *mud {
                            (px[c] as f64 * (1.0 - a) + color[c] * a) as f32
                        } else {
                            (px[c] as f64 + color[c] * a) as f32
                        };
                    }
                }
            }
        }
        out.clamp_in_place();
        out
    }
}

/// Seeded stand-in for photographed frost: fractal haze plus branching ice crystals.
pub fn frost_texture(width: usize, height: usize, rng: &mut Rng) -> Image {
    let size = width.max(height).next_power_of_two().max(2);
    let haze = crop(&plasma_fractal(size, 1.6, rng), size, width, height);
    let mut layer: Vec<f32> = haze.iter().map(|&v| (0.75 * v.powf(1.5)) as f32).collect();

    let crystals = ((width * height) as f64 / 400.0).ceil() as usize;
    for _ in 0..crystals {
        let mut x = rng.random_range(0.0..width as f64);
        let mut y = rng.random_range(0.0..height as f64);
        let mut angle = rng.random_range(0.0..std::f64::consts::TAU);
        let segments = rng.random_range(3..8);
        for _ in 0..segments {
            let len = rng.random_range(2.0..8.0);
            let nx = x + len * angle.cos();
            let ny = y + len * angle.sin();
            draw_line(&mut layer, width, height, (x, y), (nx, ny), 0.9);
            x = nx;
            y = ny;
            angle += rng.random_range(-0.7..0.7);
        }
    }
    let layer = filter::convolve_separable(&layer, width, height, &filter::gaussian_kernel_1d(0.7));
    Image::from_fn(width, height, |x, y| {
        let v = layer[y * width + x].clamp(0.0, 1.0);
        [0.85 * v, 0.93 * v, v]
    })
}

fn draw_line(buf: &mut [f32], w: usize, h: usize, from: (f64, f64), to: (f64, f64), value: f32) {
    let len = ((to.0 - from.0).powi(2) + (to.1 - from.1).powi(2)).sqrt();
    let steps = (len * 2.0).ceil().max(1.0) as usize;
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        let x = from.0 + t * (to.0 - from.0);
        let y = from.1 + t * (to.1 - from.1);
        if x >= 0.0 && y >= 0.0 && (x as usize) < w && (y as usize) < h {
            let p = &mut buf[y as usize * w + x as usize];
            *p = p.max(value);
        }
    }
}

/// Softened mud mask values below this are dropped.
const MUD_CUTOFF: f64 = 0.5;

fn spatter_layer(width: usize, height: usize, severity: Severity, rng: &mut Rng) -> WeatherOverlay {
    let (loc, scale, sigma, threshold, intensity, mud) = severity.pick(&ladders::SPATTER);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let raw: Vec<f32> = (0..width * height)
        .map(|_| (loc + scale * normal.sample(rng)) as f32)
        .collect();
    let liquid = filter::convolve_separable(&raw, width, height, &filter::gaussian_kernel_1d(sigma));
    if mud {
        let mask: Vec<f32> = liquid
            .iter()
            .map(|&v| if v as f64 > threshold { 1.0 } else { 0.0 })
            .collect();
        let soft = filter::convolve_separable(&mask, width, height, &filter::gaussian_kernel_1d(intensity));
        let alpha = soft
            .iter()
            .map(|&m| if (m as f64) < MUD_CUTOFF { 0.0 } else { m as f64 })
            .collect();
        WeatherOverlay::Spatter {
            alpha,
            color: [63.0 / 255.0, 42.0 / 255.0, 20.0 / 255.0],
            mud: true,
        }
    } else {
        let kept: Vec<f64> = liquid
            .iter()
            .map(|&v| if v as f64 > threshold { v as f64 } else { 0.0 })
            .collect();
        let max = kept.iter().cloned().fold(0.0, f64::max);
        let alpha = if max > 0.0 {
            kept.iter().map(|&v| v / max * intensity).collect()
        } else {
            kept
        };
        WeatherOverlay::Spatter {
            alpha,
            color: [175.0 / 255.0, 238.0 / 255.0, 238.0 / 255.0],
            mud: false,
        }
    }
}

/// Snow fall direction shared by both frames of a pair.
pub fn sample_snow_direction(rng: &mut Rng) -> f64 {
    std::f64::consts::FRAC_PI_2 + rng.random_range(-std::f64::consts::FRAC_PI_6..std::f64::consts::FRAC_PI_6)
}

pub fn snow_particle_count(width: usize, height: usize, severity: Severity) -> usize {
    (severity.pick(&ladders::SNOW_DENSITY) * (width * height) as f64).round() as usize
}

/// Renders motion-streaked particles along `direction` (radians, image axes with y down).
///
/// Returns per-pixel opacity in `[0, 1]`, combined alpha-over.
pub fn snow_overlay(width: usize, height: usize, severity: Severity, direction: f64, rng: &mut Rng) -> Vec<f32> {
    let count = snow_particle_count(width, height, severity);
    let streak = severity.pick(&ladders::SNOW_STREAK_LENGTH);
    let (dx, dy) = (direction.cos(), direction.sin());
    let mut transmit = vec![1f64; width * height];
    for _ in 0..count {
        let cx = rng.random_range(0.0..width as f64);
        let cy = rng.random_range(0.0..height as f64);
        let half_len = 0.5 * streak * rng.random_range(0.6..1.0);
        let half_width = rng.random_range(0.5..1.2);
        let opacity = rng.random_range(0.6..1.0);
        // Wide enough that the opacity cutoff, not the box, bounds the streak.
        let reach = half_len + 4.5 * half_width;
        let x0 = (cx - reach).floor().max(0.0) as usize;
        let y0 = (cy - reach).floor().max(0.0) as usize;
        let x1 = ((cx + reach).ceil() as usize).min(width - 1);
        let y1 = ((cy + reach).ceil() as usize).min(height - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let px = x as f64 + 0.5 - cx;
                let py = y as f64 + 0.5 - cy;
                let along = (px * dx + py * dy).clamp(-half_len, half_len);
                let ex = px - along * dx;
                let ey = py - along * dy;
                let d2 = ex * ex + ey * ey;
                let a = opacity * (-d2 / (2.0 * half_width * half_width)).exp();
                if a > 1e-4 {
                    transmit[y * width + x] *= 1.0 - a;
                }
            }
        }
    }
    transmit.iter().map(|t| (1.0 - t) as f32).collect()
}

/// Brightens the background and lays the snow opacity over it in white.
pub fn composite_snow(img: &Image, alpha: &[f32], severity: Severity) -> Image {
    let blend = severity.pick(&ladders::SNOW_BACKGROUND_BLEND);
    let mut out = img.clone();
    for (px, &a) in out.pixels_mut().zip(alpha) {
        let gray = 0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64;
        let lifted = gray * 1.5 + 0.5;
        for v in px.iter_mut() {
            let bg = blend * *v as f64 + (1.0 - blend) * (*v as f64).max(lifted);
            *v = (bg * (1.0 - a as f64) + a as f64) as f32;
        }
    }
    out.clamp_in_place();
    out
}

/// Dominant streak orientation in `[0, π)`.
///
/// Streaks of any density add to a ridge through the origin of the layer's
/// autocorrelation; the estimate is the direction whose short line integral
/// over that ridge is largest.
pub fn streak_orientation(layer: &[f32], width: usize, height: usize) -> f64 {
    const RADIUS: f64 = 6.0;
    const STEP: f64 = 0.25;
    let reach = RADIUS as isize + 2;
    let acf = autocorrelation(layer, width, height, reach);
    let side = (2 * reach + 1) as usize;
    let ridge = |theta: f64| -> f64 {
        let (c, s) = (theta.cos(), theta.sin());
        let mut total = 0.0;
        let mut t = STEP;
        while t <= RADIUS + 1e-9 {
            total += catmull_rom(&acf, side, reach as f64 + t * c, reach as f64 + t * s);
            t += STEP;
        }
        total
    };
    let pi = std::f64::consts::PI;
    let argmax = |angles: &mut dyn Iterator<Item = f64>| {
        angles
            .map(|a| (a, ridge(a)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(a, _)| a)
            .unwrap()
    };
    let coarse = argmax(&mut (0..180).map(|d| (d as f64).to_radians()));
    let fine = argmax(&mut (-150..=150).map(|i| coarse + (i as f64 * 0.01).to_radians()));
    fine.rem_euclid(pi)
}

/// Mean-removed autocorrelation for lags up to `reach`, normalized by overlap.
fn autocorrelation(layer: &[f32], width: usize, height: usize, reach: isize) -> Vec<f64> {
    let mean = layer.iter().map(|&v| v as f64).sum::<f64>() / layer.len().max(1) as f64;
    let centered: Vec<f64> = layer.iter().map(|&v| v as f64 - mean).collect();
    let side = (2 * reach + 1) as usize;
    let mut out = vec![0.0; side * side];
    for dy in -reach..=reach {
        for dx in -reach..=reach {
            let (w, h) = (width as isize - dx.abs(), height as isize - dy.abs());
            if w <= 0 || h <= 0 {
                continue;
            }
            let mut sum = 0.0;
            for y in 0.max(-dy)..(height as isize).min(height as isize - dy) {
                let row = (y * width as isize) as usize;
                let other = ((y + dy) * width as isize) as usize;
                for x in 0.max(-dx)..(width as isize).min(width as isize - dx) {
                    sum += centered[row + x as usize] * centered[(other as isize + x + dx) as usize];
                }
            }
            out[((dy + reach) as usize) * side + (dx + reach) as usize] = sum / (w * h) as f64;
        }
    }
    out
}

fn catmull_rom(grid: &[f64], side: usize, x: f64, y: f64) -> f64 {
    fn weights(t: f64) -> [f64; 4] {
        let (t2, t3) = (t * t, t * t * t);
        [
            0.5 * (-t3 + 2.0 * t2 - t),
            0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
            0.5 * (-3.0 * t3 + 4.0 * t2 + t),
            0.5 * (t3 - t2),
        ]
    }
    let (x0, y0) = (x.floor() as isize, y.floor() as isize);
    let (wx, wy) = (weights(x - x0 as f64), weights(y - y0 as f64));
    let at = |i: isize, j: isize| {
        let i = i.clamp(0, side as isize - 1) as usize;
        let j = j.clamp(0, side as isize - 1) as usize;
        grid[j * side + i]
    };
    let mut v = 0.0;
    for (j, wyj) in wy.iter().enumerate() {
        for (i, wxi) in wx.iter().enumerate() {
            v += wyj * wxi * at(x0 + i as isize - 1, y0 + j as isize - 1);
        }
    }
    v
}
