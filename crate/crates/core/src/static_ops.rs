//! Single-image corruption kernels: digital, illumination shifts, noise and
//! static blurs.
//!
//! Every kernel preserves dimensions and writes intensities clamped to `[0, 1]`.

use rand::seq::index::sample as sample_indices;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, Poisson};

use crate::color::map_hsv;
use crate::corruption::Severity;
use crate::error::{Error, Result};
use crate::filter::{self, Kernel2D};
use crate::image::{quantize_u8, Image};
use crate::ladders;
use crate::seed::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LightDirection {
    High,
    Low,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    Gaussian,
    Shot,
    Impulse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlurKind {
    Gaussian,
    Defocus,
    Glass,
}

pub fn apply_contrast(img: &Image, severity: Severity) -> Image {
    contrast_with_factor(img, severity.pick(&ladders::CONTRAST_FACTOR))
}

/// `(I - mean(I)) * c + mean(I)` with one scalar mean over all samples.
pub fn contrast_with_factor(img: &Image, c: f64) -> Image {
    let mean = img.mean();
    let mut out = img.clone();
    for v in out.data_mut() {
        *v = ((*v as f64 - mean) * c + mean) as f32;
    }
    out.clamp_in_place();
    out
}

/// Scales and offsets HSV saturation (offset first, then clamp).
pub fn apply_saturate(img: &Image, severity: Severity) -> Image {
    let (alpha, beta) = severity.pick(&ladders::SATURATE);
    map_hsv(img, |[h, s, v]| [h, (s * alpha + beta).clamp(0.0, 1.0), v])
}

pub fn apply_light_shift(img: &Image, severity: Severity, direction: LightDirection) -> Image {
    let c = severity.pick(&ladders::LIGHT_SHIFT);
    let delta = match direction {
        LightDirection::High => c,
        LightDirection::Low => -c,
    };
    map_hsv(img, |[h, s, v]| [h, s, (v + delta).clamp(0.0, 1.0)])
}

/// Multiplies HSV value by `2^ev`.
pub fn apply_exposure(img: &Image, ev: f64) -> Image {
    let gain = 2f64.powf(ev);
    map_hsv(img, |[h, s, v]| [h, s, (v * gain).clamp(0.0, 1.0)])
}

pub fn apply_jpeg(img: &Image, severity: Severity) -> Result<Image> {
    jpeg_round_trip(img, severity.pick(&ladders::JPEG_QUALITY))
}

/// Baseline JPEG with 4:2:0 chroma subsampling, decoded back to floats.
pub fn jpeg_round_trip(img: &Image, quality: u8) -> Result<Image> {
    let (w, h) = img.dims();
    if w > u16::MAX as usize || h > u16::MAX as usize {
        return Err(Error::Codec(format!("image {w}x{h} too large for JPEG")));
    }
    let mut buf = Vec::new();
    let mut enc = jpeg_encoder::Encoder::new(&mut buf, quality);
    enc.set_sampling_factor(jpeg_encoder::SamplingFactor::F_2_2);
    enc.set_progressive(false);
    enc.encode(&img.to_rgb8(), w as u16, h as u16, jpeg_encoder::ColorType::Rgb)
        .map_err(|e| Error::Codec(format!("jpeg encode: {e}")))?;
    let decoded = image::load_from_memory_with_format(&buf, image::ImageFormat::Jpeg)?.to_rgb8();
    Image::from_rgb8(w, h, decoded.as_raw())
}

/// Intermediate resolution used by pixelation: `round(scale * dim)`, at least 1.
pub fn pixelate_size(width: usize, height: usize, scale: f64) -> (usize, usize) {
    let s = |d: usize| ((d as f64 * scale).round() as usize).max(1);
    (s(width), s(height))
}

pub fn apply_pixelate(img: &Image, severity: Severity) -> Image {
    let (w, h) = img.dims();
    let (sw, sh) = pixelate_size(w, h, severity.pick(&ladders::PIXELATE_SCALE));
    let mut out = filter::map_planes(img, |p, w, h| {
        let small = filter::resize_box(p, w, h, sw, sh);
        filter::resize_box(&small, sw, sh, w, h)
    });
    out.clamp_in_place();
    out
}

pub fn apply_noise(img: &Image, severity: Severity, kind: NoiseKind, rng: &mut Rng) -> Image {
    let mut out = img.clone();
    match kind {
        NoiseKind::Gaussian => {
            let c = severity.pick(&ladders::GAUSSIAN_NOISE);
            let normal = Normal::new(0.0, 1.0).expect("unit normal");
            for v in out.data_mut() {
                *v = (*v as f64 + c * normal.sample(rng)) as f32;
            }
        }
        NoiseKind::Shot => {
            let c = severity.pick(&ladders::SHOT_NOISE);
            for v in out.data_mut() {
                let lambda = *v as f64 * c;
                *v = if lambda > 0.0 {
                    let n: f64 = Poisson::new(lambda).expect("positive rate").sample(rng);
                    (n / c) as f32
                } else {
                    0.0
                };
            }
        }
        NoiseKind::Impulse => {
            let ratio = severity.pick(&ladders::IMPULSE_RATIO);
            let n = img.width() * img.height();
            let count = (ratio * n as f64).round() as usize;
            let data = out.data_mut();
            for idx in sample_indices(rng, n, count).into_iter() {
                let value = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
                data[idx * 3..idx * 3 + 3].fill(value);
            }
        }
    }
    out.clamp_in_place();
    out
}

/// Random neighborhood swaps used by glass blur, drawn once and replayable on
/// any image of the same size.
#[derive(Debug, Clone, PartialEq)]
pub struct GlassShuffle {
    width: usize,
    height: usize,
    sigma: f64,
    /// `(source index, target index)` in application order.
    swaps: Vec<(usize, usize)>,
}

impl GlassShuffle {
    /// Raster-order scan repeated `iterations` times; each pixel swaps with a
    /// uniformly chosen pixel within `±neighborhood` on both axes (clamped to the image).
    pub fn sample(width: usize, height: usize, severity: Severity, rng: &mut Rng) -> Self {
        let (sigma, reach, iterations) = severity.pick(&ladders::GLASS);
        let reach = reach as i64;
        let mut swaps = Vec::with_capacity(width * height * iterations as usize);
        for _ in 0..iterations {
            for y in 0..height {
                for x in 0..width {
                    let dx = rng.random_range(-reach..=reach) as isize;
                    let dy = rng.random_range(-reach..=reach) as isize;
                    let tx = (x as isize + dx).clamp(0, width as isize - 1) as usize;
                    let ty = (y as isize + dy).clamp(0, height as isize - 1) as usize;
                    swaps.push((y * width + x, ty * width + tx));
                }
            }
        }
        Self {
            width,
            height,
            sigma,
            swaps,
        }
    }

    pub fn apply(&self, img: &Image) -> Image {
        assert_eq!(img.dims(), (self.width, self.height));
        let mut out = filter::gaussian_blur_image(img, self.sigma);
        let data = out.data_mut();
        for &(a, b) in &self.swaps {
            if a != b {
                for c in 0..3 {
                    data.swap(a * 3 + c, b * 3 + c);
                }
            }
        }
        out.clamp_in_place();
        out
    }
}

pub fn apply_static_blur(img: &Image, severity: Severity, kind: BlurKind, rng: &mut Rng) -> Image {
    match kind {
        BlurKind::Gaussian => {
            let mut out = filter::gaussian_blur_image(img, severity.pick(&ladders::GAUSSIAN_BLUR_SIGMA));
            out.clamp_in_place();
            out
        }
        BlurKind::Defocus => filter::convolve_image(img, &defocus_kernel(severity)),
        BlurKind::Glass => GlassShuffle::sample(img.width(), img.height(), severity, rng).apply(img),
    }
}

pub fn defocus_kernel(severity: Severity) -> Kernel2D {
    Kernel2D::disk(severity.pick(&ladders::DEFOCUS_RADIUS))
}

/// Per-pixel displacement field for the elastic transform.
#[derive(Debug, Clone, PartialEq)]
pub struct ElasticField {
    pub width: usize,
    pub height: usize,
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
}

impl ElasticField {
    /// `dx ~ α·N(U(-0.05H, 0.05H), (0.01W)²)`, `dy ~ α·N(U(-0.05H, 0.05H), (0.01H)²)`.
    ///
    /// One uniform draw per axis fixes the mean for the whole image.
    pub fn sample(width: usize, height: usize, alpha: f64, rng: &mut Rng) -> Self {
        let (w, h) = (width as f64, height as f64);
        let mean_x = rng.random_range(-0.05 * h..=0.05 * h);
        let mean_y = rng.random_range(-0.05 * h..=0.05 * h);
        let nx = Normal::new(mean_x, 0.01 * w).expect("finite std");
        let ny = Normal::new(mean_y, 0.01 * h).expect("finite std");
        let n = width * height;
        let dx = (0..n).map(|_| alpha * nx.sample(rng)).collect();
        let dy = (0..n).map(|_| alpha * ny.sample(rng)).collect();
        Self { width, height, dx, dy }
    }

    pub fn zero(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            dx: vec![0.0; width * height],
            dy: vec![0.0; width * height],
        }
    }

    /// Bilinear remap `out(x, y) = in(x + dx, y + dy)` with reflected boundary.
    pub fn remap(&self, img: &Image) -> Image {
        assert_eq!(img.dims(), (self.width, self.height));
        let (w, h) = img.dims();
        let mut out = filter::map_planes(img, |p, w, h| {
            let mut o = vec![0f32; w * h];
            for y in 0..h {
                for x in 0..w {
                    let i = y * w + x;
                    o[i] = filter::sample_bilinear(p, w, h, x as f64 + self.dx[i], y as f64 + self.dy[i]) as f32;
                }
            }
            o
        });
        debug_assert_eq!(out.dims(), (w, h));
        out.clamp_in_place();
        out
    }
}

pub fn apply_elastic(img: &Image, severity: Severity, rng: &mut Rng) -> Image {
    ElasticField::sample(img.width(), img.height(), severity.pick(&ladders::ELASTIC_ALPHA), rng).remap(img)
}

/// Mean squared error over all samples, in `[0, 1]` intensity units.
pub fn mse(a: &Image, b: &Image) -> f64 {
    assert_eq!(a.dims(), b.dims());
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        / a.data().len() as f64
}

/// Mean of 8-bit-quantized samples; handy for byte-level comparisons.
pub fn quantized(img: &Image) -> Vec<u8> {
    img.data().iter().map(|&v| quantize_u8(v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::color::rgb_to_hsv;
    use crate::seed::{rng_for, Stream};

    fn sev(s: u8) -> Severity {
        Severity::new(s).unwrap()
    }

    fn rng(seed: u64) -> Rng {
        rng_for(seed, Stream::FrameA)
    }

    fn textured(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |x, y| {
            let fx = x as f32 / w as f32;
            let fy = y as f32 / h as f32;
            [
                0.5 + 0.4 * (fx * 11.0).sin() * (fy * 7.0).cos(),
                (fx + fy) / 2.0,
                if (x / 3 + y / 3) % 2 == 0 { 0.8 } else { 0.2 },
            ]
        })
    }

    #[test]
    fn contrast_constant_fixed_point() {
        let img = Image::filled(6, 5, 0.7);
        for s in 1..=5 {
            assert_eq!(apply_contrast(&img, sev(s)), img);
        }
    }

    #[test]
    fn contrast_two_pixel_example() {
        let a = 100.0 / 255.0;
        let b = 200.0 / 255.0;
        let img = Image::new(2, 1, vec![a, a, a, b, b, b]).unwrap();
        let out = apply_contrast(&img, sev(1));
        assert!((out.data()[0] - 130.0 / 255.0).abs() < 1e-6);
        assert!((out.data()[3] - 170.0 / 255.0).abs() < 1e-6);
    }

    #[test]
    fn contrast_composes_multiplicatively() {
        let img = textured(16, 12);
        let twice = apply_contrast(&apply_contrast(&img, sev(5)), sev(5));
        let direct = contrast_with_factor(&img, 0.05 * 0.05);
        for (x, y) in twice.data().iter().zip(direct.data()) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn saturate_gray_unchanged_for_zero_offset() {
        let img = Image::filled(3, 3, 0.4);
        for s in 1..=3 {
            let out = apply_saturate(&img, sev(s));
            for (x, y) in out.data().iter().zip(img.data()) {
                assert!((x - y).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn saturate_red_severity_one() {
        let img = Image::new(1, 1, vec![1.0, 0.0, 0.0]).unwrap();
        let out = apply_saturate(&img, sev(1));
        // Hexcone reference: H=0, S=0.1, V=1 -> (1, 0.9, 0.9).
        let px = out.pixel(0, 0);
        assert!((px[0] - 1.0).abs() < 1e-6);
        assert!((px[1] - 0.9).abs() < 1e-6);
        assert!((px[2] - 0.9).abs() < 1e-6);
    }

    #[test]
    fn saturate_severity_five_floor() {
        let img = textured(10, 10);
        let out = apply_saturate(&img, sev(5));
        for px in out.pixels() {
            let [_, s, v] = rgb_to_hsv([px[0] as f64, px[1] as f64, px[2] as f64]);
            if v > 1e-3 {
                assert!(s >= 0.2 - 1e-4, "saturation {s}");
            }
        }
    }

    #[test]
    fn light_shift_examples() {
        let black = Image::filled(4, 4, 0.0);
        for s in 1..=5 {
            assert_eq!(apply_light_shift(&black, sev(s), LightDirection::Low), black);
        }
        let gray = Image::filled(2, 2, 0.5);
        let out = apply_light_shift(&gray, sev(5), LightDirection::High);
        assert!(out.data().iter().all(|&v| (v - 1.0).abs() < 1e-6));
    }

    #[test]
    fn light_shift_round_trip_in_interior() {
        let img = Image::from_fn(5, 5, |x, y| [0.3 + 0.02 * x as f32, 0.35, 0.4 + 0.01 * y as f32]);
        let s = sev(2);
        let back = apply_light_shift(
            &apply_light_shift(&img, s, LightDirection::High),
            s,
            LightDirection::Low,
        );
        for (x, y) in back.data().iter().zip(img.data()) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn jpeg_preserves_dims_and_flat_color() {
        let img = Image::filled(37, 21, 0.42);
        for s in 1..=5 {
            let out = apply_jpeg(&img, sev(s)).unwrap();
            assert_eq!(out.dims(), img.dims());
            assert!(mse(&out, &img) < 1e-3);
            assert!(out.data().chunks(3).all(|p| p == &out.data()[..3]));
        }
    }

    #[test]
    fn jpeg_quality_orders_error() {
        let img = textured(64, 48);
        let e1 = mse(&apply_jpeg(&img, sev(1)).unwrap(), &img);
        let e5 = mse(&apply_jpeg(&img, sev(5)).unwrap(), &img);
        assert!(e5 >= e1, "{e5} < {e1}");
    }

    #[test]
    fn pixelate_examples() {
        assert_eq!(pixelate_size(10, 10, 0.5), (5, 5));
        assert_eq!(pixelate_size(3, 1, 0.25), (1, 1));
        let img = Image::filled(13, 9, 0.3);
        assert_eq!(apply_pixelate(&img, sev(4)), img);

        let board = Image::from_fn(16, 16, |x, y| {
            let v = ((x + y) % 2) as f32;
            [v, v, v]
        });
        let out = apply_pixelate(&board, sev(5));
        for v in out.data() {
            assert!((v - 0.5).abs() < 1e-6);
        }
    }

    #[test]
    fn gaussian_noise_is_unbiased() {
        let img = Image::filled(100, 100, 0.5);
        let out = apply_noise(&img, sev(1), NoiseKind::Gaussian, &mut rng(3));
        let n = out.data().len() as f64;
        let bias = out.mean() - 0.5;
        assert!(bias.abs() < 3.0 * 0.08 / n.sqrt(), "bias {bias}");
    }

    #[test]
    fn impulse_fraction_is_exact() {
        let img = Image::filled(1000, 1000, 0.5);
        let out = apply_noise(&img, sev(1), NoiseKind::Impulse, &mut rng(5));
        let replaced = out.pixels().filter(|p| p[0] != 0.5).count();
        let frac = replaced as f64 / 1e6;
        assert!((frac - 0.03).abs() <= 0.001, "{frac}");
        assert!(out.pixels().all(|p| p[0] == p[1] && p[1] == p[2]));
    }

    #[test]
    fn shot_noise_on_black_is_black() {
        let img = Image::filled(20, 20, 0.0);
        for s in 1..=5 {
            assert_eq!(apply_noise(&img, sev(s), NoiseKind::Shot, &mut rng(1)), img);
        }
    }

    #[test]
    fn blurs_fix_constant_images() {
        let img = Image::filled(30, 24, 0.6);
        for kind in [BlurKind::Gaussian, BlurKind::Defocus, BlurKind::Glass] {
            for s in 1..=5 {
                let out = apply_static_blur(&img, sev(s), kind, &mut rng(2));
                for v in out.data() {
                    assert!((v - 0.6).abs() < 1e-6, "{kind:?} {s}: {v}");
                }
            }
        }
    }

    #[test]
    fn gaussian_blur_keeps_mean() {
        let img = textured(48, 40);
        for s in 1..=5 {
            let out = apply_static_blur(&img, sev(s), BlurKind::Gaussian, &mut rng(0));
            assert!((out.mean() - img.mean()).abs() < 1e-6);
        }
    }

    #[test]
    fn defocus_kernel_radius_and_mass() {
        let k = defocus_kernel(sev(1));
        assert_eq!(k.radius(), 3);
        assert!((k.sum() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn glass_is_a_permutation_of_the_blurred_image() {
        let img = textured(20, 15);
        let shuffle = GlassShuffle::sample(20, 15, sev(3), &mut rng(9));
        let out = shuffle.apply(&img);
        let blurred = filter::gaussian_blur_image(&img, 1.0);
        let mut a: Vec<u32> = out.data().iter().map(|v| v.to_bits()).collect();
        let mut b: Vec<u32> = blurred.data().iter().map(|v| v.clamp(0.0, 1.0).to_bits()).collect();
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, b);
    }

    #[test]
    fn elastic_zero_field_is_identity() {
        let img = textured(12, 9);
        assert_eq!(ElasticField::zero(12, 9).remap(&img), img);
        let out = apply_elastic(&img, sev(2), &mut rng(4));
        assert_eq!(out.dims(), img.dims());
    }

    #[test]
    fn kernels_deterministic() {
        let img = textured(24, 18);
        let a = apply_noise(&img, sev(3), NoiseKind::Gaussian, &mut rng(11));
        let b = apply_noise(&img, sev(3), NoiseKind::Gaussian, &mut rng(11));
        assert_eq!(a, b);
    }
}
