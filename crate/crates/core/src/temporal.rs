//! Pair-level corruptions whose effect on the two frames is defined jointly.

use rand::Rng as _;

use crate::corruption::Severity;
use crate::error::{Error, Result};
use crate::filter::{self, Kernel2D};
use crate::image::{Image, ImagePair};
use crate::ladders;
use crate::seed::{rng_for, Stream};
use crate::static_ops::apply_exposure;
use crate::weather::{self, WeatherKind, WeatherOverlay};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExposureDirection {
    Over,
    Under,
}

/// Signed EV offset for a direction and severity.
pub fn exposure_ev(severity: Severity, direction: ExposureDirection) -> f64 {
    let ev = severity.pick(&ladders::EXPOSURE_EV);
    match direction {
        ExposureDirection::Over => ev,
        ExposureDirection::Under => -ev,
    }
}

/// Mis-exposes frame B only; frame A is returned untouched.
pub fn apply_exposure_pair(pair: &ImagePair, severity: Severity, direction: ExposureDirection) -> ImagePair {
    let frame_b = apply_exposure(&pair.frame_b, exposure_ev(severity, direction));
    pair.with_frames(pair.frame_a.clone(), frame_b)
}

/// Line kernel of length `2α + 1` along `theta`, Gaussian-weighted (std `σ`)
/// along its length and splatted bilinearly for anti-aliasing.
pub fn camera_motion_kernel(severity: Severity, theta: f64) -> Kernel2D {
    let (radius, sigma) = severity.pick(&ladders::CAMERA_MOTION);
    line_kernel(radius, sigma, theta)
}

pub fn line_kernel(radius: u32, sigma: f64, theta: f64) -> Kernel2D {
    let size = 2 * radius as usize + 1;
    let mut weights = vec![0f64; size * size];
    let r = radius as f64;
    let (c, s) = (theta.cos(), theta.sin());
    const SUBSTEPS: usize = 8;
    let n = 2 * radius as usize * SUBSTEPS;
    for i in 0..=n {
        let t = -r + i as f64 / SUBSTEPS as f64;
        let w = (-(t * t) / (2.0 * sigma * sigma)).exp();
        let x = r + t * c;
        let y = r + t * s;
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = (x - x0, y - y0);
        for (dx, dy, bw) in [
            (0, 0, (1.0 - fx) * (1.0 - fy)),
            (1, 0, fx * (1.0 - fy)),
            (0, 1, (1.0 - fx) * fy),
            (1, 1, fx * fy),
        ] {
            let xi = x0 as usize + dx;
            let yi = y0 as usize + dy;
            if bw > 0.0 && xi < size && yi < size {
                weights[yi * size + xi] += w * bw;
            }
        }
    }
    Kernel2D::new(size, weights).normalized()
}

/// Samples one blur direction per pair and blurs both frames with it.
///
/// Returns the pair and the direction used.
pub fn apply_camera_motion_pair(pair: &ImagePair, severity: Severity, seed: u64) -> (ImagePair, f64) {
    let theta = rng_for(seed, Stream::Shared).random_range(0.0..std::f64::consts::PI);
    let kernel = camera_motion_kernel(severity, theta);
    (pair.map_frames(|f| filter::convolve_image(f, &kernel)), theta)
}

/// Generates one overlay per pair and blends it into both frames.
pub fn apply_weather_pair(
    pair: &ImagePair,
    severity: Severity,
    kind: WeatherKind,
    seed: u64,
) -> (ImagePair, WeatherOverlay) {
    let (w, h) = pair.dims();
    let overlay = WeatherOverlay::generate(kind, w, h, severity, &mut rng_for(seed, Stream::Shared));
    (pair.map_frames(|f| overlay.apply(f)), overlay)
}

/// Snow rendering of one pair: shared direction, per-frame particle layers.
#[derive(Debug, Clone, PartialEq)]
pub struct SnowRender {
    pub direction: f64,
    pub overlay_a: Vec<f32>,
    pub overlay_b: Vec<f32>,
}

pub fn apply_snow_pair(pair: &ImagePair, severity: Severity, seed: u64) -> (ImagePair, SnowRender) {
    let (w, h) = pair.dims();
    let direction = weather::sample_snow_direction(&mut rng_for(seed, Stream::Shared));
    let overlay_a = weather::snow_overlay(w, h, severity, direction, &mut rng_for(seed, Stream::FrameA));
    let overlay_b = weather::snow_overlay(w, h, severity, direction, &mut rng_for(seed, Stream::FrameB));
    let out = pair.with_frames(
        weather::composite_snow(&pair.frame_a, &overlay_a, severity),
        weather::composite_snow(&pair.frame_b, &overlay_b, severity),
    );
    (
        out,
        SnowRender {
            direction,
            overlay_a,
            overlay_b,
        },
    )
}

/// Arithmetic mean of frames `[keyframe - c, keyframe + c]`.
pub fn accumulate_window(frames: &[Image], keyframe: usize, half_width: usize) -> Result<Image> {
    if keyframe < half_width || keyframe + half_width >= frames.len() {
        return Err(Error::WindowOutOfBounds {
            keyframe,
            half_width,
            len: frames.len(),
        });
    }
    let window = &frames[keyframe - half_width..=keyframe + half_width];
    let dims = window[0].dims();
    if let Some(bad) = window.iter().find(|f| f.dims() != dims) {
        return Err(Error::DimensionMismatch(format!(
            "window frames differ in size: {:?} vs {:?}",
            dims,
            bad.dims()
        )));
    }
    let mut acc = vec![0f64; window[0].data().len()];
    for f in window {
        for (a, &v) in acc.iter_mut().zip(f.data()) {
            *a += v as f64;
        }
    }
    let n = window.len() as f64;
    let mean = acc.into_iter().map(|v| (v / n) as f32).collect();
    Image::new(dims.0, dims.1, mean)
}

/// Object motion blur on a high-frame-rate stream: each output frame is the
/// mean of the `2c + 1` frames centred on its keyframe.
pub fn synthesize_object_motion_pair(
    frames: &[Image],
    keyframe_a: usize,
    keyframe_b: usize,
    severity: Severity,
    pair_id: &str,
    timestamp_gap: f64,
) -> Result<ImagePair> {
    let c = severity.pick(&ladders::OBJECT_MOTION_HALF_WIDTH);
    let a = accumulate_window(frames, keyframe_a, c)?;
    let b = accumulate_window(frames, keyframe_b, c)?;
    ImagePair::new(a, b, pair_id, timestamp_gap)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sev(s: u8) -> Severity {
        Severity::new(s).unwrap()
    }

    fn pair_of(a: Image, b: Image) -> ImagePair {
        ImagePair::new(a, b, "p", 1.0 / 30.0).unwrap()
    }

    fn textured(w: usize, h: usize, phase: f32) -> Image {
        Image::from_fn(w, h, |x, y| {
            let v = 0.5 + 0.3 * ((x as f32 + phase) * 0.4).sin() * (y as f32 * 0.3).cos();
            [v, 0.8 * v, 0.3 + 0.2 * v]
        })
    }

    #[test]
    fn overexposure_clamps() {
        let pair = pair_of(Image::filled(2, 2, 0.3), Image::filled(2, 2, 0.3));
        let out = apply_exposure_pair(&pair, sev(5), ExposureDirection::Over);
        assert!(out.frame_b.data().iter().all(|&v| (v - 1.0).abs() < 1e-6));
        assert_eq!(out.frame_a, pair.frame_a);
    }

    #[test]
    fn underexposure_value() {
        let pair = pair_of(Image::filled(2, 2, 0.5), Image::filled(2, 2, 0.5));
        let out = apply_exposure_pair(&pair, sev(1), ExposureDirection::Under);
        let expected = 0.5 * 2f64.powf(-0.4);
        assert!((out.frame_b.data()[0] as f64 - expected).abs() < 1e-6);
        assert!((expected - 0.3789).abs() < 1e-4);
    }

    #[test]
    fn camera_kernel_normalized_at_all_severities() {
        for s in 1..=5 {
            for theta in [0.0, 0.3, 1.0, 2.5] {
                let k = camera_motion_kernel(sev(s), theta);
                assert!((k.sum() - 1.0).abs() < 1e-9);
                assert!(k.weights().iter().all(|&w| w >= 0.0));
            }
        }
    }

    #[test]
    fn camera_motion_constant_and_deterministic() {
        let flat = pair_of(Image::filled(24, 20, 0.4), Image::filled(24, 20, 0.4));
        let (out, _) = apply_camera_motion_pair(&flat, sev(2), 5);
        assert!(out.frame_a.data().iter().all(|&v| (v - 0.4).abs() < 1e-6));

        let pair = pair_of(textured(24, 20, 0.0), textured(24, 20, 1.0));
        let (a, ta) = apply_camera_motion_pair(&pair, sev(3), 77);
        let (b, tb) = apply_camera_motion_pair(&pair, sev(3), 77);
        assert_eq!(ta, tb);
        assert_eq!(a, b);
    }

    #[test]
    fn weather_overlay_shared_by_both_frames() {
        let img = textured(40, 30, 0.0);
        let pair = pair_of(img.clone(), img);
        for kind in [WeatherKind::Spatter, WeatherKind::Fog, WeatherKind::Frost] {
            let (out, _) = apply_weather_pair(&pair, sev(3), kind, 12);
            assert_eq!(out.frame_a, out.frame_b, "{kind:?}");
        }
    }

    #[test]
    fn snow_differs_per_frame_with_shared_direction() {
        let img = textured(64, 48, 0.0);
        let pair = pair_of(img.clone(), img);
        let (out, render) = apply_snow_pair(&pair, sev(2), 3);
        assert_ne!(render.overlay_a, render.overlay_b);
        assert_ne!(out.frame_a, out.frame_b);
    }

    #[test]
    fn static_scene_accumulates_to_keyframe() {
        let frame = textured(8, 6, 0.0);
        let frames = vec![frame.clone(); 40];
        let out = synthesize_object_motion_pair(&frames, 16, 20, sev(5), "s", 1.0 / 30.0).unwrap();
        for (x, y) in out.frame_a.data().iter().zip(frame.data()) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn linear_ramp_window_mean_is_keyframe() {
        let frames: Vec<Image> = (0..64).map(|t| Image::filled(3, 3, t as f32 / 128.0)).collect();
        let out = accumulate_window(&frames, 20, 9).unwrap();
        assert!(out.data().iter().all(|&v| (v - 20.0 / 128.0).abs() < 1e-6));
    }

    #[test]
    fn severity_one_averages_seven_frames() {
        // Impulse at the window edge contributes exactly 1/7.
        let mut frames = vec![Image::filled(2, 2, 0.0); 20];
        frames[7] = Image::filled(2, 2, 1.0);
        let out = synthesize_object_motion_pair(&frames, 10, 4, sev(1), "s", 1.0 / 30.0).unwrap();
        assert!((out.frame_a.data()[0] - 1.0 / 7.0).abs() < 1e-7);
        assert!((out.frame_b.data()[0] - 1.0 / 7.0).abs() < 1e-7);
    }

    #[test]
    fn window_out_of_bounds_names_keyframe() {
        let frames = vec![Image::filled(2, 2, 0.0); 10];
        let err = synthesize_object_motion_pair(&frames, 2, 6, sev(1), "s", 0.1).unwrap_err();
        assert!(matches!(err, Error::WindowOutOfBounds { keyframe: 2, .. }));
        assert!(err.to_string().contains("keyframe 2"));
    }
}
