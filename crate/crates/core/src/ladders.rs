//! Per-severity parameter ladders.
//!
//! Index `i` holds the parameters for severity `i + 1`.

use crate::corruption::CorruptionKind;

pub const JPEG_QUALITY: [u8; 5] = [25, 18, 15, 10, 7];
pub const PIXELATE_SCALE: [f64; 5] = [0.6, 0.5, 0.4, 0.3, 0.25];
pub const CONTRAST_FACTOR: [f64; 5] = [0.4, 0.3, 0.2, 0.1, 0.05];
/// `(alpha, beta)` applied to HSV saturation.
pub const SATURATE: [(f64, f64); 5] = [(0.1, 0.0), (0.3, 0.0), (2.0, 0.0), (5.0, 0.1), (20.0, 0.2)];
pub const LIGHT_SHIFT: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];
pub const EXPOSURE_EV: [f64; 5] = [0.4, 0.8, 1.2, 1.6, 2.0];
pub const GAUSSIAN_NOISE: [f64; 5] = [0.08, 0.12, 0.18, 0.26, 0.38];
pub const SHOT_NOISE: [f64; 5] = [60.0, 25.0, 12.0, 5.0, 3.0];
pub const IMPULSE_RATIO: [f64; 5] = [0.03, 0.06, 0.09, 0.17, 0.27];
pub const GAUSSIAN_BLUR_SIGMA: [f64; 5] = [1.0, 2.0, 3.0, 4.0, 6.0];
pub const DEFOCUS_RADIUS: [u32; 5] = [3, 4, 6, 8, 10];
/// `(sigma, neighborhood, iterations)`.
pub const GLASS: [(f64, u32, u32); 5] = [(0.7, 1, 2), (0.9, 2, 1), (1.0, 2, 3), (1.1, 3, 2), (1.5, 4, 2)];
/// `(radius, sigma)` of the line kernel.
pub const CAMERA_MOTION: [(u32, f64); 5] = [(10, 3.0), (15, 5.0), (15, 8.0), (15, 12.0), (20, 15.0)];
/// Accumulation half-width in 960 FPS frames.
pub const OBJECT_MOTION_HALF_WIDTH: [usize; 5] = [3, 6, 9, 12, 15];
/// RMS spot radius of each lens, millimetres.
pub const PSF_RMS_RADIUS_MM: [f64; 5] = [0.0296, 0.0832, 0.1102, 0.1588, 0.1939];
pub const PSF_PIXEL_PITCH_UM: f64 = 4.0;
pub const ELASTIC_ALPHA: [f64; 5] = [12.5, 16.25, 21.25, 25.0, 30.0];
pub const H264_CRF: [u32; 5] = [23, 30, 37, 44, 51];
/// Average bit rate, bits per second.
pub const H264_ABR: [u64; 5] = [25_000_000, 12_500_000, 6_250_000, 3_125_000, 1_562_500];
/// `noise` bitstream-filter amount.
pub const BIT_ERROR_NOISE: [u64; 5] = [50_000_000, 25_000_000, 15_000_000, 10_000_000, 1_000_000];

// Weather ladders. These follow the generation style of the classic image
// corruption suite; snow density and streak lengths are our own choice.

/// Fog: `(strength, wibble decay)` of the plasma fractal.
pub const FOG: [(f64, f64); 5] = [(1.5, 2.0), (2.0, 2.0), (2.5, 1.7), (2.5, 1.5), (3.0, 1.4)];
/// Frost: `(image weight, frost weight)`.
pub const FROST: [(f64, f64); 5] = [(1.0, 0.4), (0.8, 0.6), (0.7, 0.7), (0.65, 0.7), (0.6, 0.75)];
/// Spatter: `(loc, scale, blur sigma, threshold, intensity, mud)`.
pub const SPATTER: [(f64, f64, f64, f64, f64, bool); 5] = [
    (0.65, 0.3, 4.0, 0.69, 0.6, false),
    (0.65, 0.3, 3.0, 0.68, 0.6, false),
    (0.65, 0.3, 2.0, 0.68, 0.5, false),
    (0.65, 0.3, 1.0, 0.65, 1.5, true),
    (0.67, 0.4, 1.0, 0.65, 1.5, true),
];
/// Snow particles per pixel; doubles per severity step.
pub const SNOW_DENSITY: [f64; 5] = [0.0005, 0.001, 0.002, 0.004, 0.008];
pub const SNOW_STREAK_LENGTH: [f64; 5] = [8.0, 10.0, 12.0, 16.0, 20.0];
/// Weight of the original frame in the brightened snow background.
pub const SNOW_BACKGROUND_BLEND: [f64; 5] = [0.8, 0.7, 0.7, 0.65, 0.55];

/// Read-only view of every ladder, keyed by corruption kind.
pub struct SeverityTable;

impl SeverityTable {
    /// Parameter tuple for `kind` at every severity, as plain numbers.
    pub fn ladder(kind: CorruptionKind) -> [Vec<f64>; 5] {
        use CorruptionKind::*;
        let map = |f: &dyn Fn(usize) -> Vec<f64>| std::array::from_fn(f);
        match kind {
            Jpeg => map(&|i| vec![JPEG_QUALITY[i] as f64]),
            Pixelate => map(&|i| vec![PIXELATE_SCALE[i]]),
            Contrast => map(&|i| vec![CONTRAST_FACTOR[i]]),
            Saturate => map(&|i| vec![SATURATE[i].0, SATURATE[i].1]),
            HighLight | LowLight => map(&|i| vec![LIGHT_SHIFT[i]]),
            OverExposure => map(&|i| vec![EXPOSURE_EV[i]]),
            UnderExposure => map(&|i| vec![-EXPOSURE_EV[i]]),
            Spatter => map(&|i| {
                let (a, b, c, d, e, mud) = SPATTER[i];
                vec![a, b, c, d, e, mud as u8 as f64]
            }),
            Fog => map(&|i| vec![FOG[i].0, FOG[i].1]),
            Frost => map(&|i| vec![FROST[i].0, FROST[i].1]),
            Snow => map(&|i| vec![SNOW_DENSITY[i], SNOW_STREAK_LENGTH[i], SNOW_BACKGROUND_BLEND[i]]),
            GaussianNoise => map(&|i| vec![GAUSSIAN_NOISE[i]]),
            ShotNoise => map(&|i| vec![SHOT_NOISE[i]]),
            ImpulseNoise => map(&|i| vec![IMPULSE_RATIO[i]]),
            GaussianBlur => map(&|i| vec![GAUSSIAN_BLUR_SIGMA[i]]),
            DefocusBlur => map(&|i| vec![DEFOCUS_RADIUS[i] as f64]),
            GlassBlur => map(&|i| vec![GLASS[i].0, GLASS[i].1 as f64, GLASS[i].2 as f64]),
            CameraMotionBlur => map(&|i| vec![CAMERA_MOTION[i].0 as f64, CAMERA_MOTION[i].1]),
            ObjectMotionBlur => map(&|i| vec![OBJECT_MOTION_HALF_WIDTH[i] as f64]),
            PsfBlur => map(&|i| vec![PSF_RMS_RADIUS_MM[i]]),
            H264Crf => map(&|i| vec![H264_CRF[i] as f64]),
            H264Abr => map(&|i| vec![H264_ABR[i] as f64]),
            BitError => map(&|i| vec![BIT_ERROR_NOISE[i] as f64]),
            ElasticTransform => map(&|i| vec![ELASTIC_ALPHA[i]]),
        }
    }
}
