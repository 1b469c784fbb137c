//! Dispatch from a corruption kind to the kernel that implements it on a pair.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use crate::corruption::{CorruptionKind, Severity};
use crate::error::{Error, Result};
use crate::image::ImagePair;
use crate::psf::{self, PsfGrid};
use crate::seed::{derive_seed, rng_for, Stream};
use crate::static_ops::{self as ops, BlurKind, GlassShuffle, LightDirection, NoiseKind};
use crate::temporal::{self, ExposureDirection};
use crate::weather::WeatherKind;

/// Where PSF lenses come from.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum PsfSource {
    /// Generated stand-in lenses shipped with the crate.
    #[default]
    Bundled,
    /// A directory holding `lens_{1..5}.psfg`.
    Dir(PathBuf),
}

/// Shared, read-only inputs for pair corruption.
#[derive(Debug, Default)]
pub struct CorruptionContext {
    psf_source: PsfSource,
    loaded: Mutex<HashMap<u8, Arc<PsfGrid>>>,
}

impl CorruptionContext {
    pub fn new(psf_source: PsfSource) -> Self {
        Self {
            psf_source,
            loaded: Mutex::new(HashMap::new()),
        }
    }

    pub fn psf_source(&self) -> &PsfSource {
        &self.psf_source
    }

    pub fn lens(&self, severity: Severity) -> Result<Arc<PsfGrid>> {
        match &self.psf_source {
            PsfSource::Bundled => Ok(psf::bundled_psf_grid(severity)),
            PsfSource::Dir(dir) => {
                let mut cache = self.loaded.lock().expect("lens cache poisoned");
                if let Some(g) = cache.get(&severity.get()) {
                    return Ok(g.clone());
                }
                let g = Arc::new(psf::load_lens_dir(dir, severity)?);
                cache.insert(severity.get(), g.clone());
                Ok(g)
            }
        }
    }
}

/// Corrupts one pair with the seed derived from `(global_seed, pair_id, kind, severity)`.
///
/// Object motion and the video kinds need the high-frame-rate stream and fail
/// with [`Error::RequiresStream`].
pub fn corrupt_pair(
    pair: &ImagePair,
    kind: CorruptionKind,
    severity: Severity,
    global_seed: u64,
    ctx: &CorruptionContext,
) -> Result<ImagePair> {
    let seed = derive_seed(global_seed, &pair.pair_id, kind, severity);
    corrupt_pair_seeded(pair, kind, severity, seed, ctx)
}

/// Like [`corrupt_pair`] with an explicit per-pair seed.
pub fn corrupt_pair_seeded(
    pair: &ImagePair,
    kind: CorruptionKind,
    severity: Severity,
    seed: u64,
    ctx: &CorruptionContext,
) -> Result<ImagePair> {
    use CorruptionKind as K;
    let shared = |f: &dyn Fn(&crate::Image) -> crate::Image| pair.map_frames(f);
    let per_frame = |f: &dyn Fn(&crate::Image, Stream) -> Result<crate::Image>| -> Result<ImagePair> {
        Ok(pair.with_frames(f(&pair.frame_a, Stream::FrameA)?, f(&pair.frame_b, Stream::FrameB)?))
    };
    let noise = |k: NoiseKind| per_frame(&|img, s| Ok(ops::apply_noise(img, severity, k, &mut rng_for(seed, s))));
    Ok(match kind {
        K::Jpeg => per_frame(&|img, _| ops::apply_jpeg(img, severity))?,
        K::Pixelate => shared(&|img| ops::apply_pixelate(img, severity)),
        K::Contrast => shared(&|img| ops::apply_contrast(img, severity)),
        K::Saturate => shared(&|img| ops::apply_saturate(img, severity)),
        K::HighLight => shared(&|img| ops::apply_light_shift(img, severity, LightDirection::High)),
        K::LowLight => shared(&|img| ops::apply_light_shift(img, severity, LightDirection::Low)),
        K::OverExposure => temporal::apply_exposure_pair(pair, severity, ExposureDirection::Over),
        K::UnderExposure => temporal::apply_exposure_pair(pair, severity, ExposureDirection::Under),
        K::Spatter => temporal::apply_weather_pair(pair, severity, WeatherKind::Spatter, seed).0,
        K::Fog => temporal::apply_weather_pair(pair, severity, WeatherKind::Fog, seed).0,
        K::Frost => temporal::apply_weather_pair(pair, severity, WeatherKind::Frost, seed).0,
        K::Snow => temporal::apply_snow_pair(pair, severity, seed).0,
        K::GaussianNoise => noise(NoiseKind::Gaussian)?,
        K::ShotNoise => noise(NoiseKind::Shot)?,
        K::ImpulseNoise => noise(NoiseKind::Impulse)?,
        K::GaussianBlur => {
            shared(&|img| ops::apply_static_blur(img, severity, BlurKind::Gaussian, &mut rng_for(seed, Stream::Shared)))
        }
        K::DefocusBlur => {
            shared(&|img| ops::apply_static_blur(img, severity, BlurKind::Defocus, &mut rng_for(seed, Stream::Shared)))
        }
        K::GlassBlur => {
            let (w, h) = pair.dims();
            let shuffle = GlassShuffle::sample(w, h, severity, &mut rng_for(seed, Stream::Shared));
            shared(&|img| shuffle.apply(img))
        }
        K::CameraMotionBlur => temporal::apply_camera_motion_pair(pair, severity, seed).0,
        K::PsfBlur => {
            let lens = ctx.lens(severity)?;
            shared(&|img| psf::convolve_spatially_varying(img, &lens))
        }
        K::ElasticTransform => {
            let (w, h) = pair.dims();
            let alpha = severity.pick(&crate::ladders::ELASTIC_ALPHA);
            let field = ops::ElasticField::sample(w, h, alpha, &mut rng_for(seed, Stream::Shared));
            shared(&|img| field.remap(img))
        }
        K::ObjectMotionBlur | K::H264Crf | K::H264Abr | K::BitError => return Err(Error::RequiresStream(kind)),
    })
}
