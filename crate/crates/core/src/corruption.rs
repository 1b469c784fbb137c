//! Corruption identities, severities and their pair-level semantics.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Severity level, 1 (mildest) to 5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Severity(u8);

impl Severity {
    pub const ALL: [Severity; 5] = [Severity(1), Severity(2), Severity(3), Severity(4), Severity(5)];

    pub fn new(level: u8) -> Result<Self> {
        if (1..=5).contains(&level) {
            Ok(Severity(level))
        } else {
            Err(Error::InvalidSeverity(level))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    /// Zero-based position in a severity ladder.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn pick<T: Copy>(self, ladder: &[T; 5]) -> T {
        ladder[self.index()]
    }
}

impl TryFrom<u8> for Severity {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        Severity::new(v)
    }
}

impl From<Severity> for u8 {
    fn from(s: Severity) -> u8 {
        s.0
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

macro_rules! kinds {
    ($($variant:ident => $name:literal, $short:literal, $class:ident, $sem:ident;)*) => {
        /// The 24 benchmark corruptions plus the elastic transform.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum CorruptionKind {
            $($variant,)*
        }

        impl CorruptionKind {
            pub const ALL: &'static [CorruptionKind] = &[$(CorruptionKind::$variant,)*];

            /// Stable identifier used in paths, manifests and the CLI.
            pub fn name(self) -> &'static str {
                match self { $(CorruptionKind::$variant => $name,)* }
            }

            /// Column header used in report tables.
            pub fn short_name(self) -> &'static str {
                match self { $(CorruptionKind::$variant => $short,)* }
            }

            pub fn class(self) -> CorruptionClass {
                match self { $(CorruptionKind::$variant => CorruptionClass::$class,)* }
            }

            pub fn semantics(self) -> PairSemantics {
                match self { $(CorruptionKind::$variant => PairSemantics::$sem,)* }
            }
        }
    };
}

kinds! {
    Jpeg => "jpeg", "JPEG", Digital, IndependentPerFrame;
    Pixelate => "pixelate", "Pixelate", Digital, SharedParams;
    Contrast => "contrast", "Contrast", Digital, SharedParams;
    Saturate => "saturate", "Saturate", Digital, SharedParams;
    HighLight => "high_light", "HL", Illumination, SharedParams;
    LowLight => "low_light", "LL", Illumination, SharedParams;
    OverExposure => "over_exposure", "OE", Illumination, AsymmetricSecondFrame;
    UnderExposure => "under_exposure", "UE", Illumination, AsymmetricSecondFrame;
    Spatter => "spatter", "Spatter", Weather, SharedParams;
    Fog => "fog", "Fog", Weather, SharedParams;
    Frost => "frost", "Frost", Weather, SharedParams;
    Snow => "snow", "Snow", Weather, TemporalParticles;
    GaussianNoise => "gaussian_noise", "Gaussian", Noise, IndependentPerFrame;
    ShotNoise => "shot_noise", "Shot", Noise, IndependentPerFrame;
    ImpulseNoise => "impulse_noise", "Impulse", Noise, IndependentPerFrame;
    GaussianBlur => "gaussian_blur", "Gaussian", Blur, SharedParams;
    DefocusBlur => "defocus_blur", "Defocus", Blur, SharedParams;
    GlassBlur => "glass_blur", "Glass", Blur, SharedParams;
    CameraMotionBlur => "camera_motion_blur", "Camera", Blur, SharedParams;
    ObjectMotionBlur => "object_motion_blur", "Object", Blur, MotionAccumulation;
    PsfBlur => "psf_blur", "PSF", Blur, SharedParams;
    H264Crf => "h264_crf", "CRF", Video, StreamLevel;
    H264Abr => "h264_abr", "ABR", Video, StreamLevel;
    BitError => "bit_error", "BitError", Video, StreamLevel;
    ElasticTransform => "elastic_transform", "Elastic", Digital, SharedParams;
}

impl CorruptionKind {
    /// All 24 benchmark corruptions in report-column order.
    pub fn benchmark_set() -> Vec<CorruptionKind> {
        Self::ALL
            .iter()
            .copied()
            .filter(|k| *k != CorruptionKind::ElasticTransform)
            .collect()
    }

    /// The 20-corruption subset used for KITTI-FC.
    pub fn kitti_set() -> Vec<CorruptionKind> {
        Self::benchmark_set()
            .into_iter()
            .filter(|k| {
                !matches!(
                    k.semantics(),
                    PairSemantics::StreamLevel | PairSemantics::MotionAccumulation
                )
            })
            .collect()
    }

    pub fn valid_names() -> String {
        Self::ALL.iter().map(|k| k.name()).collect::<Vec<_>>().join(", ")
    }

    /// Whether the kind needs the full high-frame-rate stream rather than a pair.
    pub fn needs_stream(self) -> bool {
        matches!(
            self.semantics(),
            PairSemantics::StreamLevel | PairSemantics::MotionAccumulation
        )
    }
}

impl fmt::Display for CorruptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CorruptionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.name() == norm)
            .ok_or_else(|| Error::UnknownKind {
                name: s.to_string(),
                valid: Self::valid_names(),
            })
    }
}

/// The six reporting classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionClass {
    Digital,
    Illumination,
    Weather,
    Noise,
    Blur,
    Video,
}

impl CorruptionClass {
    pub const ALL: [CorruptionClass; 6] = [
        CorruptionClass::Digital,
        CorruptionClass::Illumination,
        CorruptionClass::Weather,
        CorruptionClass::Noise,
        CorruptionClass::Blur,
        CorruptionClass::Video,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CorruptionClass::Digital => "Digital",
            CorruptionClass::Illumination => "Illumination",
            CorruptionClass::Weather => "Weather",
            CorruptionClass::Noise => "Noise",
            CorruptionClass::Blur => "Blur",
            CorruptionClass::Video => "Video",
        }
    }
}

/// How a corruption treats the two frames of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSemantics {
    /// Same parameters (and same random draws) for both frames.
    SharedParams,
    /// Each frame corrupted with its own random draws.
    IndependentPerFrame,
    /// Only the second frame is altered.
    AsymmetricSecondFrame,
    /// Shared motion direction, particles regenerated per frame.
    TemporalParticles,
    /// Frames averaged over a window of the high-frame-rate stream.
    MotionAccumulation,
    /// Applied to the encoded video stream.
    StreamLevel,
}

/// A single corruption to apply: what, how hard, and with which seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    pub severity: Severity,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn new(kind: CorruptionKind, severity: Severity, seed: u64) -> Self {
        Self { kind, severity, seed }
    }
}
