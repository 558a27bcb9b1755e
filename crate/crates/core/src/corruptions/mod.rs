//! Common-corruption benchmark generator for 64 × 64 RGB images in [0, 1].
//!
//! Fifteen kinds in four categories, five severities each. Parameters come
//! from a versioned TOML table ([`SeverityTable`]). Stochastic kinds draw all
//! their randomness from `(seed, kind)` in an order that does not depend on
//! severity, so the five levels of one image share a noise realisation and
//! differ only in strength.

mod blur;
mod digital;
mod jpeg;
mod noise;
pub mod ops;
mod set;
mod table;
mod weather;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::numerics::{RngStream, Tensor};

pub use set::{
    build_corrupted_set, corrupt_in_memory, image_seed, manifest_image_path, read_manifest, write_manifest,
    ManifestRow, MANIFEST_HEADER,
};
pub use table::*;
pub use weather::frost_texture;

pub const IMAGE_SIZE: usize = 64;
pub const SEVERITIES: [u8; 5] = [1, 2, 3, 4, 5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    GaussianNoise,
    ShotNoise,
    ImpulseNoise,
    DefocusBlur,
    GlassBlur,
    MotionBlur,
    ZoomBlur,
    Snow,
    Frost,
    Fog,
    Brightness,
    Contrast,
    ElasticTransform,
    Pixelate,
    JpegCompression,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Noise,
    Blur,
    Weather,
    Digital,
}

impl CorruptionKind {
    pub const ALL: [CorruptionKind; 15] = [
        Self::GaussianNoise,
        Self::ShotNoise,
        Self::ImpulseNoise,
        Self::DefocusBlur,
        Self::GlassBlur,
        Self::MotionBlur,
        Self::ZoomBlur,
        Self::Snow,
        Self::Frost,
        Self::Fog,
        Self::Brightness,
        Self::Contrast,
        Self::ElasticTransform,
        Self::Pixelate,
        Self::JpegCompression,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::GaussianNoise => "gaussian_noise",
            Self::ShotNoise => "shot_noise",
            Self::ImpulseNoise => "impulse_noise",
            Self::DefocusBlur => "defocus_blur",
            Self::GlassBlur => "glass_blur",
            Self::MotionBlur => "motion_blur",
            Self::ZoomBlur => "zoom_blur",
            Self::Snow => "snow",
            Self::Frost => "frost",
            Self::Fog => "fog",
            Self::Brightness => "brightness",
            Self::Contrast => "contrast",
            Self::ElasticTransform => "elastic_transform",
            Self::Pixelate => "pixelate",
            Self::JpegCompression => "jpeg_compression",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn category(self) -> Category {
        use CorruptionKind::*;
        match self {
            GaussianNoise | ShotNoise | ImpulseNoise => Category::Noise,
            DefocusBlur | GlassBlur | MotionBlur | ZoomBlur => Category::Blur,
            Snow | Frost | Fog | Brightness => Category::Weather,
            Contrast | ElasticTransform | Pixelate | JpegCompression => Category::Digital,
        }
    }

    /// Whether the output depends on the seed.
    pub fn is_stochastic(self) -> bool {
        use CorruptionKind::*;
        !matches!(
            self,
            DefocusBlur | ZoomBlur | Brightness | Contrast | Pixelate | JpegCompression
        )
    }
}

impl Category {
    pub const ALL: [Category; 4] = [Self::Noise, Self::Blur, Self::Weather, Self::Digital];

    pub fn name(self) -> &'static str {
        match self {
            Self::Noise => "noise",
            Self::Blur => "blur",
            Self::Weather => "weather",
            Self::Digital => "digital",
        }
    }

    pub fn kinds(self) -> Vec<CorruptionKind> {
        CorruptionKind::ALL
            .into_iter()
            .filter(|k| k.category() == self)
            .collect()
    }
}

impl fmt::Display for CorruptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CorruptionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownName {
                what: "corruption kind",
                name: s.to_string(),
                valid: Self::ALL.map(|k| k.name()).join(", "),
            })
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::UnknownName {
                what: "corruption category",
                name: s.to_string(),
                valid: Self::ALL.map(|c| c.name()).join(", "),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    pub severity: u8,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn new(kind: CorruptionKind, severity: u8, seed: u64) -> Result<Self> {
        ensure!(
            (1..=5).contains(&severity),
            InvalidArgument,
            "severity must be in 1..=5, got {severity}"
        );
        Ok(Self { kind, severity, seed })
    }
}

fn check_image(image: &Tensor) -> Result<()> {
    ensure!(
        image.shape() == [3, IMAGE_SIZE, IMAGE_SIZE],
        Shape,
        "corruptions expect a [3, {IMAGE_SIZE}, {IMAGE_SIZE}] image, got {:?}",
        image.shape()
    );
    if let Some(bad) = image.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidArgument(format!(
            "pixel values must lie in [0, 1], found {bad}"
        )));
    }
    Ok(())
}

/// Apply one corruption using the built-in severity table.
pub fn apply_corruption(image: &Tensor, spec: &CorruptionSpec) -> Result<Tensor> {
    apply_corruption_with(image, spec, SeverityTable::builtin())
}

pub fn apply_corruption_with(image: &Tensor, spec: &CorruptionSpec, table: &SeverityTable) -> Result<Tensor> {
    check_image(image)?;
    ensure!(
        (1..=5).contains(&spec.severity),
        InvalidArgument,
        "severity must be in 1..=5, got {}",
        spec.severity
    );
    let (h, w) = (IMAGE_SIZE, IMAGE_SIZE);
    let s = spec.severity as usize - 1;
    let x = image.data();
    let mut rng = RngStream::new(spec.seed, spec.kind.index() as u64);
    let rng = &mut rng;
    use CorruptionKind::*;
    let out = match spec.kind {
        GaussianNoise => noise::gaussian(x, &table.gaussian_noise.rows[s], rng),
        ShotNoise => noise::shot(x, &table.shot_noise.rows[s], rng),
        ImpulseNoise => noise::impulse(x, &table.impulse_noise.rows[s], rng),
        DefocusBlur => blur::defocus(x, h, w, &table.defocus_blur.rows[s]),
        GlassBlur => blur::glass(x, h, w, &table.glass_blur.rows[s], rng),
        MotionBlur => blur::motion(x, h, w, &table.motion_blur.rows[s], rng),
        ZoomBlur => blur::zoom(x, h, w, &table.zoom_blur.rows[s]),
        Snow => weather::snow(x, h, w, &table.snow, &table.snow.rows[s], rng),
        Frost => weather::frost(x, h, w, &table.frost.rows[s], rng),
        Fog => weather::fog(x, h, w, &table.fog.rows[s], rng),
        Brightness => weather::brightness(x, h, w, &table.brightness.rows[s]),
        Contrast => digital::contrast(x, h, w, &table.contrast.rows[s]),
        ElasticTransform => {
            digital::elastic(x, h, w, &table.elastic_transform, &table.elastic_transform.rows[s], rng)
        }
        Pixelate => digital::pixelate(x, h, w, &table.pixelate.rows[s]),
        JpegCompression => jpeg::jpeg(x, h, w, table.jpeg_compression.rows[s].quality),
    };
    let out: Vec<f64> = out.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    Tensor::new(image.shape(), out)
}

/// Severity 0 is the identity; 1..=5 defer to [`apply_corruption`].
pub fn apply_with_identity(image: &Tensor, kind: CorruptionKind, severity: u8, seed: u64) -> Result<Tensor> {
    if severity == 0 {
        check_image(image)?;
        return Ok(image.clone());
    }
    apply_corruption(image, &CorruptionSpec::new(kind, severity, seed)?)
}
