use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TABLE_VERSION: u32 = 1;
const BUILTIN: &str = include_str!("severity.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ladder<R> {
    pub rows: Vec<R>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianRow {
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShotRow {
    pub photons: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpulseRow {
    pub amount: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefocusRow {
    pub radius: f64,
    pub alias_blur: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlassRow {
    pub sigma: f64,
    pub max_delta: usize,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionRow {
    pub radius: usize,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoomRow {
    pub levels: usize,
    pub step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnowRow {
    pub threshold: f64,
    pub intensity: f64,
    pub whiten: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnowTable {
    pub flake_sigma: f64,
    pub motion_radius: usize,
    pub motion_sigma: f64,
    pub rows: Vec<SnowRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrostRow {
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FogRow {
    pub strength: f64,
    pub decay: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrightnessRow {
    pub shift: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorRow {
    pub factor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElasticRow {
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElasticTable {
    pub smoothing: f64,
    pub rows: Vec<ElasticRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JpegRow {
    pub quality: u8,
}

/// Per-kind, per-severity parameters. Rows are indexed by `severity - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeverityTable {
    pub version: u32,
    pub gaussian_noise: Ladder<GaussianRow>,
    pub shot_noise: Ladder<ShotRow>,
    pub impulse_noise: Ladder<ImpulseRow>,
    pub defocus_blur: Ladder<DefocusRow>,
    pub glass_blur: Ladder<GlassRow>,
    pub motion_blur: Ladder<MotionRow>,
    pub zoom_blur: Ladder<ZoomRow>,
    pub snow: SnowTable,
    pub frost: Ladder<FrostRow>,
    pub fog: Ladder<FogRow>,
    pub brightness: Ladder<BrightnessRow>,
    pub contrast: Ladder<FactorRow>,
    pub elastic_transform: ElasticTable,
    pub pixelate: Ladder<FactorRow>,
    pub jpeg_compression: Ladder<JpegRow>,
}

impl SeverityTable {
    /// The table shipped with the crate.
    pub fn builtin() -> &'static SeverityTable {
        static TABLE: OnceLock<SeverityTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            SeverityTable::from_toml(BUILTIN, Path::new("severity.toml"))
                .expect("built-in severity table is valid")
        })
    }

    pub fn builtin_source() -> &'static str {
        BUILTIN
    }

    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        let table: SeverityTable =
            toml::from_str(text).map_err(|e| Error::format(origin, e.to_string()))?;
        table.validate().map_err(|m| Error::format(origin, m))?;
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.version != TABLE_VERSION {
            return Err(format!(
                "severity table version {} is not supported (expected {TABLE_VERSION})",
                self.version
            ));
        }
        let counts = [
            ("gaussian_noise", self.gaussian_noise.rows.len()),
            ("shot_noise", self.shot_noise.rows.len()),
            ("impulse_noise", self.impulse_noise.rows.len()),
            ("defocus_blur", self.defocus_blur.rows.len()),
            ("glass_blur", self.glass_blur.rows.len()),
            ("motion_blur", self.motion_blur.rows.len()),
            ("zoom_blur", self.zoom_blur.rows.len()),
            ("snow", self.snow.rows.len()),
            ("frost", self.frost.rows.len()),
            ("fog", self.fog.rows.len()),
            ("brightness", self.brightness.rows.len()),
            ("contrast", self.contrast.rows.len()),
            ("elastic_transform", self.elastic_transform.rows.len()),
            ("pixelate", self.pixelate.rows.len()),
            ("jpeg_compression", self.jpeg_compression.rows.len()),
        ];
        for (kind, n) in counts {
            if n != 5 {
                return Err(format!("{kind}: expected 5 severity rows, found {n}"));
            }
        }
        let check = |ok: bool, what: &str| if ok { Ok(()) } else { Err(what.to_string()) };
        for r in &self.shot_noise.rows {
            check(r.photons > 0.0, "shot_noise: photons must be positive")?;
        }
        for r in &self.impulse_noise.rows {
            check((0.0..=1.0).contains(&r.amount), "impulse_noise: amount must lie in [0, 1]")?;
        }
        for r in &self.motion_blur.rows {
            check(r.sigma > 0.0, "motion_blur: sigma must be positive")?;
        }
        for r in &self.zoom_blur.rows {
            check(r.levels >= 1 && r.step > 0.0, "zoom_blur: need levels >= 1 and step > 0")?;
        }
        check(self.snow.motion_sigma > 0.0, "snow: motion_sigma must be positive")?;
        for r in &self.frost.rows {
            check((0.0..=1.0).contains(&r.weight), "frost: weight must lie in [0, 1]")?;
        }
        for r in &self.pixelate.rows {
            check(r.factor > 0.0 && r.factor <= 1.0, "pixelate: factor must lie in (0, 1]")?;
        }
        for r in &self.jpeg_compression.rows {
            check((1..=100).contains(&r.quality), "jpeg_compression: quality must lie in 1..=100")?;
        }
        Ok(())
    }
}
