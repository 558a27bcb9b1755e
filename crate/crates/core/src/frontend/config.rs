use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// The eight front-end variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Standard,
    LowSf,
    MidSf,
    HighSf,
    OnlySimple,
    OnlyComplex,
    LowNoise,
    NoNoise,
}

impl Variant {
    pub const ALL: [Variant; 8] = [
        Variant::Standard,
        Variant::LowSf,
        Variant::MidSf,
        Variant::HighSf,
        Variant::OnlySimple,
        Variant::OnlyComplex,
        Variant::LowNoise,
        Variant::NoNoise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Standard => "standard",
            Variant::LowSf => "low_sf",
            Variant::MidSf => "mid_sf",
            Variant::HighSf => "high_sf",
            Variant::OnlySimple => "only_simple",
            Variant::OnlyComplex => "only_complex",
            Variant::LowNoise => "low_noise",
            Variant::NoNoise => "no_noise",
        }
    }

    pub fn index(self) -> u8 {
        Variant::ALL.iter().position(|&v| v == self).unwrap() as u8
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .iter()
            .copied()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::UnknownName {
                what: "variant",
                name: s.to_string(),
                valid: Variant::ALL.map(Variant::name).join(", "),
            })
    }
}

/// Stochasticity generator applied after the nonlinearities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// σ(m) = √m
    Poisson,
    /// σ(m) = √m / 2
    SubPoisson,
    None,
}

impl NoiseMode {
    pub fn index(self) -> u8 {
        match self {
            NoiseMode::Poisson => 0,
            NoiseMode::SubPoisson => 1,
            NoiseMode::None => 2,
        }
    }

    pub fn from_index(i: u8) -> Option<Self> {
        match i {
            0 => Some(NoiseMode::Poisson),
            1 => Some(NoiseMode::SubPoisson),
            2 => Some(NoiseMode::None),
            _ => None,
        }
    }
}

/// Distributions the Gabor parameters are drawn from. Only the SF band edges
/// are fixed by the variant; the envelope laws below are replaceable.
///
/// θ ~ U[0°, 180°), f ~ log-U[sf_low, sf_high], nx ~ log-U[n_cycles_x],
/// σx = nx / f, σy = σx · U[aspect], φ ~ U[0, 2π).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingLaws {
    pub n_cycles_x: [f64; 2],
    pub aspect: [f64; 2],
}

impl Default for SamplingLaws {
    fn default() -> Self {
        Self {
            n_cycles_x: [0.4, 1.0],
            aspect: [0.5, 1.0],
        }
    }
}

/// Specification of one VOneBlock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VOneBlockConfig {
    pub variant: Variant,
    pub n_simple: usize,
    pub n_complex: usize,
    /// SF band edges in cycles/degree.
    pub sf_low: f64,
    pub sf_high: f64,
    pub noise_mode: NoiseMode,
    /// Pixels per degree of visual angle.
    pub ppd: f64,
    /// Odd kernel width in pixels.
    pub kernel_px: usize,
    pub stride: usize,
    /// Spikes per unit activation used by the noise generator.
    pub noise_gamma: f64,
    pub seed: u64,
    #[serde(default)]
    pub laws: SamplingLaws,
}

impl VOneBlockConfig {
    pub fn n_channels(&self) -> usize {
        self.n_simple + self.n_complex
    }

    /// Number of Gabor kernels; complex channels carry a quadrature pair.
    pub fn n_kernels(&self) -> usize {
        self.n_simple + 2 * self.n_complex
    }

    pub fn padding(&self) -> usize {
        self.kernel_px / 2
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Rescale the channel count to `total`, keeping the simple/complex split.
    pub fn with_total_channels(mut self, total: usize) -> Self {
        let n = self.n_channels();
        self.n_simple = (self.n_simple * total + n / 2) / n;
        self.n_complex = total - self.n_simple;
        self
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.n_channels() > 0,
            InvalidArgument,
            "front-end needs at least one channel"
        );
        ensure!(
            self.sf_low > 0.0 && self.sf_low < self.sf_high,
            InvalidArgument,
            "SF band must satisfy 0 < sf_low < sf_high, got [{}, {}]",
            self.sf_low,
            self.sf_high
        );
        ensure!(
            self.kernel_px % 2 == 1,
            InvalidArgument,
            "kernel_px must be odd, got {}",
            self.kernel_px
        );
        ensure!(self.ppd > 0.0, InvalidArgument, "ppd must be positive");
        ensure!(self.stride >= 1, InvalidArgument, "stride must be >= 1");
        ensure!(
            self.noise_gamma > 0.0,
            InvalidArgument,
            "noise_gamma must be positive"
        );
        let [lo, hi] = self.laws.n_cycles_x;
        ensure!(
            lo > 0.0 && lo <= hi,
            InvalidArgument,
            "n_cycles_x range invalid: [{lo}, {hi}]"
        );
        let [lo, hi] = self.laws.aspect;
        ensure!(
            lo > 0.0 && lo <= hi,
            InvalidArgument,
            "aspect range invalid: [{lo}, {hi}]"
        );
        Ok(())
    }
}

/// Parameter row for one named variant.
pub fn variant_config(name: &str) -> Result<VOneBlockConfig> {
    Ok(config_for(name.parse()?))
}

pub fn config_for(variant: Variant) -> VOneBlockConfig {
    let (sf_low, sf_high) = match variant {
        Variant::LowSf => (0.5, 2.0),
        Variant::MidSf => (2.0, 5.6),
        Variant::HighSf => (5.6, 11.2),
        _ => (0.5, 11.2),
    };
    let (n_simple, n_complex) = match variant {
        Variant::OnlySimple => (512, 0),
        Variant::OnlyComplex => (0, 512),
        _ => (256, 256),
    };
    let noise_mode = match variant {
        Variant::LowNoise => NoiseMode::SubPoisson,
        Variant::NoNoise => NoiseMode::None,
        _ => NoiseMode::Poisson,
    };
    VOneBlockConfig {
        variant,
        n_simple,
        n_complex,
        sf_low,
        sf_high,
        noise_mode,
        ppd: 32.0,
        kernel_px: 19,
        stride: 2,
        noise_gamma: 1.0,
        seed: 0,
        laws: SamplingLaws::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_rows() {
        let low = variant_config("low_sf").unwrap();
        assert_eq!((low.sf_low, low.sf_high), (0.5, 2.0));
        assert_eq!((low.n_simple, low.n_complex), (256, 256));
        assert_eq!(low.noise_mode, NoiseMode::Poisson);

        let simple = variant_config("only_simple").unwrap();
        assert_eq!((simple.n_simple, simple.n_complex), (512, 0));
        assert_eq!((simple.sf_low, simple.sf_high), (0.5, 11.2));

        let std = variant_config("standard").unwrap();
        let quiet = variant_config("no_noise").unwrap();
        assert_eq!(quiet.noise_mode, NoiseMode::None);
        assert_eq!(
            VOneBlockConfig {
                variant: Variant::Standard,
                noise_mode: NoiseMode::Poisson,
                ..quiet
            },
            std
        );
        assert_eq!((std.ppd, std.stride, std.kernel_px), (32.0, 2, 19));
        assert_eq!(variant_config("mid_sf").unwrap().sf_high, 5.6);
        assert_eq!(variant_config("high_sf").unwrap().sf_low, 5.6);
        assert_eq!(
            variant_config("low_noise").unwrap().noise_mode,
            NoiseMode::SubPoisson
        );
        assert_eq!(variant_config("only_complex").unwrap().n_simple, 0);
    }

    #[test]
    fn unknown_name_lists_valid_names() {
        let err = variant_config("super_sf").unwrap_err().to_string();
        for v in Variant::ALL {
            assert!(err.contains(v.name()), "{err}");
        }
    }

    #[test]
    fn channel_rescaling_keeps_split() {
        let c = config_for(Variant::Standard).with_total_channels(64);
        assert_eq!((c.n_simple, c.n_complex), (32, 32));
        let c = config_for(Variant::OnlyComplex).with_total_channels(64);
        assert_eq!((c.n_simple, c.n_complex), (0, 64));
    }

    #[test]
    fn inverted_band_rejected() {
        let mut c = config_for(Variant::Standard);
        c.sf_low = 3.0;
        c.sf_high = 3.0;
        assert!(c.validate().is_err());
    }
}
