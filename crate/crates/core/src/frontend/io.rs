//! Front-end file format (all integers and floats little-endian):
//!
//! ```text
//! magic      8 bytes  "VONEBLK\0"
//! version    u32      1
//! variant    u32 len + UTF-8 name
//! n_simple   u32
//! n_complex  u32
//! sf_low     f64
//! sf_high    f64
//! noise_mode u8       0 poisson, 1 sub_poisson, 2 none
//! ppd        f64
//! kernel_px  u32
//! stride     u32
//! gamma      f64
//! seed       u64
//! laws       4 × f64  n_cycles_x lo/hi, aspect lo/hi
//! n_channels u32, then per channel:
//!            theta, sf, sigma_x, sigma_y, phase (5 × f64), cell_type u8 (0 simple, 1 complex)
//! n_kernels  u32
//! kernel_px  u32
//! payload    n_kernels × kernel_px² × f64 luminance kernels, row-major
//! ```

use std::path::Path;

use super::block::VOneBlock;
use super::config::{NoiseMode, SamplingLaws, VOneBlockConfig};
use super::gabor::{CellType, GaborChannelParams};
use crate::codec::{read_file, write_file, Decoder, Encoder};
use crate::error::Result;

pub const MAGIC: &[u8; 8] = b"VONEBLK\0";
pub const VERSION: u32 = 1;

impl VOneBlock {
    pub fn to_bytes(&self) -> Vec<u8> {
        let c = self.config();
        let mut e = Encoder::new();
        e.bytes(MAGIC);
        e.u32(VERSION);
        e.str(c.variant.name());
        e.u32(c.n_simple as u32);
        e.u32(c.n_complex as u32);
        e.f64(c.sf_low);
        e.f64(c.sf_high);
        e.u8(c.noise_mode.index());
        e.f64(c.ppd);
        e.u32(c.kernel_px as u32);
        e.u32(c.stride as u32);
        e.f64(c.noise_gamma);
        e.u64(c.seed);
        e.f64s(&c.laws.n_cycles_x);
        e.f64s(&c.laws.aspect);
        e.u32(self.params().len() as u32);
        for p in self.params() {
            e.f64s(&[p.theta, p.sf, p.sigma_x, p.sigma_y, p.phase]);
            e.u8(match p.cell_type {
                CellType::Simple => 0,
                CellType::Complex => 1,
            });
        }
        e.u32(c.n_kernels() as u32);
        e.u32(c.kernel_px as u32);
        e.f64s(self.raw_kernels());
        e.finish()
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut d = Decoder::new(bytes, path);
        if d.take(8)? != MAGIC {
            return Err(d.error("not a front-end file (bad magic)"));
        }
        let version = d.u32()?;
        if version != VERSION {
            return Err(d.error(format!("unsupported front-end version {version}")));
        }
        let variant = d.str()?.parse()?;
        let n_simple = d.u32()? as usize;
        let n_complex = d.u32()? as usize;
        let sf_low = d.f64()?;
        let sf_high = d.f64()?;
        let mode = d.u8()?;
        let noise_mode =
            NoiseMode::from_index(mode).ok_or_else(|| d.error(format!("bad noise mode {mode}")))?;
        let ppd = d.f64()?;
        let kernel_px = d.u32()? as usize;
        let stride = d.u32()? as usize;
        let noise_gamma = d.f64()?;
        let seed = d.u64()?;
        let nx = d.f64s(2)?;
        let aspect = d.f64s(2)?;
        let config = VOneBlockConfig {
            variant,
            n_simple,
            n_complex,
            sf_low,
            sf_high,
            noise_mode,
            ppd,
            kernel_px,
            stride,
            noise_gamma,
            seed,
            laws: SamplingLaws {
                n_cycles_x: [nx[0], nx[1]],
                aspect: [aspect[0], aspect[1]],
            },
        };
        config.validate()?;
        let n_channels = d.u32()? as usize;
        if n_channels != config.n_channels() {
            return Err(d.error(format!(
                "{n_channels} channel records for a {}-channel config",
                config.n_channels()
            )));
        }
        let mut params = Vec::with_capacity(n_channels);
        for _ in 0..n_channels {
            let v = d.f64s(5)?;
            let cell_type = match d.u8()? {
                0 => CellType::Simple,
                1 => CellType::Complex,
                other => return Err(d.error(format!("bad cell type {other}"))),
            };
            params.push(GaborChannelParams {
                theta: v[0],
                sf: v[1],
                sigma_x: v[2],
                sigma_y: v[3],
                phase: v[4],
                cell_type,
            });
        }
        let n_kernels = d.u32()? as usize;
        let k = d.u32()? as usize;
        if n_kernels != config.n_kernels() || k != kernel_px {
            return Err(d.error(format!(
                "kernel payload header {n_kernels}×{k}² disagrees with config"
            )));
        }
        let kernels = d.f64s(n_kernels * k * k)?;
        d.expect_end()?;
        VOneBlock::from_parts(config, params, kernels)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::config::{config_for, Variant};

    #[test]
    fn round_trip_is_exact() {
        let cfg = config_for(Variant::LowNoise).with_total_channels(12).with_seed(9);
        let block = VOneBlock::new(cfg).unwrap();
        let bytes = block.to_bytes();
        let back = VOneBlock::from_bytes(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back.config(), block.config());
        assert_eq!(back.params(), block.params());
        assert_eq!(back.checksum(), block.checksum());
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn corrupt_headers_rejected() {
        let block = VOneBlock::new(config_for(Variant::Standard).with_total_channels(4)).unwrap();
        let mut bytes = block.to_bytes();
        assert!(VOneBlock::from_bytes(&bytes[..bytes.len() - 1], Path::new("t")).is_err());
        bytes[0] = b'X';
        let err = VOneBlock::from_bytes(&bytes, Path::new("t")).unwrap_err().to_string();
        assert!(err.contains("magic"), "{err}");
    }
}
