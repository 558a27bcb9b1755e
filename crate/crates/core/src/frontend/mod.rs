//! The VOneBlock: a fixed Gabor filter bank, simple/complex-cell
//! nonlinearities and an activity-dependent noise generator.
//!
//! Input images are normalised RGB `[3, H, W]`. Each Gabor is applied to the
//! channel-mean luminance (equivalently, the RGB kernel is the Gabor
//! replicated over channels with weight 1/3). With the default 32 ppd, 19 px
//! kernels and stride 2, a 64 px image produces a 32 × 32 map per channel.
//! Low-SF Gabors are truncated by the 19 px window; this is accepted.

mod block;
mod config;
mod gabor;
mod io;

pub use block::{apply_stochasticity, vone_forward, VOneBlock};
pub use config::{config_for, variant_config, NoiseMode, SamplingLaws, VOneBlockConfig, Variant};
pub use gabor::{
    gabor_kernel, gabor_raw, quadrature_pair, sample_gfb, CellType, GaborChannelParams, ODD_PHASE,
};
pub use io::{MAGIC as FRONTEND_MAGIC, VERSION as FRONTEND_VERSION};
