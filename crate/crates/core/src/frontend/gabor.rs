//! Gabor parameter sampling and kernel synthesis.
//!
//! Kernels live on a `k × k` grid centred at the origin with spacing `1/ppd`
//! degrees; column index grows with `x`, row index grows with `-y`.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use super::config::VOneBlockConfig;
use crate::error::{ensure, Result};
use crate::numerics::{RngStream, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellType {
    Simple,
    Complex,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaborChannelParams {
    /// Preferred orientation in degrees, `[0, 180)`.
    pub theta: f64,
    /// Peak spatial frequency in cycles/degree.
    pub sf: f64,
    /// Envelope standard deviations in degrees.
    pub sigma_x: f64,
    pub sigma_y: f64,
    /// Phase in radians.
    pub phase: f64,
    pub cell_type: CellType,
}

/// Draw the per-channel parameters of a filter bank: `n_simple` simple
/// channels followed by `n_complex` complex channels.
pub fn sample_gfb(config: &VOneBlockConfig) -> Result<Vec<GaborChannelParams>> {
    config.validate()?;
    let mut rng = RngStream::named(config.seed, "gfb");
    let log_uniform = |rng: &mut RngStream, lo: f64, hi: f64| rng.uniform(lo.ln(), hi.ln()).exp();
    let laws = config.laws;
    let mut params = Vec::with_capacity(config.n_channels());
    for i in 0..config.n_channels() {
        let cell_type = if i < config.n_simple {
            CellType::Simple
        } else {
            CellType::Complex
        };
        let theta = rng.uniform(0.0, 180.0);
        let sf = log_uniform(&mut rng, config.sf_low, config.sf_high).clamp(config.sf_low, config.sf_high);
        let n_cycles = log_uniform(&mut rng, laws.n_cycles_x[0], laws.n_cycles_x[1]);
        let aspect = rng.uniform(laws.aspect[0], laws.aspect[1]);
        let phase = rng.uniform(0.0, TAU);
        let sigma_x = n_cycles / sf;
        params.push(GaborChannelParams {
            theta,
            sf,
            sigma_x,
            sigma_y: sigma_x * aspect,
            phase,
            cell_type,
        });
    }
    Ok(params)
}

/// Sampled grid: envelope `E`, carrier cosine/sine along the preferred axis.
struct GaborGrid {
    envelope: Vec<f64>,
    cos_carrier: Vec<f64>,
    sin_carrier: Vec<f64>,
}

fn grid(p: &GaborChannelParams, ppd: f64, kernel_px: usize) -> Result<GaborGrid> {
    ensure!(
        kernel_px % 2 == 1,
        InvalidArgument,
        "kernel_px must be odd, got {kernel_px}"
    );
    ensure!(
        p.sigma_x > 0.0 && p.sigma_y > 0.0,
        InvalidArgument,
        "Gabor envelope needs positive sigmas, got ({}, {})",
        p.sigma_x,
        p.sigma_y
    );
    ensure!(ppd > 0.0, InvalidArgument, "ppd must be positive");
    let c = (kernel_px / 2) as f64;
    let (st, ct) = p.theta.to_radians().sin_cos();
    let n = kernel_px * kernel_px;
    let mut g = GaborGrid {
        envelope: Vec::with_capacity(n),
        cos_carrier: Vec::with_capacity(n),
        sin_carrier: Vec::with_capacity(n),
    };
    for row in 0..kernel_px {
        let y = (c - row as f64) / ppd;
        for col in 0..kernel_px {
            let x = (col as f64 - c) / ppd;
            let xr = x * ct + y * st;
            let yr = -x * st + y * ct;
            let env = (-(xr * xr / (2.0 * p.sigma_x * p.sigma_x)
                + yr * yr / (2.0 * p.sigma_y * p.sigma_y)))
                .exp();
            let (s, co) = (TAU * p.sf * xr).sin_cos();
            g.envelope.push(env);
            g.cos_carrier.push(co);
            g.sin_carrier.push(s);
        }
    }
    Ok(g)
}

/// `exp(−(x'²/2σx² + y'²/2σy²)) · cos(2πf·x' + φ)` sampled on the grid, with
/// no DC correction or normalisation.
pub fn gabor_raw(p: &GaborChannelParams, ppd: f64, kernel_px: usize) -> Result<Tensor> {
    let g = grid(p, ppd, kernel_px)?;
    let (sp, cp) = p.phase.sin_cos();
    let data = (0..g.envelope.len())
        .map(|i| g.envelope[i] * (cp * g.cos_carrier[i] - sp * g.sin_carrier[i]))
        .collect();
    Tensor::new(&[kernel_px, kernel_px], data)
}

/// DC-corrected, unit-L2 Gabor kernel for one channel.
///
/// DC correction subtracts the envelope scaled so the kernel sums to zero.
pub fn gabor_kernel(p: &GaborChannelParams, ppd: f64, kernel_px: usize) -> Result<Tensor> {
    let g = grid(p, ppd, kernel_px)?;
    let raw = gabor_raw(p, ppd, kernel_px)?.into_data();
    let mut k = dc_correct(&raw, &g.envelope);
    normalize(&mut k, 1.0)?;
    Tensor::new(&[kernel_px, kernel_px], k)
}

/// Quadrature pair (phases φ and φ + π/2) for a complex channel.
///
/// Both kernels are DC-corrected. The odd (sine) component is rescaled so the
/// pair has equal gain at the channel's own (θ, f); otherwise truncation by the
/// kernel window breaks the phase invariance of the energy response for
/// channels whose envelope does not fit the window. The pair shares one scale
/// factor chosen so the mean squared L2 norm of the two kernels is 1.
pub fn quadrature_pair(
    p: &GaborChannelParams,
    ppd: f64,
    kernel_px: usize,
) -> Result<(Tensor, Tensor)> {
    let g = grid(p, ppd, kernel_px)?;
    let even_raw: Vec<f64> = g
        .envelope
        .iter()
        .zip(&g.cos_carrier)
        .map(|(e, c)| e * c)
        .collect();
    let odd_raw: Vec<f64> = g
        .envelope
        .iter()
        .zip(&g.sin_carrier)
        .map(|(e, s)| e * s)
        .collect();
    let even = dc_correct(&even_raw, &g.envelope);
    let odd = dc_correct(&odd_raw, &g.envelope);
    let gain_even: f64 = even.iter().zip(&g.cos_carrier).map(|(a, c)| a * c).sum();
    let gain_odd: f64 = odd.iter().zip(&g.sin_carrier).map(|(a, s)| a * s).sum();
    ensure!(
        gain_even.abs() > 1e-12 && gain_odd.abs() > 1e-12,
        InvalidArgument,
        "degenerate quadrature pair for theta={} sf={}",
        p.theta,
        p.sf
    );
    let balance = gain_even / gain_odd;
    let (sp, cp) = p.phase.sin_cos();
    let mut k0: Vec<f64> = even
        .iter()
        .zip(&odd)
        .map(|(e, o)| cp * e - sp * balance * o)
        .collect();
    let mut k1: Vec<f64> = even
        .iter()
        .zip(&odd)
        .map(|(e, o)| -sp * e - cp * balance * o)
        .collect();
    let ms = (sq_norm(&k0) + sq_norm(&k1)) / 2.0;
    ensure!(ms > 1e-24, InvalidArgument, "quadrature pair has zero energy");
    let inv = 1.0 / ms.sqrt();
    k0.iter_mut().chain(k1.iter_mut()).for_each(|v| *v *= inv);
    Ok((
        Tensor::new(&[kernel_px, kernel_px], k0)?,
        Tensor::new(&[kernel_px, kernel_px], k1)?,
    ))
}

fn dc_correct(kernel: &[f64], envelope: &[f64]) -> Vec<f64> {
    let m = kernel.iter().sum::<f64>() / envelope.iter().sum::<f64>();
    kernel.iter().zip(envelope).map(|(k, e)| k - m * e).collect()
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn normalize(v: &mut [f64], target: f64) -> Result<()> {
    let n = sq_norm(v).sqrt();
    ensure!(n > 1e-12, InvalidArgument, "kernel vanishes after DC correction");
    let s = target / n;
    v.iter_mut().for_each(|x| *x *= s);
    Ok(())
}

/// Phase of the odd-symmetric Gabor.
pub const ODD_PHASE: f64 = PI / 2.0;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::config::{config_for, Variant};

    fn params(theta: f64, sf: f64, sigma: f64, phase: f64) -> GaborChannelParams {
        GaborChannelParams {
            theta,
            sf,
            sigma_x: sigma,
            sigma_y: sigma,
            phase,
            cell_type: CellType::Simple,
        }
    }

    #[test]
    fn odd_phase_sums_to_zero_before_correction() {
        for theta in [0.0, 17.0, 45.0, 90.0, 133.0] {
            let k = gabor_raw(&params(theta, 3.0, 0.15, ODD_PHASE), 32.0, 19).unwrap();
            assert!(k.sum().abs() < 1e-12, "theta {theta}: {}", k.sum());
        }
    }

    #[test]
    fn isotropic_envelope_rotates_with_theta() {
        let k = 19;
        let a = gabor_kernel(&params(0.0, 4.0, 0.12, 0.3), 32.0, k).unwrap();
        let b = gabor_kernel(&params(90.0, 4.0, 0.12, 0.3), 32.0, k).unwrap();
        // θ = 90° kernel at (row, col) equals θ = 0° kernel at (col, k−1−row):
        // a quarter turn of the grid.
        for r in 0..k {
            for c in 0..k {
                let rotated = a.data()[c * k + (k - 1 - r)];
                assert!((b.data()[r * k + c] - rotated).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn kernels_are_dc_free_and_unit_norm() {
        let p = params(30.0, 1.0, 0.6, 0.7);
        let k = gabor_kernel(&p, 32.0, 19).unwrap();
        let l1: f64 = k.data().iter().map(|v| v.abs()).sum();
        assert!(k.sum().abs() < 1e-2 * l1);
        assert!((sq_norm(k.data()) - 1.0).abs() < 1e-12);
        let (q0, q1) = quadrature_pair(&p, 32.0, 19).unwrap();
        for q in [&q0, &q1] {
            let l1: f64 = q.data().iter().map(|v| v.abs()).sum();
            assert!(q.sum().abs() < 1e-2 * l1);
        }
        assert!(((sq_norm(q0.data()) + sq_norm(q1.data())) / 2.0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_positive_sigma_rejected() {
        assert!(gabor_raw(&params(0.0, 2.0, 0.0, 0.0), 32.0, 19).is_err());
        assert!(gabor_kernel(&params(0.0, 2.0, -1.0, 0.0), 32.0, 19).is_err());
        assert!(gabor_kernel(&params(0.0, 2.0, 0.1, 0.0), 32.0, 18).is_err());
    }

    #[test]
    fn sampling_is_deterministic_and_banded() {
        let mut cfg = config_for(Variant::MidSf);
        cfg.seed = 42;
        let a = sample_gfb(&cfg).unwrap();
        let b = sample_gfb(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 512);
        assert!(a.iter().all(|p| (2.0..=5.6).contains(&p.sf)));
        assert_eq!(a.iter().filter(|p| p.cell_type == CellType::Simple).count(), 256);
        assert!(a[..256].iter().all(|p| p.cell_type == CellType::Simple));
        assert!(a.iter().all(|p| (0.0..180.0).contains(&p.theta)));
        assert_ne!(a, sample_gfb(&cfg.clone().with_seed(43)).unwrap());
    }

    #[test]
    fn inverted_band_rejected() {
        let mut cfg = config_for(Variant::Standard);
        cfg.sf_low = 5.0;
        cfg.sf_high = 2.0;
        assert!(sample_gfb(&cfg).is_err());
    }
}
