use rayon::prelude::*;

use super::config::{NoiseMode, VOneBlockConfig};
use super::gabor::{gabor_kernel, quadrature_pair, sample_gfb, CellType, GaborChannelParams};
use crate::error::{ensure, Error, Result};
use crate::numerics::gemm::{gemm, Op};
use crate::numerics::{fnv1a64, im2col, ConvGeometry, RngStream, Tensor};

/// Realised fixed-weight front-end.
///
/// Kernel rows are ordered: the `n_simple` simple kernels, then for each
/// complex channel its phase-φ and phase-(φ + π/2) kernels, adjacent. The
/// block has no mutating methods; its weights never change after
/// construction.
#[derive(Debug, Clone)]
pub struct VOneBlock {
    config: VOneBlockConfig,
    params: Vec<GaborChannelParams>,
    /// `[n_kernels, k·k]`, applied to the channel-mean luminance.
    luminance_kernels: Vec<f64>,
}

impl VOneBlock {
    pub fn new(config: VOneBlockConfig) -> Result<Self> {
        let params = sample_gfb(&config)?;
        Self::from_params(config, params)
    }

    pub fn from_params(config: VOneBlockConfig, params: Vec<GaborChannelParams>) -> Result<Self> {
        config.validate()?;
        ensure!(
            params.len() == config.n_channels(),
            Shape,
            "{} channel parameters for a {}-channel config",
            params.len(),
            config.n_channels()
        );
        let mut kernels = Vec::with_capacity(config.n_kernels() * config.kernel_px.pow(2));
        for (i, p) in params.iter().enumerate() {
            let expected = if i < config.n_simple {
                CellType::Simple
            } else {
                CellType::Complex
            };
            ensure!(
                p.cell_type == expected,
                InvalidArgument,
                "channel {i} has cell type {:?}, expected {expected:?}",
                p.cell_type
            );
            match p.cell_type {
                CellType::Simple => {
                    kernels.extend_from_slice(gabor_kernel(p, config.ppd, config.kernel_px)?.data())
                }
                CellType::Complex => {
                    let (a, b) = quadrature_pair(p, config.ppd, config.kernel_px)?;
                    kernels.extend_from_slice(a.data());
                    kernels.extend_from_slice(b.data());
                }
            }
        }
        Self::from_parts(config, params, kernels)
    }

    pub(crate) fn from_parts(
        config: VOneBlockConfig,
        params: Vec<GaborChannelParams>,
        luminance_kernels: Vec<f64>,
    ) -> Result<Self> {
        ensure!(
            luminance_kernels.len() == config.n_kernels() * config.kernel_px.pow(2),
            Shape,
            "kernel payload has {} values, expected {}",
            luminance_kernels.len(),
            config.n_kernels() * config.kernel_px.pow(2)
        );
        Ok(Self {
            config,
            params,
            luminance_kernels,
        })
    }

    pub fn config(&self) -> &VOneBlockConfig {
        &self.config
    }

    pub fn params(&self) -> &[GaborChannelParams] {
        &self.params
    }

    pub fn n_channels(&self) -> usize {
        self.config.n_channels()
    }

    /// Single-channel kernels `[n_kernels, k, k]`.
    pub fn luminance_kernels(&self) -> Tensor {
        let k = self.config.kernel_px;
        Tensor::new(
            &[self.config.n_kernels(), k, k],
            self.luminance_kernels.clone(),
        )
        .expect("kernel payload checked at construction")
    }

    /// Kernels as applied to RGB input, `[n_kernels, 3, k, k]`: each Gabor is
    /// replicated over the three channels with weight 1/3.
    pub fn kernels(&self) -> Tensor {
        let k2 = self.config.kernel_px.pow(2);
        let mut data = Vec::with_capacity(self.luminance_kernels.len() * 3);
        for kern in self.luminance_kernels.chunks(k2) {
            for _ in 0..3 {
                data.extend(kern.iter().map(|v| v / 3.0));
            }
        }
        let k = self.config.kernel_px;
        Tensor::new(&[self.config.n_kernels(), 3, k, k], data).expect("consistent shape")
    }

    pub(crate) fn raw_kernels(&self) -> &[f64] {
        &self.luminance_kernels
    }

    /// FNV-1a digest of the kernel bytes.
    pub fn checksum(&self) -> u64 {
        let bytes: Vec<u8> = self
            .luminance_kernels
            .iter()
            .flat_map(|v| v.to_le_bytes())
            .collect();
        fnv1a64(&bytes)
    }

    /// Output spatial size for an `h × w` input.
    pub fn output_hw(&self, h: usize, w: usize) -> (usize, usize) {
        let k = self.config.kernel_px;
        let p = self.config.padding();
        let s = self.config.stride;
        ((h + 2 * p - k) / s + 1, (w + 2 * p - k) / s + 1)
    }

    /// Linear-nonlinear stage for one normalised image `[3, H, W]`: simple
    /// channels are rectified, complex channels take the quadrature energy.
    /// Returns the noiseless mean activation `[C, H', W']`.
    pub fn activations(&self, image: &Tensor) -> Result<Tensor> {
        ensure!(
            image.ndim() == 3 && image.shape()[0] == 3,
            Shape,
            "front-end expects a [3, H, W] image, got {:?}",
            image.shape()
        );
        let (h, w) = (image.shape()[1], image.shape()[2]);
        let plane = h * w;
        let d = image.data();
        let lum: Vec<f64> = (0..plane)
            .map(|i| (d[i] + d[plane + i] + d[2 * plane + i]) / 3.0)
            .collect();
        let g = ConvGeometry::new(
            &[1, h, w],
            self.config.kernel_px,
            self.config.stride,
            self.config.padding(),
        )?;
        let cols = im2col(&lum, &g);
        let n_out = g.out_len();
        let nk = self.config.n_kernels();
        let mut resp = vec![0.0; nk * n_out];
        gemm(
            nk,
            g.patch_len(),
            n_out,
            1.0,
            &self.luminance_kernels,
            Op::N,
            &cols,
            Op::N,
            0.0,
            &mut resp,
        );
        let ns = self.config.n_simple;
        let mut out = Vec::with_capacity(self.n_channels() * n_out);
        out.extend(resp[..ns * n_out].iter().map(|&v| v.max(0.0)));
        for j in 0..self.config.n_complex {
            let a = &resp[(ns + 2 * j) * n_out..(ns + 2 * j + 1) * n_out];
            let b = &resp[(ns + 2 * j + 1) * n_out..(ns + 2 * j + 2) * n_out];
            out.extend(a.iter().zip(b).map(|(x, y)| (x * x + y * y).sqrt()));
        }
        Tensor::new(&[self.n_channels(), g.out_height(), g.out_width()], out)
    }

    /// Full front-end for one image: activations followed by stochasticity.
    pub fn forward_image(&self, image: &Tensor, noise: &mut RngStream) -> Result<Tensor> {
        let mu = self.activations(image)?;
        apply_stochasticity(&mu, self.config.noise_mode, self.config.noise_gamma, noise)
    }

    pub fn is_stochastic(&self) -> bool {
        self.config.noise_mode != NoiseMode::None
    }
}

/// Add activity-dependent Gaussian noise: `μ + σ(γμ)·ε/γ` with
/// `σ(m) = √m` (Poisson) or `√m / 2` (sub-Poisson); identity for `None`.
/// Results are not clamped.
pub fn apply_stochasticity(
    mu: &Tensor,
    mode: NoiseMode,
    gamma: f64,
    stream: &mut RngStream,
) -> Result<Tensor> {
    if let Some(bad) = mu.data().iter().find(|&&v| v < 0.0 || v.is_nan()) {
        return Err(Error::InvalidArgument(format!(
            "stochasticity input must be non-negative, found {bad}"
        )));
    }
    ensure!(gamma > 0.0, InvalidArgument, "gamma must be positive");
    let scale = match mode {
        NoiseMode::None => return Ok(mu.clone()),
        NoiseMode::Poisson => 1.0,
        NoiseMode::SubPoisson => 0.5,
    };
    let mut eps = vec![0.0; mu.len()];
    stream.fill_standard_normal(&mut eps);
    let mut out = mu.clone();
    for (v, e) in out.data_mut().iter_mut().zip(&eps) {
        *v += scale * (*v / gamma).sqrt() * e;
    }
    Ok(out)
}

/// Batched forward over `[N, 3, H, W]`; image `i` draws its noise from
/// `noise_stream.derive(i)`, so results do not depend on scheduling.
pub fn vone_forward(block: &VOneBlock, batch: &Tensor, noise_stream: &RngStream) -> Result<Tensor> {
    ensure!(
        batch.ndim() == 4,
        Shape,
        "batch must be [N, 3, H, W], got {:?}",
        batch.shape()
    );
    ensure!(
        batch.shape()[1] == 3,
        Shape,
        "front-end expects 3 input channels, got {}",
        batch.shape()[1]
    );
    let outputs: Vec<Tensor> = (0..batch.shape()[0])
        .into_par_iter()
        .map(|i| {
            let mut stream = noise_stream.derive(i as u64);
            block.forward_image(&batch.index_axis0(i), &mut stream)
        })
        .collect::<Result<_>>()?;
    Tensor::stack(&outputs)
}
