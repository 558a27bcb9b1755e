//! 2-D cross-correlation (no kernel flip) with zero padding.
//!
//! The forward pass lowers the input to a column matrix (`im2col`) and runs a
//! single matrix product; the backward helpers reuse the same lowering.

use super::gemm::{gemm, Op};
use super::Tensor;
use crate::error::{ensure, Result};

/// Geometry of one convolution: input `[c, h, w]`, square `k × k` window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn new(
        input_shape: &[usize],
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        ensure!(
            input_shape.len() == 3,
            Shape,
            "conv input must be [C, H, W], got {input_shape:?}"
        );
        ensure!(stride >= 1, InvalidArgument, "stride must be positive");
        ensure!(kernel >= 1, InvalidArgument, "kernel size must be positive");
        let (c, h, w) = (input_shape[0], input_shape[1], input_shape[2]);
        ensure!(
            kernel <= h + 2 * padding && kernel <= w + 2 * padding,
            Shape,
            "kernel {kernel}x{kernel} exceeds padded input {}x{}",
            h + 2 * padding,
            w + 2 * padding
        );
        Ok(Self {
            channels: c,
            height: h,
            width: w,
            kernel,
            stride,
            padding,
        })
    }

    pub fn out_height(&self) -> usize {
        (self.height + 2 * self.padding - self.kernel) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width + 2 * self.padding - self.kernel) / self.stride + 1
    }

    /// Rows of the column matrix: `channels · k · k`.
    pub fn patch_len(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn out_len(&self) -> usize {
        self.out_height() * self.out_width()
    }
}

/// Lower `input` (`[c, h, w]` row-major) to a `[c·k·k, oh·ow]` column matrix.
pub fn im2col(input: &[f64], g: &ConvGeometry) -> Vec<f64> {
    let (oh, ow, k) = (g.out_height(), g.out_width(), g.kernel);
    let n_out = oh * ow;
    let mut cols = vec![0.0; g.patch_len() * n_out];
    let pad = g.padding as isize;
    for c in 0..g.channels {
        let plane = &input[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * n_out..(row + 1) * n_out];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ky) as isize - pad;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let src_row = &plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    let dst_row = &mut dst[oy * ow..(oy + 1) * ow];
                    for (ox, d) in dst_row.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - pad;
                        if ix >= 0 && ix < g.width as isize {
                            *d = src_row[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-add a column matrix back onto `[c, h, w]`.
pub fn col2im(cols: &[f64], g: &ConvGeometry) -> Vec<f64> {
    let (oh, ow, k) = (g.out_height(), g.out_width(), g.kernel);
    let n_out = oh * ow;
    let mut out = vec![0.0; g.channels * g.height * g.width];
    let pad = g.padding as isize;
    for c in 0..g.channels {
        let plane = &mut out[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * n_out..(row + 1) * n_out];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ky) as isize - pad;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    for ox in 0..ow {
                        let ix = (ox * g.stride + kx) as isize - pad;
                        if ix >= 0 && ix < g.width as isize {
                            plane[iy as usize * g.width + ix as usize] += src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Cross-correlate `input` `[C_in, H, W]` with `kernels` `[C_out, C_in, k, k]`.
///
/// Output is `[C_out, H', W']` with `H' = (H + 2p − k) / stride + 1`.
pub fn conv2d(input: &Tensor, kernels: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    ensure!(
        kernels.ndim() == 4 && kernels.shape()[2] == kernels.shape()[3],
        Shape,
        "kernels must be [C_out, C_in, k, k], got {:?}",
        kernels.shape()
    );
    ensure!(
        input.ndim() == 3,
        Shape,
        "conv input must be [C, H, W], got {:?}",
        input.shape()
    );
    let (c_out, c_in, k) = (kernels.shape()[0], kernels.shape()[1], kernels.shape()[2]);
    ensure!(
        input.shape()[0] == c_in,
        Shape,
        "input has {} channels but kernels expect C_in = {c_in}",
        input.shape()[0]
    );
    let g = ConvGeometry::new(input.shape(), k, stride, padding)?;
    let cols = im2col(input.data(), &g);
    let mut out = vec![0.0; c_out * g.out_len()];
    gemm(
        c_out,
        g.patch_len(),
        g.out_len(),
        1.0,
        kernels.data(),
        Op::N,
        &cols,
        Op::N,
        0.0,
        &mut out,
    );
    Tensor::new(&[c_out, g.out_height(), g.out_width()], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_kernel_is_identity() {
        let x = Tensor::new(&[1, 3, 3], (0..9).map(|v| v as f64).collect()).unwrap();
        let k = Tensor::new(&[1, 1, 1, 1], vec![1.0]).unwrap();
        assert_eq!(conv2d(&x, &k, 1, 0).unwrap(), x);
    }

    #[test]
    fn zero_kernel_gives_zero() {
        let x = Tensor::new(&[2, 5, 5], (0..50).map(|v| (v as f64).sin()).collect()).unwrap();
        let k = Tensor::zeros(&[3, 2, 3, 3]);
        let y = conv2d(&x, &k, 2, 1).unwrap();
        assert_eq!(y.shape(), &[3, 3, 3]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn channel_mismatch_is_described() {
        let x = Tensor::zeros(&[2, 4, 4]);
        let k = Tensor::zeros(&[1, 3, 3, 3]);
        let err = conv2d(&x, &k, 1, 0).unwrap_err().to_string();
        assert!(err.contains("2 channels") && err.contains("C_in = 3"), "{err}");
    }

    #[test]
    fn oversized_kernel_rejected() {
        let x = Tensor::zeros(&[1, 2, 2]);
        let k = Tensor::zeros(&[1, 1, 5, 5]);
        assert!(conv2d(&x, &k, 1, 1).is_err());
        assert!(conv2d(&x, &k, 1, 2).is_ok());
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let g = ConvGeometry::new(&[2, 5, 6], 3, 2, 1).unwrap();
        let x: Vec<f64> = (0..60).map(|i| (i as f64 * 0.3).sin()).collect();
        let y: Vec<f64> = (0..g.patch_len() * g.out_len())
            .map(|i| (i as f64 * 0.7).cos())
            .collect();
        let lhs: f64 = im2col(&x, &g).iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(col2im(&y, &g)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }
}
