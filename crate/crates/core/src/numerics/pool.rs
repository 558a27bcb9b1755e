use super::Tensor;
use crate::error::{ensure, Result};

/// Max pooling over `k × k` windows, no padding.
pub fn maxpool2d(input: &Tensor, k: usize, stride: usize) -> Result<Tensor> {
    maxpool2d_with_argmax(input, k, stride).map(|(t, _)| t)
}

/// Max pooling that also returns, per output cell, the flat input index of
/// the maximum (first occurrence on ties).
pub fn maxpool2d_with_argmax(
    input: &Tensor,
    k: usize,
    stride: usize,
) -> Result<(Tensor, Vec<usize>)> {
    ensure!(k >= 1, InvalidArgument, "pool window must be >= 1");
    ensure!(stride >= 1, InvalidArgument, "pool stride must be >= 1");
    ensure!(
        input.ndim() == 3,
        Shape,
        "maxpool input must be [C, H, W], got {:?}",
        input.shape()
    );
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    ensure!(
        k <= h && k <= w,
        Shape,
        "pool window {k} exceeds input extent {h}x{w}"
    );
    let oh = (h - k) / stride + 1;
    let ow = (w - k) / stride + 1;
    let src = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut idx = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let base = ch * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * stride * w + ox * stride;
                for ky in 0..k {
                    let row = base + (oy * stride + ky) * w + ox * stride;
                    for j in row..row + k {
                        if src[j] > src[best] {
                            best = j;
                        }
                    }
                }
                out.push(src[best]);
                idx.push(best);
            }
        }
    }
    Ok((Tensor::new(&[c, oh, ow], out)?, idx))
}
