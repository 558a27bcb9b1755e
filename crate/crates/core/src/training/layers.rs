//! Per-sample layers with hand-written backward passes.
//!
//! Every layer maps one `[C, H, W]` activation (flattened, row-major) to the
//! next. Batches are handled by the caller, one sample per task, so no layer
//! mixes information across samples.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::numerics::gemm::{gemm, Op};
use crate::numerics::{col2im, im2col, ConvGeometry};

pub const NORM_EPS: f64 = 1e-5;

/// Architecture description of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Convolution with bias; cross-correlation, zero padding.
    Conv {
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    /// Per-sample normalisation over all of `C × H × W`, then a per-channel
    /// scale and offset.
    Norm,
    Relu,
    MaxPool { size: usize, stride: usize },
    GlobalAvgPool,
    /// Fully connected over the flattened input.
    Dense { out_features: usize },
}

/// Parameter slot of a layer, as indices into the model's parameter list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    Weight,
    Bias,
    Scale,
    Offset,
}

impl ParamRole {
    /// Weight decay applies to weights only.
    pub fn decays(self) -> bool {
        self == ParamRole::Weight
    }

    pub fn name(self) -> &'static str {
        match self {
            ParamRole::Weight => "weight",
            ParamRole::Bias => "bias",
            ParamRole::Scale => "scale",
            ParamRole::Offset => "offset",
        }
    }
}

/// A layer bound to concrete input/output shapes and parameter indices.
#[derive(Debug, Clone)]
pub(crate) enum Layer {
    Conv { geom: ConvGeometry, out_channels: usize, w: usize, b: usize },
    Norm { plane: usize, gamma: usize, beta: usize },
    Relu,
    MaxPool { channels: usize, height: usize, width: usize, size: usize, stride: usize },
    GlobalAvgPool { plane: usize },
    Dense { inputs: usize, outputs: usize, w: usize, b: usize },
}

/// Shapes of the parameters a layer needs, with their roles.
pub(crate) fn param_shapes(spec: &LayerSpec, input: &[usize]) -> Vec<(ParamRole, Vec<usize>)> {
    match *spec {
        LayerSpec::Conv { out_channels, kernel, .. } => vec![
            (ParamRole::Weight, vec![out_channels, input[0], kernel, kernel]),
            (ParamRole::Bias, vec![out_channels]),
        ],
        LayerSpec::Norm => vec![
            (ParamRole::Scale, vec![input[0]]),
            (ParamRole::Offset, vec![input[0]]),
        ],
        LayerSpec::Dense { out_features } => vec![
            (ParamRole::Weight, vec![out_features, input.iter().product()]),
            (ParamRole::Bias, vec![out_features]),
        ],
        _ => Vec::new(),
    }
}

/// Resolve a spec against its input shape. `first_param` is the index its
/// first parameter will occupy. Returns the layer and its output shape.
pub(crate) fn bind(spec: &LayerSpec, input: &[usize], first_param: usize) -> Result<(Layer, Vec<usize>)> {
    let shape3 = || -> Result<(usize, usize, usize)> {
        ensure!(
            input.len() == 3,
            Shape,
            "{spec:?} needs a [C, H, W] input, got {input:?}"
        );
        Ok((input[0], input[1], input[2]))
    };
    Ok(match *spec {
        LayerSpec::Conv { out_channels, kernel, stride, padding } => {
            ensure!(out_channels > 0, InvalidArgument, "conv needs at least one output channel");
            let geom = ConvGeometry::new(input, kernel, stride, padding)?;
            let out = vec![out_channels, geom.out_height(), geom.out_width()];
            (Layer::Conv { geom, out_channels, w: first_param, b: first_param + 1 }, out)
        }
        LayerSpec::Norm => {
            let (_, h, w) = shape3()?;
            (
                Layer::Norm { plane: h * w, gamma: first_param, beta: first_param + 1 },
                input.to_vec(),
            )
        }
        LayerSpec::Relu => (Layer::Relu, input.to_vec()),
        LayerSpec::MaxPool { size, stride } => {
            let (c, h, w) = shape3()?;
            ensure!(size >= 1 && stride >= 1, InvalidArgument, "pool size and stride must be positive");
            ensure!(size <= h && size <= w, Shape, "pool window {size} exceeds input {h}x{w}");
            let out = vec![c, (h - size) / stride + 1, (w - size) / stride + 1];
            (Layer::MaxPool { channels: c, height: h, width: w, size, stride }, out)
        }
        LayerSpec::GlobalAvgPool => {
            let (c, h, w) = shape3()?;
            (Layer::GlobalAvgPool { plane: h * w }, vec![c])
        }
        LayerSpec::Dense { out_features } => {
            ensure!(out_features > 0, InvalidArgument, "dense layer needs at least one output");
            let inputs = input.iter().product();
            (
                Layer::Dense { inputs, outputs: out_features, w: first_param, b: first_param + 1 },
                vec![out_features],
            )
        }
    })
}

/// What a layer keeps from its forward pass for the backward pass.
pub(crate) enum Cache {
    Conv { cols: Vec<f64> },
    Norm { xhat: Vec<f64>, inv_std: f64 },
    Relu { input: Vec<f64> },
    MaxPool { argmax: Vec<usize>, in_len: usize },
    GlobalAvgPool,
    Dense { input: Vec<f64> },
}

impl Layer {
    pub fn forward(&self, x: &[f64], params: &[Vec<f64>]) -> Vec<f64> {
        self.forward_impl(x, params, false).0
    }

    pub fn forward_train(&self, x: &[f64], params: &[Vec<f64>]) -> (Vec<f64>, Cache) {
        let (y, c) = self.forward_impl(x, params, true);
        (y, c.expect("cache requested"))
    }

    fn forward_impl(&self, x: &[f64], params: &[Vec<f64>], keep: bool) -> (Vec<f64>, Option<Cache>) {
        match *self {
            Layer::Conv { ref geom, out_channels, w, b } => {
                let cols = im2col(x, geom);
                let n = geom.out_len();
                let mut y = vec![0.0; out_channels * n];
                for (o, row) in y.chunks_mut(n).enumerate() {
                    row.fill(params[b][o]);
                }
                gemm(out_channels, geom.patch_len(), n, 1.0, &params[w], Op::N, &cols, Op::N, 1.0, &mut y);
                (y, keep.then_some(Cache::Conv { cols }))
            }
            Layer::Norm { plane, gamma, beta } => {
                let n = x.len() as f64;
                let mean = x.iter().sum::<f64>() / n;
                let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                let inv_std = 1.0 / (var + NORM_EPS).sqrt();
                let xhat: Vec<f64> = x.iter().map(|v| (v - mean) * inv_std).collect();
                let y = xhat
                    .iter()
                    .enumerate()
                    .map(|(i, v)| params[gamma][i / plane] * v + params[beta][i / plane])
                    .collect();
                (y, keep.then_some(Cache::Norm { xhat, inv_std }))
            }
            Layer::Relu => {
                let y = x.iter().map(|v| v.max(0.0)).collect();
                (y, keep.then(|| Cache::Relu { input: x.to_vec() }))
            }
            Layer::MaxPool { channels, height, width, size, stride } => {
                let oh = (height - size) / stride + 1;
                let ow = (width - size) / stride + 1;
                let mut y = Vec::with_capacity(channels * oh * ow);
                let mut argmax = Vec::with_capacity(if keep { channels * oh * ow } else { 0 });
                for c in 0..channels {
                    let base = c * height * width;
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut best = base + oy * stride * width + ox * stride;
                            for ky in 0..size {
                                for kx in 0..size {
                                    let i = base + (oy * stride + ky) * width + ox * stride + kx;
                                    if x[i] > x[best] {
                                        best = i;
                                    }
                                }
                            }
                            y.push(x[best]);
                            if keep {
                                argmax.push(best);
                            }
                        }
                    }
                }
                (y, keep.then_some(Cache::MaxPool { argmax, in_len: x.len() }))
            }
            Layer::GlobalAvgPool { plane } => {
                let y = x.chunks(plane).map(|p| p.iter().sum::<f64>() / plane as f64).collect();
                (y, keep.then_some(Cache::GlobalAvgPool))
            }
            Layer::Dense { inputs, outputs, w, b } => {
                let mut y = params[b].clone();
                gemm(outputs, inputs, 1, 1.0, &params[w], Op::N, x, Op::N, 1.0, &mut y);
                (y, keep.then(|| Cache::Dense { input: x.to_vec() }))
            }
        }
    }

    /// Accumulate parameter gradients into `grads` and return the gradient
    /// with respect to the layer input.
    pub fn backward(&self, cache: &Cache, dy: &[f64], params: &[Vec<f64>], grads: &mut [Vec<f64>]) -> Vec<f64> {
        match (self, cache) {
            (&Layer::Conv { ref geom, out_channels, w, b }, Cache::Conv { cols }) => {
                let n = geom.out_len();
                let p = geom.patch_len();
                for (o, row) in dy.chunks(n).enumerate() {
                    grads[b][o] += row.iter().sum::<f64>();
                }
                gemm(out_channels, n, p, 1.0, dy, Op::N, cols, Op::T, 1.0, &mut grads[w]);
                let mut dcols = vec![0.0; p * n];
                gemm(p, out_channels, n, 1.0, &params[w], Op::T, dy, Op::N, 0.0, &mut dcols);
                col2im(&dcols, geom)
            }
            (&Layer::Norm { plane, gamma, beta }, Cache::Norm { xhat, inv_std }) => {
                let n = xhat.len() as f64;
                let mut dxhat = Vec::with_capacity(dy.len());
                for (i, (&g, &xh)) in dy.iter().zip(xhat).enumerate() {
                    let c = i / plane;
                    grads[gamma][c] += g * xh;
                    grads[beta][c] += g;
                    dxhat.push(g * params[gamma][c]);
                }
                let sum_d: f64 = dxhat.iter().sum();
                let sum_dx: f64 = dxhat.iter().zip(xhat).map(|(d, x)| d * x).sum();
                dxhat
                    .iter()
                    .zip(xhat)
                    .map(|(d, x)| inv_std * (d - sum_d / n - x * sum_dx / n))
                    .collect()
            }
            (Layer::Relu, Cache::Relu { input }) => dy
                .iter()
                .zip(input)
                .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                .collect(),
            (Layer::MaxPool { .. }, Cache::MaxPool { argmax, in_len }) => {
                let mut dx = vec![0.0; *in_len];
                for (g, &i) in dy.iter().zip(argmax) {
                    dx[i] += g;
                }
                dx
            }
            (&Layer::GlobalAvgPool { plane }, Cache::GlobalAvgPool) => dy
                .iter()
                .flat_map(|g| std::iter::repeat_n(g / plane as f64, plane))
                .collect(),
            (&Layer::Dense { inputs, outputs, w, b }, Cache::Dense { input }) => {
                for (gb, g) in grads[b].iter_mut().zip(dy) {
                    *gb += g;
                }
                gemm(outputs, 1, inputs, 1.0, dy, Op::N, input, Op::N, 1.0, &mut grads[w]);
                let mut dx = vec![0.0; inputs];
                gemm(inputs, outputs, 1, 1.0, &params[w], Op::T, dy, Op::N, 0.0, &mut dx);
                dx
            }
            _ => unreachable!("cache does not belong to this layer"),
        }
    }
}
