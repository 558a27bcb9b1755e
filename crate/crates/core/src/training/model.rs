use serde::{Deserialize, Serialize};

use super::layers::{bind, param_shapes, Cache, Layer, LayerSpec, ParamRole};
use crate::error::{ensure, Error, Result};
use crate::numerics::{RngStream, Tensor};

/// Layer stack plus the input shape it expects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

fn conv(out_channels: usize, kernel: usize, stride: usize) -> LayerSpec {
    LayerSpec::Conv {
        out_channels,
        kernel,
        stride,
        padding: kernel / 2,
    }
}

impl Architecture {
    /// Bottleneck(C→64, 1×1) → norm → relu → conv 3×3 64→64 → relu →
    /// maxpool 2 → conv 3×3 64→128 → relu → global average → dense(K).
    pub fn desk_default(in_channels: usize, hw: usize, n_classes: usize) -> Self {
        Self {
            input_shape: vec![in_channels, hw, hw],
            layers: vec![
                conv(64, 1, 1),
                LayerSpec::Norm,
                LayerSpec::Relu,
                conv(64, 3, 1),
                LayerSpec::Relu,
                LayerSpec::MaxPool { size: 2, stride: 2 },
                conv(128, 3, 1),
                LayerSpec::Relu,
                LayerSpec::GlobalAvgPool,
                LayerSpec::Dense { out_features: n_classes },
            ],
        }
    }

    /// Narrow four-stage variant of [`Architecture::desk_default`], sized
    /// for multi-model experiments on one CPU core. Every conv is followed
    /// by a norm.
    pub fn compact(in_channels: usize, hw: usize, n_classes: usize) -> Self {
        Self::compact_with_stem(vec![in_channels, hw, hw], conv(16, 1, 1), n_classes)
    }

    /// Pixel-input counterpart of [`Architecture::compact`]: a trainable
    /// stride-2 3×3 conv stands in for the front-end.
    pub fn compact_pixels(hw: usize, n_classes: usize) -> Self {
        let stem = LayerSpec::Conv {
            out_channels: 16,
            kernel: 3,
            stride: 2,
            padding: 1,
        };
        Self::compact_with_stem(vec![3, hw, hw], stem, n_classes)
    }

    fn compact_with_stem(input_shape: Vec<usize>, stem: LayerSpec, n_classes: usize) -> Self {
        let pool = LayerSpec::MaxPool { size: 2, stride: 2 };
        let mut layers = vec![stem, LayerSpec::Norm, LayerSpec::Relu, pool];
        for (i, width) in [32, 32, 64].into_iter().enumerate() {
            layers.extend([conv(width, 3, 1), LayerSpec::Norm, LayerSpec::Relu]);
            if i < 2 {
                layers.push(pool);
            }
        }
        layers.extend([LayerSpec::GlobalAvgPool, LayerSpec::Dense { out_features: n_classes }]);
        Self { input_shape, layers }
    }

    /// Multinomial logistic regression on the flattened input.
    pub fn linear(input_shape: &[usize], n_classes: usize) -> Self {
        Self {
            input_shape: input_shape.to_vec(),
            layers: vec![LayerSpec::Dense { out_features: n_classes }],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamInfo {
    pub name: String,
    pub role: ParamRole,
    pub shape: Vec<usize>,
}

/// Trainable back-end: a bound layer stack and its parameters.
#[derive(Debug, Clone)]
pub struct BackendModel {
    arch: Architecture,
    layers: Vec<Layer>,
    info: Vec<ParamInfo>,
    params: Vec<Vec<f64>>,
    output_len: usize,
}

/// Forward caches of one sample, consumed by [`BackendModel::backward`].
pub struct Tape {
    caches: Vec<Cache>,
}

pub type Grads = Vec<Vec<f64>>;

impl BackendModel {
    /// He-normal weights, zero biases and offsets, unit scales.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        let mut model = Self::unbound(arch)?;
        let init = RngStream::named(seed, "init");
        for (i, (info, p)) in model.info.iter().zip(&mut model.params).enumerate() {
            match info.role {
                ParamRole::Weight => {
                    let fan_in: usize = info.shape[1..].iter().product();
                    let std = (2.0 / fan_in as f64).sqrt();
                    let mut s = init.derive(i as u64);
                    s.fill_standard_normal(p);
                    p.iter_mut().for_each(|v| *v *= std);
                }
                ParamRole::Scale => p.fill(1.0),
                ParamRole::Bias | ParamRole::Offset => p.fill(0.0),
            }
        }
        Ok(model)
    }

    fn unbound(arch: Architecture) -> Result<Self> {
        ensure!(!arch.layers.is_empty(), InvalidArgument, "architecture has no layers");
        let mut shape = arch.input_shape.clone();
        let mut layers = Vec::new();
        let mut info = Vec::new();
        for (li, spec) in arch.layers.iter().enumerate() {
            for (role, pshape) in param_shapes(spec, &shape) {
                info.push(ParamInfo {
                    name: format!("layer{li}.{}", role.name()),
                    role,
                    shape: pshape,
                });
            }
            let first = info.len() - param_shapes(spec, &shape).len();
            let (layer, out) = bind(spec, &shape, first)?;
            layers.push(layer);
            shape = out;
        }
        ensure!(
            shape.len() == 1,
            Shape,
            "architecture must end in a vector of logits, ends in {shape:?}"
        );
        let params = info.iter().map(|p| vec![0.0; p.shape.iter().product()]).collect();
        Ok(Self {
            arch,
            layers,
            info,
            params,
            output_len: shape[0],
        })
    }

    /// Rebuild from an architecture and explicit parameter values.
    pub fn from_params(arch: Architecture, params: Vec<Vec<f64>>) -> Result<Self> {
        let mut model = Self::unbound(arch)?;
        ensure!(
            params.len() == model.params.len(),
            Shape,
            "{} parameter tensors supplied, architecture needs {}",
            params.len(),
            model.params.len()
        );
        for (i, p) in params.iter().enumerate() {
            ensure!(
                p.len() == model.params[i].len(),
                Shape,
                "parameter {} has {} values, expected {}",
                model.info[i].name,
                p.len(),
                model.params[i].len()
            );
        }
        model.params = params;
        Ok(model)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn param_info(&self) -> &[ParamInfo] {
        &self.info
    }

    pub fn params(&self) -> &[Vec<f64>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.params
    }

    pub fn n_parameters(&self) -> usize {
        self.params.iter().map(Vec::len).sum()
    }

    pub fn n_outputs(&self) -> usize {
        self.output_len
    }

    pub fn input_len(&self) -> usize {
        self.arch.input_shape.iter().product()
    }

    pub fn zero_grads(&self) -> Grads {
        self.params.iter().map(|p| vec![0.0; p.len()]).collect()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        ensure!(
            x.len() == self.input_len(),
            Shape,
            "back-end expects input {:?} ({} values), got {}",
            self.arch.input_shape,
            self.input_len(),
            x.len()
        );
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut a = x.to_vec();
        for layer in &self.layers {
            a = layer.forward(&a, &self.params);
        }
        Ok(a)
    }

    pub fn forward_train(&self, x: &[f64]) -> Result<(Vec<f64>, Tape)> {
        self.check_input(x)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut a = x.to_vec();
        for layer in &self.layers {
            let (y, c) = layer.forward_train(&a, &self.params);
            caches.push(c);
            a = y;
        }
        Ok((a, Tape { caches }))
    }

    /// Accumulate `∂L/∂θ` into `grads` given `∂L/∂logits`; returns `∂L/∂x`.
    pub fn backward(&self, tape: &Tape, dlogits: &[f64], grads: &mut Grads) -> Result<Vec<f64>> {
        ensure!(
            dlogits.len() == self.output_len,
            Shape,
            "logit gradient has {} entries, expected {}",
            dlogits.len(),
            self.output_len
        );
        let mut g = dlogits.to_vec();
        for (layer, cache) in self.layers.iter().zip(&tape.caches).rev() {
            g = layer.backward(cache, &g, &self.params, grads);
        }
        Ok(g)
    }

    /// Convenience for tests: logits of a `[C, H, W]` tensor.
    pub fn logits(&self, x: &Tensor) -> Result<Vec<f64>> {
        self.forward(x.data())
    }

    pub fn check_finite(&self) -> Result<()> {
        for (p, info) in self.params.iter().zip(&self.info) {
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("parameter {}", info.name)));
            }
        }
        Ok(())
    }
}
