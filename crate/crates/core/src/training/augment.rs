use serde::{Deserialize, Serialize};

use crate::corruptions::ops::{bilinear, Border};
use crate::error::{ensure, Result};
use crate::numerics::{RngStream, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentPolicy {
    pub scale: [f64; 2],
    pub rotation_deg: f64,
    /// Maximum shift as a fraction of width/height.
    pub shift: f64,
    pub flip_prob: f64,
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self {
            scale: [1.0, 1.2],
            rotation_deg: 30.0,
            shift: 0.05,
            flip_prob: 0.5,
            mean: [0.5; 3],
            std: [0.5; 3],
        }
    }
}

/// Gaussian-noise training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GntConfig {
    pub enabled: bool,
    pub sigma: f64,
    pub fraction: f64,
}

impl Default for GntConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            sigma: 0.6,
            fraction: 0.5,
        }
    }
}

/// `(x − mean) / std` per channel.
pub fn normalize(image: &Tensor, policy: &AugmentPolicy) -> Result<Tensor> {
    ensure!(
        image.ndim() == 3 && image.shape()[0] == 3,
        Shape,
        "expected a [3, H, W] image, got {:?}",
        image.shape()
    );
    let plane = image.shape()[1] * image.shape()[2];
    let mut out = image.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        let c = i / plane;
        *v = (*v - policy.mean[c]) / policy.std[c];
    }
    Ok(out)
}

/// Random scale → rotation → shift → horizontal flip, composed into one
/// inverse map and resampled bilinearly with zero fill. Draws exactly five
/// uniforms from `stream`. Output stays in pixel units, not normalised.
pub fn augment_geometric(image: &Tensor, policy: &AugmentPolicy, stream: &mut RngStream) -> Result<Tensor> {
    ensure!(
        image.ndim() == 3 && image.shape()[0] == 3,
        Shape,
        "expected a [3, H, W] image, got {:?}",
        image.shape()
    );
    let (h, w) = (image.shape()[1], image.shape()[2]);
    let s = stream.uniform(policy.scale[0], policy.scale[1]);
    let theta = stream.uniform(-policy.rotation_deg, policy.rotation_deg).to_radians();
    let ty = stream.uniform(-policy.shift, policy.shift) * h as f64;
    let tx = stream.uniform(-policy.shift, policy.shift) * w as f64;
    let flip = stream.uniform01() < policy.flip_prob;
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let (sn, cs) = theta.sin_cos();
    let plane = h * w;
    let mut out = vec![0.0; 3 * plane];
    for r in 0..h {
        for c in 0..w {
            // undo flip, shift, rotation and scale in turn
            let mut x = c as f64 - cx;
            let y = r as f64 - cy;
            if flip {
                x = -x;
            }
            let (x, y) = (x - tx, y - ty);
            let (x, y) = (cs * x + sn * y, -sn * x + cs * y);
            let (x, y) = (x / s + cx, y / s + cy);
            for ch in 0..3 {
                let p = &image.data()[ch * plane..(ch + 1) * plane];
                out[ch * plane + r * w + c] = bilinear(p, h, w, y, x, Border::Zero);
            }
        }
    }
    Tensor::new(image.shape(), out)
}

/// Training path: geometric augmentation then normalisation. Evaluation
/// path (`train_mode = false`): normalisation only, no draws.
pub fn augment(image: &Tensor, policy: &AugmentPolicy, stream: &mut RngStream, train_mode: bool) -> Result<Tensor> {
    if train_mode {
        normalize(&augment_geometric(image, policy, stream)?, policy)
    } else {
        normalize(image, policy)
    }
}

/// The additive noise GNT would apply: `Some` with probability `fraction`.
/// Always draws the Bernoulli first, then the noise only when injecting.
pub fn gnt_draw(len: usize, config: &GntConfig, stream: &mut RngStream) -> Option<Vec<f64>> {
    if !stream.bernoulli(config.fraction) {
        return None;
    }
    let mut noise = vec![0.0; len];
    stream.fill_standard_normal(&mut noise);
    noise.iter_mut().for_each(|v| *v *= config.sigma);
    Some(noise)
}

/// Add the drawn noise to a [0, 1] image and clamp; identity otherwise.
pub fn gnt_inject(image: &Tensor, config: &GntConfig, stream: &mut RngStream) -> Tensor {
    match gnt_draw(image.len(), config, stream) {
        Some(noise) => {
            let mut out = image.clone();
            for (v, n) in out.data_mut().iter_mut().zip(noise) {
                *v = (*v + n).clamp(0.0, 1.0);
            }
            out
        }
        None => image.clone(),
    }
}
