use std::f64::consts::{PI, TAU};

use super::ops::{gaussian_blur, hsv_to_rgb, motion_blur, plasma_fractal, rgb_to_hsv, Border};
use super::table::{BrightnessRow, FogRow, FrostRow, SnowRow, SnowTable};
use crate::numerics::RngStream;

/// Flake layer: thresholded, smoothed unit-variance noise, streaked along a
/// random downward angle. With a shared kernel the layer is pointwise
/// non-decreasing as the threshold falls and the intensity rises.
fn snow_layer(h: usize, w: usize, table: &SnowTable, row: &SnowRow, rng: &mut RngStream) -> Vec<f64> {
    let mut noise = vec![0.0; h * w];
    rng.fill_standard_normal(&mut noise);
    let angle = rng.uniform(-135.0, -45.0);
    let smooth = gaussian_blur(&noise, h, w, table.flake_sigma, Border::Reflect);
    let mean = smooth.iter().sum::<f64>() / smooth.len() as f64;
    let sd = (smooth.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / smooth.len() as f64).sqrt();
    let flakes: Vec<f64> = smooth
        .iter()
        .map(|v| {
            let z = (v - mean) / sd.max(1e-12);
            row.intensity * (2.0 * (z - row.threshold)).clamp(0.0, 1.0)
        })
        .collect();
    motion_blur(&flakes, h, w, table.motion_radius, table.motion_sigma, angle)
}

pub fn snow(img: &[f64], h: usize, w: usize, table: &SnowTable, row: &SnowRow, rng: &mut RngStream) -> Vec<f64> {
    let plane = h * w;
    let layer = snow_layer(h, w, table, row, rng);
    let mut out = img.to_vec();
    for i in 0..plane {
        let gray = 0.299 * img[i] + 0.587 * img[plane + i] + 0.114 * img[2 * plane + i];
        let lift = gray * 1.5 + 0.5;
        // layer plus its 180° rotation, so flakes cover the whole frame
        let flake = layer[i] + layer[plane - 1 - i];
        for ch in 0..3 {
            let x = img[ch * plane + i];
            let base = (1.0 - row.whiten) * x + row.whiten * x.max(lift);
            out[ch * plane + i] = base + flake;
        }
    }
    out
}

fn deposit(canvas: &mut [f64], h: usize, w: usize, y: f64, x: f64, v: f64) {
    let r = (y.round() as isize).rem_euclid(h as isize) as usize;
    let c = (x.round() as isize).rem_euclid(w as isize) as usize;
    canvas[r * w + c] += v;
}

#[allow(clippy::too_many_arguments)]
fn needle(canvas: &mut [f64], h: usize, w: usize, y: f64, x: f64, angle: f64, len: f64, depth: u32) {
    let (s, c) = angle.sin_cos();
    let steps = (len * 2.0).ceil() as usize;
    for i in 0..=steps {
        let t = i as f64 * 0.5;
        deposit(canvas, h, w, y - t * s, x + t * c, 0.8 * (1.0 - t / len).max(0.0));
    }
    if depth > 0 {
        for k in 1..=2 {
            let t = len * k as f64 / 3.0;
            let (by, bx) = (y - t * s, x + t * c);
            for side in [-1.0, 1.0] {
                needle(canvas, h, w, by, bx, angle + side * PI / 3.0, len * 0.4, depth - 1);
            }
        }
    }
}

/// Procedural frost: a plasma haze with branching ice needles grown from
/// random nucleation sites, tinted towards blue-white.
pub fn frost_texture(h: usize, w: usize, rng: &mut RngStream) -> Vec<f64> {
    let haze = plasma_fractal(h, 2.0, rng);
    let mut crystals = vec![0.0; h * w];
    for _ in 0..12 {
        let y = rng.uniform(0.0, h as f64);
        let x = rng.uniform(0.0, w as f64);
        let arms = 4 + rng.below(4) as usize;
        let base = rng.uniform(0.0, TAU);
        for j in 0..arms {
            let angle = base + TAU * j as f64 / arms as f64 + rng.uniform(-0.3, 0.3);
            let len = rng.uniform(6.0, 18.0);
            needle(&mut crystals, h, w, y, x, angle, len, 2);
        }
    }
    let plane = h * w;
    let mut tex = vec![0.0; 3 * plane];
    let tint = [0.85, 0.93, 1.0];
    for i in 0..plane {
        let ice = 1.0 - (-1.5 * crystals[i]).exp();
        let lum = (0.3 + 0.4 * haze[i] + 0.6 * ice).clamp(0.0, 1.0);
        for ch in 0..3 {
            tex[ch * plane + i] = tint[ch] * lum + (1.0 - tint[ch]) * 0.5;
        }
    }
    tex
}

pub fn frost(img: &[f64], h: usize, w: usize, row: &FrostRow, rng: &mut RngStream) -> Vec<f64> {
    let tex = frost_texture(h, w, rng);
    img.iter()
        .zip(&tex)
        .map(|(x, f)| (1.0 - row.weight) * x + row.weight * f)
        .collect()
}

pub fn fog(img: &[f64], h: usize, w: usize, row: &FogRow, rng: &mut RngStream) -> Vec<f64> {
    let plane = h * w;
    let haze = plasma_fractal(h, row.decay, rng);
    let max = img.iter().copied().fold(0.0, f64::max);
    let scale = max / (max + row.strength);
    img.iter()
        .enumerate()
        .map(|(i, x)| (x + row.strength * haze[i % plane]) * scale)
        .collect()
}

pub fn brightness(img: &[f64], h: usize, w: usize, row: &BrightnessRow) -> Vec<f64> {
    let plane = h * w;
    let mut out = vec![0.0; img.len()];
    for i in 0..plane {
        let (hh, s, v) = rgb_to_hsv(img[i], img[plane + i], img[2 * plane + i]);
        let (r, g, b) = hsv_to_rgb(hh, s, (v + row.shift).clamp(0.0, 1.0));
        out[i] = r;
        out[plane + i] = g;
        out[2 * plane + i] = b;
    }
    out
}
