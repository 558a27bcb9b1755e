use super::ops::{bilinear, gaussian_blur, map_planes, Border};
use super::table::{ElasticRow, ElasticTable, FactorRow};
use crate::numerics::RngStream;

/// Scale each channel towards its own mean.
pub fn contrast(img: &[f64], h: usize, w: usize, row: &FactorRow) -> Vec<f64> {
    map_planes(img, h, w, |p| {
        let mean = p.iter().sum::<f64>() / p.len() as f64;
        p.iter().map(|x| (x - mean) * row.factor + mean).collect()
    })
}

pub fn elastic(img: &[f64], h: usize, w: usize, table: &ElasticTable, row: &ElasticRow, rng: &mut RngStream) -> Vec<f64> {
    let n = h * w;
    let field = |rng: &mut RngStream| {
        let raw: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
        gaussian_blur(&raw, h, w, table.smoothing, Border::Reflect)
    };
    let dy = field(rng);
    let dx = field(rng);
    let rms = (dy.iter().chain(&dx).map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    let gain = if rms > 0.0 { row.alpha / rms } else { 0.0 };
    map_planes(img, h, w, |p| {
        (0..n)
            .map(|i| {
                let (r, c) = ((i / w) as f64, (i % w) as f64);
                bilinear(p, h, w, r + gain * dy[i], c + gain * dx[i], Border::Reflect)
            })
            .collect()
    })
}

/// Area-weighted box resampling of one axis from `n` to `m < n` samples.
fn box_weights(n: usize, m: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = n as f64 / m as f64;
    (0..m)
        .map(|i| {
            let (lo, hi) = (i as f64 * scale, (i + 1) as f64 * scale);
            let mut taps = Vec::new();
            let mut j = lo.floor() as usize;
            while (j as f64) < hi && j < n {
                let overlap = hi.min(j as f64 + 1.0) - lo.max(j as f64);
                if overlap > 0.0 {
                    taps.push((j, overlap / scale));
                }
                j += 1;
            }
            taps
        })
        .collect()
}

pub fn pixelate(img: &[f64], h: usize, w: usize, row: &FactorRow) -> Vec<f64> {
    let sh = ((h as f64 * row.factor) as usize).max(1);
    let sw = ((w as f64 * row.factor) as usize).max(1);
    let wy = box_weights(h, sh);
    let wx = box_weights(w, sw);
    map_planes(img, h, w, |p| {
        let mut small = vec![0.0; sh * sw];
        for (i, ty) in wy.iter().enumerate() {
            for (j, tx) in wx.iter().enumerate() {
                let mut acc = 0.0;
                for &(r, a) in ty {
                    for &(c, b) in tx {
                        acc += a * b * p[r * w + c];
                    }
                }
                small[i * sw + j] = acc;
            }
        }
        let mut out = Vec::with_capacity(h * w);
        for r in 0..h {
            let sr = ((r as f64 + 0.5) * sh as f64 / h as f64) as usize;
            for c in 0..w {
                let sc = ((c as f64 + 0.5) * sw as f64 / w as f64) as usize;
                out.push(small[sr.min(sh - 1) * sw + sc.min(sw - 1)]);
            }
        }
        out
    })
}
