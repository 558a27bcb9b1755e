use super::ops::{bilinear, correlate, gaussian_blur, map_planes, motion_blur, Border};
use super::table::{DefocusRow, GlassRow, MotionRow, ZoomRow};
use crate::numerics::RngStream;

/// Disk of `radius` px on a 17 × 17 grid, anti-aliased by a 3 × 3 Gaussian
/// of `alias_blur` px, normalised and cropped to its support.
pub fn defocus_kernel(radius: f64, alias_blur: f64) -> (Vec<f64>, usize) {
    const HALF: isize = 8;
    let n = (2 * HALF + 1) as usize;
    let padded = n + 2;
    let mut disk = vec![0.0; padded * padded];
    for y in -HALF..=HALF {
        for x in -HALF..=HALF {
            if ((x * x + y * y) as f64) <= radius * radius {
                disk[(y + HALF + 1) as usize * padded + (x + HALF + 1) as usize] = 1.0;
            }
        }
    }
    let g1 = if alias_blur > 0.0 {
        let e = (-1.0 / (2.0 * alias_blur * alias_blur)).exp();
        [e, 1.0, e]
    } else {
        [0.0, 1.0, 0.0]
    };
    let mut g = [0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            g[i * 3 + j] = g1[i] * g1[j];
        }
    }
    let k = correlate(&disk, padded, padded, &g, 3, 3, Border::Zero);
    let total: f64 = k.iter().sum();
    let k: Vec<f64> = k.iter().map(|v| v / total).collect();
    let c = padded / 2;
    let extent = (0..=c)
        .rev()
        .find(|&d| (0..padded).any(|j| k[(c - d) * padded + j] > 1e-12))
        .unwrap_or(0);
    let size = 2 * extent + 1;
    let mut out = Vec::with_capacity(size * size);
    for r in c - extent..=c + extent {
        out.extend_from_slice(&k[r * padded + c - extent..=r * padded + c + extent]);
    }
    (out, size)
}

pub fn defocus(img: &[f64], h: usize, w: usize, row: &DefocusRow) -> Vec<f64> {
    let (k, size) = defocus_kernel(row.radius, row.alias_blur);
    map_planes(img, h, w, |p| correlate(p, h, w, &k, size, size, Border::Reflect101))
}

/// Blur, locally shuffle pixels, blur again.
pub fn glass(img: &[f64], h: usize, w: usize, row: &GlassRow, rng: &mut RngStream) -> Vec<f64> {
    let plane = h * w;
    let mut x = map_planes(img, h, w, |p| gaussian_blur(p, h, w, row.sigma, Border::Nearest));
    let d = row.max_delta;
    let span = 2 * d as u64 + 1;
    for _ in 0..row.iterations {
        for r in (d..h.saturating_sub(d)).rev() {
            for c in (d..w.saturating_sub(d)).rev() {
                let dy = rng.below(span) as isize - d as isize;
                let dx = rng.below(span) as isize - d as isize;
                let a = r * w + c;
                let b = (r as isize + dy) as usize * w + (c as isize + dx) as usize;
                for ch in 0..3 {
                    x.swap(ch * plane + a, ch * plane + b);
                }
            }
        }
    }
    map_planes(&x, h, w, |p| gaussian_blur(p, h, w, row.sigma, Border::Nearest))
}

pub fn motion(img: &[f64], h: usize, w: usize, row: &MotionRow, rng: &mut RngStream) -> Vec<f64> {
    let angle = rng.uniform(-45.0, 45.0);
    map_planes(img, h, w, |p| motion_blur(p, h, w, row.radius, row.sigma, angle))
}

/// Centre zoom by `z` with bilinear resampling.
fn zoom_plane(plane: &[f64], h: usize, w: usize, z: f64) -> Vec<f64> {
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let mut out = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            let y = cy + (r as f64 - cy) / z;
            let x = cx + (c as f64 - cx) / z;
            out.push(bilinear(plane, h, w, y, x, Border::Nearest));
        }
    }
    out
}

pub fn zoom(img: &[f64], h: usize, w: usize, row: &ZoomRow) -> Vec<f64> {
    let mut acc = img.to_vec();
    for i in 0..row.levels {
        let z = 1.0 + i as f64 * row.step;
        let zoomed = map_planes(img, h, w, |p| zoom_plane(p, h, w, z));
        acc.iter_mut().zip(&zoomed).for_each(|(a, b)| *a += b);
    }
    let n = (row.levels + 1) as f64;
    acc.iter().map(|v| v / n).collect()
}
