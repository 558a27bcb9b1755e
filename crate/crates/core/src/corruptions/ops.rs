//! Plane-level image operations shared by the corruption kinds. A plane is a
//! row-major `h × w` slice; an image is three consecutive planes.

use crate::numerics::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Border {
    /// `d c b a | a b c d | d c b a`
    Reflect,
    /// `d c b | a b c d | c b a`
    Reflect101,
    Nearest,
    Zero,
}

/// Map a possibly out-of-range index into `0..n`, or `None` for zero fill.
pub fn border_index(i: isize, n: usize, border: Border) -> Option<usize> {
    let n = n as isize;
    if (0..n).contains(&i) {
        return Some(i as usize);
    }
    let idx = match border {
        Border::Zero => return None,
        Border::Nearest => i.clamp(0, n - 1),
        Border::Reflect => {
            let period = 2 * n;
            let m = i.rem_euclid(period);
            if m < n {
                m
            } else {
                period - 1 - m
            }
        }
        Border::Reflect101 => {
            if n == 1 {
                0
            } else {
                let period = 2 * n - 2;
                let m = i.rem_euclid(period);
                if m < n {
                    m
                } else {
                    period - m
                }
            }
        }
    };
    Some(idx as usize)
}

fn pixel(plane: &[f64], h: usize, w: usize, y: isize, x: isize, border: Border) -> f64 {
    match (border_index(y, h, border), border_index(x, w, border)) {
        (Some(r), Some(c)) => plane[r * w + c],
        _ => 0.0,
    }
}

/// Bilinear sample at fractional `(y, x)` pixel coordinates.
pub fn bilinear(plane: &[f64], h: usize, w: usize, y: f64, x: f64, border: Border) -> f64 {
    let y0 = y.floor();
    let x0 = x.floor();
    let fy = y - y0;
    let fx = x - x0;
    let (y0, x0) = (y0 as isize, x0 as isize);
    let p = |dy: isize, dx: isize| pixel(plane, h, w, y0 + dy, x0 + dx, border);
    (1.0 - fy) * ((1.0 - fx) * p(0, 0) + fx * p(0, 1)) + fy * ((1.0 - fx) * p(1, 0) + fx * p(1, 1))
}

/// Cross-correlate a plane with a `kh × kw` kernel centred at `(kh/2, kw/2)`.
pub fn correlate(
    plane: &[f64],
    h: usize,
    w: usize,
    kernel: &[f64],
    kh: usize,
    kw: usize,
    border: Border,
) -> Vec<f64> {
    let (cy, cx) = ((kh / 2) as isize, (kw / 2) as isize);
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for i in 0..kh {
                for j in 0..kw {
                    let k = kernel[i * kw + j];
                    if k != 0.0 {
                        let y = r as isize + i as isize - cy;
                        let x = c as isize + j as isize - cx;
                        acc += k * pixel(plane, h, w, y, x, border);
                    }
                }
            }
            out[r * w + c] = acc;
        }
    }
    out
}

/// Normalised 1-D Gaussian truncated at 4σ; empty for σ too small to blur.
pub fn gaussian_kernel1d(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma + 0.5) as usize;
    if sigma <= 0.0 || radius == 0 {
        return Vec::new();
    }
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian blur of one plane.
pub fn gaussian_blur(plane: &[f64], h: usize, w: usize, sigma: f64, border: Border) -> Vec<f64> {
    let k = gaussian_kernel1d(sigma);
    if k.is_empty() {
        return plane.to_vec();
    }
    let rows = correlate(plane, h, w, &k, 1, k.len(), border);
    correlate(&rows, h, w, &k, k.len(), 1, border)
}

pub fn map_planes(image: &[f64], h: usize, w: usize, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(image.len());
    for plane in image.chunks(h * w) {
        out.extend(f(plane));
    }
    out
}

/// Sum of weighted shifted copies along a line at `angle_deg`, with weights
/// from a one-sided Gaussian of width `2·radius + 1`. Borders replicate.
pub fn motion_blur(plane: &[f64], h: usize, w: usize, radius: usize, sigma: f64, angle_deg: f64) -> Vec<f64> {
    let width = 2 * radius + 1;
    let mut weights: Vec<f64> = (0..width)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|v| *v /= s);
    let (sa, ca) = angle_deg.to_radians().sin_cos();
    let mut out = vec![0.0; h * w];
    for (i, &wt) in weights.iter().enumerate() {
        let dy = -((i as f64 * sa - 0.5).ceil()) as isize;
        let dx = -((i as f64 * ca - 0.5).ceil()) as isize;
        if dy.unsigned_abs() >= h || dx.unsigned_abs() >= w {
            break;
        }
        for r in 0..h {
            for c in 0..w {
                out[r * w + c] += wt * pixel(plane, h, w, r as isize - dy, c as isize - dx, Border::Nearest);
            }
        }
    }
    out
}

/// Diamond-square plasma fractal on a `size × size` torus, scaled to [0, 1].
/// `size` must be a power of two. The number of random draws does not depend
/// on `decay`, so two calls sharing a stream state differ only in roughness.
pub fn plasma_fractal(size: usize, decay: f64, rng: &mut RngStream) -> Vec<f64> {
    debug_assert!(size.is_power_of_two());
    let mut map = vec![0.0; size * size];
    let mut step = size;
    let mut wibble = 100.0;
    let idx = |r: usize, c: usize| (r % size) * size + (c % size);
    while step >= 2 {
        let half = step / 2;
        let jitter = |wibble: f64, rng: &mut RngStream| wibble * rng.uniform(-wibble, wibble);
        // squares: centre of each cell from its four corners
        for r in (0..size).step_by(step) {
            for c in (0..size).step_by(step) {
                let s = map[idx(r, c)] + map[idx(r + step, c)] + map[idx(r, c + step)] + map[idx(r + step, c + step)];
                map[idx(r + half, c + half)] = s / 4.0 + jitter(wibble, rng);
            }
        }
        // diamonds on the horizontal edges
        for r in (0..size).step_by(step) {
            for c in (0..size).step_by(step) {
                let s = map[idx(r, c)]
                    + map[idx(r, c + step)]
                    + map[idx(r + half, c + half)]
                    + map[idx(r + size - half, c + half)];
                map[idx(r, c + half)] = s / 4.0 + jitter(wibble, rng);
            }
        }
        // diamonds on the vertical edges
        for r in (0..size).step_by(step) {
            for c in (0..size).step_by(step) {
                let s = map[idx(r, c)]
                    + map[idx(r + step, c)]
                    + map[idx(r + half, c + half)]
                    + map[idx(r + half, c + size - half)];
                map[idx(r + half, c)] = s / 4.0 + jitter(wibble, rng);
            }
        }
        step = half;
        wibble /= decay;
    }
    let lo = map.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = map.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    map.iter().map(|v| (v - lo) / span).collect()
}

pub fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let h = if d == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / d).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / d + 2.0) / 6.0
    } else {
        ((r - g) / d + 4.0) / 6.0
    };
    let s = if max == 0.0 { 0.0 } else { d / max };
    (h, s, max)
}

pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let h6 = (h * 6.0).rem_euclid(6.0);
    let i = h6.floor();
    let f = h6 - i;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match i as u8 {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn border_modes() {
        let got: Vec<_> = (-3..7).map(|i| border_index(i, 4, Border::Reflect).unwrap()).collect();
        assert_eq!(got, [2, 1, 0, 0, 1, 2, 3, 3, 2, 1]);
        let got: Vec<_> = (-3..7).map(|i| border_index(i, 4, Border::Reflect101).unwrap()).collect();
        assert_eq!(got, [3, 2, 1, 0, 1, 2, 3, 2, 1, 0]);
        assert_eq!(border_index(-1, 4, Border::Zero), None);
        assert_eq!(border_index(9, 4, Border::Nearest), Some(3));
    }

    #[test]
    fn hsv_round_trip() {
        let mut rng = RngStream::new(1, 0);
        for _ in 0..1000 {
            let (r, g, b) = (rng.uniform01(), rng.uniform01(), rng.uniform01());
            let (h, s, v) = rgb_to_hsv(r, g, b);
            let (r2, g2, b2) = hsv_to_rgb(h, s, v);
            assert!((r - r2).abs() < 1e-12 && (g - g2).abs() < 1e-12 && (b - b2).abs() < 1e-12);
        }
    }

    #[test]
    fn blur_preserves_constants() {
        let plane = vec![0.3; 64];
        for border in [Border::Reflect, Border::Reflect101, Border::Nearest] {
            let out = gaussian_blur(&plane, 8, 8, 1.3, border);
            assert!(out.iter().all(|v| (v - 0.3).abs() < 1e-12));
        }
        let out = motion_blur(&plane, 8, 8, 3, 1.0, 30.0);
        assert!(out.iter().all(|v| (v - 0.3).abs() < 1e-12));
    }

    #[test]
    fn plasma_is_normalised_and_seeded() {
        let a = plasma_fractal(64, 3.0, &mut RngStream::new(4, 0));
        let b = plasma_fractal(64, 3.0, &mut RngStream::new(4, 0));
        assert_eq!(a, b);
        let lo = a.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!((lo, hi), (0.0, 1.0));
    }
}
