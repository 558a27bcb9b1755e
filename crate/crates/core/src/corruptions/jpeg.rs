//! Baseline JPEG round trip: 8-bit quantisation, JFIF YCbCr, 4:2:0 chroma,
//! 8 × 8 DCT with IJG quality-scaled tables. Entropy coding is lossless and
//! therefore skipped.

use std::f64::consts::PI;

const LUMA: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, 12, 12, 14, 19, 26, 58, 60, 55, 14, 13, 16, 24, 40, 57, 69, 56,
    14, 17, 22, 29, 51, 87, 80, 62, 18, 22, 37, 56, 68, 109, 103, 77, 24, 35, 55, 64, 81, 104, 113,
    92, 49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99,
];

const CHROMA: [u16; 64] = [
    17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99, 24, 26, 56, 99, 99, 99, 99, 99,
    47, 66, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
];

/// IJG scaling of a base table to `quality` in 1..=100.
pub fn quant_table(base: &[u16; 64], quality: u8) -> [f64; 64] {
    let q = quality.clamp(1, 100) as u32;
    let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
    let mut out = [0.0; 64];
    for (o, &b) in out.iter_mut().zip(base) {
        *o = ((b as u32 * scale + 50) / 100).clamp(1, 255) as f64;
    }
    out
}

fn dct_matrix() -> [[f64; 8]; 8] {
    let mut m = [[0.0; 8]; 8];
    for (u, row) in m.iter_mut().enumerate() {
        let cu = if u == 0 { (0.125f64).sqrt() } else { 0.5 };
        for (x, v) in row.iter_mut().enumerate() {
            *v = cu * ((2 * x + 1) as f64 * u as f64 * PI / 16.0).cos();
        }
    }
    m
}

/// Quantise and reconstruct every 8 × 8 block of a level-shifted plane.
fn round_trip_plane(plane: &mut [f64], h: usize, w: usize, table: &[f64; 64], m: &[[f64; 8]; 8]) {
    for by in (0..h).step_by(8) {
        for bx in (0..w).step_by(8) {
            let mut block = [[0.0; 8]; 8];
            for y in 0..8 {
                for x in 0..8 {
                    block[y][x] = plane[(by + y) * w + bx + x] - 128.0;
                }
            }
            let mut tmp = [[0.0; 8]; 8];
            let mut coef = [[0.0; 8]; 8];
            for u in 0..8 {
                for x in 0..8 {
                    tmp[u][x] = (0..8).map(|y| m[u][y] * block[y][x]).sum();
                }
            }
            for u in 0..8 {
                for v in 0..8 {
                    let f: f64 = (0..8).map(|x| tmp[u][x] * m[v][x]).sum();
                    let q = table[u * 8 + v];
                    coef[u][v] = (f / q).round() * q;
                }
            }
            for y in 0..8 {
                for v in 0..8 {
                    tmp[y][v] = (0..8).map(|u| m[u][y] * coef[u][v]).sum();
                }
            }
            for y in 0..8 {
                for x in 0..8 {
                    let s: f64 = (0..8).map(|v| tmp[y][v] * m[v][x]).sum();
                    plane[(by + y) * w + bx + x] = (s + 128.0).round().clamp(0.0, 255.0);
                }
            }
        }
    }
}

/// `h` and `w` must be multiples of 16.
pub fn jpeg(img: &[f64], h: usize, w: usize, quality: u8) -> Vec<f64> {
    let plane = h * w;
    let q8 = |v: f64| (v * 255.0).round().clamp(0.0, 255.0);
    let mut y = vec![0.0; plane];
    let mut cb = vec![0.0; plane];
    let mut cr = vec![0.0; plane];
    for i in 0..plane {
        let (r, g, b) = (q8(img[i]), q8(img[plane + i]), q8(img[2 * plane + i]));
        y[i] = 0.299 * r + 0.587 * g + 0.114 * b;
        cb[i] = -0.168736 * r - 0.331264 * g + 0.5 * b + 128.0;
        cr[i] = 0.5 * r - 0.418688 * g - 0.081312 * b + 128.0;
    }
    let (hh, hw) = (h / 2, w / 2);
    let down = |c: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; hh * hw];
        for r in 0..hh {
            for k in 0..hw {
                let s = c[2 * r * w + 2 * k]
                    + c[2 * r * w + 2 * k + 1]
                    + c[(2 * r + 1) * w + 2 * k]
                    + c[(2 * r + 1) * w + 2 * k + 1];
                out[r * hw + k] = s / 4.0;
            }
        }
        out
    };
    let mut cb_s = down(&cb);
    let mut cr_s = down(&cr);
    let m = dct_matrix();
    let lt = quant_table(&LUMA, quality);
    let ct = quant_table(&CHROMA, quality);
    round_trip_plane(&mut y, h, w, &lt, &m);
    round_trip_plane(&mut cb_s, hh, hw, &ct, &m);
    round_trip_plane(&mut cr_s, hh, hw, &ct, &m);
    let mut out = vec![0.0; 3 * plane];
    for r in 0..h {
        for k in 0..w {
            let i = r * w + k;
            let j = (r / 2) * hw + k / 2;
            let (l, u, v) = (y[i], cb_s[j] - 128.0, cr_s[j] - 128.0);
            let rgb = [l + 1.402 * v, l - 0.344136 * u - 0.714136 * v, l + 1.772 * u];
            for (ch, val) in rgb.iter().enumerate() {
                out[ch * plane + i] = val.round().clamp(0.0, 255.0) / 255.0;
            }
        }
    }
    out
}
