use super::table::{GaussianRow, ImpulseRow, ShotRow};
use crate::numerics::RngStream;

pub fn gaussian(img: &[f64], row: &GaussianRow, rng: &mut RngStream) -> Vec<f64> {
    let mut eps = vec![0.0; img.len()];
    rng.fill_standard_normal(&mut eps);
    img.iter().zip(&eps).map(|(x, e)| x + row.sigma * e).collect()
}

/// Inverse-CDF Poisson sample. Driving every severity with the same uniform
/// keeps the noise realisations coupled across the ladder.
fn poisson_quantile(lambda: f64, u: f64) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    let mut k = 0.0;
    let mut p = (-lambda).exp();
    let mut cdf = p;
    let cap = lambda + 40.0 * lambda.sqrt() + 50.0;
    while u > cdf && k < cap {
        k += 1.0;
        p *= lambda / k;
        cdf += p;
    }
    k
}

pub fn shot(img: &[f64], row: &ShotRow, rng: &mut RngStream) -> Vec<f64> {
    img.iter()
        .map(|&x| poisson_quantile(x * row.photons, rng.uniform01()) / row.photons)
        .collect()
}

/// Salt and pepper per element, half salt, half pepper.
pub fn impulse(img: &[f64], row: &ImpulseRow, rng: &mut RngStream) -> Vec<f64> {
    img.iter()
        .map(|&x| {
            let hit = rng.uniform01();
            let salt = rng.uniform01();
            if hit < row.amount {
                if salt < 0.5 {
                    1.0
                } else {
                    0.0
                }
            } else {
                x
            }
        })
        .collect()
}
