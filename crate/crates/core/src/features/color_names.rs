//! Soft color naming over the eleven basic color terms.
//!
//! Each pixel gets a Gaussian-kernel membership to a fixed RGB prototype per
//! term, normalised to sum to one. The memberships are linearly dependent, so
//! the last term is dropped and 10 values are reported.

use crate::scalar::Real;

pub const CN_DIM: usize = 10;

// black, blue, brown, grey, green, orange, pink, purple, red, white, yellow
const PROTOTYPES: [[f64; 3]; 11] = [
    [0.0, 0.0, 0.0],
    [30.0, 60.0, 220.0],
    [140.0, 85.0, 40.0],
    [128.0, 128.0, 128.0],
    [40.0, 170.0, 50.0],
    [250.0, 140.0, 20.0],
    [250.0, 160.0, 200.0],
    [130.0, 40.0, 160.0],
    [220.0, 30.0, 30.0],
    [255.0, 255.0, 255.0],
    [245.0, 230.0, 40.0],
];
const BANDWIDTH: f64 = 45.0;

/// Color-name memberships of one RGB pixel (0..=255 scale).
pub fn color_names<T: Real>(rgb: &[T]) -> [T; CN_DIM] {
    let mut weights = [0.0f64; 11];
    let (r, g, b) = (rgb[0].as_f64(), rgb[1].as_f64(), rgb[2].as_f64());
    let denom = 2.0 * BANDWIDTH * BANDWIDTH;
    let d2: Vec<f64> = PROTOTYPES
        .iter()
        .map(|p| (r - p[0]).powi(2) + (g - p[1]).powi(2) + (b - p[2]).powi(2))
        .collect();
    let dmin = d2.iter().cloned().fold(f64::INFINITY, f64::min);
    // shift by the nearest distance so the exponentials never all underflow
    for (w, d) in weights.iter_mut().zip(&d2) {
        *w = (-(d - dmin) / denom).exp();
    }
    let total: f64 = weights.iter().sum();
    let mut out = [T::zero(); CN_DIM];
    for (o, w) in out.iter_mut().zip(weights.iter()) {
        *o = T::of(w / total);
    }
    out
}
