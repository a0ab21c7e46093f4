//! Felzenszwalb-style HOG: 18 contrast-sensitive + 9 insensitive orientation
//! channels and 4 texture-energy channels per cell (31 total).

use crate::image::Image;
use crate::scalar::Real;

pub const HOG_DIM: usize = 31;
const SENSITIVE_BINS: usize = 18;
const TRUNCATION: f64 = 0.2;
const TEXTURE_GAIN: f64 = 0.2357;

/// Dense cell grid of 31-d HOG descriptors.
#[derive(Debug, Clone)]
pub struct HogMap<T> {
    pub cells_x: usize,
    pub cells_y: usize,
    /// `cells_y * cells_x * 31`, cell-major.
    pub data: Vec<T>,
}

impl<T: Real> HogMap<T> {
    pub fn cell(&self, cx: usize, cy: usize) -> &[T] {
        let start = (cy * self.cells_x + cx) * HOG_DIM;
        &self.data[start..start + HOG_DIM]
    }
}

/// Per-pixel gradient taking, for color input, the channel with the largest
/// magnitude. Central differences with border replication.
fn gradient<T: Real>(img: &Image<T>, x: usize, y: usize) -> (T, T) {
    let (xi, yi) = (x as isize, y as isize);
    let mut best = (T::zero(), T::zero());
    let mut best_mag = -T::one();
    for c in 0..img.channels() {
        let gx = img.get_clamped(xi + 1, yi, c) - img.get_clamped(xi - 1, yi, c);
        let gy = img.get_clamped(xi, yi + 1, c) - img.get_clamped(xi, yi - 1, c);
        let mag = gx * gx + gy * gy;
        if mag > best_mag {
            best_mag = mag;
            best = (gx, gy);
        }
    }
    best
}

/// Computes the HOG map with square cells of `cell` pixels. Trailing pixels
/// that do not fill a cell are ignored.
pub fn fhog<T: Real>(img: &Image<T>, cell: usize) -> HogMap<T> {
    let cells_x = img.width() / cell;
    let cells_y = img.height() / cell;
    let mut hist = vec![T::zero(); cells_x * cells_y * SENSITIVE_BINS];
    let bins = T::of_usize(SENSITIVE_BINS);
    let two_pi = T::TAU();

    for y in 0..cells_y * cell {
        for x in 0..cells_x * cell {
            let (gx, gy) = gradient(img, x, y);
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == T::zero() {
                continue;
            }
            let mut theta = gy.atan2(gx);
            if theta < T::zero() {
                theta = theta + two_pi;
            }
            // linear interpolation between the two nearest orientation bins
            let pos = theta / two_pi * bins;
            let lo = pos.floor();
            let frac = pos - lo;
            let b0 = lo.to_usize().unwrap_or(0) % SENSITIVE_BINS;
            let b1 = (b0 + 1) % SENSITIVE_BINS;
            let base = ((y / cell) * cells_x + x / cell) * SENSITIVE_BINS;
            hist[base + b0] = hist[base + b0] + mag * (T::one() - frac);
            hist[base + b1] = hist[base + b1] + mag * frac;
        }
    }

    // unsigned-orientation energy per cell
    let energy: Vec<T> = (0..cells_x * cells_y)
        .map(|i| {
            let h = &hist[i * SENSITIVE_BINS..(i + 1) * SENSITIVE_BINS];
            (0..9).map(|o| (h[o] + h[o + 9]).powi(2)).sum()
        })
        .collect();
    let energy_at = |cx: isize, cy: isize| -> T {
        let cx = cx.clamp(0, cells_x as isize - 1) as usize;
        let cy = cy.clamp(0, cells_y as isize - 1) as usize;
        energy[cy * cells_x + cx]
    };

    let trunc = T::of(TRUNCATION);
    let half = T::of(0.5);
    let tex_gain = T::of(TEXTURE_GAIN);
    let tiny = T::of(1e-4);
    let mut data = vec![T::zero(); cells_x * cells_y * HOG_DIM];
    for cy in 0..cells_y {
        for cx in 0..cells_x {
            let (x, y) = (cx as isize, cy as isize);
            // four 2×2 neighbourhoods that contain this cell
            let norms: [T; 4] = [(-1, -1), (1, -1), (-1, 1), (1, 1)].map(|(dx, dy)| {
                let s = energy_at(x, y)
                    + energy_at(x + dx, y)
                    + energy_at(x, y + dy)
                    + energy_at(x + dx, y + dy);
                T::one() / (s + tiny).sqrt()
            });
            let h = &hist[(cy * cells_x + cx) * SENSITIVE_BINS..][..SENSITIVE_BINS];
            let out = &mut data[(cy * cells_x + cx) * HOG_DIM..][..HOG_DIM];
            let mut texture = [T::zero(); 4];
            for o in 0..SENSITIVE_BINS {
                let mut acc = T::zero();
                for (k, n) in norms.iter().enumerate() {
                    let v = (h[o] * *n).min(trunc);
                    acc = acc + v;
                    texture[k] = texture[k] + v;
                }
                out[o] = acc * half;
            }
            for o in 0..9 {
                let mut acc = T::zero();
                for n in &norms {
                    acc = acc + ((h[o] + h[o + 9]) * *n).min(trunc);
                }
                out[SENSITIVE_BINS + o] = acc * half;
            }
            for k in 0..4 {
                out[27 + k] = texture[k] * tex_gain;
            }
        }
    }
    HogMap {
        cells_x,
        cells_y,
        data,
    }
}
