//! Global correlation-filter branch: a temporally regularised multi-channel
//! filter learned in the Fourier domain, matched over a small scale pyramid.
//!
//! The search window spans 100×100 window pixels at the same normalisation
//! as the working patch (the longer object side maps to 32 px), binned into
//! 2-px cells, so maps are 50×50 with 42 channels per cell.

pub mod motion;

use rustfft::num_complex::Complex;

use crate::features::{color_names, fhog, CN_DIM, HOG_DIM};
use crate::fft::Fft2;
use crate::geometry::{warp_with, BoundingBox, WarpParams, OBJECT_SIDE};
use crate::image::Image;
use crate::scalar::Real;

pub use motion::{estimate_motion, motion_proposal, AffineMotion, MotionEstimate, ResidualMap};

pub const WINDOW_SIDE: usize = 100;
pub const CELL: usize = 2;
pub const MAP_SIDE: usize = WINDOW_SIDE / CELL;
pub const DCF_CHANNELS: usize = HOG_DIM + CN_DIM + 1;

/// Channel-major stack of square feature planes.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<T> {
    pub side: usize,
    pub channels: usize,
    pub data: Vec<T>,
}

impl<T: Real> FeatureMap<T> {
    pub fn zeros(side: usize, channels: usize) -> Self {
        Self {
            side,
            channels,
            data: vec![T::zero(); side * side * channels],
        }
    }

    pub fn plane(&self, d: usize) -> &[T] {
        let n = self.side * self.side;
        &self.data[d * n..(d + 1) * n]
    }

    pub fn plane_mut(&mut self, d: usize) -> &mut [T] {
        let n = self.side * self.side;
        &mut self.data[d * n..(d + 1) * n]
    }

    #[inline]
    pub fn at(&self, d: usize, row: usize, col: usize) -> T {
        self.data[(d * self.side + row) * self.side + col]
    }

    /// Every plane circularly shifted by `(dx, dy)` cells.
    pub fn circular_shift(&self, dx: isize, dy: isize) -> Self {
        let s = self.side as isize;
        let mut out = Self::zeros(self.side, self.channels);
        for d in 0..self.channels {
            for r in 0..s {
                for c in 0..s {
                    let nr = (r + dy).rem_euclid(s) as usize;
                    let nc = (c + dx).rem_euclid(s) as usize;
                    out.data[(d * self.side + nr) * self.side + nc] = self.at(d, r as usize, c as usize);
                }
            }
        }
        out
    }

    pub fn cosine_similarity(&self, other: &Self) -> T {
        let dot: T = self.data.iter().zip(&other.data).map(|(a, b)| *a * *b).sum();
        let na: T = self.data.iter().map(|a| *a * *a).sum();
        let nb: T = other.data.iter().map(|b| *b * *b).sum();
        if na <= T::zero() || nb <= T::zero() {
            T::zero()
        } else {
            dot / (na.sqrt() * nb.sqrt())
        }
    }
}

/// Separable Hann window, strictly positive at every sample.
pub fn cosine_window<T: Real>(side: usize) -> Vec<T> {
    let n = T::of_usize(side);
    let w1: Vec<T> = (0..side)
        .map(|i| (T::PI() * (T::of_usize(i) + T::of(0.5)) / n).sin().powi(2))
        .collect();
    let mut out = Vec::with_capacity(side * side);
    for r in 0..side {
        for c in 0..side {
            out.push(w1[r] * w1[c]);
        }
    }
    out
}

/// Un-normalised cell features of a window image: HOG, then color names and
/// centred gray level averaged over each cell.
pub fn raw_dcf_map<T: Real>(window: &Image<T>) -> FeatureMap<T> {
    let side = window.width() / CELL;
    let mut map = FeatureMap::zeros(side, DCF_CHANNELS);
    let hog = fhog(window, CELL);
    let cell_px = T::of_usize(CELL * CELL);
    let gray_scale = T::one() / T::of(255.0);
    for r in 0..side {
        for c in 0..side {
            let h = hog.cell(c, r);
            for (d, v) in h.iter().enumerate() {
                map.data[(d * side + r) * side + c] = *v;
            }
            let mut cn = [T::zero(); CN_DIM];
            let mut gray = T::zero();
            for y in r * CELL..(r + 1) * CELL {
                for x in c * CELL..(c + 1) * CELL {
                    let p = window.pixel(x, y);
                    let rgb = if p.len() >= 3 { [p[0], p[1], p[2]] } else { [p[0]; 3] };
                    for (acc, v) in cn.iter_mut().zip(color_names(&rgb)) {
                        *acc = *acc + v;
                    }
                    gray = gray + T::of(0.299) * rgb[0] + T::of(0.587) * rgb[1] + T::of(0.114) * rgb[2];
                }
            }
            for (k, v) in cn.iter().enumerate() {
                map.data[((HOG_DIM + k) * side + r) * side + c] = *v / cell_px;
            }
            map.data[((DCF_CHANNELS - 1) * side + r) * side + c] = gray / cell_px * gray_scale - T::of(0.5);
        }
    }
    map
}

/// Cell features with each channel mean-removed and multiplied by the
/// cosine window, so flat channels contribute nothing.
pub fn extract_dcf_map<T: Real>(window: &Image<T>) -> FeatureMap<T> {
    let mut map = raw_dcf_map(window);
    let win = cosine_window::<T>(map.side);
    for d in 0..map.channels {
        let plane = map.plane_mut(d);
        let m = crate::scalar::mean(plane);
        for (v, w) in plane.iter_mut().zip(&win) {
            *v = (*v - m) * *w;
        }
    }
    map
}

/// Per-channel 2-D spectra, same layout as [`FeatureMap`].
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum<T> {
    pub side: usize,
    pub channels: usize,
    pub data: Vec<Complex<T>>,
}

impl<T: Real> Spectrum<T> {
    pub fn zeros(side: usize, channels: usize) -> Self {
        Self {
            side,
            channels,
            data: vec![Complex::new(T::zero(), T::zero()); side * side * channels],
        }
    }

    pub fn of_map(map: &FeatureMap<T>, fft: &Fft2<T>) -> Self {
        let mut data = Vec::with_capacity(map.data.len());
        for d in 0..map.channels {
            data.extend(fft.forward_real(map.plane(d)));
        }
        Self {
            side: map.side,
            channels: map.channels,
            data,
        }
    }

    pub fn plane(&self, d: usize) -> &[Complex<T>] {
        let n = self.side * self.side;
        &self.data[d * n..(d + 1) * n]
    }
}

/// Spectrum of a Gaussian centred on cell `(side/2, side/2)`.
pub fn gaussian_label<T: Real>(side: usize, sigma: T, fft: &Fft2<T>) -> Vec<Complex<T>> {
    let c = T::of_usize(side / 2);
    let two_s2 = T::of(2.0) * sigma * sigma;
    let mut y = Vec::with_capacity(side * side);
    for r in 0..side {
        for col in 0..side {
            let dr = T::of_usize(r) - c;
            let dc = T::of_usize(col) - c;
            y.push((-(dr * dr + dc * dc) / two_s2).exp());
        }
    }
    fft.forward_real(&y)
}

/// Per-frequency closed-form update
/// `f = (conj(x)·ŷ + μ·f_prev) / (Σ_d |x_d|² + λ + μ)`.
pub fn update_filter<T: Real>(
    x: &Spectrum<T>,
    label: &[Complex<T>],
    prev: &Spectrum<T>,
    mu: T,
    lambda: T,
) -> Spectrum<T> {
    let n = x.side * x.side;
    let mut energy = vec![T::zero(); n];
    for d in 0..x.channels {
        for (e, v) in energy.iter_mut().zip(x.plane(d)) {
            *e = *e + v.norm_sqr();
        }
    }
    let mut out = Spectrum::zeros(x.side, x.channels);
    for d in 0..x.channels {
        for k in 0..n {
            let i = d * n + k;
            let num = x.data[i].conj() * label[k] + prev.data[i] * mu;
            out.data[i] = num / (energy[k] + lambda + mu);
        }
    }
    out
}

/// Spatial response `IFFT(Σ_d f_d · z_d)`.
pub fn response<T: Real>(filter: &Spectrum<T>, z: &Spectrum<T>, fft: &Fft2<T>) -> Vec<T> {
    let n = z.side * z.side;
    let mut acc = vec![Complex::new(T::zero(), T::zero()); n];
    for d in 0..z.channels {
        for ((a, f), x) in acc.iter_mut().zip(filter.plane(d)).zip(z.plane(d)) {
            *a = *a + *f * *x;
        }
    }
    fft.inverse(&mut acc);
    acc.into_iter().map(|c| c.re).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak<T> {
    pub row: usize,
    pub col: usize,
    /// Peak position refined by a parabola through its circular neighbours.
    pub sub_row: T,
    pub sub_col: T,
    pub value: T,
    /// Peak over the L2 norm of the whole response.
    pub similarity: T,
}

fn parabolic_offset<T: Real>(left: T, mid: T, right: T) -> T {
    let denom = left - T::of(2.0) * mid + right;
    if denom >= T::zero() {
        return T::zero();
    }
    ((left - right) / (T::of(2.0) * denom)).clamp_to(T::of(-0.5), T::of(0.5))
}

pub fn find_peak<T: Real>(resp: &[T], side: usize) -> Peak<T> {
    let idx = crate::scalar::argmax(resp).unwrap_or(0);
    let (row, col) = (idx / side, idx % side);
    let at = |r: usize, c: usize| resp[r * side + c];
    let up = at((row + side - 1) % side, col);
    let down = at((row + 1) % side, col);
    let left = at(row, (col + side - 1) % side);
    let right = at(row, (col + 1) % side);
    let value = resp[idx];
    let norm = resp.iter().map(|v| *v * *v).sum::<T>().sqrt();
    Peak {
        row,
        col,
        sub_row: T::of_usize(row) + parabolic_offset(up, value, down),
        sub_col: T::of_usize(col) + parabolic_offset(left, value, right),
        value,
        similarity: if norm > T::zero() { value / norm } else { T::zero() },
    }
}

/// Correlates `filter` with a search spectrum and locates the peak.
pub fn correlate<T: Real>(filter: &Spectrum<T>, z: &Spectrum<T>, fft: &Fft2<T>) -> Peak<T> {
    find_peak(&response(filter, z, fft), z.side)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DcfParams {
    pub lambda: f64,
    pub mu: f64,
    /// Gaussian label width as a fraction of the object size.
    pub sigma_factor: f64,
    pub scales: Vec<f64>,
}

impl Default for DcfParams {
    fn default() -> Self {
        Self {
            lambda: 1e-2,
            mu: 15.0,
            sigma_factor: 1.0 / 16.0,
            scales: vec![0.98, 1.0, 1.02],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DcfEstimate<T> {
    pub bbox: BoundingBox<T>,
    pub similarity: T,
    pub scale: T,
    pub peak: T,
}

/// Window warp for a target of `size` centred at `center`, enlarged by `s`.
pub fn window_params<T: Real>(center: (T, T), size: (T, T), s: T) -> WarpParams<T> {
    WarpParams {
        center,
        scale: size.0.max(size.1) / T::of_usize(OBJECT_SIDE) * s,
        side: WINDOW_SIDE,
    }
}

/// Box-level correlation tracker. The box aspect ratio never changes here;
/// only the scale pyramid resizes it.
#[derive(Debug, Clone)]
pub struct DcfTracker<T: Real> {
    pub params: DcfParams,
    fft: Fft2<T>,
    label: Vec<Complex<T>>,
    pub filter: Spectrum<T>,
    /// Running average of training maps, used for appearance comparisons.
    pub template: FeatureMap<T>,
    pub size: (T, T),
}

impl<T: Real> DcfTracker<T> {
    pub fn init(frame: &Image<T>, b: &BoundingBox<T>, params: DcfParams) -> Self {
        let fft = Fft2::new(MAP_SIDE, MAP_SIDE);
        let size = (b.w, b.h);
        let scale = b.w.max(b.h) / T::of_usize(OBJECT_SIDE);
        let object_px = (b.w * b.h).sqrt() / scale;
        let sigma = object_px * T::of(params.sigma_factor) / T::of_usize(CELL);
        let label = gaussian_label(MAP_SIDE, sigma, &fft);
        let map = Self::sample_map(frame, b.center(), size, T::one());
        let x = Spectrum::of_map(&map, &fft);
        let filter = update_filter(
            &x,
            &label,
            &Spectrum::zeros(MAP_SIDE, DCF_CHANNELS),
            T::zero(),
            T::of(params.lambda),
        );
        Self {
            params,
            fft,
            label,
            filter,
            template: map,
            size,
        }
    }

    pub fn sample_map(frame: &Image<T>, center: (T, T), size: (T, T), s: T) -> FeatureMap<T> {
        extract_dcf_map(&warp_with(frame, &window_params(center, size, s)))
    }

    /// Searches around `center` at every pyramid scale; the scale with the
    /// highest peak wins, with the unit scale preferred on ties.
    pub fn locate(&self, frame: &Image<T>, center: (T, T)) -> DcfEstimate<T> {
        let mut scales: Vec<f64> = vec![1.0];
        scales.extend(self.params.scales.iter().copied().filter(|s| *s != 1.0));
        let half = T::of_usize(MAP_SIDE / 2);
        let mut best: Option<DcfEstimate<T>> = None;
        for s in scales {
            let s = T::of(s);
            let wp = window_params(center, self.size, s);
            let map = extract_dcf_map(&warp_with(frame, &wp));
            let peak = correlate(&self.filter, &Spectrum::of_map(&map, &self.fft), &self.fft);
            if best.as_ref().is_some_and(|b| peak.value <= b.peak) {
                continue;
            }
            let cell = T::of_usize(CELL) * wp.scale;
            let cx = center.0 + (peak.sub_col - half) * cell;
            let cy = center.1 + (peak.sub_row - half) * cell;
            best = Some(DcfEstimate {
                bbox: BoundingBox::from_center(cx, cy, self.size.0 * s, self.size.1 * s),
                similarity: peak.similarity,
                scale: s,
                peak: peak.value,
            });
        }
        best.expect("at least one scale")
    }

    /// Correlation response (cells, row-major) of the window around `center`.
    pub fn response_at(&self, frame: &Image<T>, center: (T, T)) -> Vec<T> {
        let map = Self::sample_map(frame, center, self.size, T::one());
        response(&self.filter, &Spectrum::of_map(&map, &self.fft), &self.fft)
    }

    /// Trains on the window around `b` with the temporal regulariser and
    /// adopts `b`'s size.
    pub fn update(&mut self, frame: &Image<T>, b: &BoundingBox<T>) {
        self.size = (b.w, b.h);
        let map = Self::sample_map(frame, b.center(), self.size, T::one());
        let x = Spectrum::of_map(&map, &self.fft);
        let mu = T::of(self.params.mu);
        self.filter = update_filter(&x, &self.label, &self.filter, mu, T::of(self.params.lambda));
        let denom = T::one() + mu;
        for (a, v) in self.template.data.iter_mut().zip(&map.data) {
            *a = (mu * *a + *v) / denom;
        }
    }

    /// Cosine similarity between the running template and the window at
    /// `center` sampled at the current size.
    pub fn appearance_score(&self, frame: &Image<T>, center: (T, T)) -> T {
        Self::sample_map(frame, center, self.size, T::one()).cosine_similarity(&self.template)
    }
}
