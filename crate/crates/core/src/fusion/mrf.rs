//! Rough foreground mask from color mixtures, objectness and a contrast-
//! sensitive Potts prior, refined by a single raster-order sweep.

use crate::geometry::BoundingBox;
use crate::image::Image;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MrfParams {
    pub gamma: f64,
    /// Color scale of the pairwise weight, in intensity units.
    pub sigma: f64,
    pub components: usize,
    /// Width of the background ring around the DCF box, in patch pixels.
    pub ring: usize,
    pub p_obj_min: f64,
    pub p_obj_max: f64,
    pub max_coverage: f64,
    pub em_iterations: usize,
}

impl Default for MrfParams {
    fn default() -> Self {
        Self {
            gamma: 2.0,
            sigma: 12.0,
            components: 3,
            ring: 6,
            p_obj_min: 0.02,
            p_obj_max: 0.98,
            max_coverage: 0.9,
            em_iterations: 10,
        }
    }
}

const VARIANCE_FLOOR: f64 = 1.0;
const COLOR_POSTERIOR_CLAMP: f64 = 1e-6;

/// Diagonal-covariance Gaussian mixture over RGB.
#[derive(Debug, Clone, PartialEq)]
pub struct Gmm<T> {
    pub weights: Vec<T>,
    pub means: Vec<[T; 3]>,
    pub variances: Vec<[T; 3]>,
}

impl<T: Real> Gmm<T> {
    fn component_log_density(&self, k: usize, c: &[T; 3]) -> T {
        let mut acc = self.weights[k].ln();
        for d in 0..3 {
            let v = self.variances[k][d];
            let diff = c[d] - self.means[k][d];
            acc = acc - T::of(0.5) * ((T::TAU() * v).ln() + diff * diff / v);
        }
        acc
    }

    pub fn log_density(&self, c: &[T; 3]) -> T {
        let logs: Vec<T> = (0..self.weights.len())
            .map(|k| self.component_log_density(k, c))
            .collect();
        log_sum_exp(&logs)
    }

    /// EM from a deterministic start: samples sorted by brightness are cut
    /// into equal quantile groups. `None` with fewer than two samples per
    /// component.
    pub fn fit(samples: &[[T; 3]], k: usize, iterations: usize) -> Option<Self> {
        if k == 0 || samples.len() < 2 * k {
            return None;
        }
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let lum = |c: &[T; 3]| c[0] + c[1] + c[2];
        order.sort_by(|a, b| lum(&samples[*a]).total_cmp_t(&lum(&samples[*b])).then(a.cmp(b)));
        let n = samples.len();
        let mut resp = vec![vec![T::zero(); k]; n];
        for (rank, &i) in order.iter().enumerate() {
            resp[i][rank * k / n] = T::one();
        }
        let mut gmm = Self {
            weights: vec![T::zero(); k],
            means: vec![[T::zero(); 3]; k],
            variances: vec![[T::one(); 3]; k],
        };
        gmm.m_step(samples, &resp)?;
        for _ in 0..iterations {
            for (i, c) in samples.iter().enumerate() {
                let logs: Vec<T> = (0..k).map(|j| gmm.component_log_density(j, c)).collect();
                let z = log_sum_exp(&logs);
                for j in 0..k {
                    resp[i][j] = (logs[j] - z).exp();
                }
            }
            gmm.m_step(samples, &resp)?;
        }
        Some(gmm)
    }

    fn m_step(&mut self, samples: &[[T; 3]], resp: &[Vec<T>]) -> Option<()> {
        let k = self.weights.len();
        let n = T::of_usize(samples.len());
        for j in 0..k {
            let nk: T = resp.iter().map(|r| r[j]).sum();
            if !(nk > T::of(1e-9)) {
                // an emptied component keeps a negligible weight
                self.weights[j] = T::of(1e-12);
                continue;
            }
            let mut mean = [T::zero(); 3];
            for (c, r) in samples.iter().zip(resp) {
                for d in 0..3 {
                    mean[d] = mean[d] + r[j] * c[d];
                }
            }
            mean.iter_mut().for_each(|m| *m = *m / nk);
            let mut var = [T::zero(); 3];
            for (c, r) in samples.iter().zip(resp) {
                for d in 0..3 {
                    var[d] = var[d] + r[j] * (c[d] - mean[d]).powi(2);
                }
            }
            var.iter_mut()
                .for_each(|v| *v = (*v / nk).max(T::of(VARIANCE_FLOOR)));
            self.weights[j] = nk / n;
            self.means[j] = mean;
            self.variances[j] = var;
        }
        let total: T = self.weights.iter().copied().sum();
        if !(total > T::zero()) || !total.is_finite() {
            return None;
        }
        self.weights.iter_mut().for_each(|w| *w = *w / total);
        Some(())
    }
}

trait TotalCmp {
    fn total_cmp_t(&self, other: &Self) -> std::cmp::Ordering;
}

impl<T: Real> TotalCmp for T {
    fn total_cmp_t(&self, other: &Self) -> std::cmp::Ordering {
        self.partial_cmp(other).unwrap_or(std::cmp::Ordering::Equal)
    }
}

fn log_sum_exp<T: Real>(v: &[T]) -> T {
    let m = v.iter().copied().fold(T::neg_infinity(), T::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (*x - m).exp()).sum::<T>().ln()
}

/// Binary labelling problem on a pixel grid: per-pixel unaries for labels
/// 0 (background) and 1 (foreground), plus contrast-weighted 4-neighbour
/// Potts penalties.
#[derive(Debug, Clone)]
pub struct MrfProblem<T> {
    pub width: usize,
    pub height: usize,
    pub unary: Vec<[T; 2]>,
    pub colors: Vec<[T; 3]>,
    pub gamma: T,
    pub sigma: T,
}

impl<T: Real> MrfProblem<T> {
    pub fn pair_weight(&self, a: usize, b: usize) -> T {
        let (p, q) = (self.colors[a], self.colors[b]);
        let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
        self.gamma * (-d2 / (T::of(2.0) * self.sigma * self.sigma)).exp()
    }

    fn neighbours(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let (x, y) = (i % self.width, i / self.width);
        let w = self.width;
        [
            (x > 0).then(|| i - 1),
            (x + 1 < w).then(|| i + 1),
            (y > 0).then(|| i - w),
            (y + 1 < self.height).then(|| i + w),
        ]
        .into_iter()
        .flatten()
    }

    /// Unary sum plus penalties over each unordered 4-neighbour pair once.
    pub fn energy(&self, labels: &[bool]) -> T {
        let mut e = T::zero();
        for (i, l) in labels.iter().enumerate() {
            e = e + self.unary[i][*l as usize];
            let (x, y) = (i % self.width, i / self.width);
            if x + 1 < self.width && labels[i + 1] != *l {
                e = e + self.pair_weight(i, i + 1);
            }
            if y + 1 < self.height && labels[i + self.width] != *l {
                e = e + self.pair_weight(i, i + self.width);
            }
        }
        e
    }

    pub fn unary_argmin(&self) -> Vec<bool> {
        self.unary.iter().map(|u| u[1] < u[0]).collect()
    }

    fn local_cost(&self, labels: &[bool], i: usize, l: bool) -> T {
        let mut c = self.unary[i][l as usize];
        for j in self.neighbours(i) {
            if labels[j] != l {
                c = c + self.pair_weight(i, j);
            }
        }
        c
    }

    /// One raster-order pass of conditional minimisation. A label only flips
    /// on a strict improvement, so the energy cannot rise.
    pub fn sweep(&self, labels: &mut [bool]) -> usize {
        let mut flips = 0;
        for i in 0..labels.len() {
            let cur = labels[i];
            let keep = self.local_cost(labels, i, cur);
            let other = self.local_cost(labels, i, !cur);
            if other < keep {
                labels[i] = !cur;
                flips += 1;
            }
        }
        flips
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MrfMask {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<bool>,
}

impl MrfMask {
    pub fn coverage(&self) -> f64 {
        self.labels.iter().filter(|l| **l).count() as f64 / self.labels.len() as f64
    }

    /// Tight box around every foreground pixel.
    pub fn wrapping_box<T: Real>(&self) -> Option<BoundingBox<T>> {
        let mut ext: Option<(usize, usize, usize, usize)> = None;
        for (i, _) in self.labels.iter().enumerate().filter(|(_, l)| **l) {
            let (x, y) = (i % self.width, i / self.width);
            ext = Some(match ext {
                None => (x, y, x, y),
                Some((a, b, c, d)) => (a.min(x), b.min(y), c.max(x), d.max(y)),
            });
        }
        ext.map(|(x0, y0, x1, y1)| {
            BoundingBox::new(
                T::of_usize(x0),
                T::of_usize(y0),
                T::of_usize(x1 - x0 + 1),
                T::of_usize(y1 - y0 + 1),
            )
        })
    }
}

fn pixel_color<T: Real>(patch: &Image<T>, x: usize, y: usize) -> [T; 3] {
    let p = patch.pixel(x, y);
    if p.len() >= 3 {
        [p[0], p[1], p[2]]
    } else {
        [p[0]; 3]
    }
}

/// Builds the labelling problem: foreground colors from pixels inside
/// `x_dcf`, background colors from a ring just outside it, objectness from
/// the per-pixel heat map. `None` when either mixture cannot be fitted.
pub fn build_problem<T: Real>(
    patch: &Image<T>,
    heat: &[T],
    x_dcf: &BoundingBox<T>,
    params: &MrfParams,
) -> Option<MrfProblem<T>> {
    let (w, h) = (patch.width(), patch.height());
    let ring = T::of_usize(params.ring);
    let outer = BoundingBox::new(x_dcf.x - ring, x_dcf.y - ring, x_dcf.w + ring * T::of(2.0), x_dcf.h + ring * T::of(2.0));
    let half = T::of(0.5);
    let mut fg = Vec::new();
    let mut bg = Vec::new();
    let mut colors = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let c = pixel_color(patch, x, y);
            colors.push(c);
            let (px, py) = (T::of_usize(x) + half, T::of_usize(y) + half);
            if x_dcf.contains_point(px, py) {
                fg.push(c);
            } else if outer.contains_point(px, py) {
                bg.push(c);
            }
        }
    }
    let fg_gmm = Gmm::fit(&fg, params.components, params.em_iterations)?;
    let bg_gmm = Gmm::fit(&bg, params.components, params.em_iterations)?;
    let (lo, hi) = (T::of(params.p_obj_min), T::of(params.p_obj_max));
    let clamp = T::of(COLOR_POSTERIOR_CLAMP);
    let unary = colors
        .iter()
        .zip(heat)
        .map(|(c, p)| {
            let lf = fg_gmm.log_density(c);
            let lb = bg_gmm.log_density(c);
            let pc = (T::one() / (T::one() + (lb - lf).exp())).clamp_to(clamp, T::one() - clamp);
            let po = p.clamp_to(lo, hi);
            [
                -(T::one() - pc).ln() - (T::one() - po).ln(),
                -pc.ln() - po.ln(),
            ]
        })
        .collect();
    Some(MrfProblem {
        width: w,
        height: h,
        unary,
        colors,
        gamma: T::of(params.gamma),
        sigma: T::of(params.sigma),
    })
}

/// Rough foreground mask; `None` when the mixtures are degenerate, the mask
/// is empty, or it covers more than `max_coverage` of the patch.
pub fn mrf_label<T: Real>(
    patch: &Image<T>,
    heat: &[T],
    x_dcf: &BoundingBox<T>,
    params: &MrfParams,
) -> Option<MrfMask> {
    let problem = build_problem(patch, heat, x_dcf, params)?;
    let mut labels = problem.unary_argmin();
    problem.sweep(&mut labels);
    let mask = MrfMask {
        width: problem.width,
        height: problem.height,
        labels,
    };
    let cov = mask.coverage();
    if cov == 0.0 || cov > params.max_coverage {
        return None;
    }
    Some(mask)
}
