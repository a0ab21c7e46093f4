//! Background motion compensation: block matching, a least-squares affine
//! fit, the compensated residual and the salient-motion proposal.

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::image::Image;
use crate::linalg::{solve, SquareMatrix};
use crate::regions::{components, largest, Connectivity};
use crate::scalar::Real;

pub const MAX_WIDTH: usize = 720;
pub const MAX_HEIGHT: usize = 480;
pub const MATCH_BLOCK: usize = 16;
pub const SEARCH_RADIUS: usize = 8;
pub const MIN_BLOB_AREA: usize = 25;
/// Residuals at or below this gray level are treated as noise.
pub const RESIDUAL_FLOOR: f64 = 1.0;
/// Blocks flatter than this gray-level variance carry no position evidence.
const MIN_BLOCK_VARIANCE: f64 = 4.0;

/// `x' = a0·x + b0·y + c0`, `y' = a1·x + b1·y + c1`, mapping frame `t-1`
/// coordinates to frame `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMotion<T> {
    pub a0: T,
    pub b0: T,
    pub c0: T,
    pub a1: T,
    pub b1: T,
    pub c1: T,
}

impl<T: Real> AffineMotion<T> {
    pub fn identity() -> Self {
        Self {
            a0: T::one(),
            b0: T::zero(),
            c0: T::zero(),
            a1: T::zero(),
            b1: T::one(),
            c1: T::zero(),
        }
    }

    pub fn translation(dx: T, dy: T) -> Self {
        Self {
            c0: dx,
            c1: dy,
            ..Self::identity()
        }
    }

    pub fn apply(&self, x: T, y: T) -> (T, T) {
        (
            self.a0 * x + self.b0 * y + self.c0,
            self.a1 * x + self.b1 * y + self.c1,
        )
    }

    pub fn inverse(&self) -> Option<Self> {
        let det = self.a0 * self.b1 - self.b0 * self.a1;
        if det.abs() <= T::of(1e-12) {
            return None;
        }
        let (a0, b0, a1, b1) = (self.b1 / det, -self.b0 / det, -self.a1 / det, self.a0 / det);
        Some(Self {
            a0,
            b0,
            c0: -(a0 * self.c0 + b0 * self.c1),
            a1,
            b1,
            c1: -(a1 * self.c0 + b1 * self.c1),
        })
    }

    pub fn is_finite(&self) -> bool {
        [self.a0, self.b0, self.c0, self.a1, self.b1, self.c1]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Motion-compensated absolute difference, possibly at reduced resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualMap<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
    /// Frame pixels per residual pixel (≥ 1).
    pub factor: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionEstimate<T> {
    pub motion: AffineMotion<T>,
    pub residual: ResidualMap<T>,
    /// The fit was singular (too few or collinear matches); identity used.
    pub degenerate: bool,
    pub matches: usize,
}

/// Point correspondence `(x, y) → (x', y')`.
pub type Match<T> = ((T, T), (T, T));

/// Exhaustive SAD block matching of non-overlapping `MATCH_BLOCK` blocks of
/// `prev` within `±SEARCH_RADIUS` in `cur` (gray images). Smallest
/// displacement wins SAD ties. Textureless blocks and blocks whose search
/// window leaves the frame are skipped.
pub fn block_matches<T: Real>(prev: &Image<T>, cur: &Image<T>) -> Vec<Match<T>> {
    let (w, h) = (prev.width(), prev.height());
    let b = MATCH_BLOCK;
    let r = SEARCH_RADIUS as isize;
    let mut offsets: Vec<(isize, isize)> = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            offsets.push((dx, dy));
        }
    }
    offsets.sort_by_key(|&(dx, dy)| (dx * dx + dy * dy, dy, dx));

    let mut out = Vec::new();
    let half = T::of_usize(b) * T::of(0.5);
    let rr = SEARCH_RADIUS;
    for by in (rr..h.saturating_sub(b + rr - 1)).step_by(b) {
        for bx in (rr..w.saturating_sub(b + rr - 1)).step_by(b) {
            let mut sum = T::zero();
            let mut sq = T::zero();
            for y in by..by + b {
                for x in bx..bx + b {
                    let v = prev.get(x, y, 0);
                    sum = sum + v;
                    sq = sq + v * v;
                }
            }
            let n = T::of_usize(b * b);
            let var = sq / n - (sum / n) * (sum / n);
            if var < T::of(MIN_BLOCK_VARIANCE) {
                continue;
            }
            let mut best: Option<(T, isize, isize)> = None;
            for &(dx, dy) in &offsets {
                let (tx, ty) = (bx as isize + dx, by as isize + dy);
                let mut sad = T::zero();
                for y in 0..b {
                    for x in 0..b {
                        sad = sad
                            + (prev.get(bx + x, by + y, 0) - cur.get(tx as usize + x, ty as usize + y, 0)).abs();
                    }
                    if best.is_some_and(|(s, _, _)| sad >= s) {
                        break;
                    }
                }
                if best.map_or(true, |(s, _, _)| sad < s) {
                    best = Some((sad, dx, dy));
                }
            }
            if let Some((_, dx, dy)) = best {
                let cx = T::of_usize(bx) + half;
                let cy = T::of_usize(by) + half;
                out.push((
                    (cx, cy),
                    (cx + T::from_isize(dx).unwrap(), cy + T::from_isize(dy).unwrap()),
                ));
            }
        }
    }
    out
}

/// Ordinary least-squares affine fit; `None` with fewer than three matches
/// or collinear sources.
pub fn fit_affine<T: Real>(matches: &[Match<T>]) -> Option<AffineMotion<T>> {
    if matches.len() < 3 {
        return None;
    }
    // centre and scale the sources for conditioning
    let n = T::of_usize(matches.len());
    let mx = matches.iter().map(|m| m.0 .0).sum::<T>() / n;
    let my = matches.iter().map(|m| m.0 .1).sum::<T>() / n;
    let spread = matches
        .iter()
        .map(|m| (m.0 .0 - mx).abs().max((m.0 .1 - my).abs()))
        .fold(T::zero(), T::max);
    if spread <= T::zero() {
        return None;
    }
    let mut ata = SquareMatrix::<T>::zeros(3);
    let mut atx = [T::zero(); 3];
    let mut aty = [T::zero(); 3];
    for ((x, y), (xp, yp)) in matches {
        let row = [(*x - mx) / spread, (*y - my) / spread, T::one()];
        ata.add_outer(&row);
        for k in 0..3 {
            atx[k] = atx[k] + row[k] * *xp;
            aty[k] = aty[k] + row[k] * *yp;
        }
    }
    let px = solve(&ata, &atx, T::of(1e-9))?;
    let py = solve(&ata, &aty, T::of(1e-9))?;
    // undo the normalisation: u = (x - mx)/s
    let a0 = px[0] / spread;
    let b0 = px[1] / spread;
    let a1 = py[0] / spread;
    let b1 = py[1] / spread;
    let m = AffineMotion {
        a0,
        b0,
        c0: px[2] - a0 * mx - b0 * my,
        a1,
        b1,
        c1: py[2] - a1 * mx - b1 * my,
    };
    m.is_finite().then_some(m)
}

/// Starts from the median displacement, then twice refits the affine on the
/// matches it explains (moving foreground is rejected as outliers).
fn robust_fit<T: Real>(matches: &[Match<T>]) -> Option<AffineMotion<T>> {
    if matches.len() < 3 {
        return None;
    }
    let median = |mut v: Vec<T>| {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        v[v.len() / 2]
    };
    let mdx = median(matches.iter().map(|m| m.1 .0 - m.0 .0).collect());
    let mdy = median(matches.iter().map(|m| m.1 .1 - m.0 .1).collect());
    let mut model = AffineMotion::translation(mdx, mdy);
    for round in 0..2 {
        let err = |m: &Match<T>| {
            let (x, y) = model.apply(m.0 .0, m.0 .1);
            ((x - m.1 .0).powi(2) + (y - m.1 .1).powi(2)).sqrt()
        };
        let cut = T::one().max(median(matches.iter().map(err).collect()) * T::of(3.0));
        let inliers: Vec<Match<T>> = matches.iter().copied().filter(|m| err(m) <= cut).collect();
        match fit_affine(&inliers) {
            Some(m) => model = m,
            None if round == 0 => return None,
            None => break,
        }
    }
    Some(model)
}

/// `|Î_t − I_t|` where `Î_t` is `prev` warped forward by `motion`.
pub fn residual<T: Real>(prev: &Image<T>, cur: &Image<T>, motion: &AffineMotion<T>, factor: T) -> ResidualMap<T> {
    let inv = motion.inverse().unwrap_or_else(AffineMotion::identity);
    let (w, h) = (cur.width(), cur.height());
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = inv.apply(T::of_usize(x), T::of_usize(y));
            data.push((prev.sample_bilinear(sx, sy, 0) - cur.get(x, y, 0)).abs());
        }
    }
    ResidualMap {
        width: w,
        height: h,
        data,
        factor,
    }
}

/// Estimates background motion between consecutive frames. Frames larger
/// than 720×480 are downsampled first; the returned affine is in the
/// original frame coordinates.
pub fn estimate_motion<T: Real>(prev: &Image<T>, cur: &Image<T>) -> Result<MotionEstimate<T>> {
    if prev.width() != cur.width() || prev.height() != cur.height() {
        return Err(Error::Shape {
            expected: format!("{}x{}", prev.width(), prev.height()),
            got: format!("{}x{}", cur.width(), cur.height()),
        });
    }
    let (p, factor) = prev.to_gray().fit_within(MAX_WIDTH, MAX_HEIGHT);
    let (c, _) = cur.to_gray().fit_within(MAX_WIDTH, MAX_HEIGHT);
    let matches = block_matches(&p, &c);
    let fit = robust_fit(&matches);
    let degenerate = fit.is_none();
    let small = fit.unwrap_or_else(AffineMotion::identity);
    let residual = residual(&p, &c, &small, factor);
    // rescale translation back to frame pixels
    let motion = AffineMotion {
        c0: small.c0 * factor,
        c1: small.c1 * factor,
        ..small
    };
    Ok(MotionEstimate {
        motion,
        residual,
        degenerate,
        matches: matches.len(),
    })
}

/// Tight box (frame coordinates) of the largest 8-connected blob of
/// `ΔI > mean + 2·std` (and above the noise floor); `None` for a flat
/// residual or a blob under 25 px.
pub fn motion_proposal<T: Real>(res: &ResidualMap<T>) -> Option<BoundingBox<T>> {
    if res.data.is_empty() {
        return None;
    }
    let n = T::of_usize(res.data.len());
    let mean = res.data.iter().copied().sum::<T>() / n;
    let var = res.data.iter().map(|v| (*v - mean).powi(2)).sum::<T>() / n;
    let std = var.sqrt();
    if std <= T::zero() {
        return None;
    }
    let thr = (mean + T::of(2.0) * std).max(T::of(RESIDUAL_FLOOR));
    let mask: Vec<bool> = res.data.iter().map(|v| *v > thr).collect();
    let comps = components(&mask, res.width, Connectivity::Eight);
    let c = largest(&comps)?;
    if c.area < MIN_BLOB_AREA {
        return None;
    }
    let f = res.factor;
    Some(BoundingBox::new(
        T::of_usize(c.min_x) * f,
        T::of_usize(c.min_y) * f,
        T::of_usize(c.max_x - c.min_x + 1) * f,
        T::of_usize(c.max_y - c.min_y + 1) * f,
    ))
}
