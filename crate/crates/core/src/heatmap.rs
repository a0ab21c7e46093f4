//! Objectness heat map on the block grid, the temporally smoothed shape
//! template, box extraction and heat-map quality diagnostics.
//!
//! Grid cell `(row i, col j)` belongs to the block whose top-left corner is
//! `(2j, 2i)` in the working patch; its centre sits at `(2j + 4, 2i + 4)`.

use crate::features::{BLOCK_SIDE, BLOCK_STRIDE, GRID_SIDE};
use crate::geometry::{BoundingBox, PATCH_SIDE};
use crate::regions::{components, largest, Connectivity};
use crate::scalar::Real;

/// Dense row-major grid of scores in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

pub type HeatMap<T> = Grid<T>;
pub type ShapeTemplate<T> = Grid<T>;

impl<T: Real> Grid<T> {
    pub fn filled(rows: usize, cols: usize, v: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![v; rows * cols],
        }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn energy(&self) -> T {
        self.data.iter().map(|v| *v * *v).sum()
    }

    pub fn mean(&self) -> T {
        crate::scalar::mean(&self.data)
    }

    /// Indicator of `b` (patch coordinates) on the block grid: a cell is 1
    /// when its block centre lies inside the box.
    pub fn from_box(b: &BoundingBox<T>) -> Self {
        let mut g = Self::filled(GRID_SIDE, GRID_SIDE, T::zero());
        for r in 0..GRID_SIDE {
            for c in 0..GRID_SIDE {
                let (x, y) = cell_center(r, c);
                if b.contains_point(x, y) {
                    g.set(r, c, T::one());
                }
            }
        }
        g
    }
}

/// Centre of a grid cell in patch pixels.
pub fn cell_center<T: Real>(r: usize, c: usize) -> (T, T) {
    let half = T::of_usize(BLOCK_SIDE / 2);
    (
        T::of_usize(c * BLOCK_STRIDE) + half,
        T::of_usize(r * BLOCK_STRIDE) + half,
    )
}

/// Places block probabilities on the 27×27 grid.
pub fn assemble<T: Real>(probs: &[T], positions: &[(usize, usize)]) -> HeatMap<T> {
    let mut g = Grid::filled(GRID_SIDE, GRID_SIDE, T::zero());
    for (p, &(x, y)) in probs.iter().zip(positions) {
        g.set(y / BLOCK_STRIDE, x / BLOCK_STRIDE, *p);
    }
    g
}

/// Damps cells where the previous template is below 0.5.
pub fn suppress<T: Real>(raw: &HeatMap<T>, prev: &ShapeTemplate<T>) -> HeatMap<T> {
    let half = T::of(0.5);
    let data = raw
        .data
        .iter()
        .zip(&prev.data)
        .map(|(p, s)| if *s < half { *p * *s } else { *p })
        .collect();
    Grid {
        rows: raw.rows,
        cols: raw.cols,
        data,
    }
}

/// Closed-form template update: `P*/(1+μ²) + μ²·S/(1+μ²)`.
pub fn update_template<T: Real>(suppressed: &HeatMap<T>, prev: &ShapeTemplate<T>, mu: T) -> ShapeTemplate<T> {
    let mu2 = mu * mu;
    let denom = T::one() + mu2;
    let data = suppressed
        .data
        .iter()
        .zip(&prev.data)
        .map(|(p, s)| *p / denom + mu2 * *s / denom)
        .collect();
    Grid {
        rows: suppressed.rows,
        cols: suppressed.cols,
        data,
    }
}

/// The regularised least-squares objective the update minimises, written as
/// the stacked system `‖X − P*‖² + ‖μX − μS‖²`.
pub fn template_objective<T: Real>(x: &[T], suppressed: &[T], prev: &[T], mu: T) -> T {
    x.iter()
        .zip(suppressed)
        .zip(prev)
        .map(|((x, p), s)| (*x - *p).powi(2) + (mu * *x - mu * *s).powi(2))
        .sum()
}

/// Circular shift by `(dx, dy)` cells: the value at `(r, c)` moves to
/// `(r + dy, c + dx)` modulo the grid size.
pub fn align<T: Real>(template: &ShapeTemplate<T>, dx: isize, dy: isize) -> ShapeTemplate<T> {
    let (rows, cols) = (template.rows as isize, template.cols as isize);
    let mut out = template.clone();
    for r in 0..rows {
        for c in 0..cols {
            let nr = (r + dy).rem_euclid(rows) as usize;
            let nc = (c + dx).rem_euclid(cols) as usize;
            out.set(nr, nc, template.at(r as usize, c as usize));
        }
    }
    out
}

/// Patch-pixel box covered by a run of grid cells (inclusive indices). Each
/// cell owns the `BLOCK_STRIDE`-wide strip around its block centre.
pub fn cells_to_patch_box<T: Real>(min_c: usize, min_r: usize, max_c: usize, max_r: usize) -> BoundingBox<T> {
    let half = T::of_usize(BLOCK_STRIDE) * T::of(0.5);
    let (x0, y0) = cell_center::<T>(min_r, min_c);
    let (x1, y1) = cell_center::<T>(max_r, max_c);
    BoundingBox::new(x0 - half, y0 - half, x1 - x0 + half * T::of(2.0), y1 - y0 + half * T::of(2.0))
}

/// Tight box around the largest 4-connected component of `{P* ≥ θ}`.
pub fn extract_box<T: Real>(map: &HeatMap<T>, theta: T) -> Option<BoundingBox<T>> {
    let mask: Vec<bool> = map.data.iter().map(|v| *v >= theta).collect();
    let comps = components(&mask, map.cols, Connectivity::Four);
    largest(&comps).map(|c| cells_to_patch_box(c.min_x, c.min_y, c.max_x, c.max_y))
}

/// Mean of the cells whose centre lies inside `b` (patch coordinates);
/// zero when no cell centre is covered.
pub fn mean_in_box<T: Real>(map: &HeatMap<T>, b: &BoundingBox<T>) -> T {
    let mut acc = T::zero();
    let mut n = 0usize;
    for r in 0..map.rows {
        for c in 0..map.cols {
            let (x, y) = cell_center(r, c);
            if b.contains_point(x, y) {
                acc = acc + map.at(r, c);
                n += 1;
            }
        }
    }
    if n == 0 {
        T::zero()
    } else {
        acc / T::of_usize(n)
    }
}

/// Bilinear upsampling of the block grid to one value per patch pixel.
pub fn upsample_to_patch<T: Real>(map: &HeatMap<T>) -> Vec<T> {
    let stride = T::of_usize(BLOCK_STRIDE);
    let offset = T::of_usize(BLOCK_SIDE / 2) - T::of(0.5);
    let last_r = T::of_usize(map.rows - 1);
    let last_c = T::of_usize(map.cols - 1);
    let mut out = Vec::with_capacity(PATCH_SIDE * PATCH_SIDE);
    for py in 0..PATCH_SIDE {
        let gy = ((T::of_usize(py) - offset) / stride).clamp_to(T::zero(), last_r);
        for px in 0..PATCH_SIDE {
            let gx = ((T::of_usize(px) - offset) / stride).clamp_to(T::zero(), last_c);
            let (r0, c0) = (gy.floor(), gx.floor());
            let (fy, fx) = (gy - r0, gx - c0);
            let r0 = r0.to_usize().unwrap_or(0);
            let c0 = c0.to_usize().unwrap_or(0);
            let r1 = (r0 + 1).min(map.rows - 1);
            let c1 = (c0 + 1).min(map.cols - 1);
            let one = T::one();
            let top = map.at(r0, c0) * (one - fx) + map.at(r0, c1) * fx;
            let bot = map.at(r1, c0) * (one - fx) + map.at(r1, c1) * fx;
            out.push(top * (one - fy) + bot * fy);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Stable,
    TooSmall,
    TooLarge,
    Fragmented,
    /// No failure, but recent objectness boxes still change size.
    Varying,
}

impl Verdict {
    pub fn is_failure(self) -> bool {
        matches!(self, Verdict::TooSmall | Verdict::TooLarge | Verdict::Fragmented)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityThresholds {
    pub min_area: f64,
    pub max_area: f64,
    /// A component is significant at this fraction of the largest one.
    pub blob_ratio: f64,
    pub max_size_cov: f64,
    pub history: usize,
}

impl Default for QualityThresholds {
    fn default() -> Self {
        Self {
            min_area: 0.03,
            max_area: 0.75,
            blob_ratio: 0.2,
            max_size_cov: 0.15,
            history: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualityReport {
    pub area_fraction: f64,
    pub significant_components: usize,
    /// Largest coefficient of variation of width and height over the recent
    /// objectness boxes; `None` when the history is too short.
    pub size_variation: Option<f64>,
    pub verdict: Verdict,
}

fn coefficient_of_variation(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if mean <= 0.0 {
        return f64::INFINITY;
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean
}

/// Classifies the heat map as too small, too large, fragmented, or stable.
/// `sizes` holds `(w, h)` of recent objectness boxes, oldest first.
pub fn quality_check<T: Real>(
    map: &HeatMap<T>,
    sizes: &[(T, T)],
    th: &QualityThresholds,
) -> QualityReport {
    let half = T::of(0.5);
    let mask: Vec<bool> = map.data.iter().map(|v| *v > half).collect();
    let area_fraction = mask.iter().filter(|&&m| m).count() as f64 / mask.len() as f64;
    let comps = components(&mask, map.cols, Connectivity::Four);
    let biggest = largest(&comps).map_or(0, |c| c.area) as f64;
    let significant_components = comps
        .iter()
        .filter(|c| c.area as f64 >= th.blob_ratio * biggest)
        .count();

    let size_variation = if sizes.len() >= th.history {
        let recent = &sizes[sizes.len() - th.history..];
        let ws: Vec<f64> = recent.iter().map(|s| s.0.as_f64()).collect();
        let hs: Vec<f64> = recent.iter().map(|s| s.1.as_f64()).collect();
        Some(coefficient_of_variation(&ws).max(coefficient_of_variation(&hs)))
    } else {
        None
    };

    let verdict = if area_fraction < th.min_area {
        Verdict::TooSmall
    } else if area_fraction > th.max_area {
        Verdict::TooLarge
    } else if significant_components >= 2 {
        Verdict::Fragmented
    } else if size_variation.is_some_and(|v| v < th.max_size_cov) {
        Verdict::Stable
    } else {
        Verdict::Varying
    };
    QualityReport {
        area_fraction,
        significant_components,
        size_variation,
        verdict,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::block_positions;
    use proptest::prelude::*;

    fn grid(v: f64) -> Grid<f64> {
        Grid::filled(GRID_SIDE, GRID_SIDE, v)
    }

    #[test]
    fn assemble_examples() {
        let pos = block_positions();
        let ones = assemble(&vec![1.0f64; 729], &pos);
        assert!(ones.data.iter().all(|&v| v == 1.0));
        let mut probs = vec![0.0f64; 729];
        probs[0] = 1.0;
        let one_hot = assemble(&probs, &pos);
        assert_eq!(one_hot.at(0, 0), 1.0);
        assert_eq!(one_hot.data.iter().filter(|&&v| v > 0.0).count(), 1);
        assert_eq!((one_hot.rows, one_hot.cols), (27, 27));
        probs[0] = 0.0;
        probs[28] = 0.7; // block at (2, 2)
        assert_eq!(assemble(&probs, &pos).at(1, 1), 0.7);
    }

    #[test]
    fn suppress_examples() {
        let p = grid(0.8);
        assert_eq!(suppress(&p, &grid(1.0)), p);
        assert!(suppress(&p, &grid(0.0)).data.iter().all(|&v| v == 0.0));
        assert!((suppress(&p, &grid(0.2)).at(3, 3) - 0.16).abs() < 1e-12);
        assert_eq!(suppress(&p, &grid(0.9)).at(3, 3), 0.8);
    }

    #[test]
    fn update_examples() {
        let s = grid(0.3);
        assert_eq!(update_template(&s, &s, 5.0), s);
        let out = update_template(&grid(1.0), &grid(0.5), 5.0);
        assert!((out.at(0, 0) - 13.5 / 26.0).abs() < 1e-12);
    }

    #[test]
    fn align_examples() {
        let mut g = grid(0.0);
        g.set(0, 0, 1.0);
        g.set(5, 26, 0.5);
        assert_eq!(align(&g, 0, 0), g);
        assert_eq!(align(&align(&g, 1, 0), -1, 0), g);
        let moved = align(&g, 1, 2);
        assert_eq!(moved.at(2, 1), 1.0);
        assert_eq!(moved.at(7, 0), 0.5);
        assert!((moved.energy() - g.energy()).abs() < 1e-12);
    }

    #[test]
    fn extract_examples() {
        assert!(extract_box(&grid(0.0), 0.5).is_none());
        let mut g = grid(0.0);
        for r in 10..13 {
            for c in 4..7 {
                g.set(r, c, 0.9);
            }
        }
        let b = extract_box(&g, 0.5).unwrap();
        // columns 4..=6 → centres 12..=16, widened by one stride
        assert_eq!((b.x, b.y, b.w, b.h), (11.0, 23.0, 6.0, 6.0));
    }

    #[test]
    fn extract_picks_larger_component() {
        let mut g = grid(0.0);
        // component A: 2×2 at rows 1-2, cols 1-2; component B: 3×4 at rows 15-17, cols 18-21
        for (r, c) in [(1, 1), (1, 2), (2, 1), (2, 2)] {
            g.set(r, c, 1.0);
        }
        for r in 15..18 {
            for c in 18..22 {
                g.set(r, c, 0.6);
            }
        }
        // oracle: count each component's area directly
        let area_a = 4;
        let area_b = 12;
        assert!(area_b > area_a);
        let b = extract_box(&g, 0.5).unwrap();
        assert_eq!(b, cells_to_patch_box(18, 15, 21, 17));
    }

    #[test]
    fn quality_examples() {
        let th = QualityThresholds::default();
        assert_eq!(quality_check(&grid(1.0), &[], &th).verdict, Verdict::TooLarge);
        assert_eq!(quality_check(&grid(0.0), &[], &th).verdict, Verdict::TooSmall);

        let mut two = grid(0.0);
        for r in 2..8 {
            for c in 2..8 {
                two.set(r, c, 1.0);
                two.set(r + 16, c + 16, 1.0);
            }
        }
        let report = quality_check(&two, &[], &th);
        assert_eq!(report.significant_components, 2);
        assert_eq!(report.verdict, Verdict::Fragmented);

        let mut one = grid(0.0);
        for r in 8..18 {
            for c in 8..18 {
                one.set(r, c, 1.0);
            }
        }
        let steady = vec![(20.0, 20.0); 5];
        assert_eq!(quality_check(&one, &steady, &th).verdict, Verdict::Stable);
        let jumpy = vec![(20.0, 20.0), (40.0, 20.0), (10.0, 20.0), (30.0, 20.0), (20.0, 20.0)];
        assert_eq!(quality_check(&one, &jumpy, &th).verdict, Verdict::Varying);
        assert_eq!(quality_check(&one, &steady[..3], &th).verdict, Verdict::Varying);
    }

    #[test]
    fn from_box_is_indicator() {
        let b = BoundingBox::new(14.0, 14.0, 32.0, 32.0);
        let s = Grid::<f64>::from_box(&b);
        // centres 2c+4 inside [14, 46] ⇔ c ∈ 5..=21
        for r in 0..27 {
            for c in 0..27 {
                let want = (5..=21).contains(&r) && (5..=21).contains(&c);
                assert_eq!(s.at(r, c), if want { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn upsample_constant_and_centres() {
        let up = upsample_to_patch(&grid(0.4));
        assert_eq!(up.len(), 3600);
        assert!(up.iter().all(|v| (v - 0.4).abs() < 1e-12));
        let mut g = grid(0.0);
        g.set(10, 10, 1.0);
        let up = upsample_to_patch(&g);
        // cell (10,10) centred at patch coordinate 24.0, i.e. between pixels 23 and 24
        assert!((up[23 * 60 + 23] - 0.5625).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn suppress_never_increases(p in prop::collection::vec(0.0f64..=1.0, 729),
                                     s in prop::collection::vec(0.0f64..=1.0, 729)) {
            let pg = Grid { rows: 27, cols: 27, data: p };
            let sg = Grid { rows: 27, cols: 27, data: s };
            let out = suppress(&pg, &sg);
            for (o, i) in out.data.iter().zip(&pg.data) {
                prop_assert!(*o <= *i);
            }
        }

        #[test]
        fn update_stays_in_unit_interval(p in prop::collection::vec(0.0f64..=1.0, 25),
                                          s in prop::collection::vec(0.0f64..=1.0, 25),
                                          mu in 0.0f64..20.0) {
            let pg = Grid { rows: 5, cols: 5, data: p };
            let sg = Grid { rows: 5, cols: 5, data: s };
            let out = update_template(&pg, &sg, mu);
            prop_assert!(out.data.iter().all(|v| (0.0..=1.0).contains(v)));
        }

        #[test]
        fn update_is_stationary_point(p in prop::collection::vec(0.0f64..=1.0, 25),
                                       s in prop::collection::vec(0.0f64..=1.0, 25),
                                       mu in 0.1f64..10.0) {
            // central finite differences of the objective vanish at the update
            let pg = Grid { rows: 5, cols: 5, data: p.clone() };
            let sg = Grid { rows: 5, cols: 5, data: s.clone() };
            let x = update_template(&pg, &sg, mu).data;
            let h = 1e-4;
            for i in 0..25 {
                let mut up = x.clone();
                let mut dn = x.clone();
                up[i] += h;
                dn[i] -= h;
                let g = (template_objective(&up, &p, &s, mu) - template_objective(&dn, &p, &s, mu)) / (2.0 * h);
                prop_assert!(g.abs() < 1e-9 * (1.0 + mu * mu) * 10.0);
            }
        }
    }
}
