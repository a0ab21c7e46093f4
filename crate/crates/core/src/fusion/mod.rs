//! Proposal fusion, tracking-quality mode control and re-identification.
//!
//! All boxes here live in working-patch coordinates.

pub mod mrf;

use crate::error::{Error, Result};
use crate::geometry::{iou, BoundingBox};
use crate::heatmap::{mean_in_box, HeatMap, Verdict};
use crate::image::Image;
use crate::scalar::Real;

pub use mrf::{mrf_label, MrfMask, MrfParams};

#[derive(Debug, Clone, PartialEq)]
pub struct FusionConfig {
    pub alpha: f64,
    /// Largest per-axis relative size change still considered stable.
    pub stability: f64,
    pub mrf: MrfParams,
    /// Stable reports needed to leave DCF-only mode.
    pub reentry_stable: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            alpha: 0.7,
            stability: 0.2,
            mrf: MrfParams::default(),
            reentry_stable: 5,
        }
    }
}

/// Which input a fused box came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Dcf,
    Obj,
    /// Index into the superpixel proposal list.
    Spp(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionPath {
    /// Objectness unavailable; the DCF box is returned unchanged.
    DcfOnly,
    Simple,
    Mrf,
    /// The MRF mask failed and the simple steps decided.
    Fallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fused<T> {
    pub bbox: BoundingBox<T>,
    pub source: Source,
    pub path: FusionPath,
}

/// Adaptive weight `clamp(IoU(x_dcf, x_obj), 0, 1)`.
pub fn adaptive_weight<T: Real>(x_dcf: &BoundingBox<T>, x_obj: &BoundingBox<T>) -> T {
    iou(x_dcf, x_obj).clamp_to(T::zero(), T::one())
}

/// Index of the superpixel proposal maximising
/// `IoU(x, x_dcf) + λ·IoU(x, x_obj)`; the first wins ties.
pub fn select_spp<T: Real>(
    spp: &[BoundingBox<T>],
    x_dcf: &BoundingBox<T>,
    x_obj: &BoundingBox<T>,
) -> Option<usize> {
    let lambda = adaptive_weight(x_dcf, x_obj);
    let scores: Vec<T> = spp
        .iter()
        .map(|x| iou(x, x_dcf) + lambda * iou(x, x_obj))
        .collect();
    crate::scalar::argmax(&scores)
}

/// Smallest pairwise IoU among the given boxes (1 for fewer than two).
pub fn min_pairwise_iou<T: Real>(boxes: &[&BoundingBox<T>]) -> T {
    let mut m = T::one();
    for i in 0..boxes.len() {
        for j in i + 1..boxes.len() {
            m = m.min(iou(boxes[i], boxes[j]));
        }
    }
    m
}

/// Both sides within `tol` relative change of `prev`.
pub fn is_stable<T: Real>(b: &BoundingBox<T>, prev: &BoundingBox<T>, tol: T) -> bool {
    (b.w - prev.w).abs() / prev.w <= tol && (b.h - prev.h).abs() / prev.h <= tol
}

/// The two simple-fusion steps without the alignment precondition.
pub fn simple_steps<T: Real>(
    x_dcf: &BoundingBox<T>,
    x_obj: &BoundingBox<T>,
    x_spp: Option<&BoundingBox<T>>,
    heat: &HeatMap<T>,
    x_prev: &BoundingBox<T>,
    tol: T,
) -> (BoundingBox<T>, Source) {
    let mut df = (*x_obj, Source::Obj);
    if let Some(s) = x_spp {
        if iou(s, x_dcf) > iou(x_obj, x_dcf) {
            df = (*s, Source::Spp(usize::MAX));
        }
    }
    if is_stable(&df.0, x_prev, tol) || mean_in_box(heat, &df.0) > mean_in_box(heat, x_dcf) {
        df
    } else {
        (*x_dcf, Source::Dcf)
    }
}

/// Simple fusion; the three boxes must be aligned to at least `alpha`.
pub fn simple_fuse<T: Real>(
    x_dcf: &BoundingBox<T>,
    x_obj: &BoundingBox<T>,
    x_spp: &BoundingBox<T>,
    heat: &HeatMap<T>,
    x_prev: &BoundingBox<T>,
    cfg: &FusionConfig,
) -> Result<BoundingBox<T>> {
    if min_pairwise_iou(&[x_dcf, x_obj, x_spp]) < T::of(cfg.alpha) {
        return Err(Error::Contract(
            "simple fusion needs proposals aligned to at least alpha".into(),
        ));
    }
    Ok(simple_steps(x_dcf, x_obj, Some(x_spp), heat, x_prev, T::of(cfg.stability)).0)
}

/// Inputs to [`fuse`] besides the boxes.
pub struct FusionContext<'a, T> {
    pub patch: &'a Image<T>,
    pub heat: &'a HeatMap<T>,
    /// Per-pixel objectness of the patch (for the MRF).
    pub heat_pixels: &'a [T],
    pub x_prev: &'a BoundingBox<T>,
}

/// Selects the final box from the three branches.
pub fn fuse<T: Real>(
    x_dcf: &BoundingBox<T>,
    x_obj: Option<&BoundingBox<T>>,
    spp: &[BoundingBox<T>],
    ctx: &FusionContext<'_, T>,
    cfg: &FusionConfig,
) -> Fused<T> {
    let Some(x_obj) = x_obj else {
        return Fused {
            bbox: *x_dcf,
            source: Source::Dcf,
            path: FusionPath::DcfOnly,
        };
    };
    let spp_idx = select_spp(spp, x_dcf, x_obj);
    let x_spp = spp_idx.map(|i| &spp[i]);
    let mut group = vec![x_dcf, x_obj];
    group.extend(x_spp);
    let aligned = min_pairwise_iou(&group) >= T::of(cfg.alpha);
    let mut path = FusionPath::Simple;
    if !aligned {
        let mask = mrf_label(ctx.patch, ctx.heat_pixels, x_dcf, &cfg.mrf);
        if let Some(wrap) = mask.as_ref().and_then(|m| m.wrapping_box::<T>()) {
            let mut cands = vec![(*x_dcf, Source::Dcf), (*x_obj, Source::Obj)];
            cands.extend(spp.iter().enumerate().map(|(i, b)| (*b, Source::Spp(i))));
            let scores: Vec<T> = cands.iter().map(|(b, _)| iou(b, &wrap)).collect();
            let best = crate::scalar::argmax(&scores).unwrap_or(0);
            return Fused {
                bbox: cands[best].0,
                source: cands[best].1,
                path: FusionPath::Mrf,
            };
        }
        path = FusionPath::Fallback;
    }
    let (bbox, source) = simple_steps(x_dcf, x_obj, x_spp, ctx.heat, ctx.x_prev, T::of(cfg.stability));
    let source = match source {
        Source::Spp(_) => Source::Spp(spp_idx.unwrap_or(0)),
        s => s,
    };
    Fused { bbox, source, path }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackerMode {
    FusionOn,
    DcfOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModeState {
    pub mode: TrackerMode,
    pub frames_in_mode: usize,
    /// Consecutive stable reports while in DCF-only mode.
    pub stable_run: usize,
}

impl Default for ModeState {
    fn default() -> Self {
        Self {
            mode: TrackerMode::FusionOn,
            frames_in_mode: 0,
            stable_run: 0,
        }
    }
}

impl ModeState {
    /// Advances on one quality verdict. Returns `true` when fusion is
    /// re-enabled on this step.
    pub fn step(&mut self, verdict: Verdict, reentry_stable: usize) -> bool {
        let before = self.mode;
        match self.mode {
            TrackerMode::FusionOn => {
                if verdict.is_failure() {
                    self.mode = TrackerMode::DcfOnly;
                    self.stable_run = 0;
                }
            }
            TrackerMode::DcfOnly => {
                if verdict == Verdict::Stable {
                    self.stable_run += 1;
                } else {
                    self.stable_run = 0;
                }
                if self.stable_run >= reentry_stable {
                    self.mode = TrackerMode::FusionOn;
                    self.stable_run = 0;
                }
            }
        }
        if self.mode == before {
            self.frames_in_mode += 1;
        } else {
            self.frames_in_mode = 0;
        }
        before == TrackerMode::DcfOnly && self.mode == TrackerMode::FusionOn
    }
}

/// Functional form of [`ModeState::step`].
pub fn quality_control_step(state: ModeState, verdict: Verdict, reentry_stable: usize) -> (ModeState, bool) {
    let mut s = state;
    let re = s.step(verdict, reentry_stable);
    (s, re)
}

/// Linear extrapolation `2·c₁ − c₂` of the last two centres.
pub fn predict_center<T: Real>(last: (T, T), before: (T, T)) -> (T, T) {
    let two = T::of(2.0);
    (two * last.0 - before.0, two * last.1 - before.1)
}

/// Centre at frame `t` on the line through `last = (t₁, c₁)` and
/// `before = (t₂, c₂)`, `t₂ < t₁`. With consecutive frames and `t = t₁ + 1`
/// this is [`predict_center`].
pub fn extrapolate_center<T: Real>(last: (usize, (T, T)), before: (usize, (T, T)), t: usize) -> (T, T) {
    let (t1, c1) = last;
    let (t2, c2) = before;
    if t1 <= t2 {
        return c1;
    }
    let k = T::of_usize(t - t1) / T::of_usize(t1 - t2);
    (c1.0 + k * (c1.0 - c2.0), c1.1 + k * (c1.1 - c2.1))
}

/// Re-identification candidate. Distances are measured in patch pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct ReidCandidate<T> {
    pub bbox: BoundingBox<T>,
    pub features: Vec<T>,
    /// Mean objectness inside the candidate.
    pub objectness: T,
    pub center: (T, T),
}

/// `β1⟨f_x, f_prev⟩ + β2·S_obj − β3‖c − ĉ‖²`.
pub fn reid_score_weighted<T: Real>(
    f_x: &[T],
    f_prev: &[T],
    objectness: T,
    center: (T, T),
    predicted: (T, T),
    betas: (T, T, T),
) -> T {
    let dot = crate::linalg::dot(f_x, f_prev);
    let d2 = (center.0 - predicted.0).powi(2) + (center.1 - predicted.1).powi(2);
    betas.0 * dot + betas.1 * objectness - betas.2 * d2
}

/// Score with the normalising weights: cosine appearance, `β2 = λ`,
/// `β3 = 1/L_B²`.
pub fn reid_score<T: Real>(
    f_x: &[T],
    f_prev: &[T],
    objectness: T,
    center: (T, T),
    predicted: (T, T),
    lambda: T,
    side: T,
) -> T {
    let norms = crate::linalg::norm(f_x) * crate::linalg::norm(f_prev);
    let b1 = if norms > T::zero() { T::one() / norms } else { T::zero() };
    reid_score_weighted(f_x, f_prev, objectness, center, predicted, (b1, lambda, T::one() / (side * side)))
}

/// Which re-identification candidate wins an exact score tie.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReidTie {
    Dcf,
    Motion,
}

/// Picks between the DCF and motion candidates; ties keep the DCF box.
/// Returns `true` when the motion proposal wins.
pub fn reid_choose<T: Real>(
    dcf: &ReidCandidate<T>,
    motion: Option<&ReidCandidate<T>>,
    f_prev: &[T],
    predicted: (T, T),
    lambda: T,
    side: T,
) -> (BoundingBox<T>, bool) {
    reid_choose_with(dcf, motion, f_prev, predicted, lambda, side, ReidTie::Dcf)
}

/// [`reid_choose`] with an explicit tie rule.
pub fn reid_choose_with<T: Real>(
    dcf: &ReidCandidate<T>,
    motion: Option<&ReidCandidate<T>>,
    f_prev: &[T],
    predicted: (T, T),
    lambda: T,
    side: T,
    tie: ReidTie,
) -> (BoundingBox<T>, bool) {
    let Some(m) = motion else {
        return (dcf.bbox, false);
    };
    let score = |c: &ReidCandidate<T>| reid_score(&c.features, f_prev, c.objectness, c.center, predicted, lambda, side);
    let (sm, sd) = (score(m), score(dcf));
    let motion_wins = match tie {
        ReidTie::Dcf => sm > sd,
        ReidTie::Motion => sm >= sd,
    };
    if motion_wins {
        (m.bbox, true)
    } else {
        (dcf.bbox, false)
    }
}
