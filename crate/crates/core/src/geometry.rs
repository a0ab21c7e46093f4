//! Box arithmetic and the similarity warp between frame coordinates and the
//! fixed-size working patch.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Real;

/// Side of the working patch in pixels.
pub const PATCH_SIDE: usize = 60;
/// Nominal object extent inside the working patch.
pub const OBJECT_SIDE: usize = 32;

/// Axis-aligned box, top-left corner plus extent, continuous pixel units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox<T> {
    pub x: T,
    pub y: T,
    pub w: T,
    pub h: T,
}

impl<T: Real> BoundingBox<T> {
    /// Unchecked constructor.
    pub const fn new(x: T, y: T, w: T, h: T) -> Self {
        Self { x, y, w, h }
    }

    pub fn try_new(x: T, y: T, w: T, h: T) -> Result<Self> {
        let b = Self { x, y, w, h };
        if b.is_valid() {
            Ok(b)
        } else {
            Err(Error::InvalidBox(format!("{b:?}")))
        }
    }

    pub fn from_center(cx: T, cy: T, w: T, h: T) -> Self {
        let half = T::of(0.5);
        Self::new(cx - w * half, cy - h * half, w, h)
    }

    pub fn is_valid(&self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.w.is_finite()
            && self.h.is_finite()
            && self.w > T::zero()
            && self.h > T::zero()
    }

    pub fn center(&self) -> (T, T) {
        let half = T::of(0.5);
        (self.x + self.w * half, self.y + self.h * half)
    }

    #[inline]
    pub fn right(&self) -> T {
        self.x + self.w
    }

    #[inline]
    pub fn bottom(&self) -> T {
        self.y + self.h
    }

    pub fn area(&self) -> T {
        self.w.max(T::zero()) * self.h.max(T::zero())
    }

    pub fn translate(&self, dx: T, dy: T) -> Self {
        Self::new(self.x + dx, self.y + dy, self.w, self.h)
    }

    /// Same center, extents multiplied by `factor`.
    pub fn scale_about_center(&self, factor: T) -> Self {
        let (cx, cy) = self.center();
        Self::from_center(cx, cy, self.w * factor, self.h * factor)
    }

    pub fn intersection_area(&self, other: &Self) -> T {
        let iw = self.right().min(other.right()) - self.x.max(other.x);
        let ih = self.bottom().min(other.bottom()) - self.y.max(other.y);
        if iw <= T::zero() || ih <= T::zero() {
            T::zero()
        } else {
            iw * ih
        }
    }

    pub fn contains_point(&self, px: T, py: T) -> bool {
        px >= self.x && px <= self.right() && py >= self.y && py <= self.bottom()
    }

    /// True when `other` lies entirely inside `self` (closed boundary).
    pub fn contains_box(&self, other: &Self) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }

    pub fn center_distance(&self, other: &Self) -> T {
        let (ax, ay) = self.center();
        let (bx, by) = other.center();
        ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt()
    }

    pub fn cast<U: Real>(&self) -> BoundingBox<U> {
        BoundingBox::new(
            U::of(self.x.as_f64()),
            U::of(self.y.as_f64()),
            U::of(self.w.as_f64()),
            U::of(self.h.as_f64()),
        )
    }
}

/// Intersection over union; 0 for disjoint or degenerate boxes.
pub fn iou<T: Real>(a: &BoundingBox<T>, b: &BoundingBox<T>) -> T {
    let inter = a.intersection_area(b);
    if inter <= T::zero() {
        return T::zero();
    }
    let union = a.area() + b.area() - inter;
    if union <= T::zero() {
        T::zero()
    } else {
        (inter / union).clamp_to(T::zero(), T::one())
    }
}

/// Similarity transform from a square patch back to the frame.
///
/// Patch pixel `u` (centre at `u + 0.5`) maps to frame coordinate
/// `center + (u + 0.5 - side/2) * scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarpParams<T> {
    pub center: (T, T),
    /// Frame pixels per patch pixel.
    pub scale: T,
    pub side: usize,
}

impl<T: Real> WarpParams<T> {
    /// Warp whose crop side is `(side / OBJECT_SIDE) * max(w, h)` around `b`.
    pub fn for_box(b: &BoundingBox<T>, side: usize) -> Self {
        let scale = b.w.max(b.h) / T::of_usize(OBJECT_SIDE);
        Self {
            center: b.center(),
            scale,
            side,
        }
    }

    pub fn half_side(&self) -> T {
        T::of_usize(self.side) * T::of(0.5)
    }

    pub fn patch_to_frame(&self, u: T, v: T) -> (T, T) {
        let hs = self.half_side();
        (
            self.center.0 + (u - hs) * self.scale,
            self.center.1 + (v - hs) * self.scale,
        )
    }

    pub fn frame_to_patch(&self, x: T, y: T) -> (T, T) {
        let hs = self.half_side();
        (
            (x - self.center.0) / self.scale + hs,
            (y - self.center.1) / self.scale + hs,
        )
    }

    pub fn box_to_patch(&self, b: &BoundingBox<T>) -> BoundingBox<T> {
        let (x, y) = self.frame_to_patch(b.x, b.y);
        BoundingBox::new(x, y, b.w / self.scale, b.h / self.scale)
    }

    /// Maps a box in patch coordinates back to the frame.
    pub fn unwarp_box(&self, b: &BoundingBox<T>) -> BoundingBox<T> {
        let (x, y) = self.patch_to_frame(b.x, b.y);
        BoundingBox::new(x, y, b.w * self.scale, b.h * self.scale)
    }

    /// The frame-space square covered by the patch.
    pub fn footprint(&self) -> BoundingBox<T> {
        let side = T::of_usize(self.side) * self.scale;
        BoundingBox::from_center(self.center.0, self.center.1, side, side)
    }
}

/// Free-function form of [`WarpParams::unwarp_box`].
pub fn unwarp_box<T: Real>(b: &BoundingBox<T>, p: &WarpParams<T>) -> BoundingBox<T> {
    p.unwarp_box(b)
}

/// Resamples `frame` under `params` into a `side × side` patch (bilinear,
/// edge-replicated outside the frame).
pub fn warp_with<T: Real>(frame: &Image<T>, params: &WarpParams<T>) -> Image<T> {
    let half = T::of(0.5);
    Image::from_fn(params.side, params.side, frame.channels(), |u, v, c| {
        let (fx, fy) = params.patch_to_frame(T::of_usize(u) + half, T::of_usize(v) + half);
        frame.sample_bilinear(fx - half, fy - half, c)
    })
}

/// Crops the context region around `b` into the 60×60 working patch.
pub fn warp_region<T: Real>(
    frame: &Image<T>,
    b: &BoundingBox<T>,
) -> Result<(Image<T>, WarpParams<T>)> {
    warp_region_sized(frame, b, PATCH_SIDE)
}

pub fn warp_region_sized<T: Real>(
    frame: &Image<T>,
    b: &BoundingBox<T>,
    side: usize,
) -> Result<(Image<T>, WarpParams<T>)> {
    if !b.is_valid() {
        return Err(Error::InvalidBox(format!("{b:?}")));
    }
    let frame_box = BoundingBox::new(
        T::zero(),
        T::zero(),
        T::of_usize(frame.width()),
        T::of_usize(frame.height()),
    );
    if frame_box.intersection_area(b) <= T::zero() {
        return Err(Error::LostRegion);
    }
    let params = WarpParams::for_box(b, side);
    Ok((warp_with(frame, &params), params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bb(x: f64, y: f64, w: f64, h: f64) -> BoundingBox<f64> {
        BoundingBox::new(x, y, w, h)
    }

    #[test]
    fn iou_examples() {
        let a = bb(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bb(20.0, 20.0, 5.0, 5.0)), 0.0);
        assert!((iou(&a, &bb(5.0, 0.0, 10.0, 10.0)) - 1.0 / 3.0).abs() < 1e-12);
        // touching edges share no area
        assert_eq!(iou(&a, &bb(10.0, 0.0, 10.0, 10.0)), 0.0);
    }

    #[test]
    fn warp_scale_follows_box_size() {
        let frame = Image::<f64>::new(400, 400, 3);
        let (patch, p) = warp_region(&frame, &bb(100.0, 100.0, 32.0, 32.0)).unwrap();
        assert_eq!((patch.width(), patch.height()), (60, 60));
        assert_eq!(p.scale, 1.0);
        assert_eq!(p.footprint().w, 60.0);
        let (_, p) = warp_region(&frame, &bb(100.0, 100.0, 64.0, 64.0)).unwrap();
        assert_eq!(p.scale, 2.0);
        assert_eq!(p.footprint().w, 120.0);
    }

    #[test]
    fn warp_outside_frame_is_lost() {
        let frame = Image::<f64>::new(50, 50, 3);
        let r = warp_region(&frame, &bb(60.0, 60.0, 10.0, 10.0));
        assert!(matches!(r, Err(Error::LostRegion)));
    }

    #[test]
    fn corner_crop_matches_padded_crop() {
        // Oracle: explicitly pad the frame by edge replication, then cut the
        // integer-aligned window. At scale 1 the warp samples pixel centres.
        let frame = Image::<f64>::from_fn(40, 30, 3, |x, y, c| (x * 3 + y * 5 + c * 11) as f64);
        let b = bb(-6.0, -4.0, 32.0, 32.0);
        let (patch, p) = warp_region(&frame, &b).unwrap();
        assert_eq!(p.scale, 1.0);
        let pad = 64usize;
        let padded = Image::<f64>::from_fn(40 + 2 * pad, 30 + 2 * pad, 3, |x, y, c| {
            let sx = (x as isize - pad as isize).clamp(0, 39) as usize;
            let sy = (y as isize - pad as isize).clamp(0, 29) as usize;
            frame.get(sx, sy, c)
        });
        let (cx, cy) = b.center();
        let ox = (cx - 30.0) as isize + pad as isize;
        let oy = (cy - 30.0) as isize + pad as isize;
        for v in 0..60 {
            for u in 0..60 {
                for c in 0..3 {
                    let want = padded.get((ox + u as isize) as usize, (oy + v as isize) as usize, c);
                    assert!((patch.get(u, v, c) - want).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn unwarp_examples() {
        let frame = Image::<f64>::new(200, 200, 3);
        let b = bb(50.0, 60.0, 32.0, 32.0);
        let (_, p) = warp_region(&frame, &b).unwrap();
        let patch_box = BoundingBox::from_center(30.0, 30.0, 32.0, 32.0);
        assert_eq!(unwarp_box(&patch_box, &p), b);
        let b2 = bb(50.0, 60.0, 64.0, 64.0);
        let (_, p2) = warp_region(&frame, &b2).unwrap();
        let u = unwarp_box(&patch_box, &p2);
        assert_eq!((u.w, u.h), (64.0, 64.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn warp_unwarp_round_trip(
            x in 0.0f64..300.0, y in 0.0f64..200.0, w in 4.0f64..100.0, h in 4.0f64..100.0,
            ox in -20.0f64..20.0, oy in -20.0f64..20.0, s in 0.2f64..4.0,
        ) {
            let b = bb(x, y, w, h);
            let p = WarpParams { center: (x + ox, y + oy), scale: s, side: PATCH_SIDE };
            let back = p.unwarp_box(&p.box_to_patch(&b));
            prop_assert!((back.x - b.x).abs() < 0.5);
            prop_assert!((back.y - b.y).abs() < 0.5);
            prop_assert!((back.w - b.w).abs() < 0.5);
            prop_assert!((back.h - b.h).abs() < 0.5);
        }

        #[test]
        fn iou_properties(
            ax in -50.0f64..50.0, ay in -50.0f64..50.0, aw in 0.5f64..60.0, ah in 0.5f64..60.0,
            bx in -50.0f64..50.0, by in -50.0f64..50.0, bw in 0.5f64..60.0, bh in 0.5f64..60.0,
            tx in -100.0f64..100.0, ty in -100.0f64..100.0,
        ) {
            let a = bb(ax, ay, aw, ah);
            let b = bb(bx, by, bw, bh);
            let v = iou(&a, &b);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!((v - iou(&b, &a)).abs() < 1e-12);
            prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
            let moved = iou(&a.translate(tx, ty), &b.translate(tx, ty));
            prop_assert!((moved - v).abs() < 1e-9);
        }
    }
}
