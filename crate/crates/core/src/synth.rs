//! Seeded synthetic sequences with exact ground truth.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::{format_box_line, GT_FILE, IMG_DIR, PRESENCE_FILE};
use crate::geometry::BoundingBox;
use crate::image::Image;

pub const WIDTH: usize = 320;
pub const HEIGHT: usize = 240;
const BACKGROUND: [f64; 3] = [70.0, 90.0, 110.0];
const NOISE: i32 = 3;
/// Supersampling factor per axis for anti-aliased shapes.
const SS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    Static,
    Translate,
    Deform,
    Occlude,
}

impl FromStr for SynthKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(Self::Static),
            "translate" => Ok(Self::Translate),
            "deform" => Ok(Self::Deform),
            "occlude" => Ok(Self::Occlude),
            _ => Err(Error::Config(format!(
                "unknown sequence kind '{s}' (expected static, translate, deform or occlude)"
            ))),
        }
    }
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Static => "static",
            Self::Translate => "translate",
            Self::Deform => "deform",
            Self::Occlude => "occlude",
        })
    }
}

#[derive(Debug, Clone)]
pub struct SynthSequence {
    pub kind: SynthKind,
    pub frames: Vec<Image<f64>>,
    /// Tight box of the full (possibly hidden) object, 0-indexed.
    pub boxes: Vec<BoundingBox<f64>>,
    /// False while the object is completely hidden.
    pub present: Vec<bool>,
}

/// Layout of the occlusion sequence: a square moving horizontally behind a
/// full-height band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OcclusionParams {
    /// Band `[x0, x1)`.
    pub band: (f64, f64),
    pub band_color: [f64; 3],
    pub speed: f64,
    pub side: f64,
    /// Frame at which the object reverses direction, if any.
    pub turn_at: Option<usize>,
}

impl Default for OcclusionParams {
    fn default() -> Self {
        Self {
            band: (150.0, 190.0),
            band_color: BACKGROUND,
            speed: 2.0,
            side: 28.0,
            turn_at: None,
        }
    }
}

enum Shape {
    Rect(BoundingBox<f64>),
    Ellipse { cx: f64, cy: f64, a: f64, b: f64 },
}

impl Shape {
    fn contains(&self, x: f64, y: f64) -> bool {
        match self {
            Shape::Rect(b) => b.contains_point(x, y),
            Shape::Ellipse { cx, cy, a, b } => ((x - cx) / a).powi(2) + ((y - cy) / b).powi(2) <= 1.0,
        }
    }

    fn bbox(&self) -> BoundingBox<f64> {
        match self {
            Shape::Rect(b) => *b,
            Shape::Ellipse { cx, cy, a, b } => BoundingBox::from_center(*cx, *cy, 2.0 * a, 2.0 * b),
        }
    }
}

/// Position `p` reflected back and forth inside `[lo, hi]`.
fn bounce(p: f64, lo: f64, hi: f64) -> f64 {
    let span = hi - lo;
    let m = (p - lo).rem_euclid(2.0 * span);
    lo + if m <= span { m } else { 2.0 * span - m }
}

fn render(shape: &Shape, paint: &dyn Fn(f64, f64) -> [f64; 3], band: Option<&OcclusionParams>, rng: &mut ChaCha8Rng) -> Image<f64> {
    let mut img = Image::new(WIDTH, HEIGHT, 3);
    let b = shape.bbox();
    let step = 1.0 / SS as f64;
    for y in 0..HEIGHT {
        for x in 0..WIDTH {
            let (fx, fy) = (x as f64, y as f64);
            let mut cover = 0.0;
            let color = paint(fx + 0.5 - b.x, fy + 0.5 - b.y);
            if fx + 1.0 >= b.x && fx <= b.right() && fy + 1.0 >= b.y && fy <= b.bottom() {
                for sy in 0..SS {
                    for sx in 0..SS {
                        let px = fx + (sx as f64 + 0.5) * step;
                        let py = fy + (sy as f64 + 0.5) * step;
                        if shape.contains(px, py) {
                            cover += 1.0;
                        }
                    }
                }
                cover /= (SS * SS) as f64;
            }
            let hidden = band.filter(|o| fx + 0.5 >= o.band.0 && fx + 0.5 < o.band.1);
            let noise = rng.gen_range(-NOISE..=NOISE) as f64;
            for c in 0..3 {
                let base = if let Some(o) = hidden {
                    o.band_color[c]
                } else {
                    cover * color[c] + (1.0 - cover) * BACKGROUND[c]
                };
                img.set(x, y, c, (base + noise).round().clamp(0.0, 255.0));
            }
        }
    }
    img
}

fn shape_at(kind: SynthKind, t: usize, occ: &OcclusionParams) -> Shape {
    let travel = match occ.turn_at {
        Some(k) if t > k => 2.0 * k as f64 - t as f64,
        _ => t as f64,
    };
    let t = t as f64;
    match kind {
        SynthKind::Static => Shape::Rect(BoundingBox::new(144.0, 104.0, 32.0, 32.0)),
        SynthKind::Translate => {
            let x = bounce(40.0 + 1.6 * t, 8.0, WIDTH as f64 - 40.0);
            let y = bounce(40.0 + 1.2 * t, 8.0, HEIGHT as f64 - 40.0);
            Shape::Rect(BoundingBox::new(x, y, 32.0, 32.0))
        }
        SynthKind::Deform => {
            let phase = (2.0 * std::f64::consts::PI * t / 50.0).sin();
            Shape::Ellipse {
                cx: bounce(110.0 + 1.0 * t, 60.0, WIDTH as f64 - 60.0),
                cy: bounce(110.0 + 0.5 * t, 60.0, HEIGHT as f64 - 60.0),
                a: 22.0 + 10.0 * phase,
                b: 22.0 - 10.0 * phase,
            }
        }
        SynthKind::Occlude => {
            let x = bounce(30.0 + occ.speed * travel, 10.0, WIDTH as f64 - occ.side - 10.0);
            Shape::Rect(BoundingBox::new(x, 120.0 - occ.side / 2.0, occ.side, occ.side))
        }
    }
}

/// Object colour at offset `(u, v)` from the top-left of its box.
fn color_at(kind: SynthKind, u: f64, v: f64) -> [f64; 3] {
    match kind {
        SynthKind::Deform => [220.0, 200.0, 40.0],
        // 7 px checkerboard so that motion shows up inside the object too
        SynthKind::Occlude if ((u / 7.0).floor() + (v / 7.0).floor()) as i64 % 2 != 0 => [150.0, 30.0, 40.0],
        _ => [200.0, 60.0, 50.0],
    }
}

/// Generates `frames` frames of `kind`. The same seed gives identical pixels.
pub fn generate(kind: SynthKind, frames: usize, seed: u64) -> SynthSequence {
    generate_with(kind, frames, seed, &OcclusionParams::default())
}

/// [`generate`] with an explicit occlusion layout (used only by
/// [`SynthKind::Occlude`]).
pub fn generate_with(kind: SynthKind, frames: usize, seed: u64, occ: &OcclusionParams) -> SynthSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seq = SynthSequence {
        kind,
        frames: Vec::with_capacity(frames),
        boxes: Vec::with_capacity(frames),
        present: Vec::with_capacity(frames),
    };
    let band = (kind == SynthKind::Occlude).then_some(occ);
    for t in 0..frames {
        let shape = shape_at(kind, t, occ);
        let b = shape.bbox();
        seq.frames.push(render(&shape, &|u, v| color_at(kind, u, v), band, &mut rng));
        let hidden = band.is_some_and(|o| b.x >= o.band.0 - 0.5 && b.right() <= o.band.1 - 0.5);
        seq.present.push(!hidden);
        seq.boxes.push(b);
    }
    seq
}

/// Writes the sequence as `img/0001.png…`, `groundtruth_rect.txt`
/// (1-indexed) and `presence.txt` (1 present, 0 absent).
pub fn write_sequence(seq: &SynthSequence, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir.join(IMG_DIR))?;
    for (i, f) in seq.frames.iter().enumerate() {
        f.save_png(dir.join(IMG_DIR).join(format!("{:04}.png", i + 1)))?;
    }
    let gt: String = seq.boxes.iter().map(|b| format_box_line(b, None) + "\n").collect();
    fs::write(dir.join(GT_FILE), gt)?;
    let pres: String = seq.present.iter().map(|&p| if p { "1\n" } else { "0\n" }).collect();
    fs::write(dir.join(PRESENCE_FILE), pres)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounce_reflects() {
        assert_eq!(bounce(5.0, 0.0, 10.0), 5.0);
        assert_eq!(bounce(12.0, 0.0, 10.0), 8.0);
        assert_eq!(bounce(21.0, 0.0, 10.0), 1.0);
    }

    #[test]
    fn seeded_and_labelled() {
        let a = generate(SynthKind::Translate, 5, 7);
        let b = generate(SynthKind::Translate, 5, 7);
        assert_eq!(a.frames, b.frames);
        assert_ne!(generate(SynthKind::Translate, 1, 8).frames, a.frames[..1]);
        assert!((a.boxes[1].x - a.boxes[0].x - 1.6).abs() < 1e-12);
        let center = a.frames[0].pixel(56, 56);
        assert!((center[0] - 200.0).abs() <= 3.0 && (center[1] - 60.0).abs() <= 3.0);
        assert!(a.present.iter().all(|&p| p));
    }

    #[test]
    fn occlusion_hides_object() {
        let s = generate(SynthKind::Occlude, 100, 1);
        let hidden: Vec<usize> = (0..100).filter(|&t| !s.present[t]).collect();
        assert!(!hidden.is_empty());
        let t = hidden[0];
        let b = s.boxes[t];
        let px = s.frames[t].pixel((b.x + 14.0) as usize, (b.y + 14.0) as usize);
        let bg = OcclusionParams::default().band_color;
        assert!((px[0] - bg[0]).abs() <= 3.0);
    }

    #[test]
    fn deform_changes_aspect() {
        let s = generate(SynthKind::Deform, 30, 1);
        let r: Vec<f64> = s.boxes.iter().map(|b| b.w / b.h).collect();
        assert!(r.iter().cloned().fold(0.0, f64::max) > 2.0);
    }
}
