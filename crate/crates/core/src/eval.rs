//! Sequence loading, one-pass evaluation and tracking metrics.

use std::fs;
use std::path::{Path, PathBuf};

use crate::config::TrackerConfig;
use crate::error::{read_text, Error, Result};
use crate::geometry::{iou, BoundingBox};
use crate::image::Image;
use crate::pipeline::Tracker;

pub const IMG_DIR: &str = "img";
pub const GT_FILE: &str = "groundtruth_rect.txt";
/// Optional per-frame presence labels, `1` present and `0` absent.
pub const PRESENCE_FILE: &str = "presence.txt";
pub const DP_THRESHOLD: f64 = 20.0;
pub const ABSENT_THRESHOLD: f64 = 0.1;
/// IoU a present prediction needs to count as a true positive.
pub const TIGHT_IOU: f64 = 0.5;
pub const SUCCESS_STEPS: usize = 21;

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceDataset {
    pub name: String,
    pub frames: Vec<PathBuf>,
    /// One box per frame, or only the first.
    pub gt: Vec<BoundingBox<f64>>,
    pub presence: Option<Vec<bool>>,
}

impl SequenceDataset {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Ground truth for every frame, if annotated beyond the first.
    pub fn full_gt(&self) -> Option<&[BoundingBox<f64>]> {
        (self.gt.len() == self.frames.len()).then_some(&self.gt[..])
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn split_fields(line: &str) -> Vec<&str> {
    line.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .collect()
}

fn parse_values(path: &Path, n: usize, line: &str, counts: &[usize]) -> Result<Vec<f64>> {
    let fields = split_fields(line);
    if !counts.contains(&fields.len()) {
        return Err(parse_err(
            path,
            n,
            format!("expected {counts:?} values, found {}", fields.len()),
        ));
    }
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(path, n, format!("not a number: '{f}'")))
        })
        .collect()
}

/// Parses 1-indexed `x,y,w,h` lines (comma, tab or space separated) into
/// 0-indexed boxes. `path` is only used in error messages.
pub fn parse_boxes(text: &str, path: &Path) -> Result<Vec<BoundingBox<f64>>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v = parse_values(path, i + 1, line, &[4])?;
        if v[2] < 0.0 || v[3] < 0.0 {
            return Err(parse_err(path, i + 1, "negative box size"));
        }
        out.push(BoundingBox::new(v[0] - 1.0, v[1] - 1.0, v[2], v[3]));
    }
    Ok(out)
}

fn parse_presence(text: &str, path: &Path) -> Result<Vec<bool>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        match line.trim() {
            "" => continue,
            "1" => out.push(true),
            "0" => out.push(false),
            other => return Err(parse_err(path, i + 1, format!("expected 0 or 1, got '{other}'"))),
        }
    }
    Ok(out)
}

fn frame_number(p: &Path) -> Option<u64> {
    p.file_stem()?.to_str()?.parse().ok()
}

fn is_image(p: &Path) -> bool {
    matches!(
        p.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref(),
        Some("png" | "jpg" | "jpeg")
    )
}

/// Reads a sequence laid out as `img/<n>.<ext>` plus `groundtruth_rect.txt`.
pub fn load_sequence(dir: impl AsRef<Path>) -> Result<SequenceDataset> {
    let dir = dir.as_ref();
    let img_dir = dir.join(IMG_DIR);
    if !img_dir.is_dir() {
        return Err(Error::Dataset(format!("missing frame directory {}", img_dir.display())));
    }
    let mut frames: Vec<(u64, PathBuf)> = Vec::new();
    for entry in fs::read_dir(&img_dir)? {
        let p = entry?.path();
        if !is_image(&p) {
            continue;
        }
        let n = frame_number(&p)
            .ok_or_else(|| Error::Dataset(format!("frame name is not a number: {}", p.display())))?;
        frames.push((n, p));
    }
    frames.sort();
    if frames.is_empty() {
        return Err(Error::Dataset(format!("no frames in {}", img_dir.display())));
    }
    let gt_path = dir.join(GT_FILE);
    let text = read_text(&gt_path)?;
    let gt = parse_boxes(&text, &gt_path)?;
    if gt.is_empty() {
        return Err(parse_err(&gt_path, 1, "no ground-truth box"));
    }
    if gt.len() != 1 && gt.len() != frames.len() {
        return Err(Error::Dataset(format!(
            "{} ground-truth boxes for {} frames",
            gt.len(),
            frames.len()
        )));
    }
    let pres_path = dir.join(PRESENCE_FILE);
    let presence = if pres_path.exists() {
        let p = parse_presence(&read_text(&pres_path)?, &pres_path)?;
        if p.len() != frames.len() {
            return Err(Error::Dataset(format!(
                "{} presence labels for {} frames",
                p.len(),
                frames.len()
            )));
        }
        Some(p)
    } else {
        None
    };
    let name = dir
        .canonicalize()
        .ok()
        .and_then(|d| d.file_name().map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "sequence".into());
    Ok(SequenceDataset {
        name,
        frames: frames.into_iter().map(|(_, p)| p).collect(),
        gt,
        presence,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub bbox: BoundingBox<f64>,
    pub similarity: f64,
}

/// One-pass evaluation over already decoded frames. Only a failure on the
/// first frame is an error; later failures repeat the last box with zero
/// similarity.
pub fn run_ope_frames<I>(frames: I, init: &BoundingBox<f64>, cfg: &TrackerConfig) -> Result<Vec<Prediction>>
where
    I: IntoIterator<Item = Result<Image<f64>>>,
{
    let mut it = frames.into_iter();
    let first = it
        .next()
        .ok_or_else(|| Error::Dataset("sequence has no frames".into()))??;
    let mut tracker = Tracker::init(&first, init, cfg.clone())?;
    let mut log = vec![Prediction {
        bbox: *init,
        similarity: 1.0,
    }];
    for frame in it {
        let step = frame.and_then(|f| tracker.step(&f));
        log.push(match step {
            Ok(r) => Prediction {
                bbox: r.bbox,
                similarity: r.similarity,
            },
            Err(_) => Prediction {
                bbox: tracker.last_box(),
                similarity: 0.0,
            },
        });
    }
    Ok(log)
}

pub fn run_ope(ds: &SequenceDataset, cfg: &TrackerConfig) -> Result<Vec<Prediction>> {
    run_ope_frames(ds.frames.iter().map(Image::open), &ds.gt[0], cfg)
}

/// `x,y,w,h` in 1-indexed coordinates with two decimals, plus the
/// similarity when given.
pub fn format_box_line(b: &BoundingBox<f64>, similarity: Option<f64>) -> String {
    let mut s = format!("{:.2},{:.2},{:.2},{:.2}", b.x + 1.0, b.y + 1.0, b.w, b.h);
    if let Some(v) = similarity {
        s.push_str(&format!(",{v:.2}"));
    }
    s
}

pub fn format_log(preds: &[Prediction]) -> String {
    preds
        .iter()
        .map(|p| format_box_line(&p.bbox, Some(p.similarity)) + "\n")
        .collect()
}

/// Reads a prediction log. Lines with only four values are taken as
/// present with similarity 1.
pub fn parse_log(text: &str, path: &Path) -> Result<Vec<Prediction>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v = parse_values(path, i + 1, line, &[4, 5])?;
        out.push(Prediction {
            bbox: BoundingBox::new(v[0] - 1.0, v[1] - 1.0, v[2], v[3]),
            similarity: v.get(4).copied().unwrap_or(1.0),
        });
    }
    Ok(out)
}

pub fn read_log(path: impl AsRef<Path>) -> Result<Vec<Prediction>> {
    let path = path.as_ref();
    parse_log(&read_text(path)?, path)
}

pub fn read_boxes(path: impl AsRef<Path>) -> Result<Vec<BoundingBox<f64>>> {
    let path = path.as_ref();
    parse_boxes(&read_text(path)?, path)
}

pub fn read_presence(path: impl AsRef<Path>) -> Result<Vec<bool>> {
    let path = path.as_ref();
    parse_presence(&read_text(path)?, path)
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::LengthMismatch { left: a, right: b });
    }
    Ok(())
}

pub fn center_errors(preds: &[BoundingBox<f64>], gts: &[BoundingBox<f64>]) -> Result<Vec<f64>> {
    check_len(preds.len(), gts.len())?;
    Ok(preds.iter().zip(gts).map(|(p, g)| p.center_distance(g)).collect())
}

pub fn overlaps(preds: &[BoundingBox<f64>], gts: &[BoundingBox<f64>]) -> Result<Vec<f64>> {
    check_len(preds.len(), gts.len())?;
    Ok(preds.iter().zip(gts).map(|(p, g)| iou(p, g)).collect())
}

/// Fraction of frames whose centre error is at most `tau` pixels.
pub fn distance_precision(preds: &[BoundingBox<f64>], gts: &[BoundingBox<f64>], tau: f64) -> Result<f64> {
    let e = center_errors(preds, gts)?;
    if e.is_empty() {
        return Ok(0.0);
    }
    Ok(e.iter().filter(|&&d| d <= tau).count() as f64 / e.len() as f64)
}

pub fn success_thresholds() -> [f64; SUCCESS_STEPS] {
    std::array::from_fn(|i| i as f64 / (SUCCESS_STEPS - 1) as f64)
}

/// Success rate `IoU > θ` at each threshold and its mean (the AUC).
pub fn success_auc(preds: &[BoundingBox<f64>], gts: &[BoundingBox<f64>]) -> Result<(f64, [f64; SUCCESS_STEPS])> {
    let o = overlaps(preds, gts)?;
    let n = o.len().max(1) as f64;
    let curve = success_thresholds().map(|t| o.iter().filter(|&&v| v > t).count() as f64 / n);
    Ok((curve.iter().sum::<f64>() / SUCCESS_STEPS as f64, curve))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub dp: f64,
    pub auc: f64,
    pub curve: [f64; SUCCESS_STEPS],
    pub ious: Vec<f64>,
    pub center_errors: Vec<f64>,
}

pub fn evaluate(preds: &[BoundingBox<f64>], gts: &[BoundingBox<f64>]) -> Result<MetricsReport> {
    let (auc, curve) = success_auc(preds, gts)?;
    Ok(MetricsReport {
        dp: distance_precision(preds, gts, DP_THRESHOLD)?,
        auc,
        curve,
        ious: overlaps(preds, gts)?,
        center_errors: center_errors(preds, gts)?,
    })
}

pub fn present_absent(similarity: f64, theta: f64) -> bool {
    similarity >= theta
}

/// TPR over present frames (reported present with IoU ≥ 0.5) and TNR over
/// absent frames (reported absent). A rate with no frames to count is 0.
pub fn tpr_tnr(preds: &[Prediction], gts: &[BoundingBox<f64>], presence: &[bool], theta: f64) -> Result<(f64, f64)> {
    check_len(preds.len(), gts.len())?;
    check_len(preds.len(), presence.len())?;
    let (mut tp, mut np, mut tn, mut na) = (0usize, 0usize, 0usize, 0usize);
    for ((p, g), &present) in preds.iter().zip(gts).zip(presence) {
        let says = present_absent(p.similarity, theta);
        if present {
            np += 1;
            if says && iou(&p.bbox, g) >= TIGHT_IOU {
                tp += 1;
            }
        } else {
            na += 1;
            if !says {
                tn += 1;
            }
        }
    }
    let rate = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok((rate(tp, np), rate(tn, na)))
}

fn gm(p: f64, tpr: f64, tnr: f64) -> f64 {
    ((1.0 - p) * tpr * ((1.0 - p) * tnr + p)).max(0.0).sqrt()
}

/// Maximum over `p ∈ [0, 1]` of `√((1−p)·TPR·((1−p)·TNR + p))`: a 1e-4 grid
/// followed by golden-section refinement around the best grid point.
pub fn max_gm(tpr: f64, tnr: f64) -> f64 {
    const STEPS: usize = 10_000;
    let h = 1.0 / STEPS as f64;
    let mut best = (0.0, gm(0.0, tpr, tnr));
    for k in 1..=STEPS {
        let p = k as f64 * h;
        let v = gm(p, tpr, tnr);
        if v > best.1 {
            best = (p, v);
        }
    }
    let (mut lo, mut hi) = ((best.0 - h).max(0.0), (best.0 + h).min(1.0));
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..60 {
        let a = hi - r * (hi - lo);
        let b = lo + r * (hi - lo);
        if gm(a, tpr, tnr) >= gm(b, tpr, tnr) {
            hi = b;
        } else {
            lo = a;
        }
    }
    best.1.max(gm(0.5 * (lo + hi), tpr, tnr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(x: f64, y: f64, w: f64, h: f64) -> BoundingBox<f64> {
        BoundingBox::new(x, y, w, h)
    }

    #[test]
    fn parses_both_separators() {
        let p = Path::new("gt.txt");
        let a = parse_boxes("1,1,10,10\n5,6,7,8\n", p).unwrap();
        let b = parse_boxes("1\t1\t10\t10\n5\t6\t7\t8\n", p).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0], bx(0.0, 0.0, 10.0, 10.0));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let p = Path::new("gt.txt");
        let e = parse_boxes("1,1,10,10\n1,2,x,4\n", p).unwrap_err().to_string();
        assert!(e.contains("gt.txt:2"), "{e}");
        assert!(parse_boxes("1,2,3\n", p).is_err());
        assert!(parse_boxes("1,2,-3,4\n", p).is_err());
    }

    #[test]
    fn log_round_trip() {
        let preds = vec![
            Prediction {
                bbox: bx(10.25, 3.5, 20.0, 11.126),
                similarity: 0.4567,
            },
            Prediction {
                bbox: bx(0.0, 0.0, 4.0, 4.0),
                similarity: 0.0,
            },
        ];
        let text = format_log(&preds);
        assert_eq!(text.lines().next().unwrap(), "11.25,4.50,20.00,11.13,0.46");
        let back = parse_log(&text, Path::new("log")).unwrap();
        assert_eq!(back.len(), 2);
        assert!((back[0].bbox.x - 10.25).abs() < 1e-9 && (back[0].similarity - 0.46).abs() < 1e-12);
        assert_eq!(parse_log("1,1,4,4\n", Path::new("log")).unwrap()[0].similarity, 1.0);
    }

    #[test]
    fn dp_examples() {
        let g = vec![bx(0.0, 0.0, 10.0, 10.0); 4];
        assert_eq!(distance_precision(&g, &g, 20.0).unwrap(), 1.0);
        let far: Vec<_> = g.iter().map(|b| b.translate(21.0, 0.0)).collect();
        assert_eq!(distance_precision(&far, &g, 20.0).unwrap(), 0.0);
        let half = vec![g[0], g[1], far[2], far[3]];
        assert_eq!(distance_precision(&half, &g, 20.0).unwrap(), 0.5);
        assert!(matches!(
            distance_precision(&g[..3], &g, 20.0),
            Err(Error::LengthMismatch { left: 3, right: 4 })
        ));
    }

    #[test]
    fn auc_examples() {
        let g = vec![bx(0.0, 0.0, 10.0, 10.0); 3];
        let (auc, curve) = success_auc(&g, &g).unwrap();
        assert!((auc - 20.0 / 21.0).abs() < 1e-12);
        assert_eq!(curve[20], 0.0);
        let off: Vec<_> = g.iter().map(|b| b.translate(50.0, 0.0)).collect();
        assert_eq!(success_auc(&off, &g).unwrap().0, 0.0);
    }

    #[test]
    fn mixed_ious_match_enumeration() {
        // IoU 0.3 and 0.6 with the same ground truth
        let g = bx(0.0, 0.0, 10.0, 10.0);
        let p1 = bx(0.0, 0.0, 3.0, 10.0);
        let p2 = bx(0.0, 0.0, 6.0, 10.0);
        let (auc, curve) = success_auc(&[p1, p2], &[g, g]).unwrap();
        let ious = [iou(&p1, &g), iou(&p2, &g)];
        for (i, t) in success_thresholds().iter().enumerate() {
            let n = ious.iter().filter(|&&v| v > *t).count() as f64 / 2.0;
            assert_eq!(curve[i], n);
        }
        let expect: f64 = curve.iter().sum::<f64>() / 21.0;
        assert_eq!(auc, expect);
    }

    #[test]
    fn max_gm_matches_published_rows() {
        assert!((max_gm(0.425, 0.0) - 0.326).abs() <= 1e-3);
        assert!((max_gm(0.351, 0.751) - 0.514).abs() <= 1e-3);
        assert!((max_gm(0.165, 0.872) - 0.380).abs() <= 1e-3);
    }

    #[test]
    fn presence_threshold_inclusive() {
        assert!(present_absent(0.1, 0.1));
        assert!(!present_absent(0.0, 0.1));
    }

    #[test]
    fn tpr_tnr_counts() {
        let g = vec![bx(0.0, 0.0, 10.0, 10.0); 4];
        let preds = vec![
            Prediction { bbox: g[0], similarity: 0.5 },
            Prediction { bbox: g[0].translate(8.0, 0.0), similarity: 0.5 },
            Prediction { bbox: g[0], similarity: 0.05 },
            Prediction { bbox: g[0], similarity: 0.5 },
        ];
        let (tpr, tnr) = tpr_tnr(&preds, &g, &[true, true, false, false], 0.1).unwrap();
        assert_eq!((tpr, tnr), (0.5, 0.5));
    }

    proptest! {
        #[test]
        fn max_gm_closed_form(t in 0.0f64..1.0, n in 0.0f64..0.99) {
            // the squared objective is quadratic in p
            let p = ((1.0 - 2.0 * n) / (2.0 * (1.0 - n))).clamp(0.0, 1.0);
            let exact = ((1.0 - p) * t * ((1.0 - p) * n + p)).sqrt();
            prop_assert!((max_gm(t, n) - exact).abs() < 1e-9);
            prop_assert!(max_gm(t, n) >= (t * n).sqrt() - 1e-12);
        }

        #[test]
        fn curves_are_monotone(seed in 0u64..500) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut r = || bx(rng.gen_range(0.0..50.0), rng.gen_range(0.0..50.0), rng.gen_range(1.0..30.0), rng.gen_range(1.0..30.0));
            let preds: Vec<_> = (0..30).map(|_| r()).collect();
            let gts: Vec<_> = (0..30).map(|_| r()).collect();
            let (_, curve) = success_auc(&preds, &gts).unwrap();
            prop_assert!(curve.windows(2).all(|w| w[1] <= w[0]));
            let dps: Vec<f64> = (0..60).map(|t| distance_precision(&preds, &gts, t as f64).unwrap()).collect();
            prop_assert!(dps.windows(2).all(|w| w[1] >= w[0]));
        }

        #[test]
        fn tnr_rises_with_threshold(seed in 0u64..200) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = bx(0.0, 0.0, 10.0, 10.0);
            let n = 40;
            let preds: Vec<Prediction> = (0..n).map(|_| Prediction {
                bbox: g.translate(rng.gen_range(-5.0..5.0), 0.0),
                similarity: rng.gen_range(0.0..0.3),
            }).collect();
            let presence: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.6)).collect();
            let gts = vec![g; n];
            let mut last = (f64::INFINITY, -1.0);
            for k in 0..=15 {
                let (tpr, tnr) = tpr_tnr(&preds, &gts, &presence, k as f64 / 100.0).unwrap();
                prop_assert!(tpr <= last.0 && tnr >= last.1);
                last = (tpr, tnr);
            }
        }
    }
}
