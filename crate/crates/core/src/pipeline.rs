//! Frame-by-frame tracker combining the correlation filter, the patch
//! classifier and superpixel proposals.

use crate::config::TrackerConfig;
use crate::dcf::motion::{estimate_motion, motion_proposal};
use crate::dcf::DcfTracker;
use crate::error::{Error, Result};
use crate::features::{block_positions, decompose_patches, FeatureModel, BLOCK_SIDE, BLOCK_STRIDE};
use crate::fusion::{
    adaptive_weight, extrapolate_center, fuse, reid_choose_with, FusionContext, FusionPath, ModeState, ReidCandidate,
    TrackerMode,
};
use crate::gbdt::{label_blocks, two_stage_train, TreeEnsemble};
use crate::geometry::{iou, warp_region, BoundingBox, WarpParams, PATCH_SIDE};
use crate::heatmap::{
    align, assemble, extract_box, mean_in_box, quality_check, suppress, update_template, upsample_to_patch, Grid,
    HeatMap, ShapeTemplate, Verdict,
};
use crate::image::Image;
use crate::scalar::Real;
use crate::superpixel::{group_proposals, segment};

/// Smallest box side accepted at initialisation and kept while tracking.
pub const MIN_BOX_SIDE: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReidOutcome {
    NotRun,
    KeptDcf,
    Motion,
}

/// Per-frame diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo<T> {
    pub x_dcf: BoundingBox<T>,
    /// Objectness box in frame coordinates, when the heat map has one.
    pub x_obj: Option<BoundingBox<T>>,
    pub proposals: usize,
    pub verdict: Option<Verdict>,
    pub mode: TrackerMode,
    pub path: FusionPath,
    pub reid: ReidOutcome,
    pub retrained: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult<T> {
    pub bbox: BoundingBox<T>,
    pub similarity: T,
    pub present: bool,
    pub info: StepInfo<T>,
}

/// Outputs of the classifier branch on one patch.
struct LocalBranch<T> {
    xs: Vec<Vec<T>>,
    suppressed: HeatMap<T>,
    aligned: ShapeTemplate<T>,
    x_obj: Option<BoundingBox<T>>,
}

#[derive(Debug, Clone)]
pub struct Tracker<T: Real> {
    cfg: TrackerConfig,
    dcf: DcfTracker<T>,
    features: FeatureModel<T>,
    classifier: TreeEnsemble<T>,
    template: ShapeTemplate<T>,
    mode: ModeState,
    /// Features and labels of the last confidently tracked frame.
    cache: (Vec<Vec<T>>, Vec<Option<bool>>),
    /// Frame index and centre of the last two confidently tracked frames.
    last_center: (usize, (T, T)),
    before_center: (usize, (T, T)),
    prev_box: BoundingBox<T>,
    prev_frame: Option<Image<T>>,
    obj_sizes: Vec<(T, T)>,
    low_iou_run: usize,
    last_lambda: T,
    frames: usize,
}

fn frame_rect<T: Real>(frame: &Image<T>) -> BoundingBox<T> {
    BoundingBox::new(T::zero(), T::zero(), T::of_usize(frame.width()), T::of_usize(frame.height()))
}

fn cell_shift<T: Real>(d: T, wp: &WarpParams<T>) -> isize {
    (d / (wp.scale * T::of_usize(BLOCK_STRIDE))).round().as_f64() as isize
}

impl<T: Real> Tracker<T> {
    /// Learns the appearance models from the first frame and its box.
    pub fn init(frame: &Image<T>, b: &BoundingBox<T>, cfg: TrackerConfig) -> Result<Self> {
        cfg.validate()?;
        let min = T::of(MIN_BOX_SIDE);
        if !b.is_valid() || b.w < min || b.h < min {
            return Err(Error::InvalidBox(format!(
                "{b:?}: sides must be at least {MIN_BOX_SIDE} pixels"
            )));
        }
        let (patch, wp) = warp_region(frame, b)?;
        let positions = block_positions();
        let b_patch = wp.box_to_patch(b);
        let labels = label_blocks(&positions, BLOCK_SIDE, &b_patch).as_options();
        let grid = decompose_patches(&patch)?;
        let features = FeatureModel::fit(&grid, &labels)?;
        let xs = features.extract(&patch)?;
        let classifier = two_stage_train(&xs, &labels, &cfg.boost, cfg.objectness_threshold)?.model;
        let dcf = DcfTracker::init(frame, b, cfg.dcf.clone());
        let c = b.center();
        Ok(Self {
            dcf,
            features,
            classifier,
            template: Grid::from_box(&b_patch),
            mode: ModeState::default(),
            cache: (xs, labels),
            last_center: (0, c),
            before_center: (0, c),
            prev_box: *b,
            prev_frame: cfg.reid.then(|| frame.clone()),
            obj_sizes: Vec::new(),
            low_iou_run: 0,
            last_lambda: T::zero(),
            frames: 1,
            cfg,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn mode(&self) -> TrackerMode {
        self.mode.mode
    }

    pub fn shape_template(&self) -> &ShapeTemplate<T> {
        &self.template
    }

    pub fn last_box(&self) -> BoundingBox<T> {
        self.prev_box
    }

    pub fn frames_seen(&self) -> usize {
        self.frames
    }

    /// Feature front end plus classifier ensemble parameters.
    pub fn parameter_counts(&self) -> (usize, usize) {
        (self.features.parameter_count(), self.classifier.parameter_count())
    }

    /// Heat map of `patch` after shape suppression with the template shifted
    /// by `(dx, dy)` cells.
    fn local_branch(&self, patch: &Image<T>, dx: isize, dy: isize) -> Result<LocalBranch<T>> {
        let aligned = align(&self.template, dx, dy);
        let xs = self.features.extract(patch)?;
        let probs = self.classifier.predict_many(&xs);
        let raw = assemble(&probs, &block_positions());
        let suppressed = suppress(&raw, &aligned);
        let x_obj = extract_box(&suppressed, T::of(self.cfg.objectness_threshold));
        Ok(LocalBranch {
            xs,
            suppressed,
            aligned,
            x_obj,
        })
    }

    /// Tracks the target into `frame`.
    pub fn step(&mut self, frame: &Image<T>) -> Result<StepResult<T>> {
        self.frames += 1;
        let prev = self.prev_box;
        let mut info = StepInfo {
            x_dcf: prev,
            x_obj: None,
            proposals: 0,
            verdict: None,
            mode: self.mode.mode,
            path: FusionPath::DcfOnly,
            reid: ReidOutcome::NotRun,
            retrained: false,
        };
        if frame_rect(frame).intersection_area(&prev) <= T::zero() {
            return Ok(StepResult {
                bbox: prev,
                similarity: T::zero(),
                present: false,
                info,
            });
        }

        let est = self.dcf.locate(frame, prev.center());
        let x_dcf = est.bbox;
        let similarity = est.similarity;
        info.x_dcf = x_dcf;
        let (patch, wp) = warp_region(frame, &prev)?;
        let x_dcf_p = wp.box_to_patch(&x_dcf);
        let prev_p = wp.box_to_patch(&prev);

        let mut local = None;
        let mut reentered = false;
        if self.cfg.local_branch {
            let (pc, dc) = (prev.center(), x_dcf.center());
            let lb = self.local_branch(&patch, cell_shift(dc.0 - pc.0, &wp), cell_shift(dc.1 - pc.1, &wp))?;
            match &lb.x_obj {
                Some(b) => {
                    self.obj_sizes.push((b.w, b.h));
                    let keep = self.cfg.quality.history;
                    if self.obj_sizes.len() > keep {
                        self.obj_sizes.drain(..self.obj_sizes.len() - keep);
                    }
                }
                None => self.obj_sizes.clear(),
            }
            let report = quality_check(&lb.suppressed, &self.obj_sizes, &self.cfg.quality);
            reentered = self.mode.step(report.verdict, self.cfg.fusion.reentry_stable);
            info.verdict = Some(report.verdict);
            info.x_obj = lb.x_obj.map(|b| wp.unwarp_box(&b));
            if let Some(b) = &lb.x_obj {
                self.last_lambda = adaptive_weight(&x_dcf_p, b);
            }
            local = Some(lb);
        }
        info.mode = self.mode.mode;

        let mut out = x_dcf;
        if let Some(lb) = local.as_ref().filter(|_| self.mode.mode == TrackerMode::FusionOn) {
            let heat_px = upsample_to_patch(&lb.suppressed);
            let seg = segment(&patch, &self.cfg.segment);
            let spp = group_proposals(&seg, &heat_px, &self.cfg.group_thresholds);
            info.proposals = spp.len();
            let ctx = FusionContext {
                patch: &patch,
                heat: &lb.suppressed,
                heat_pixels: &heat_px,
                x_prev: &prev_p,
            };
            let fused = fuse(&x_dcf_p, lb.x_obj.as_ref(), &spp, &ctx, &self.cfg.fusion);
            info.path = fused.path;
            out = wp.unwarp_box(&fused.bbox);
        }

        if self.cfg.reid && similarity < T::of(self.cfg.absent_threshold) {
            if let Some(chosen) = self.reidentify(frame, &wp, &x_dcf, local.as_ref()) {
                info.reid = if chosen.1 { ReidOutcome::Motion } else { ReidOutcome::KeptDcf };
                out = chosen.0;
            }
        }

        out = self.sanitize(frame, out);
        let out_p = wp.box_to_patch(&out);

        if let Some(lb) = &local {
            let updated = update_template(&lb.suppressed, &lb.aligned, T::of(self.cfg.template_mu));
            let (pc, oc) = (prev.center(), out.center());
            self.template = align(&updated, -cell_shift(oc.0 - pc.0, &wp), -cell_shift(oc.1 - pc.1, &wp));
        }

        if similarity >= T::of(self.cfg.absent_threshold) {
            self.dcf.update(frame, &out);
        }

        if let Some(lb) = &local {
            // the overlap trigger only watches proposals that fusion would use
            let fusing = self.mode.mode == TrackerMode::FusionOn;
            let low = fusing && lb.x_obj.as_ref().map_or(true, |b| iou(b, &x_dcf_p) < T::of(self.cfg.retrain_iou));
            self.low_iou_run = if low { self.low_iou_run + 1 } else { 0 };
            let labels = label_blocks(&block_positions(), BLOCK_SIDE, &out_p).as_options();
            if self.cfg.classifier_update && (reentered || self.low_iou_run >= self.cfg.retrain_frames) {
                let mut xs = self.cache.0.clone();
                xs.extend(lb.xs.iter().cloned());
                let mut ys = self.cache.1.clone();
                ys.extend(labels.iter().copied());
                if let Ok(m) = two_stage_train(&xs, &ys, &self.cfg.boost, self.cfg.objectness_threshold) {
                    self.classifier = m.model;
                    self.low_iou_run = 0;
                    info.retrained = true;
                }
            }
            if info.verdict == Some(Verdict::Stable) && similarity > T::of(self.cfg.confident_similarity) {
                self.cache = (lb.xs.clone(), labels);
            }
        }

        if similarity >= T::of(self.cfg.absent_threshold) {
            self.before_center = self.last_center;
            self.last_center = (self.frames - 1, out.center());
        }
        self.prev_box = out;
        if self.cfg.reid {
            self.prev_frame = Some(frame.clone());
        }
        Ok(StepResult {
            bbox: out,
            similarity,
            present: similarity >= T::of(self.cfg.absent_threshold),
            info,
        })
    }

    /// Chooses between the DCF box and a motion-residual proposal when the
    /// filter response is weak. Returns `None` when no motion proposal exists.
    fn reidentify(
        &self,
        frame: &Image<T>,
        wp: &WarpParams<T>,
        x_dcf: &BoundingBox<T>,
        local: Option<&LocalBranch<T>>,
    ) -> Option<(BoundingBox<T>, bool)> {
        let prev_frame = self.prev_frame.as_ref()?;
        let est = estimate_motion(prev_frame, frame).ok()?;
        let blob = motion_proposal(&est.residual)?;
        let (bx, by) = blob.center();
        let x_motion = BoundingBox::from_center(bx, by, self.prev_box.w, self.prev_box.h);
        let f_prev = &self.dcf.template.data;
        let candidate = |b: &BoundingBox<T>| {
            let c = b.center();
            let f = DcfTracker::sample_map(frame, c, self.dcf.size, T::one()).data;
            let objectness = local.map_or(T::zero(), |lb| mean_in_box(&lb.suppressed, &wp.box_to_patch(b)));
            ReidCandidate {
                bbox: *b,
                features: f,
                objectness,
                center: wp.frame_to_patch(c.0, c.1),
            }
        };
        let pred = extrapolate_center(self.last_center, self.before_center, self.frames - 1);
        Some(reid_choose_with(
            &candidate(x_dcf),
            Some(&candidate(&x_motion)),
            f_prev,
            wp.frame_to_patch(pred.0, pred.1),
            self.last_lambda,
            T::of_usize(PATCH_SIDE),
            self.cfg.reid_tie,
        ))
    }

    /// Keeps the box at least the minimum size with its centre in the frame.
    fn sanitize(&self, frame: &Image<T>, b: BoundingBox<T>) -> BoundingBox<T> {
        let ok = |v: T| v.is_finite();
        let b = if [b.x, b.y, b.w, b.h].iter().all(|v| ok(*v)) { b } else { self.prev_box };
        let min = T::of(MIN_BOX_SIDE);
        let (cx, cy) = b.center();
        let w = T::of_usize(frame.width());
        let h = T::of_usize(frame.height());
        BoundingBox::from_center(cx.clamp_to(T::zero(), w), cy.clamp_to(T::zero(), h), b.w.max(min), b.h.max(min))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gbdt::parameter_bound;

    /// Textured background with a bright disc of radius 12 centred at `c`.
    fn scene(c: (f64, f64)) -> Image<f64> {
        Image::from_fn(160, 120, 3, |x, y, ch| {
            let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
            let d2 = (fx - c.0).powi(2) + (fy - c.1).powi(2);
            if d2 <= 144.0 {
                [230.0, 40.0, 40.0][ch]
            } else {
                let t = ((x / 6 + y / 6) % 2) as f64;
                40.0 + 50.0 * t + 10.0 * ch as f64
            }
        })
    }

    fn start() -> (Image<f64>, BoundingBox<f64>) {
        (scene((80.0, 60.0)), BoundingBox::new(68.0, 48.0, 24.0, 24.0))
    }

    #[test]
    fn rejects_tiny_boxes() {
        let (f, _) = start();
        let err = Tracker::init(&f, &BoundingBox::new(10.0, 10.0, 3.0, 20.0), TrackerConfig::default());
        assert!(matches!(err, Err(Error::InvalidBox(_))));
        let err = Tracker::init(&f, &BoundingBox::new(500.0, 10.0, 20.0, 20.0), TrackerConfig::default());
        assert!(matches!(err, Err(Error::LostRegion)));
    }

    #[test]
    fn initial_template_is_box_indicator() {
        let (f, b) = start();
        let t = Tracker::init(&f, &b, TrackerConfig::default()).unwrap();
        let wp = WarpParams::for_box(&b, PATCH_SIDE);
        assert_eq!(t.shape_template(), &Grid::from_box(&wp.box_to_patch(&b)));
        let (front, ens) = t.parameter_counts();
        assert_eq!(front, 359);
        assert!(ens <= parameter_bound(40, 4));
    }

    #[test]
    fn static_scene_stays_put() {
        let (f, b) = start();
        let mut t = Tracker::init(&f, &b, TrackerConfig::default()).unwrap();
        for _ in 0..10 {
            let r = t.step(&f).unwrap();
            assert!(r.present);
            assert!(r.bbox.center_distance(&b) <= 2.0, "{:?}", r.bbox);
        }
    }

    #[test]
    fn follows_translation() {
        let (f0, b) = start();
        let mut t = Tracker::init(&f0, &b, TrackerConfig::default()).unwrap();
        let mut c = (80.0, 60.0);
        for _ in 0..12 {
            c.0 += 3.0;
            c.1 += 1.0;
            let r = t.step(&scene(c)).unwrap();
            let gt = BoundingBox::from_center(c.0, c.1, 24.0, 24.0);
            assert!(iou(&r.bbox, &gt) >= 0.6, "{:?} vs {:?}", r.bbox, gt);
        }
    }

    #[test]
    fn without_local_branch_output_is_dcf() {
        let (f0, b) = start();
        let cfg = TrackerConfig {
            local_branch: false,
            ..TrackerConfig::default()
        };
        let mut t = Tracker::init(&f0, &b, cfg).unwrap();
        let r = t.step(&scene((83.0, 61.0))).unwrap();
        assert_eq!(r.bbox, r.info.x_dcf);
        assert_eq!(r.info.path, FusionPath::DcfOnly);
        assert!(r.info.verdict.is_none());
    }

    #[test]
    fn box_outside_frame_is_reported_absent() {
        let (f0, b) = start();
        let mut t = Tracker::init(&f0, &b, TrackerConfig::default()).unwrap();
        let small = Image::filled(40, 30, &[0.0, 0.0, 0.0]);
        let r = t.step(&small).unwrap();
        assert!(!r.present);
        assert_eq!(r.bbox, b);
    }
}
