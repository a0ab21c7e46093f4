//! Tracker configuration and its plain `key = value` text form.

use std::fmt::Write as _;
use std::path::Path;

use crate::dcf::DcfParams;
use crate::error::{Error, Result};
pub use crate::fusion::ReidTie;
use crate::fusion::FusionConfig;
use crate::gbdt::BoostConfig;
use crate::heatmap::QualityThresholds;
use crate::superpixel::{SegmentParams, GROUP_THRESHOLDS};

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    pub dcf: DcfParams,
    pub boost: BoostConfig,
    pub fusion: FusionConfig,
    pub quality: QualityThresholds,
    pub segment: SegmentParams,
    pub group_thresholds: Vec<f64>,
    /// Temporal weight of the shape template update.
    pub template_mu: f64,
    /// Heat-map level for objectness boxes and label refinement.
    pub objectness_threshold: f64,
    pub absent_threshold: f64,
    /// Frames with a stable heat map and at least this similarity are cached
    /// for classifier retraining.
    pub confident_similarity: f64,
    pub retrain_iou: f64,
    pub retrain_frames: usize,
    pub reid_tie: ReidTie,
    pub local_branch: bool,
    pub classifier_update: bool,
    pub reid: bool,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            dcf: DcfParams::default(),
            boost: BoostConfig::default(),
            fusion: FusionConfig::default(),
            quality: QualityThresholds::default(),
            segment: SegmentParams::default(),
            group_thresholds: GROUP_THRESHOLDS.to_vec(),
            template_mu: 5.0,
            objectness_threshold: 0.5,
            absent_threshold: 0.1,
            confident_similarity: 0.2,
            retrain_iou: 0.3,
            retrain_frames: 3,
            reid_tie: ReidTie::Dcf,
            local_branch: true,
            classifier_update: true,
            reid: true,
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::Config(format!("{key}: expected a number, got '{v}'")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse::<usize>()
        .map_err(|_| Error::Config(format!("{key}: expected a non-negative integer, got '{v}'")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true/false, got '{v}'"))),
    }
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    let items: Result<Vec<f64>> = v.split(',').map(|s| parse_f64(key, s.trim())).collect();
    let items = items?;
    if items.is_empty() {
        return Err(Error::Config(format!("{key}: empty list")));
    }
    Ok(items)
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

impl TrackerConfig {
    /// Applies one setting. Unknown keys are errors.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "alpha" => self.fusion.alpha = parse_f64(key, v)?,
            "stability" => self.fusion.stability = parse_f64(key, v)?,
            "reentry_stable" => self.fusion.reentry_stable = parse_usize(key, v)?,
            "mrf_gamma" => self.fusion.mrf.gamma = parse_f64(key, v)?,
            "mrf_sigma" => self.fusion.mrf.sigma = parse_f64(key, v)?,
            "mrf_components" => self.fusion.mrf.components = parse_usize(key, v)?,
            "mrf_ring" => self.fusion.mrf.ring = parse_usize(key, v)?,
            "mrf_p_obj_min" => self.fusion.mrf.p_obj_min = parse_f64(key, v)?,
            "mrf_p_obj_max" => self.fusion.mrf.p_obj_max = parse_f64(key, v)?,
            "mrf_max_coverage" => self.fusion.mrf.max_coverage = parse_f64(key, v)?,
            "mrf_em_iterations" => self.fusion.mrf.em_iterations = parse_usize(key, v)?,
            "gbdt_trees" => self.boost.trees = parse_usize(key, v)?,
            "gbdt_max_depth" => self.boost.max_depth = parse_usize(key, v)?,
            "gbdt_learning_rate" => self.boost.learning_rate = parse_f64(key, v)?,
            "gbdt_l2" => self.boost.l2 = parse_f64(key, v)?,
            "gbdt_min_child_weight" => self.boost.min_child_weight = parse_f64(key, v)?,
            "dcf_lambda" => self.dcf.lambda = parse_f64(key, v)?,
            "dcf_mu" => self.dcf.mu = parse_f64(key, v)?,
            "dcf_sigma_factor" => self.dcf.sigma_factor = parse_f64(key, v)?,
            "dcf_scales" => self.dcf.scales = parse_list(key, v)?,
            "quality_min_area" => self.quality.min_area = parse_f64(key, v)?,
            "quality_max_area" => self.quality.max_area = parse_f64(key, v)?,
            "quality_blob_ratio" => self.quality.blob_ratio = parse_f64(key, v)?,
            "quality_max_size_cov" => self.quality.max_size_cov = parse_f64(key, v)?,
            "quality_history" => self.quality.history = parse_usize(key, v)?,
            "superpixel_k" => self.segment.k = parse_f64(key, v)?,
            "superpixel_min_size" => self.segment.min_size = parse_usize(key, v)?,
            "superpixel_sigma" => self.segment.sigma = parse_f64(key, v)?,
            "group_thresholds" => self.group_thresholds = parse_list(key, v)?,
            "template_mu" => self.template_mu = parse_f64(key, v)?,
            "objectness_threshold" => self.objectness_threshold = parse_f64(key, v)?,
            "absent_threshold" => self.absent_threshold = parse_f64(key, v)?,
            "confident_similarity" => self.confident_similarity = parse_f64(key, v)?,
            "retrain_iou" => self.retrain_iou = parse_f64(key, v)?,
            "retrain_frames" => self.retrain_frames = parse_usize(key, v)?,
            "reid_tie" => {
                self.reid_tie = match v {
                    "dcf" => ReidTie::Dcf,
                    "motion" => ReidTie::Motion,
                    _ => return Err(Error::Config(format!("reid_tie: expected dcf or motion, got '{v}'"))),
                }
            }
            "local_branch" => self.local_branch = parse_bool(key, v)?,
            "classifier_update" => self.classifier_update = parse_bool(key, v)?,
            "reid" => self.reid = parse_bool(key, v)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        let a = self.fusion.alpha;
        if !(a > 0.0 && a < 1.0) {
            return bad("alpha must lie in (0, 1)");
        }
        if !(self.fusion.mrf.gamma > 0.0 && self.fusion.mrf.sigma > 0.0) {
            return bad("mrf_gamma and mrf_sigma must be positive");
        }
        if self.fusion.mrf.components == 0 {
            return bad("mrf_components must be at least 1");
        }
        if self.boost.trees == 0 || self.boost.max_depth == 0 {
            return bad("gbdt_trees and gbdt_max_depth must be at least 1");
        }
        if self.dcf.scales.iter().any(|s| *s <= 0.0) {
            return bad("dcf_scales must be positive");
        }
        if self.template_mu < 0.0 || self.dcf.mu < 0.0 || self.dcf.lambda < 0.0 {
            return bad("regularisation weights must be non-negative");
        }
        if self.quality.history == 0 {
            return bad("quality_history must be at least 1");
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment. Keys not listed
    /// here and repeated keys are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen: Vec<String> = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if seen.iter().any(|s| s == k) {
                return Err(Error::Config(format!("line {}: duplicate key '{k}'", n + 1)));
            }
            cfg.set(k, v)
                .map_err(|e| Error::Config(format!("line {}: {}", n + 1, e.to_string().trim_start_matches("config: "))))?;
            seen.push(k.to_string());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&crate::error::read_text(path.as_ref())?)
    }

    /// Every key with its current value, in a form [`TrackerConfig::parse`]
    /// reads back.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let b = |v: bool| if v { "true" } else { "false" };
        let tie = match self.reid_tie {
            ReidTie::Dcf => "dcf",
            ReidTie::Motion => "motion",
        };
        let _ = writeln!(s, "alpha = {}", self.fusion.alpha);
        let _ = writeln!(s, "stability = {}", self.fusion.stability);
        let _ = writeln!(s, "reentry_stable = {}", self.fusion.reentry_stable);
        let _ = writeln!(s, "mrf_gamma = {}", self.fusion.mrf.gamma);
        let _ = writeln!(s, "mrf_sigma = {}", self.fusion.mrf.sigma);
        let _ = writeln!(s, "mrf_components = {}", self.fusion.mrf.components);
        let _ = writeln!(s, "mrf_ring = {}", self.fusion.mrf.ring);
        let _ = writeln!(s, "mrf_p_obj_min = {}", self.fusion.mrf.p_obj_min);
        let _ = writeln!(s, "mrf_p_obj_max = {}", self.fusion.mrf.p_obj_max);
        let _ = writeln!(s, "mrf_max_coverage = {}", self.fusion.mrf.max_coverage);
        let _ = writeln!(s, "mrf_em_iterations = {}", self.fusion.mrf.em_iterations);
        let _ = writeln!(s, "gbdt_trees = {}", self.boost.trees);
        let _ = writeln!(s, "gbdt_max_depth = {}", self.boost.max_depth);
        let _ = writeln!(s, "gbdt_learning_rate = {}", self.boost.learning_rate);
        let _ = writeln!(s, "gbdt_l2 = {}", self.boost.l2);
        let _ = writeln!(s, "gbdt_min_child_weight = {}", self.boost.min_child_weight);
        let _ = writeln!(s, "dcf_lambda = {}", self.dcf.lambda);
        let _ = writeln!(s, "dcf_mu = {}", self.dcf.mu);
        let _ = writeln!(s, "dcf_sigma_factor = {}", self.dcf.sigma_factor);
        let _ = writeln!(s, "dcf_scales = {}", join(&self.dcf.scales));
        let _ = writeln!(s, "quality_min_area = {}", self.quality.min_area);
        let _ = writeln!(s, "quality_max_area = {}", self.quality.max_area);
        let _ = writeln!(s, "quality_blob_ratio = {}", self.quality.blob_ratio);
        let _ = writeln!(s, "quality_max_size_cov = {}", self.quality.max_size_cov);
        let _ = writeln!(s, "quality_history = {}", self.quality.history);
        let _ = writeln!(s, "superpixel_k = {}", self.segment.k);
        let _ = writeln!(s, "superpixel_min_size = {}", self.segment.min_size);
        let _ = writeln!(s, "superpixel_sigma = {}", self.segment.sigma);
        let _ = writeln!(s, "group_thresholds = {}", join(&self.group_thresholds));
        let _ = writeln!(s, "template_mu = {}", self.template_mu);
        let _ = writeln!(s, "objectness_threshold = {}", self.objectness_threshold);
        let _ = writeln!(s, "absent_threshold = {}", self.absent_threshold);
        let _ = writeln!(s, "confident_similarity = {}", self.confident_similarity);
        let _ = writeln!(s, "retrain_iou = {}", self.retrain_iou);
        let _ = writeln!(s, "retrain_frames = {}", self.retrain_frames);
        let _ = writeln!(s, "reid_tie = {tie}");
        let _ = writeln!(s, "local_branch = {}", b(self.local_branch));
        let _ = writeln!(s, "classifier_update = {}", b(self.classifier_update));
        let _ = writeln!(s, "reid = {}", b(self.reid));
        s
    }
}
