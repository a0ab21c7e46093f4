//! Graph-based superpixels on the working patch and objectness-guided
//! grouping into box proposals.

use crate::geometry::BoundingBox;
use crate::image::Image;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentParams {
    pub k: f64,
    pub min_size: usize,
    pub sigma: f64,
}

impl Default for SegmentParams {
    fn default() -> Self {
        Self {
            k: 100.0,
            min_size: 20,
            sigma: 0.5,
        }
    }
}

pub const GROUP_THRESHOLDS: [f64; 3] = [0.3, 0.5, 0.7];

/// Per-pixel segment ids, compacted to `0..count` in raster order of first
/// appearance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentMap {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<usize>,
    pub sizes: Vec<usize>,
}

impl SegmentMap {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    /// Mean of a per-pixel score over each segment.
    pub fn mean_scores<T: Real>(&self, scores: &[T]) -> Vec<T> {
        let mut acc = vec![T::zero(); self.count()];
        for (l, s) in self.labels.iter().zip(scores) {
            acc[*l] = acc[*l] + *s;
        }
        acc.iter()
            .zip(&self.sizes)
            .map(|(a, n)| *a / T::of_usize(*n))
            .collect()
    }
}

struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
    size: Vec<usize>,
    /// Largest MST edge inside each component.
    internal: Vec<f64>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
            size: vec![1; n],
            internal: vec![0.0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn join(&mut self, a: usize, b: usize, w: f64) -> usize {
        let (hi, lo) = if self.rank[a] >= self.rank[b] { (a, b) } else { (b, a) };
        if self.rank[hi] == self.rank[lo] {
            self.rank[hi] += 1;
        }
        self.parent[lo] = hi;
        self.size[hi] += self.size[lo];
        self.internal[hi] = w;
        hi
    }
}

/// 1-D Gaussian taps `0..=ceil(4σ)`, normalised over the symmetric kernel.
fn gaussian_taps(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let len = (sigma * 4.0).ceil() as usize + 1;
    let mut taps: Vec<f64> = (0..len)
        .map(|i| (-0.5 * (i as f64 / sigma).powi(2)).exp())
        .collect();
    let sum = 2.0 * taps.iter().sum::<f64>() - taps[0];
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

fn smooth<T: Real>(img: &Image<T>, sigma: f64) -> Vec<[f64; 3]> {
    let (w, h) = (img.width(), img.height());
    let taps = gaussian_taps(sigma);
    let px = |x: usize, y: usize| -> [f64; 3] {
        let p = img.pixel(x, y);
        if p.len() >= 3 {
            [p[0].as_f64(), p[1].as_f64(), p[2].as_f64()]
        } else {
            [p[0].as_f64(); 3]
        }
    };
    let conv = |get: &dyn Fn(isize) -> [f64; 3]| {
        let mut acc = [0.0; 3];
        for (i, t) in taps.iter().enumerate() {
            let i = i as isize;
            let a = get(i);
            let b = get(-i);
            for c in 0..3 {
                acc[c] += if i == 0 { t * a[c] } else { t * (a[c] + b[c]) };
            }
        }
        acc
    };
    let mut tmp = vec![[0.0; 3]; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = conv(&|d| px((x as isize + d).clamp(0, w as isize - 1) as usize, y));
        }
    }
    let mut out = vec![[0.0; 3]; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = conv(&|d| tmp[(y as isize + d).clamp(0, h as isize - 1) as usize * w + x]);
        }
    }
    out
}

/// Felzenszwalb–Huttenlocher segmentation: 8-connected grid graph with
/// Euclidean RGB weights after a light blur, Kruskal-order merging with the
/// `Int(C) + k/|C|` predicate, then absorption of segments under `min_size`.
pub fn segment<T: Real>(img: &Image<T>, params: &SegmentParams) -> SegmentMap {
    let (w, h) = (img.width(), img.height());
    let pix = smooth(img, params.sigma);
    let dist = |a: usize, b: usize| {
        let (p, q) = (pix[a], pix[b]);
        ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt()
    };
    let mut edges: Vec<(f64, usize, usize)> = Vec::with_capacity(w * h * 4);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w {
                edges.push((dist(i, i + 1), i, i + 1));
            }
            if y + 1 < h {
                edges.push((dist(i, i + w), i, i + w));
            }
            if x + 1 < w && y + 1 < h {
                edges.push((dist(i, i + w + 1), i, i + w + 1));
            }
            if x + 1 < w && y > 0 {
                edges.push((dist(i, i - w + 1), i, i - w + 1));
            }
        }
    }
    edges.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut ds = DisjointSet::new(w * h);
    for &(wt, a, b) in &edges {
        let (ra, rb) = (ds.find(a), ds.find(b));
        if ra == rb {
            continue;
        }
        let ta = ds.internal[ra] + params.k / ds.size[ra] as f64;
        let tb = ds.internal[rb] + params.k / ds.size[rb] as f64;
        if wt <= ta && wt <= tb {
            ds.join(ra, rb, wt);
        }
    }
    for &(_, a, b) in &edges {
        let (ra, rb) = (ds.find(a), ds.find(b));
        if ra != rb && (ds.size[ra] < params.min_size || ds.size[rb] < params.min_size) {
            let keep = ds.internal[ra].max(ds.internal[rb]);
            ds.join(ra, rb, keep);
        }
    }

    let mut compact = vec![usize::MAX; w * h];
    let mut labels = Vec::with_capacity(w * h);
    let mut sizes = Vec::new();
    for i in 0..w * h {
        let r = ds.find(i);
        if compact[r] == usize::MAX {
            compact[r] = sizes.len();
            sizes.push(0);
        }
        labels.push(compact[r]);
        sizes[compact[r]] += 1;
    }
    SegmentMap {
        width: w,
        height: h,
        labels,
        sizes,
    }
}

/// Pixels of all segments whose mean score is at least `tau`.
pub fn union_mask<T: Real>(seg: &SegmentMap, segment_scores: &[T], tau: T) -> Vec<bool> {
    seg.labels.iter().map(|l| segment_scores[*l] >= tau).collect()
}

fn mask_box<T: Real>(mask: &[bool], width: usize) -> Option<BoundingBox<T>> {
    let mut ext: Option<(usize, usize, usize, usize)> = None;
    for (i, _) in mask.iter().enumerate().filter(|(_, m)| **m) {
        let (x, y) = (i % width, i / width);
        ext = Some(match ext {
            None => (x, y, x, y),
            Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
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

/// Tight boxes (patch pixels) around the high-score segment unions, one per
/// threshold, with duplicates removed. `heat` holds one score per pixel.
pub fn group_proposals<T: Real>(seg: &SegmentMap, heat: &[T], thresholds: &[f64]) -> Vec<BoundingBox<T>> {
    let scores = seg.mean_scores(heat);
    let mut out: Vec<BoundingBox<T>> = Vec::new();
    for &tau in thresholds {
        if let Some(b) = mask_box(&union_mask(seg, &scores, T::of(tau)), seg.width) {
            if !out.contains(&b) {
                out.push(b);
            }
        }
    }
    out
}
