//! Binary gradient-boosted decision trees for patch objectness.
//!
//! Logistic loss, second-order leaf weights with L2 regularisation, exact
//! greedy splits. Samples go left when `x < threshold`.

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct BoostConfig {
    pub trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub l2: f64,
    /// Minimum hessian mass in each child of a split.
    pub min_child_weight: f64,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self {
            trees: 40,
            max_depth: 4,
            learning_rate: 0.3,
            l2: 1.0,
            min_child_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node<T> {
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
    },
    Leaf(T),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree<T> {
    pub nodes: Vec<Node<T>>,
}

impl<T: Real> Tree<T> {
    pub fn predict(&self, x: &[T]) -> T {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Leaf(v) => return *v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => idx = if x[*feature] < *threshold { *left } else { *right },
            }
        }
    }

    /// Levels below the root.
    pub fn depth(&self) -> usize {
        fn walk<T>(nodes: &[Node<T>], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Two parameters per split (feature, threshold), one per leaf.
    pub fn parameter_count(&self) -> usize {
        self.nodes
            .iter()
            .map(|n| match n {
                Node::Split { .. } => 2,
                Node::Leaf(_) => 1,
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeEnsemble<T> {
    pub trees: Vec<Tree<T>>,
    pub learning_rate: T,
    /// Margin added before the sigmoid.
    pub base_score: T,
}

impl<T: Real> TreeEnsemble<T> {
    pub fn empty() -> Self {
        Self {
            trees: Vec::new(),
            learning_rate: T::one(),
            base_score: T::zero(),
        }
    }

    /// Raw additive score; leaf values already include shrinkage.
    pub fn margin(&self, x: &[T]) -> T {
        self.trees
            .iter()
            .fold(self.base_score, |acc, t| acc + t.predict(x))
    }

    pub fn predict_proba(&self, x: &[T]) -> T {
        sigmoid(self.margin(x))
    }

    pub fn predict_many(&self, xs: &[Vec<T>]) -> Vec<T> {
        xs.iter().map(|x| self.predict_proba(x)).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.trees.iter().map(Tree::parameter_count).sum()
    }

    pub fn max_depth(&self) -> usize {
        self.trees.iter().map(Tree::depth).max().unwrap_or(0)
    }
}

pub fn sigmoid<T: Real>(m: T) -> T {
    T::one() / (T::one() + (-m).exp())
}

/// Upper bound on parameters for `trees` trees of depth `depth`.
pub fn parameter_bound(trees: usize, depth: usize) -> usize {
    let leaves = 1usize << depth;
    trees * (2 * (leaves - 1) + leaves)
}

/// Geometric training label of a block against a box in patch coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockLabel {
    Background,
    Object,
    /// Straddles the box boundary; excluded from training.
    Ignore,
}

impl BlockLabel {
    pub fn as_option(self) -> Option<bool> {
        match self {
            BlockLabel::Background => Some(false),
            BlockLabel::Object => Some(true),
            BlockLabel::Ignore => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelSource {
    Geometric,
    Refined,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchLabelSet {
    pub labels: Vec<BlockLabel>,
    pub source: LabelSource,
}

impl PatchLabelSet {
    pub fn as_options(&self) -> Vec<Option<bool>> {
        self.labels.iter().map(|l| l.as_option()).collect()
    }

    pub fn count(&self, which: BlockLabel) -> usize {
        self.labels.iter().filter(|&&l| l == which).count()
    }
}

/// 1 for blocks fully inside `b`, 0 for blocks fully outside, ignore otherwise.
pub fn label_blocks<T: Real>(
    positions: &[(usize, usize)],
    block_side: usize,
    b: &BoundingBox<T>,
) -> PatchLabelSet {
    let side = T::of_usize(block_side);
    let labels = positions
        .iter()
        .map(|&(x, y)| {
            let block = BoundingBox::new(T::of_usize(x), T::of_usize(y), side, side);
            if b.contains_box(&block) {
                BlockLabel::Object
            } else if b.intersection_area(&block) <= T::zero() {
                BlockLabel::Background
            } else {
                BlockLabel::Ignore
            }
        })
        .collect();
    PatchLabelSet {
        labels,
        source: LabelSource::Geometric,
    }
}

struct Grad {
    g: f64,
    h: f64,
}

struct TreeBuilder<'a, T> {
    xs: &'a [Vec<T>],
    grads: &'a [Grad],
    cfg: &'a BoostConfig,
    nodes: Vec<Node<T>>,
}

impl<T: Real> TreeBuilder<'_, T> {
    fn leaf_weight(&self, g: f64, h: f64) -> T {
        T::of(-g / (h + self.cfg.l2) * self.cfg.learning_rate)
    }

    fn score(&self, g: f64, h: f64) -> f64 {
        g * g / (h + self.cfg.l2)
    }

    fn build(&mut self, samples: Vec<usize>, depth: usize) -> usize {
        let g: f64 = samples.iter().map(|&i| self.grads[i].g).sum();
        let h: f64 = samples.iter().map(|&i| self.grads[i].h).sum();
        let idx = self.nodes.len();
        self.nodes.push(Node::Leaf(self.leaf_weight(g, h)));
        if depth >= self.cfg.max_depth || samples.len() < 2 {
            return idx;
        }

        let parent = self.score(g, h);
        // (gain, feature, threshold)
        let mut best: Option<(f64, usize, T)> = None;
        let dims = self.xs[samples[0]].len();
        let mut order = samples.clone();
        for f in 0..dims {
            order.sort_by(|&a, &b| {
                self.xs[a][f]
                    .partial_cmp(&self.xs[b][f])
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            let (mut gl, mut hl) = (0.0, 0.0);
            for w in 0..order.len() - 1 {
                let i = order[w];
                gl += self.grads[i].g;
                hl += self.grads[i].h;
                let (lo, hi) = (self.xs[i][f], self.xs[order[w + 1]][f]);
                if !(hi > lo) {
                    continue;
                }
                let (gr, hr) = (g - gl, h - hl);
                if hl < self.cfg.min_child_weight || hr < self.cfg.min_child_weight {
                    continue;
                }
                let gain = 0.5 * (self.score(gl, hl) + self.score(gr, hr) - parent);
                // strict improvement: lowest feature index, then lowest threshold wins ties
                if gain > 1e-12 && best.as_ref().is_none_or(|b| gain > b.0) {
                    best = Some((gain, f, (lo + hi) * T::of(0.5)));
                }
            }
        }

        let Some((_, feature, threshold)) = best else {
            return idx;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = samples
            .into_iter()
            .partition(|&i| self.xs[i][feature] < threshold);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[idx] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        idx
    }
}

/// Plain boosting with logistic loss. No class-balance precondition.
pub fn fit<T: Real>(xs: &[Vec<T>], ys: &[bool], cfg: &BoostConfig) -> Result<TreeEnsemble<T>> {
    if xs.is_empty() {
        return Err(Error::TooFewSamples { need: 1, got: 0 });
    }
    if xs.len() != ys.len() {
        return Err(Error::Shape {
            expected: format!("{} labels", xs.len()),
            got: format!("{}", ys.len()),
        });
    }
    let mut model = TreeEnsemble {
        trees: Vec::with_capacity(cfg.trees),
        learning_rate: T::of(cfg.learning_rate),
        base_score: T::zero(),
    };
    let mut margins = vec![0.0f64; xs.len()];
    for _ in 0..cfg.trees {
        let grads: Vec<Grad> = margins
            .iter()
            .zip(ys)
            .map(|(m, &y)| {
                let p = 1.0 / (1.0 + (-m).exp());
                Grad {
                    g: p - if y { 1.0 } else { 0.0 },
                    h: (p * (1.0 - p)).max(1e-16),
                }
            })
            .collect();
        let mut builder = TreeBuilder {
            xs,
            grads: &grads,
            cfg,
            nodes: Vec::new(),
        };
        builder.build((0..xs.len()).collect(), 0);
        let tree = Tree {
            nodes: builder.nodes,
        };
        for (m, x) in margins.iter_mut().zip(xs) {
            *m += tree.predict(x).as_f64();
        }
        model.trees.push(tree);
    }
    Ok(model)
}

/// Trains the patch classifier; both classes must be present.
pub fn train<T: Real>(xs: &[Vec<T>], ys: &[bool], cfg: &BoostConfig) -> Result<TreeEnsemble<T>> {
    let pos = ys.iter().filter(|&&y| y).count();
    if pos == 0 || pos == ys.len() {
        return Err(Error::SingleClass);
    }
    fit(xs, ys, cfg)
}

#[derive(Debug, Clone)]
pub struct TwoStageModel<T> {
    pub model: TreeEnsemble<T>,
    /// Stage-1 probabilities binarised at the threshold, for the trained rows.
    pub refined: Vec<bool>,
    /// True when refinement collapsed to one class and stage 1 was kept.
    pub fell_back: bool,
}

/// Stage 1 learns geometric labels; its probabilities on the same blocks,
/// binarised at `threshold`, become the labels of stage 2. Blocks labelled
/// `None` are left out of both stages.
pub fn two_stage_train<T: Real>(
    xs: &[Vec<T>],
    labels: &[Option<bool>],
    cfg: &BoostConfig,
    threshold: f64,
) -> Result<TwoStageModel<T>> {
    let (rows, ys): (Vec<Vec<T>>, Vec<bool>) = xs
        .iter()
        .zip(labels)
        .filter_map(|(x, l)| l.map(|l| (x.clone(), l)))
        .unzip();
    let stage1 = train(&rows, &ys, cfg)?;
    let refined: Vec<bool> = rows
        .iter()
        .map(|x| stage1.predict_proba(x).as_f64() >= threshold)
        .collect();
    let pos = refined.iter().filter(|&&r| r).count();
    if pos == 0 || pos == refined.len() {
        return Ok(TwoStageModel {
            model: stage1,
            refined,
            fell_back: true,
        });
    }
    let model = train(&rows, &refined, cfg)?;
    Ok(TwoStageModel {
        model,
        refined,
        fell_back: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{block_positions, BLOCK_SIDE};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blobs(n: usize, seed: u64, spread: f64) -> (Vec<Vec<f64>>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..n {
            let y = i % 2 == 0;
            let c = if y { 1.0 } else { -1.0 };
            xs.push(vec![
                c + spread * (rng.gen::<f64>() - 0.5),
                c + spread * (rng.gen::<f64>() - 0.5),
            ]);
            ys.push(y);
        }
        (xs, ys)
    }

    fn accuracy(m: &TreeEnsemble<f64>, xs: &[Vec<f64>], ys: &[bool]) -> f64 {
        let ok = xs
            .iter()
            .zip(ys)
            .filter(|(x, &y)| (m.predict_proba(x) >= 0.5) == y)
            .count();
        ok as f64 / xs.len() as f64
    }

    #[test]
    fn labels_match_containment_enumeration() {
        let positions = block_positions();
        let whole = label_blocks(&positions, BLOCK_SIDE, &BoundingBox::new(0.0, 0.0, 60.0, 60.0));
        assert_eq!(whole.count(BlockLabel::Object), 729);
        let none = label_blocks(&positions, BLOCK_SIDE, &BoundingBox::new(100.0, 100.0, 5.0, 5.0));
        assert_eq!(none.count(BlockLabel::Background), 729);

        // 32×32 centred box [14, 46): brute-force per-pixel containment
        let b = BoundingBox::new(14.0, 14.0, 32.0, 32.0);
        let set = label_blocks(&positions, BLOCK_SIDE, &b);
        let (mut inside, mut outside) = (0, 0);
        for &(x, y) in &positions {
            let mut any_in = false;
            let mut all_in = true;
            for py in y..y + 8 {
                for px in x..x + 8 {
                    let hit = (14..46).contains(&px) && (14..46).contains(&py);
                    any_in |= hit;
                    all_in &= hit;
                }
            }
            inside += all_in as usize;
            outside += (!any_in) as usize;
        }
        assert_eq!(set.count(BlockLabel::Object), inside);
        assert_eq!(set.count(BlockLabel::Background), outside);
        assert_eq!(inside, 13 * 13);
        assert_eq!(set.count(BlockLabel::Ignore), 729 - inside - outside);
    }

    #[test]
    fn separable_toy_set() {
        let (xs, ys) = blobs(200, 1, 1.5);
        let m = train(&xs, &ys, &BoostConfig::default()).unwrap();
        let (tx, ty) = blobs(200, 2, 1.5);
        assert!(accuracy(&m, &tx, &ty) >= 0.95);
        assert!(m.max_depth() <= 4);
        assert!(m.parameter_count() <= 1840);
        assert_eq!(parameter_bound(40, 4), 1840);
    }

    #[test]
    fn single_sample_fits_towards_label() {
        let m = fit(&[vec![0.3f64]], &[true], &BoostConfig::default()).unwrap();
        assert!(m.predict_proba(&[0.3]) > 0.5);
    }

    #[test]
    fn single_class_is_rejected_by_train() {
        let r = train(&[vec![1.0f64], vec![2.0]], &[true, true], &BoostConfig::default());
        assert!(matches!(r, Err(Error::SingleClass)));
    }

    #[test]
    fn empty_ensemble_is_half() {
        assert_eq!(TreeEnsemble::<f64>::empty().predict_proba(&[1.0]), 0.5);
    }

    #[test]
    fn positive_tree_raises_probability() {
        let mut m = TreeEnsemble::<f64>::empty();
        let before = m.predict_proba(&[0.0]);
        m.trees.push(Tree {
            nodes: vec![Node::Leaf(0.4)],
        });
        assert!(m.predict_proba(&[0.0]) > before);
    }

    #[test]
    fn two_stage_refined_labels_are_binarised_stage_one() {
        let (xs, ys) = blobs(100, 5, 1.0);
        let labels: Vec<Option<bool>> = ys.iter().map(|&y| Some(y)).collect();
        let cfg = BoostConfig::default();
        let out = two_stage_train(&xs, &labels, &cfg, 0.5).unwrap();
        let stage1 = train(&xs, &ys, &cfg).unwrap();
        let want: Vec<bool> = xs.iter().map(|x| stage1.predict_proba(x) >= 0.5).collect();
        assert_eq!(out.refined, want);
    }

    #[test]
    fn two_stage_clean_labels_no_worse() {
        let (xs, ys) = blobs(300, 7, 2.4);
        let labels: Vec<Option<bool>> = ys.iter().map(|&y| Some(y)).collect();
        let cfg = BoostConfig::default();
        let stage1 = train(&xs, &ys, &cfg).unwrap();
        let stage2 = two_stage_train(&xs, &labels, &cfg, 0.5).unwrap().model;
        let (tx, ty) = blobs(300, 8, 2.4);
        assert!(accuracy(&stage2, &tx, &ty) >= accuracy(&stage1, &tx, &ty) - 0.02);
    }

    #[test]
    fn two_stage_recovers_noisy_background_labels() {
        // 729 samples (one frame of blocks), a third object; 20% of the
        // background relabelled as object. Pooled over five draws.
        let cfg = BoostConfig::default();
        let (mut recovered, mut injected) = (0, 0);
        for seed in 0..5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for i in 0..729 {
                let y = i % 3 == 0;
                let c = if y { 1.0 } else { -1.0 };
                xs.push(vec![
                    c + 1.2 * (rng.gen::<f64>() - 0.5),
                    c + 1.2 * (rng.gen::<f64>() - 0.5),
                ]);
                ys.push(y);
            }
            let mut labels: Vec<Option<bool>> = ys.iter().map(|&y| Some(y)).collect();
            let mut flipped = Vec::new();
            for (i, y) in ys.iter().enumerate() {
                if !*y && rng.gen_bool(0.2) {
                    labels[i] = Some(true);
                    flipped.push(i);
                }
            }
            let out = two_stage_train(&xs, &labels, &cfg, 0.5).unwrap();
            recovered += flipped.iter().filter(|&&i| !out.refined[i]).count();
            injected += flipped.len();
        }
        assert!(injected > 0);
        assert!(2 * recovered >= injected, "recovered {recovered} of {injected}");
    }
}
