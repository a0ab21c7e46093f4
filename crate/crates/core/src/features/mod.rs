//! Patch decomposition and per-block feature extraction for the local
//! patch classifier.
//!
//! Every 8×8 block of the working patch is described by a fixed 236-value
//! layout: mean color (3), Saab responses (192), HOG (31), color names (10).
//! A discriminant subset of 50 values is then chosen on the first frame.

pub mod color_names;
pub mod dft;
pub mod hog;
pub mod saab;

use crate::error::{Error, Result};
use crate::geometry::PATCH_SIDE;
use crate::image::Image;
use crate::scalar::Real;

pub use color_names::{color_names, CN_DIM};
pub use dft::{dft_select, SelectionIndex};
pub use hog::{fhog, HogMap, HOG_DIM};
pub use saab::{fit_saab, SaabKernels, SAAB_DIM};

pub const BLOCK_SIDE: usize = 8;
pub const BLOCK_STRIDE: usize = 2;
/// Block positions per axis: (60 - 8) / 2 + 1.
pub const GRID_SIDE: usize = (PATCH_SIDE - BLOCK_SIDE) / BLOCK_STRIDE + 1;
pub const BLOCK_COUNT: usize = GRID_SIDE * GRID_SIDE;
pub const RAW_DIM: usize = 3 + SAAB_DIM + HOG_DIM + CN_DIM;
pub const SELECTED_DIM: usize = 50;

/// Offsets of each section inside a raw feature vector.
pub mod layout {
    use super::*;
    pub const MEAN_COLOR: std::ops::Range<usize> = 0..3;
    pub const SAAB: std::ops::Range<usize> = 3..3 + SAAB_DIM;
    pub const HOG: std::ops::Range<usize> = 3 + SAAB_DIM..3 + SAAB_DIM + HOG_DIM;
    pub const CN: std::ops::Range<usize> = 3 + SAAB_DIM + HOG_DIM..RAW_DIM;
}

/// Overlapping blocks of the working patch in row-major order of their
/// top-left corners.
#[derive(Debug, Clone)]
pub struct PatchGrid<T> {
    pub blocks: Vec<Image<T>>,
    /// `(x, y)` top-left corner of each block in patch pixels.
    pub positions: Vec<(usize, usize)>,
}

impl<T> PatchGrid<T> {
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

/// Top-left corners of all blocks, row-major.
pub fn block_positions() -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(BLOCK_COUNT);
    for gy in 0..GRID_SIDE {
        for gx in 0..GRID_SIDE {
            out.push((gx * BLOCK_STRIDE, gy * BLOCK_STRIDE));
        }
    }
    out
}

pub fn decompose_patches<T: Real>(patch: &Image<T>) -> Result<PatchGrid<T>> {
    if patch.width() != PATCH_SIDE || patch.height() != PATCH_SIDE || patch.channels() != 3 {
        return Err(Error::Shape {
            expected: format!("{PATCH_SIDE}x{PATCH_SIDE}x3"),
            got: format!("{}x{}x{}", patch.width(), patch.height(), patch.channels()),
        });
    }
    let positions = block_positions();
    let blocks = positions
        .iter()
        .map(|&(bx, by)| {
            Image::from_fn(BLOCK_SIDE, BLOCK_SIDE, 3, |x, y, c| patch.get(bx + x, by + y, c))
        })
        .collect();
    Ok(PatchGrid { blocks, positions })
}

/// Full 236-value descriptor of one block.
pub fn apply_features<T: Real>(block: &Image<T>, kernels: &SaabKernels<T>) -> Vec<T> {
    let mut out = Vec::with_capacity(RAW_DIM);
    out.extend_from_slice(&saab::mean_color(block));
    out.extend(saab::saab_responses(block, kernels));
    let hog = fhog(block, BLOCK_SIDE);
    out.extend_from_slice(hog.cell(0, 0));
    let mut cn = [T::zero(); CN_DIM];
    for y in 0..block.height() {
        for x in 0..block.width() {
            for (acc, v) in cn.iter_mut().zip(color_names(block.pixel(x, y))) {
                *acc = *acc + v;
            }
        }
    }
    let n = T::of_usize(block.width() * block.height());
    out.extend(cn.iter().map(|v| *v / n));
    out
}

pub fn raw_features<T: Real>(grid: &PatchGrid<T>, kernels: &SaabKernels<T>) -> Vec<Vec<T>> {
    grid.blocks.iter().map(|b| apply_features(b, kernels)).collect()
}

/// Learned front end of the patch classifier: Saab kernels plus the selected
/// feature subset, both fixed after the first frame.
#[derive(Debug, Clone)]
pub struct FeatureModel<T> {
    pub kernels: SaabKernels<T>,
    pub selection: SelectionIndex,
}

impl<T: Real> FeatureModel<T> {
    /// Fits kernels on `grid` and selects features using the labelled blocks
    /// (`None` entries are ignored).
    pub fn fit(grid: &PatchGrid<T>, labels: &[Option<bool>]) -> Result<Self> {
        let kernels = fit_saab(grid)?;
        let raw = raw_features(grid, &kernels);
        let (rows, ys): (Vec<Vec<T>>, Vec<bool>) = raw
            .into_iter()
            .zip(labels)
            .filter_map(|(r, l)| l.map(|l| (r, l)))
            .unzip();
        let selection = dft_select(&rows, &ys, SELECTED_DIM)?;
        Ok(Self { kernels, selection })
    }

    pub fn parameter_count(&self) -> usize {
        self.kernels.parameter_count() + self.selection.parameter_count()
    }

    /// Selected features of every block of `patch`.
    pub fn extract(&self, patch: &Image<T>) -> Result<Vec<Vec<T>>> {
        let grid = decompose_patches(patch)?;
        Ok(grid
            .blocks
            .iter()
            .map(|b| self.selection.apply(&apply_features(b, &self.kernels)))
            .collect())
    }
}
