//! Channel-wise Saab transform on color residuals.
//!
//! A block's mean color is removed, the residual is projected on a 3×3
//! spectral PCA basis (RGB → PQR), and each PQR channel is filtered by its
//! own top AC spatial PCA kernels (5×5, stride 1).

use crate::features::{PatchGrid, BLOCK_SIDE};
use crate::image::Image;
use crate::linalg::{normalize_sign, symmetric_eigen, SquareMatrix};
use crate::scalar::Real;
use crate::error::{Error, Result};

pub const KERNEL_SIDE: usize = 5;
pub const KERNEL_LEN: usize = KERNEL_SIDE * KERNEL_SIDE;
pub const KERNELS_PER_CHANNEL: usize = 4;
/// Valid convolution outputs per axis on an 8×8 block.
pub const RESPONSE_SIDE: usize = BLOCK_SIDE - KERNEL_SIDE + 1;
/// 3 channels × 4 kernels × 4×4 outputs.
pub const SAAB_DIM: usize = 3 * KERNELS_PER_CHANNEL * RESPONSE_SIDE * RESPONSE_SIDE;

#[derive(Debug, Clone)]
pub struct SaabKernels<T> {
    /// Rows are the PQR axes, in non-increasing eigenvalue order.
    pub color_basis: [[T; 3]; 3],
    pub color_eigenvalues: [T; 3],
    /// `spatial[c][k]` is kernel `k` of PQR channel `c`, row-major 5×5.
    pub spatial: Vec<Vec<Vec<T>>>,
    pub spatial_eigenvalues: Vec<Vec<T>>,
    /// Set when a covariance was rank deficient and the basis was completed
    /// with arbitrary orthonormal directions.
    pub degenerate: bool,
}

impl<T: Real> SaabKernels<T> {
    /// Learned parameter count: 3×3 color weights + 12 kernels × 25 taps.
    pub fn parameter_count(&self) -> usize {
        9 + self.spatial.iter().map(|c| c.len() * KERNEL_LEN).sum::<usize>()
    }

    pub fn kernel_count(&self) -> usize {
        self.spatial.iter().map(Vec::len).sum()
    }
}

pub fn mean_color<T: Real>(block: &Image<T>) -> [T; 3] {
    let mut acc = [T::zero(); 3];
    let n = T::of_usize(block.width() * block.height());
    for y in 0..block.height() {
        for x in 0..block.width() {
            let p = block.pixel(x, y);
            for c in 0..3 {
                acc[c] = acc[c] + p[c];
            }
        }
    }
    acc.map(|v| v / n)
}

/// Per-pixel RGB residuals (row-major, 3 values per pixel).
pub fn color_residuals<T: Real>(block: &Image<T>) -> Vec<[T; 3]> {
    let m = mean_color(block);
    let mut out = Vec::with_capacity(block.width() * block.height());
    for y in 0..block.height() {
        for x in 0..block.width() {
            let p = block.pixel(x, y);
            out.push([p[0] - m[0], p[1] - m[1], p[2] - m[2]]);
        }
    }
    out
}

pub fn project_pqr<T: Real>(basis: &[[T; 3]; 3], residuals: &[[T; 3]]) -> Vec<[T; 3]> {
    residuals
        .iter()
        .map(|r| {
            let mut o = [T::zero(); 3];
            for (k, row) in basis.iter().enumerate() {
                o[k] = row[0] * r[0] + row[1] * r[1] + row[2] * r[2];
            }
            o
        })
        .collect()
}

/// 5×5 window of channel `c` at top-left `(x, y)` in a `side`-wide plane.
fn window<T: Real>(plane: &[[T; 3]], side: usize, c: usize, x: usize, y: usize) -> [T; KERNEL_LEN] {
    let mut w = [T::zero(); KERNEL_LEN];
    for dy in 0..KERNEL_SIDE {
        for dx in 0..KERNEL_SIDE {
            w[dy * KERNEL_SIDE + dx] = plane[(y + dy) * side + x + dx][c];
        }
    }
    w
}

/// Orthonormal basis (as rows) of the complement of the all-ones vector.
/// Built from Helmert contrasts so it is fixed and exactly zero-mean.
fn ac_basis<T: Real>(n: usize) -> Vec<Vec<T>> {
    (1..n)
        .map(|k| {
            let norm = T::of(((k * (k + 1)) as f64).sqrt());
            (0..n)
                .map(|i| {
                    if i < k {
                        T::one() / norm
                    } else if i == k {
                        -T::of_usize(k) / norm
                    } else {
                        T::zero()
                    }
                })
                .collect()
        })
        .collect()
}

/// Learns spectral and spatial PCA kernels from the blocks of one frame.
pub fn fit_saab<T: Real>(grid: &PatchGrid<T>) -> Result<SaabKernels<T>> {
    if grid.len() < 12 {
        return Err(Error::TooFewSamples {
            need: 12,
            got: grid.len(),
        });
    }
    let mut degenerate = false;

    // spectral PCA on residual colors
    let residuals: Vec<Vec<[T; 3]>> = grid.blocks.iter().map(color_residuals).collect();
    let mut cov = SquareMatrix::<T>::zeros(3);
    let mut count = 0usize;
    for r in residuals.iter().flatten() {
        cov.add_outer(r);
        count += 1;
    }
    cov.scale(T::one() / T::of_usize(count));
    let color = symmetric_eigen(&cov);
    let color_scale = color.values[0].abs().max(T::min_positive_value());
    if color.values[2] <= T::of(1e-12) * color_scale {
        degenerate = true;
    }
    let mut color_basis = [[T::zero(); 3]; 3];
    for (k, row) in color_basis.iter_mut().enumerate() {
        row.copy_from_slice(&color.vectors[k]);
    }
    let color_eigenvalues = [color.values[0], color.values[1], color.values[2]];

    // spatial PCA per PQR channel, restricted to the AC subspace
    let basis = ac_basis::<T>(KERNEL_LEN);
    let pqr: Vec<Vec<[T; 3]>> = residuals
        .iter()
        .map(|r| project_pqr(&color_basis, r))
        .collect();
    let mut spatial = Vec::with_capacity(3);
    let mut spatial_eigenvalues = Vec::with_capacity(3);
    for c in 0..3 {
        let mut acc = SquareMatrix::<T>::zeros(KERNEL_LEN - 1);
        let mut n = 0usize;
        let mut coords = vec![T::zero(); KERNEL_LEN - 1];
        for plane in &pqr {
            for y in 0..RESPONSE_SIDE {
                for x in 0..RESPONSE_SIDE {
                    let w = window(plane, BLOCK_SIDE, c, x, y);
                    for (k, b) in basis.iter().enumerate() {
                        coords[k] = b.iter().zip(w.iter()).map(|(p, q)| *p * *q).sum();
                    }
                    acc.add_outer(&coords);
                    n += 1;
                }
            }
        }
        acc.scale(T::one() / T::of_usize(n));
        let eig = symmetric_eigen(&acc);
        let top = eig.values[0].abs().max(T::min_positive_value());
        if eig.values[KERNELS_PER_CHANNEL - 1] <= T::of(1e-12) * top {
            degenerate = true;
        }
        let kernels: Vec<Vec<T>> = eig.vectors[..KERNELS_PER_CHANNEL]
            .iter()
            .map(|v| {
                let mut k = vec![T::zero(); KERNEL_LEN];
                for (coef, b) in v.iter().zip(&basis) {
                    for (kk, bb) in k.iter_mut().zip(b) {
                        *kk = *kk + *coef * *bb;
                    }
                }
                normalize_sign(&mut k);
                k
            })
            .collect();
        spatial.push(kernels);
        spatial_eigenvalues.push(eig.values[..KERNELS_PER_CHANNEL].to_vec());
    }

    Ok(SaabKernels {
        color_basis,
        color_eigenvalues,
        spatial,
        spatial_eigenvalues,
        degenerate,
    })
}

/// Saab responses of one block, layout `[channel][kernel][row][col]`.
pub fn saab_responses<T: Real>(block: &Image<T>, k: &SaabKernels<T>) -> Vec<T> {
    let pqr = project_pqr(&k.color_basis, &color_residuals(block));
    let side = block.width();
    let out_side = side + 1 - KERNEL_SIDE;
    let mut out = Vec::with_capacity(3 * KERNELS_PER_CHANNEL * out_side * out_side);
    for c in 0..3 {
        for kernel in &k.spatial[c] {
            for y in 0..out_side {
                for x in 0..out_side {
                    let w = window(&pqr, side, c, x, y);
                    out.push(kernel.iter().zip(w.iter()).map(|(a, b)| *a * *b).sum());
                }
            }
        }
    }
    out
}
