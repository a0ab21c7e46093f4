//! Row-column 2-D FFT on square or rectangular complex grids.

use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::scalar::Real;

#[derive(Clone)]
pub struct Fft2<T: Real> {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<T>>,
    row_inv: Arc<dyn Fft<T>>,
    col_fwd: Arc<dyn Fft<T>>,
    col_inv: Arc<dyn Fft<T>>,
}

impl<T: Real> fmt::Debug for Fft2<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fft2({}x{})", self.rows, self.cols)
    }
}

impl<T: Real> Fft2<T> {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
        }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn run(&self, data: &mut [Complex<T>], row: &Arc<dyn Fft<T>>, col: &Arc<dyn Fft<T>>) {
        assert_eq!(data.len(), self.len());
        row.process(data);
        let mut buf = vec![Complex::new(T::zero(), T::zero()); self.rows];
        for c in 0..self.cols {
            for r in 0..self.rows {
                buf[r] = data[r * self.cols + c];
            }
            col.process(&mut buf);
            for r in 0..self.rows {
                data[r * self.cols + c] = buf[r];
            }
        }
    }

    /// Unnormalised forward transform in place (row-major).
    pub fn forward(&self, data: &mut [Complex<T>]) {
        self.run(data, &self.row_fwd, &self.col_fwd);
    }

    /// Inverse transform in place, scaled by `1 / (rows * cols)`.
    pub fn inverse(&self, data: &mut [Complex<T>]) {
        self.run(data, &self.row_inv, &self.col_inv);
        let s = T::one() / T::of_usize(self.len());
        data.iter_mut().for_each(|v| *v = *v * s);
    }

    pub fn forward_real(&self, data: &[T]) -> Vec<Complex<T>> {
        let mut out: Vec<Complex<T>> = data.iter().map(|v| Complex::new(*v, T::zero())).collect();
        self.forward(&mut out);
        out
    }
}
