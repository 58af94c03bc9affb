//! Two-dimensional complex FFT on square `ndarray` rasters.

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

#[derive(Clone)]
pub struct Fft2 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 { n, forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n) }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    fn rows(plan: &Arc<dyn Fft<f64>>, a: &mut Array2<Complex64>) {
        a.axis_iter_mut(Axis(0)).into_par_iter().for_each(|mut row| {
            let slice = row.as_slice_mut().expect("rows are contiguous");
            plan.process(slice);
        });
    }

    fn transform(&self, plan: &Arc<dyn Fft<f64>>, a: &mut Array2<Complex64>) {
        assert_eq!(a.dim(), (self.n, self.n), "raster size does not match the FFT plan");
        if !a.is_standard_layout() {
            *a = a.as_standard_layout().into_owned();
        }
        Self::rows(plan, a);
        let mut t = a.t().as_standard_layout().into_owned();
        Self::rows(plan, &mut t);
        a.assign(&t.t());
    }

    /// Unnormalised forward transform, `sum f exp(-2 pi i k x / n)`.
    pub fn forward(&self, a: &mut Array2<Complex64>) {
        self.transform(&self.forward, a);
    }

    /// Inverse transform including the `1 / n^2` factor.
    pub fn inverse(&self, a: &mut Array2<Complex64>) {
        self.transform(&self.inverse, a);
        let s = 1.0 / (self.n * self.n) as f64;
        a.par_mapv_inplace(|c| c * s);
    }
}

/// Swaps quadrants so index 0 moves to index n/2 (self-inverse for even n).
pub fn fftshift<T: Clone>(a: &Array2<T>) -> Array2<T> {
    let (r, c) = a.dim();
    let (hr, hc) = (r / 2, c / 2);
    Array2::from_shape_fn((r, c), |(i, j)| a[[(i + hr) % r, (j + hc) % c]].clone())
}
