//! N-dimensional FFT over a `GridSpec` layout.
//!
//! Lines along an axis are transformed independently, so the result does not
//! depend on how rayon schedules them.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::wavefield::GridSpec;

#[derive(Clone)]
pub struct SpectralPlan {
    shape: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
    wavenumbers: Vec<Vec<f64>>,
}

impl std::fmt::Debug for SpectralPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralPlan")
            .field("shape", &self.shape)
            .finish()
    }
}

impl SpectralPlan {
    pub fn new(grid: &GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        let shape = grid.shape();
        let forward = shape.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inverse = shape.iter().map(|&n| planner.plan_fft_inverse(n)).collect();
        let wavenumbers = (0..grid.dims()).map(|a| grid.wavenumbers(a)).collect();
        Self {
            shape,
            forward,
            inverse,
            wavenumbers,
        }
    }

    pub fn wavenumbers(&self, axis: usize) -> &[f64] {
        &self.wavenumbers[axis]
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        for a in 0..self.shape.len() {
            self.transform_axis(data, a, &self.forward[a]);
        }
    }

    /// Inverse transform including the `1/N` factor.
    pub fn inverse(&self, data: &mut [Complex64]) {
        for a in 0..self.shape.len() {
            self.transform_axis(data, a, &self.inverse[a]);
        }
        let scale = 1.0 / data.len() as f64;
        data.par_iter_mut().for_each(|z| *z *= scale);
    }

    fn transform_axis(&self, data: &mut [Complex64], axis: usize, fft: &Arc<dyn Fft<f64>>) {
        let n = self.shape[axis];
        let inner: usize = self.shape[axis + 1..].iter().product();
        if inner == 1 {
            data.par_chunks_mut(n).for_each(|line| fft.process(line));
            return;
        }
        // Transpose each outer block so the lines become contiguous.
        let block = n * inner;
        let mut scratch = vec![Complex64::new(0.0, 0.0); block];
        for chunk in data.chunks_mut(block) {
            scratch.par_chunks_mut(n).enumerate().for_each(|(j, line)| {
                for (i, z) in line.iter_mut().enumerate() {
                    *z = chunk[i * inner + j];
                }
                fft.process(line);
            });
            chunk
                .par_chunks_mut(inner)
                .enumerate()
                .for_each(|(i, row)| {
                    for (j, z) in row.iter_mut().enumerate() {
                        *z = scratch[j * n + i];
                    }
                });
        }
    }

    /// Spectral partial derivative along `axis`. The Nyquist mode is dropped.
    pub fn derivative(&self, data: &[Complex64], axis: usize) -> Vec<Complex64> {
        let mut spec = data.to_vec();
        self.forward(&mut spec);
        self.multiply_axis(&mut spec, axis, |k, nyquist| {
            if nyquist {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, k)
            }
        });
        self.inverse(&mut spec);
        spec
    }

    /// Multiplies spectral coefficients by `f(k_axis, is_nyquist)`.
    pub(crate) fn multiply_axis(
        &self,
        spec: &mut [Complex64],
        axis: usize,
        f: impl Fn(f64, bool) -> Complex64 + Sync,
    ) {
        let n = self.shape[axis];
        let inner: usize = self.shape[axis + 1..].iter().product();
        let ks = &self.wavenumbers[axis];
        let factors: Vec<Complex64> = ks
            .iter()
            .enumerate()
            .map(|(j, &k)| f(k, j == n / 2))
            .collect();
        spec.par_chunks_mut(inner)
            .enumerate()
            .for_each(|(row, chunk)| {
                let c = factors[row % n];
                chunk.iter_mut().for_each(|z| *z *= c);
            });
    }
}
