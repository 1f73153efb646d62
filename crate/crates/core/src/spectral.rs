//! Fourier helpers on periodic grids of one to three dimensions, stored
//! row-major with the last axis fastest.

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Forward/inverse transforms for a fixed grid shape. The inverse is
/// normalized so that `inverse(forward(x)) = x`.
pub struct GridFft {
    shape: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl GridFft {
    pub fn new(shape: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        GridFft {
            shape: shape.to_vec(),
            forward: shape.iter().map(|&n| planner.plan_fft_forward(n)).collect(),
            inverse: shape.iter().map(|&n| planner.plan_fft_inverse(n)).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn run(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>]) {
        let total = self.len();
        assert_eq!(data.len(), total, "buffer does not match grid shape");
        let mut stride = 1;
        let mut line = Vec::new();
        for axis in (0..self.shape.len()).rev() {
            let n = self.shape[axis];
            let plan = &plans[axis];
            if stride == 1 {
                plan.process(data);
            } else {
                line.resize(n, Complex64::new(0.0, 0.0));
                let block = n * stride;
                for start in (0..total).step_by(block) {
                    for offset in 0..stride {
                        let base = start + offset;
                        for j in 0..n {
                            line[j] = data[base + j * stride];
                        }
                        plan.process(&mut line);
                        for j in 0..n {
                            data[base + j * stride] = line[j];
                        }
                    }
                }
            }
            stride *= n;
        }
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.forward);
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.inverse);
        let scale = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|z| *z *= scale);
    }

    pub fn forward_real(&self, data: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = data.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward(&mut buf);
        buf
    }
}

/// Integer wavenumber of FFT index `j` on an axis of `n` points.
pub fn mode_index(j: usize, n: usize) -> i64 {
    if j <= n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// Angular wavenumbers `2πk/L` in FFT order.
pub fn wavenumbers(n: usize, length: f64) -> Vec<f64> {
    (0..n)
        .map(|j| 2.0 * std::f64::consts::PI * mode_index(j, n) as f64 / length)
        .collect()
}

/// Multi-index of flat position `idx` for `shape`.
pub fn unravel(mut idx: usize, shape: &[usize], out: &mut [usize]) {
    for axis in (0..shape.len()).rev() {
        out[axis] = idx % shape[axis];
        idx /= shape[axis];
    }
}
