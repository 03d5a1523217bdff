//! 2-D discrete Fourier transform on row-major buffers.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Planned forward/inverse 2-D transforms for a fixed `height x width`.
///
/// The inverse is normalized so that `inverse(forward(x)) == x`.
#[derive(Clone)]
pub struct Fft2 {
    height: usize,
    width: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("height", &self.height).field("width", &self.width).finish()
    }
}

impl Fft2 {
    pub fn new(height: usize, width: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            height,
            width,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    pub fn forward_real(&self, data: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut buf);
        buf
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.transform(buf, &self.row_fwd, &self.col_fwd);
    }

    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.transform(buf, &self.row_inv, &self.col_inv);
        let scale = 1.0 / (self.height * self.width) as f64;
        buf.iter_mut().for_each(|v| *v *= scale);
    }

    /// Inverse transform keeping only the real part.
    pub fn inverse_real(&self, mut buf: Vec<Complex64>) -> Vec<f64> {
        self.inverse(&mut buf);
        buf.into_iter().map(|c| c.re).collect()
    }

    fn transform(&self, buf: &mut [Complex64], row: &Arc<dyn Fft<f64>>, col: &Arc<dyn Fft<f64>>) {
        assert_eq!(buf.len(), self.height * self.width);
        for r in buf.chunks_exact_mut(self.width) {
            row.process(r);
        }
        let mut column = vec![Complex64::new(0.0, 0.0); self.height];
        for c in 0..self.width {
            for (r, slot) in column.iter_mut().enumerate() {
                *slot = buf[r * self.width + c];
            }
            col.process(&mut column);
            for (r, v) in column.iter().enumerate() {
                buf[r * self.width + c] = *v;
            }
        }
    }
}
