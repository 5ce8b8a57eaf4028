//! Hankel embedding for distances on a grid `k / q`.
//!
//! With `x_i = kx_i / q` and `y_j = ky_j / q`, `C` is a submatrix of the
//! Hankel matrix `H(s, t) = h[s + t]`, `h[s] = f(s / q)`. A product is a
//! correlation of `h` with the scattered input, done as one FFT
//! convolution against the reversed input. Two real columns share one
//! complex transform.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::grid_indices;
use crate::error::{FtfiError, Result};
use crate::scalar_map::ScalarMap;

/// Largest grid extent accepted.
pub const MAX_GRID: usize = 1 << 24;

pub(crate) struct HankelMul {
    kx: Vec<usize>,
    ky: Vec<usize>,
    lx: usize,
    ly: usize,
    h_hat: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl HankelMul {
    pub(crate) fn new(x: &[f64], y: &[f64], f: &ScalarMap, q: f64) -> Result<Self> {
        let kx = grid_indices(x, q);
        let ky = grid_indices(y, q);
        let lx = *kx.iter().max().unwrap();
        let ly = *ky.iter().max().unwrap();
        if lx + ly >= MAX_GRID {
            return Err(FtfiError::invalid(format!(
                "hankel grid of {} points exceeds the limit of {MAX_GRID}",
                lx + ly + 1
            )));
        }
        // Outputs are read at indices >= the source extent, so any transform
        // longer than lx + ly avoids wrap-around.
        let n = (lx + ly + 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let mut h_hat = vec![Complex64::default(); n];
        for (s, slot) in h_hat.iter_mut().enumerate().take(lx + ly + 1) {
            *slot = Complex64::new(f.try_eval(s as f64 / q)?, 0.0);
        }
        forward.process(&mut h_hat);
        let scale = 1.0 / n as f64;
        h_hat.iter_mut().for_each(|c| *c *= scale);
        Ok(HankelMul { kx, ky, lx, ly, h_hat, forward, inverse })
    }

    pub(crate) fn apply(&self, v: &[f64], d: usize) -> Vec<f64> {
        self.correlate(v, d, &self.ky, self.ly, &self.kx)
    }

    pub(crate) fn apply_transpose(&self, w: &[f64], d: usize) -> Vec<f64> {
        self.correlate(w, d, &self.kx, self.lx, &self.ky)
    }

    /// `out_i = sum_j h[dst_i + src_j] v_j`.
    fn correlate(&self, v: &[f64], d: usize, src: &[usize], src_len: usize, dst: &[usize]) -> Vec<f64> {
        let n = self.h_hat.len();
        let mut out = vec![0.0; dst.len() * d];
        let mut buf = vec![Complex64::default(); n];
        for c0 in (0..d).step_by(2) {
            let c1 = (c0 + 1 < d).then_some(c0 + 1);
            buf.iter_mut().for_each(|z| *z = Complex64::default());
            for (j, &k) in src.iter().enumerate() {
                let im = c1.map_or(0.0, |c| v[j * d + c]);
                buf[src_len - k] += Complex64::new(v[j * d + c0], im);
            }
            self.forward.process(&mut buf);
            buf.iter_mut().zip(&self.h_hat).for_each(|(z, h)| *z *= h);
            self.inverse.process(&mut buf);
            for (i, &k) in dst.iter().enumerate() {
                let z = buf[k + src_len];
                out[i * d + c0] = z.re;
                if let Some(c) = c1 {
                    out[i * d + c] = z.im;
                }
            }
        }
        out
    }
}
