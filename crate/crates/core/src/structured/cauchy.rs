//! `exp(l z) / (z + c)` as a diagonally scaled Cauchy matrix
//! `C = D1 K D2` with `K(i, j) = 1 / (s_i + t_j)`, `s = x + c/2`, `t = y + c/2`.
//! The product with `K` is evaluated directly, which needs no `exp` per
//! entry.

use crate::error::{FtfiError, Result};
use crate::scalar_map::EXP_ARG_LIMIT;

/// Pairs closer than this (relative to the coordinate scale) to a pole are rejected.
const SINGULAR_TOL: f64 = 1e-12;

pub(crate) struct CauchyMul {
    s: Vec<f64>,
    t: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
}

fn exp_factor(xs: &[f64], lambda: f64) -> Result<Vec<f64>> {
    xs.iter()
        .map(|&x| {
            let arg = lambda * x;
            if arg > EXP_ARG_LIMIT {
                Err(FtfiError::ExpOverflow { arg })
            } else {
                Ok(arg.exp())
            }
        })
        .collect()
}

impl CauchyMul {
    pub(crate) fn new(x: &[f64], y: &[f64], lambda: f64, c: f64) -> Result<Self> {
        let s: Vec<f64> = x.iter().map(|v| v + 0.5 * c).collect();
        let t: Vec<f64> = y.iter().map(|v| v + 0.5 * c).collect();
        let scale = s.iter().chain(&t).fold(1.0f64, |m, v| m.max(v.abs()));
        let mut sorted = t.clone();
        sorted.sort_by(f64::total_cmp);
        for (i, &si) in s.iter().enumerate() {
            // Nearest t to -s_i.
            let pos = sorted.partition_point(|&tj| tj < -si);
            for k in [pos.wrapping_sub(1), pos] {
                if let Some(&tj) = sorted.get(k) {
                    if (si + tj).abs() < SINGULAR_TOL * scale {
                        return Err(FtfiError::Pole { at: x[i] + tj - 0.5 * c });
                    }
                }
            }
        }
        Ok(CauchyMul { d1: exp_factor(x, lambda)?, d2: exp_factor(y, lambda)?, s, t })
    }

    pub(crate) fn apply(&self, v: &[f64], d: usize) -> Vec<f64> {
        cauchy_product(&self.s, &self.d1, &self.t, &self.d2, v, d)
    }

    pub(crate) fn apply_transpose(&self, w: &[f64], d: usize) -> Vec<f64> {
        cauchy_product(&self.t, &self.d2, &self.s, &self.d1, w, d)
    }
}

fn cauchy_product(s: &[f64], d1: &[f64], t: &[f64], d2: &[f64], v: &[f64], d: usize) -> Vec<f64> {
    let scaled: Vec<f64> = v.chunks(d).zip(d2).flat_map(|(row, &w)| row.iter().map(move |x| x * w)).collect();
    let mut out = vec![0.0; s.len() * d];
    for (i, &si) in s.iter().enumerate() {
        let row = &mut out[i * d..(i + 1) * d];
        for (j, &tj) in t.iter().enumerate() {
            let k = 1.0 / (si + tj);
            for (o, &val) in row.iter_mut().zip(&scaled[j * d..(j + 1) * d]) {
                *o += k * val;
            }
        }
        row.iter_mut().for_each(|o| *o *= d1[i]);
    }
    out
}
