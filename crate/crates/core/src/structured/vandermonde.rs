//! `exp(u z^2 + v z + w)` with `y` on a grid `s / q`.
//!
//! `f(x + y) = d1(x) d2(y) r(x)^s` with `d1 = exp(u x^2 + v x + w)`,
//! `d2 = exp(u y^2 + v y)` and `r = exp(2 u x / q)`, so `C` is a diagonally
//! scaled generalized Vandermonde matrix. Columns are scattered onto the
//! full exponent range `0..=s_max` and the products are evaluated by Horner
//! (forward) or by running powers (transpose), `O(a s_max D)` either way.

use super::grid_indices;
use crate::error::{FtfiError, Result};
use crate::scalar_map::EXP_ARG_LIMIT;

pub const MAX_EXPONENT: usize = 1_000_000;

pub(crate) struct VandMul {
    d1: Vec<f64>,
    r: Vec<f64>,
    d2: Vec<f64>,
    s: Vec<usize>,
    s_max: usize,
}

fn guarded_exp(arg: f64) -> Result<f64> {
    if arg > EXP_ARG_LIMIT {
        Err(FtfiError::ExpOverflow { arg })
    } else {
        Ok(arg.exp())
    }
}

impl VandMul {
    pub(crate) fn new(x: &[f64], y: &[f64], u: f64, v: f64, w: f64, q: f64) -> Result<Self> {
        let s = grid_indices(y, q);
        let s_max = *s.iter().max().unwrap();
        if s_max > MAX_EXPONENT {
            return Err(FtfiError::invalid(format!(
                "vandermonde exponent range {s_max} exceeds the limit of {MAX_EXPONENT}"
            )));
        }
        let mut d1 = Vec::with_capacity(x.len());
        let mut r = Vec::with_capacity(x.len());
        for &xi in x {
            d1.push(guarded_exp(u * xi * xi + v * xi + w)?);
            let log_r = 2.0 * u * xi / q;
            guarded_exp(log_r * s_max as f64)?;
            r.push(log_r.exp());
        }
        // Use the snapped grid values so that d2 and r^s describe the same y.
        let d2 = s
            .iter()
            .map(|&k| {
                let yj = k as f64 / q;
                guarded_exp(u * yj * yj + v * yj)
            })
            .collect::<Result<_>>()?;
        Ok(VandMul { d1, r, d2, s, s_max })
    }

    pub(crate) fn apply(&self, v: &[f64], d: usize) -> Vec<f64> {
        let mut scattered = vec![0.0; (self.s_max + 1) * d];
        for (j, &k) in self.s.iter().enumerate() {
            for c in 0..d {
                scattered[k * d + c] += self.d2[j] * v[j * d + c];
            }
        }
        let mut out = vec![0.0; self.r.len() * d];
        for (i, &ri) in self.r.iter().enumerate() {
            let acc = &mut out[i * d..(i + 1) * d];
            for k in (0..=self.s_max).rev() {
                for c in 0..d {
                    acc[c] = acc[c] * ri + scattered[k * d + c];
                }
            }
            acc.iter_mut().for_each(|a| *a *= self.d1[i]);
        }
        out
    }

    pub(crate) fn apply_transpose(&self, w: &[f64], d: usize) -> Vec<f64> {
        let mut moments = vec![0.0; (self.s_max + 1) * d];
        for (i, &ri) in self.r.iter().enumerate() {
            let row: Vec<f64> = w[i * d..(i + 1) * d].iter().map(|x| x * self.d1[i]).collect();
            let mut p = 1.0;
            for k in 0..=self.s_max {
                for c in 0..d {
                    moments[k * d + c] += p * row[c];
                }
                p *= ri;
            }
        }
        let mut out = vec![0.0; self.s.len() * d];
        for (j, &k) in self.s.iter().enumerate() {
            for c in 0..d {
                out[j * d + c] = self.d2[j] * moments[k * d + c];
            }
        }
        out
    }
}
