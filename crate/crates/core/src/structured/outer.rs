//! Sums of weighted outer products.
//!
//! Every supported family is written as a sum of terms
//! `rw_i * cw_j * p(x_i + y_j)` with a polynomial `p`. A term costs
//! `O((a + b) B D + B^2 D)`: accumulate the column moments
//! `Y_k = sum_j cw_j y_j^k V_j`, combine them with binomial weights, then
//! run Horner over the rows. Coordinates are centred first and `p` is
//! Taylor-shifted to match, which keeps the binomial expansion well
//! conditioned.

use std::ops::{Add, AddAssign, Mul};

use num_complex::Complex64;

use super::imag_ratio;
use crate::error::{FtfiError, Result};
use crate::scalar_map::{ScalarMap, TrigKind, EXP_ARG_LIMIT};

pub(crate) trait Scalar: Copy + Default + Add<Output = Self> + AddAssign + Mul<Output = Self> + Mul<f64, Output = Self> {}
impl Scalar for f64 {}
impl Scalar for Complex64 {}

struct Term<T> {
    /// Coefficients of `p` in the centred variable.
    coeffs: Vec<f64>,
    rw: Vec<T>,
    cw: Vec<T>,
}

pub(crate) struct OuterMul {
    xs: Vec<f64>,
    ys: Vec<f64>,
    real: Vec<Term<f64>>,
    complex: Vec<Term<Complex64>>,
}

fn binomials(n: usize) -> Vec<Vec<f64>> {
    let mut rows = vec![vec![1.0]];
    for k in 1..=n {
        let prev = &rows[k - 1];
        let mut row = vec![1.0; k + 1];
        for j in 1..k {
            row[j] = prev[j - 1] + prev[j];
        }
        rows.push(row);
    }
    rows
}

/// Coefficients of `p(w + s)` as a polynomial in `w`.
fn taylor_shift(a: &[f64], s: f64) -> Vec<f64> {
    let binom = binomials(a.len());
    (0..a.len())
        .map(|l| (l..a.len()).map(|t| a[t] * binom[t][l] * s.powi((t - l) as i32)).sum())
        .collect()
}

fn centre(xs: &[f64]) -> f64 {
    let (lo, hi) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    0.5 * (lo + hi)
}

fn exp_weights(xs: &[f64], lambda: f64) -> Result<Vec<f64>> {
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

impl OuterMul {
    /// `None` when `f` is not an outer-product family.
    pub(crate) fn new(x: &[f64], y: &[f64], f: &ScalarMap) -> Option<Result<Self>> {
        let cx = centre(x);
        let cy = centre(y);
        let shift = cx + cy;
        let xs: Vec<f64> = x.iter().map(|v| v - cx).collect();
        let ys: Vec<f64> = y.iter().map(|v| v - cy).collect();
        let ones = |n: usize| vec![1.0; n];
        let build = || -> Result<(Vec<Term<f64>>, Vec<Term<Complex64>>)> {
            Ok(match f {
                ScalarMap::Polynomial(a) => {
                    (vec![Term { coeffs: taylor_shift(a, shift), rw: ones(x.len()), cw: ones(y.len()) }], vec![])
                }
                ScalarMap::Exponential { lambda } => {
                    (vec![Term { coeffs: vec![1.0], rw: exp_weights(x, *lambda)?, cw: exp_weights(y, *lambda)? }], vec![])
                }
                ScalarMap::ExpTimesPoly { lambda, coeffs } => (
                    vec![Term {
                        coeffs: taylor_shift(coeffs, shift),
                        rw: exp_weights(x, *lambda)?,
                        cw: exp_weights(y, *lambda)?,
                    }],
                    vec![],
                ),
                ScalarMap::Trigonometric { kind, frequency } => {
                    // cos = (e^{iz} + e^{-iz}) / 2, sin = (e^{iz} - e^{-iz}) / 2i.
                    let (k_plus, k_minus) = match kind {
                        TrigKind::Cos => (Complex64::new(0.5, 0.0), Complex64::new(0.5, 0.0)),
                        TrigKind::Sin => (Complex64::new(0.0, -0.5), Complex64::new(0.0, 0.5)),
                    };
                    let phase = |v: f64, sign: f64| Complex64::from_polar(1.0, sign * frequency * v);
                    let term = |sign: f64, k: Complex64| Term {
                        coeffs: vec![1.0],
                        rw: x.iter().map(|&v| phase(v, sign) * k).collect(),
                        cw: y.iter().map(|&v| phase(v, sign)).collect(),
                    };
                    (vec![], vec![term(1.0, k_plus), term(-1.0, k_minus)])
                }
                _ => unreachable!(),
            })
        };
        match f {
            ScalarMap::Polynomial(_)
            | ScalarMap::Exponential { .. }
            | ScalarMap::ExpTimesPoly { .. }
            | ScalarMap::Trigonometric { .. } => Some(build().map(|(real, complex)| OuterMul { xs, ys, real, complex })),
            _ => None,
        }
    }

    /// Returns `C V` and the imaginary residual of the complex terms.
    pub(crate) fn apply(&self, v: &[f64], d: usize) -> (Vec<f64>, f64) {
        self.run(v, d, false)
    }

    pub(crate) fn apply_transpose(&self, w: &[f64], d: usize) -> (Vec<f64>, f64) {
        self.run(w, d, true)
    }

    fn run(&self, v: &[f64], d: usize, transpose: bool) -> (Vec<f64>, f64) {
        let (rows, cols) = if transpose { (&self.ys, &self.xs) } else { (&self.xs, &self.ys) };
        let mut out = vec![0.0; rows.len() * d];
        for term in &self.real {
            let (rw, cw) = if transpose { (&term.cw, &term.rw) } else { (&term.rw, &term.cw) };
            let part = term_apply(&term.coeffs, rows, rw, cols, cw, v, d);
            out.iter_mut().zip(part).for_each(|(o, p)| *o += p);
        }
        if self.complex.is_empty() {
            return (out, 0.0);
        }
        let mut acc = vec![Complex64::default(); rows.len() * d];
        for term in &self.complex {
            let (rw, cw) = if transpose { (&term.cw, &term.rw) } else { (&term.rw, &term.cw) };
            let part = term_apply(&term.coeffs, rows, rw, cols, cw, v, d);
            acc.iter_mut().zip(part).for_each(|(o, p)| *o += p);
        }
        let mut residual = 0.0f64;
        for (o, c) in out.iter_mut().zip(&acc) {
            *o += c.re;
            residual = residual.max(imag_ratio(*o, c.im));
        }
        (out, residual)
    }
}

/// `out_i = rw_i sum_j cw_j p(x_i + y_j) V_j` with centred coordinates.
fn term_apply<T: Scalar>(coeffs: &[f64], xs: &[f64], rw: &[T], ys: &[f64], cw: &[T], v: &[f64], d: usize) -> Vec<T> {
    let deg = coeffs.len() - 1;
    let binom = binomials(deg);

    // Column moments Y_k = sum_j cw_j y_j^k V_j.
    let mut moments = vec![T::default(); (deg + 1) * d];
    for (j, (&yj, &c)) in ys.iter().zip(cw).enumerate() {
        let vj = &v[j * d..(j + 1) * d];
        let mut p = c;
        for k in 0..=deg {
            let mk = &mut moments[k * d..(k + 1) * d];
            for (m, &val) in mk.iter_mut().zip(vj) {
                *m += p * val;
            }
            p = p * yj;
        }
    }

    // G_l = sum_{t >= l} a_t binom(t, l) Y_{t - l}.
    let mut g = vec![T::default(); (deg + 1) * d];
    for l in 0..=deg {
        for t in l..=deg {
            let w = coeffs[t] * binom[t][l];
            if w == 0.0 {
                continue;
            }
            for c in 0..d {
                g[l * d + c] += moments[(t - l) * d + c] * w;
            }
        }
    }

    let mut out = vec![T::default(); xs.len() * d];
    let mut acc = vec![T::default(); d];
    for (i, (&xi, &r)) in xs.iter().zip(rw).enumerate() {
        acc.copy_from_slice(&g[deg * d..]);
        for l in (0..deg).rev() {
            for c in 0..d {
                acc[c] = acc[c] * xi + g[l * d + c];
            }
        }
        for c in 0..d {
            out[i * d + c] = r * acc[c];
        }
    }
    out
}
