//! Matrix-vector products with cross matrices `C(i, j) = f(x_i + y_j)`.
//!
//! Operands are row-major: `apply` maps a `b x D` block to `a x D`,
//! `apply_transpose` maps `a x D` to `b x D`, where `a = x.len()` and
//! `b = y.len()`.

mod cauchy;
mod dense;
mod hankel;
mod outer;
mod rational;
mod vandermonde;

use std::fmt;

use crate::error::{FtfiError, Result};
use crate::rff::{RffMultiplier, RffSampler, SpectralDensity};
use crate::scalar_map::ScalarMap;

pub use dense::dense_matrix;

/// Quantization test tolerance, in units of `1 / q`.
pub const QUANTUM_TOL: f64 = 1e-9;

/// Requested strategy. `Auto` walks the dispatch table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StrategyHint {
    #[default]
    Auto,
    Dense,
    OuterProductSum,
    HankelFft,
    CauchyLike,
    VandermondeQuantized,
    RationalSum,
    Rff { m: usize, seed: u64 },
}

/// Strategy actually in use, with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy {
    Dense,
    OuterProductSum,
    HankelFft { q: f64 },
    CauchyLike,
    VandermondeQuantized { q: f64 },
    RationalSum,
    Rff { m: usize, seed: u64 },
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Dense => "dense",
            Strategy::OuterProductSum => "outer",
            Strategy::HankelFft { .. } => "hankel",
            Strategy::CauchyLike => "cauchy",
            Strategy::VandermondeQuantized { .. } => "vandermonde",
            Strategy::RationalSum => "rational",
            Strategy::Rff { .. } => "rff",
        }
    }

    /// Documented relative Frobenius tolerance against dense materialization.
    /// `None` for the randomized strategy.
    pub fn tolerance(&self) -> Option<f64> {
        match self {
            Strategy::Dense | Strategy::OuterProductSum | Strategy::RationalSum => Some(1e-10),
            Strategy::HankelFft { .. } | Strategy::CauchyLike => Some(1e-9),
            Strategy::VandermondeQuantized { .. } => Some(1e-8),
            Strategy::Rff { .. } => None,
        }
    }

    pub fn is_exact(&self) -> bool {
        self.tolerance().is_some()
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::HankelFft { q } | Strategy::VandermondeQuantized { q } => write!(f, "{}(q={q})", self.name()),
            Strategy::Rff { m, seed } => write!(f, "rff(m={m},seed={seed})"),
            _ => f.write_str(self.name()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MultiplierOptions {
    pub hint: StrategyHint,
    /// Grid `1 / q` on which distances are known to lie, if any.
    pub quantum: Option<f64>,
}

/// True when every value is a nonnegative integer multiple of `1 / q`.
pub fn is_quantized(xs: &[f64], q: f64) -> bool {
    xs.iter().all(|&x| {
        let k = x * q;
        (k - k.round()).abs() < QUANTUM_TOL && k.round() >= 0.0
    })
}

pub(crate) fn grid_indices(xs: &[f64], q: f64) -> Vec<usize> {
    xs.iter().map(|&x| (x * q).round() as usize).collect()
}

enum Backend {
    Dense(dense::DenseMul),
    Outer(outer::OuterMul),
    Hankel(hankel::HankelMul),
    Cauchy(cauchy::CauchyMul),
    Vandermonde(vandermonde::VandMul),
    Rff(RffMultiplier),
}

pub struct CrossMultiplier {
    rows: usize,
    cols: usize,
    strategy: Strategy,
    backend: Backend,
}

fn incompatible(strategy: &str, reason: impl Into<String>) -> FtfiError {
    FtfiError::IncompatibleStrategy { strategy: strategy.to_string(), reason: reason.into() }
}

pub fn build_multiplier(x: &[f64], y: &[f64], f: &ScalarMap, opts: &MultiplierOptions) -> Result<CrossMultiplier> {
    if x.is_empty() || y.is_empty() {
        return Err(FtfiError::invalid("cross multiplier needs nonempty x and y"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(FtfiError::NonFinite("cross multiplier distances"));
    }
    f.validate()?;

    let quantized = |xs: &[f64]| opts.quantum.filter(|&q| is_quantized(xs, q));
    let hint = match opts.hint {
        StrategyHint::Auto => auto_hint(x, y, f, opts.quantum),
        h => h,
    };

    let (strategy, backend) = match hint {
        StrategyHint::Auto => unreachable!(),
        StrategyHint::Dense => (Strategy::Dense, Backend::Dense(dense::DenseMul::new(x, y, f)?)),
        StrategyHint::OuterProductSum => {
            let mul = outer::OuterMul::new(x, y, f)
                .ok_or_else(|| incompatible("outer", format!("{} is not a sum of outer products", f.family())))??;
            (Strategy::OuterProductSum, Backend::Outer(mul))
        }
        StrategyHint::HankelFft => {
            let q = opts.quantum.ok_or_else(|| incompatible("hankel", "no quantum supplied"))?;
            if quantized(x).is_none() || quantized(y).is_none() {
                return Err(incompatible("hankel", format!("distances are not multiples of 1/{q}")));
            }
            (Strategy::HankelFft { q }, Backend::Hankel(hankel::HankelMul::new(x, y, f, q)?))
        }
        StrategyHint::CauchyLike => match f {
            ScalarMap::ExpOverLinear { lambda, c } => {
                (Strategy::CauchyLike, Backend::Cauchy(cauchy::CauchyMul::new(x, y, *lambda, *c)?))
            }
            _ => return Err(incompatible("cauchy", "needs exp(l z)/(z + c)")),
        },
        StrategyHint::VandermondeQuantized => match f {
            ScalarMap::ExpQuadratic { u, v, w } => {
                let q = opts.quantum.ok_or_else(|| incompatible("vandermonde", "no quantum supplied"))?;
                if quantized(y).is_none() {
                    return Err(incompatible("vandermonde", format!("y is not a multiple of 1/{q}")));
                }
                let mul = vandermonde::VandMul::new(x, y, *u, *v, *w, q)?;
                (Strategy::VandermondeQuantized { q }, Backend::Vandermonde(mul))
            }
            _ => return Err(incompatible("vandermonde", "needs exp(u z^2 + v z + w)")),
        },
        StrategyHint::RationalSum => match f {
            ScalarMap::Rational { num, den } => {
                rational::check_denominator(x, y, num, den)?;
                (Strategy::RationalSum, Backend::Dense(dense::DenseMul::new(x, y, f)?))
            }
            _ => return Err(incompatible("rational", "needs a rational f")),
        },
        StrategyHint::Rff { m, seed } => {
            let density = SpectralDensity::for_map(f).ok_or_else(|| incompatible("rff", "no spectral density for f"))?;
            let sampler = RffSampler::new(m, seed, density)?;
            (Strategy::Rff { m, seed }, Backend::Rff(RffMultiplier::new(&sampler, x, y)))
        }
    };
    Ok(CrossMultiplier { rows: x.len(), cols: y.len(), strategy, backend })
}

fn auto_hint(x: &[f64], y: &[f64], f: &ScalarMap, quantum: Option<f64>) -> StrategyHint {
    let qx = quantum.is_some_and(|q| is_quantized(x, q));
    let qy = quantum.is_some_and(|q| is_quantized(y, q));
    match f {
        ScalarMap::Polynomial(_)
        | ScalarMap::Exponential { .. }
        | ScalarMap::ExpTimesPoly { .. }
        | ScalarMap::Trigonometric { .. } => StrategyHint::OuterProductSum,
        ScalarMap::ExpQuadratic { .. } if qy => StrategyHint::VandermondeQuantized,
        _ if qx && qy => StrategyHint::HankelFft,
        ScalarMap::ExpOverLinear { .. } => StrategyHint::CauchyLike,
        ScalarMap::Rational { .. } => StrategyHint::RationalSum,
        _ => StrategyHint::Dense,
    }
}

fn check_block(v: &[f64], rows: usize, d: usize) -> Result<()> {
    if d == 0 || v.len() != rows * d {
        return Err(FtfiError::invalid(format!("block has {} entries, expected {rows} x {d}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(FtfiError::NonFinite("multiplier input"));
    }
    Ok(())
}

impl CrossMultiplier {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    /// `C V` for a `cols x d` block `v`.
    pub fn apply(&self, v: &[f64], d: usize) -> Result<Vec<f64>> {
        check_block(v, self.cols, d)?;
        match &self.backend {
            Backend::Dense(m) => m.apply(v, d),
            Backend::Outer(m) => Ok(m.apply(v, d).0),
            Backend::Hankel(m) => Ok(m.apply(v, d)),
            Backend::Cauchy(m) => Ok(m.apply(v, d)),
            Backend::Vandermonde(m) => Ok(m.apply(v, d)),
            Backend::Rff(m) => Ok(m.apply(v, d).0),
        }
    }

    /// `C^T W` for a `rows x d` block `w`.
    pub fn apply_transpose(&self, w: &[f64], d: usize) -> Result<Vec<f64>> {
        check_block(w, self.rows, d)?;
        match &self.backend {
            Backend::Dense(m) => m.apply_transpose(w, d),
            Backend::Outer(m) => Ok(m.apply_transpose(w, d).0),
            Backend::Hankel(m) => Ok(m.apply_transpose(w, d)),
            Backend::Cauchy(m) => Ok(m.apply_transpose(w, d)),
            Backend::Vandermonde(m) => Ok(m.apply_transpose(w, d)),
            Backend::Rff(m) => Ok(m.apply_transpose(w, d).0),
        }
    }

    /// Largest `|Im(out)| / (|out| + 1)` over the entries of `C V` for the
    /// strategies that compute in complex arithmetic; zero otherwise.
    pub fn imaginary_residual(&self, v: &[f64], d: usize) -> Result<f64> {
        check_block(v, self.cols, d)?;
        Ok(match &self.backend {
            Backend::Outer(m) => m.apply(v, d).1,
            Backend::Rff(m) => m.apply(v, d).1,
            _ => 0.0,
        })
    }
}

/// Ratio helper shared by the complex-arithmetic backends.
pub(crate) fn imag_ratio(re: f64, im: f64) -> f64 {
    im.abs() / (re.abs() + 1.0)
}
