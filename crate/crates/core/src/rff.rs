//! Random Fourier features for shift-invariant cross matrices.
//!
//! If `f(z) = int tau(w) exp(2 pi i w z) dw` and `w_l ~ p`, then with
//! `mu(t)_l = sqrt(tau(w_l) / (m p(w_l))) exp(2 pi i w_l t)` the sum
//! `mu(x)^T mu(y)` is an unbiased estimate of `f(x + y)`. The estimate of
//! `C V` is the real part of `U (W^T V)`; the imaginary part is zero-mean
//! noise and is reported separately.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{FtfiError, Result};
use crate::scalar_map::ScalarMap;
use crate::structured::imag_ratio;

#[derive(Clone)]
pub enum SpectralDensity {
    /// `f(z) = scale * exp(-z^2 / (2 sigma^2))`. Its transform is a Gaussian,
    /// so sampling from it directly makes every ratio equal to `scale`.
    Gaussian { sigma: f64, scale: f64 },
    /// Arbitrary `tau`, sampled through a centred normal proposal.
    Custom { tau: Arc<dyn Fn(f64) -> f64 + Send + Sync>, proposal_std: f64 },
}

impl std::fmt::Debug for SpectralDensity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SpectralDensity::Gaussian { sigma, scale } => write!(f, "Gaussian(sigma={sigma}, scale={scale})"),
            SpectralDensity::Custom { proposal_std, .. } => write!(f, "Custom(proposal_std={proposal_std})"),
        }
    }
}

impl SpectralDensity {
    /// The analytic density for `exp(u z^2 + w)` with `u < 0`.
    pub fn for_map(f: &ScalarMap) -> Option<Self> {
        match *f {
            ScalarMap::ExpQuadratic { u, v, w } if u < 0.0 && v == 0.0 => {
                Some(SpectralDensity::Gaussian { sigma: (-0.5 / u).sqrt(), scale: w.exp() })
            }
            _ => None,
        }
    }

    fn proposal_std(&self) -> f64 {
        match self {
            SpectralDensity::Gaussian { sigma, .. } => 1.0 / (2.0 * PI * sigma),
            SpectralDensity::Custom { proposal_std, .. } => *proposal_std,
        }
    }

    /// `tau(w) / p(w)` at a draw `w` from the proposal.
    fn ratio(&self, omega: f64) -> f64 {
        match self {
            SpectralDensity::Gaussian { scale, .. } => *scale,
            SpectralDensity::Custom { tau, proposal_std } => {
                let s = *proposal_std;
                let p = (-0.5 * (omega / s).powi(2)).exp() / (s * (2.0 * PI).sqrt());
                tau(omega) / p
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct RffSampler {
    seed: u64,
    omegas: Vec<f64>,
    /// `sqrt(ratio_l / m)`.
    amplitudes: Vec<f64>,
}

impl RffSampler {
    /// Draw `m` frequencies. Draw `l` comes from its own ChaCha stream, so a
    /// given `(seed, l)` always yields the same frequency.
    pub fn new(m: usize, seed: u64, density: SpectralDensity) -> Result<Self> {
        if m == 0 {
            return Err(FtfiError::invalid("feature count m must be positive"));
        }
        let s = density.proposal_std();
        if !(s.is_finite() && s > 0.0) {
            return Err(FtfiError::invalid(format!("proposal standard deviation must be positive, got {s}")));
        }
        let mut omegas = Vec::with_capacity(m);
        let mut ratios = Vec::with_capacity(m);
        for l in 0..m {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(l as u64);
            let z: f64 = rng.sample(StandardNormal);
            omegas.push(z * s);
            ratios.push(density.ratio(z * s));
        }
        let mut sampler = Self::from_frequencies(omegas, ratios)?;
        sampler.seed = seed;
        Ok(sampler)
    }

    /// Sampler with explicit frequencies and importance ratios.
    pub fn from_frequencies(omegas: Vec<f64>, ratios: Vec<f64>) -> Result<Self> {
        if omegas.is_empty() || omegas.len() != ratios.len() {
            return Err(FtfiError::invalid("need the same positive number of frequencies and ratios"));
        }
        if omegas.iter().any(|w| !w.is_finite()) {
            return Err(FtfiError::NonFinite("rff frequencies"));
        }
        if let Some(r) = ratios.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
            return Err(FtfiError::invalid(format!(
                "importance ratio {r} is negative or not finite; the square-root estimator needs tau/p >= 0"
            )));
        }
        let m = omegas.len() as f64;
        let amplitudes = ratios.iter().map(|r| (r / m).sqrt()).collect();
        Ok(RffSampler { seed: 0, omegas, amplitudes })
    }

    pub fn m(&self) -> usize {
        self.omegas.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn feature(&self, t: f64) -> Vec<Complex64> {
        self.omegas
            .iter()
            .zip(&self.amplitudes)
            .map(|(&w, &a)| Complex64::from_polar(a, 2.0 * PI * w * t))
            .collect()
    }

    fn features(&self, ts: &[f64]) -> Vec<Complex64> {
        ts.iter().flat_map(|&t| self.feature(t)).collect()
    }
}

/// Low-rank factors `U` (rows of `mu(x_i)`) and `W` (rows of `mu(y_j)`).
pub struct RffMultiplier {
    m: usize,
    u: Vec<Complex64>,
    w: Vec<Complex64>,
}

impl RffMultiplier {
    pub fn new(sampler: &RffSampler, x: &[f64], y: &[f64]) -> Self {
        RffMultiplier { m: sampler.m(), u: sampler.features(x), w: sampler.features(y) }
    }

    /// Estimate of `C V` and its imaginary residual.
    pub fn apply(&self, v: &[f64], d: usize) -> (Vec<f64>, f64) {
        low_rank(&self.u, &self.w, self.m, v, d)
    }

    pub fn apply_transpose(&self, v: &[f64], d: usize) -> (Vec<f64>, f64) {
        low_rank(&self.w, &self.u, self.m, v, d)
    }
}

fn low_rank(left: &[Complex64], right: &[Complex64], m: usize, v: &[f64], d: usize) -> (Vec<f64>, f64) {
    // T = right^T V, m x d.
    let mut t = vec![Complex64::default(); m * d];
    for (j, feat) in right.chunks(m).enumerate() {
        for (l, &mu) in feat.iter().enumerate() {
            for c in 0..d {
                t[l * d + c] += mu * v[j * d + c];
            }
        }
    }
    let rows = left.len() / m;
    let mut out = vec![0.0; rows * d];
    let mut residual = 0.0f64;
    let mut acc = vec![Complex64::default(); d];
    for (i, feat) in left.chunks(m).enumerate() {
        acc.fill(Complex64::default());
        for (&mu, row) in feat.iter().zip(t.chunks(d)) {
            for (a, &tv) in acc.iter_mut().zip(row) {
                *a += mu * tv;
            }
        }
        for (c, z) in acc.iter().enumerate() {
            out[i * d + c] = z.re;
            residual = residual.max(imag_ratio(z.re, z.im));
        }
    }
    (out, residual)
}

/// Estimate of `C V` for `C(i, j) = f(x_i + y_j)`, `V` of shape `y.len() x d`.
pub fn rff_apply(x: &[f64], y: &[f64], sampler: &RffSampler, v: &[f64], d: usize) -> Result<Vec<f64>> {
    if d == 0 || v.len() != y.len() * d {
        return Err(FtfiError::invalid(format!("block has {} entries, expected {} x {d}", v.len(), y.len())));
    }
    Ok(RffMultiplier::new(sampler, x, y).apply(v, d).0)
}
