use crate::error::{FtfiError, Result};
use crate::scalar_map::horner;

const GRID_POINTS: usize = 257;
const NEAR_ZERO: f64 = 1e-12;

/// Rejects denominators that change sign on the range of `x_i + y_j` or come
/// within `1e-12 * max|b|` of zero at any pair.
pub(crate) fn check_denominator(x: &[f64], y: &[f64], num: &[f64], den: &[f64]) -> Result<()> {
    debug_assert!(!num.is_empty());
    let floor = NEAR_ZERO * den.iter().fold(0.0f64, |m, b| m.max(b.abs()));
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = (min(x) + min(y), max(x) + max(y));
    let mut prev_sign = 0.0;
    for k in 0..GRID_POINTS {
        let z = lo + (hi - lo) * k as f64 / (GRID_POINTS - 1) as f64;
        let q = horner(den, z);
        if q.abs() <= floor || (prev_sign != 0.0 && q.signum() != prev_sign) {
            return Err(FtfiError::Pole { at: z });
        }
        prev_sign = q.signum();
    }
    for &xi in x {
        for &yj in y {
            if horner(den, xi + yj).abs() <= floor {
                return Err(FtfiError::Pole { at: xi + yj });
            }
        }
    }
    Ok(())
}
