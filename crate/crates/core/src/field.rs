use rand::Rng;

use crate::error::{FtfiError, Result};

/// A field of `n x d1 x ... x ds` real values, one block per vertex, stored
/// flattened to `n x D` row-major with `D = d1 * ... * ds`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    n: usize,
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl TensorField {
    pub fn new(n: usize, dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let width: usize = dims.iter().product();
        if dims.is_empty() || width == 0 {
            return Err(FtfiError::invalid("trailing shape must be non-empty with D >= 1"));
        }
        if data.len() != n * width {
            return Err(FtfiError::invalid(format!(
                "field data has {} entries, expected {n} x {width}",
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(FtfiError::NonFinite("tensor field"));
        }
        Ok(TensorField { n, dims, data })
    }

    /// `n x width` matrix field.
    pub fn from_rows(n: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(n, vec![width], data)
    }

    pub fn zeros(n: usize, width: usize) -> Self {
        TensorField { n, dims: vec![width], data: vec![0.0; n * width] }
    }

    pub fn random<R: Rng>(n: usize, width: usize, rng: &mut R) -> Self {
        let data = (0..n * width).map(|_| rng.random_range(-1.0..1.0)).collect();
        TensorField { n, dims: vec![width], data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Flattened per-vertex width `D`.
    pub fn width(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, v: usize) -> &[f64] {
        let d = self.width();
        &self.data[v * d..(v + 1) * d]
    }

    pub(crate) fn with_data(&self, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), self.data.len());
        TensorField { n: self.n, dims: self.dims.clone(), data }
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius(&self.data)
    }
}

pub fn frobenius(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `||a - b||_F / ||b||_F`, or the absolute difference norm when `b` is zero.
pub fn relative_frobenius(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let norm = frobenius(b);
    if norm == 0.0 {
        diff
    } else {
        diff / norm
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
