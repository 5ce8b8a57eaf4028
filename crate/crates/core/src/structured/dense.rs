use crate::error::Result;
use crate::scalar_map::ScalarMap;

/// Matrices up to this many entries are materialized once; larger ones are
/// re-evaluated on every product.
const MATERIALIZE_LIMIT: usize = 1 << 22;

/// Row-major `x.len() x y.len()` matrix of `f(x_i + y_j)`.
pub fn dense_matrix(x: &[f64], y: &[f64], f: &ScalarMap) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(x.len() * y.len());
    for &xi in x {
        for &yj in y {
            out.push(f.try_eval(xi + yj)?);
        }
    }
    Ok(out)
}

pub(crate) struct DenseMul {
    x: Vec<f64>,
    y: Vec<f64>,
    f: ScalarMap,
    mat: Option<Vec<f64>>,
}

impl DenseMul {
    pub(crate) fn new(x: &[f64], y: &[f64], f: &ScalarMap) -> Result<Self> {
        let mat = if x.len() * y.len() <= MATERIALIZE_LIMIT { Some(dense_matrix(x, y, f)?) } else { None };
        Ok(DenseMul { x: x.to_vec(), y: y.to_vec(), f: f.clone(), mat })
    }

    fn entry(&self, i: usize, j: usize) -> Result<f64> {
        match &self.mat {
            Some(m) => Ok(m[i * self.y.len() + j]),
            None => self.f.try_eval(self.x[i] + self.y[j]),
        }
    }

    pub(crate) fn apply(&self, v: &[f64], d: usize) -> Result<Vec<f64>> {
        let (a, b) = (self.x.len(), self.y.len());
        let mut out = vec![0.0; a * d];
        for i in 0..a {
            let row = &mut out[i * d..(i + 1) * d];
            for j in 0..b {
                let c = self.entry(i, j)?;
                for (o, &vj) in row.iter_mut().zip(&v[j * d..(j + 1) * d]) {
                    *o += c * vj;
                }
            }
        }
        Ok(out)
    }

    pub(crate) fn apply_transpose(&self, w: &[f64], d: usize) -> Result<Vec<f64>> {
        let (a, b) = (self.x.len(), self.y.len());
        let mut out = vec![0.0; b * d];
        for i in 0..a {
            let wi = &w[i * d..(i + 1) * d];
            for j in 0..b {
                let c = self.entry(i, j)?;
                for (o, &wk) in out[j * d..(j + 1) * d].iter_mut().zip(wi) {
                    *o += c * wk;
                }
            }
        }
        Ok(out)
    }
}
