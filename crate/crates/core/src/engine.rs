//! Divide-and-conquer f-integration over an [`IntegratorTree`], plus the
//! brute-force references on trees and graphs.

use std::collections::BTreeMap;

use crate::error::{FtfiError, Result};
use crate::field::TensorField;
use crate::graph::{graph_distance_matrix, tree_distance_matrix, WeightedGraph, WeightedTree};
use crate::integrator_tree::{IntegratorTree, ItNode};
use crate::scalar_map::ScalarMap;
use crate::structured::{build_multiplier, CrossMultiplier, MultiplierOptions, Strategy, StrategyHint};

/// Default vertex limit for anything that materializes an `n x n` matrix.
pub const DENSE_GUARD: usize = 30_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineOptions {
    pub hint: StrategyHint,
    /// Under `Auto`, cross matrices with at most this many entries use the
    /// dense strategy; structured setup does not pay off below it.
    pub dense_cutoff: usize,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions { hint: StrategyHint::Auto, dense_cutoff: 64 }
    }
}

struct CrossTerms {
    mul: CrossMultiplier,
    /// `f(left.dists[i])`.
    f_left: Vec<f64>,
    /// `f(right.dists[j])`.
    f_right: Vec<f64>,
}

enum Prepared {
    /// Row-major `f(dist)` for the leaf.
    Leaf(Vec<f64>),
    Internal(CrossTerms),
}

/// Everything that depends on `f` but not on the field: f-transformed leaf
/// blocks and one cross multiplier per internal node. Reusable for any
/// number of fields.
pub struct IntegrationSession<'a> {
    it: &'a IntegratorTree,
    f: ScalarMap,
    f0: f64,
    prepared: Vec<Prepared>,
}

fn eval_all(f: &ScalarMap, zs: &[f64]) -> Result<Vec<f64>> {
    zs.iter().map(|&z| f.try_eval(z)).collect()
}

impl<'a> IntegrationSession<'a> {
    pub fn new(it: &'a IntegratorTree, f: &ScalarMap, opts: &EngineOptions) -> Result<Self> {
        f.validate()?;
        let mut prepared = Vec::with_capacity(it.nodes().len());
        for node in it.nodes() {
            prepared.push(match node {
                ItNode::Leaf { dist, .. } => Prepared::Leaf(eval_all(f, dist)?),
                ItNode::Internal { left, right, .. } => {
                    let hint = match opts.hint {
                        StrategyHint::Auto if left.group_count() * right.group_count() <= opts.dense_cutoff => {
                            StrategyHint::Dense
                        }
                        h => h,
                    };
                    let mopts = MultiplierOptions { hint, quantum: it.quantum() };
                    let mul = build_multiplier(&left.dists, &right.dists, f, &mopts)?;
                    Prepared::Internal(CrossTerms {
                        mul,
                        f_left: eval_all(f, &left.dists)?,
                        f_right: eval_all(f, &right.dists)?,
                    })
                }
            });
        }
        Ok(IntegrationSession { it, f: f.clone(), f0: f.try_eval(0.0)?, prepared })
    }

    pub fn f(&self) -> &ScalarMap {
        &self.f
    }

    /// How many internal nodes use each strategy.
    pub fn strategy_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for p in &self.prepared {
            if let Prepared::Internal(ct) = p {
                *counts.entry(ct.mul.strategy().name().to_string()).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Strategy of the root's cross multiplier, if the root is internal.
    pub fn root_strategy(&self) -> Option<Strategy> {
        match &self.prepared[self.it.root()] {
            Prepared::Internal(ct) => Some(ct.mul.strategy()),
            Prepared::Leaf(_) => None,
        }
    }

    pub fn integrate(&self, field: &TensorField) -> Result<TensorField> {
        if field.n() != self.it.n() {
            return Err(FtfiError::invalid(format!(
                "field has {} rows but the tree has {} vertices",
                field.n(),
                self.it.n()
            )));
        }
        let out = self.node(self.it.root(), field.data(), field.width())?;
        Ok(field.with_data(out))
    }

    fn node(&self, id: usize, x: &[f64], d: usize) -> Result<Vec<f64>> {
        match (&self.it.nodes()[id], &self.prepared[id]) {
            (ItNode::Leaf { ids, .. }, Prepared::Leaf(kernel)) => {
                let m = ids.len();
                let mut out = vec![0.0; m * d];
                for i in 0..m {
                    let row = &mut out[i * d..(i + 1) * d];
                    for (j, &k) in kernel[i * m..(i + 1) * m].iter().enumerate() {
                        for (o, &xj) in row.iter_mut().zip(&x[j * d..(j + 1) * d]) {
                            *o += k * xj;
                        }
                    }
                }
                Ok(out)
            }
            (ItNode::Internal { pivot_local, left_child, right_child, left, right, .. }, Prepared::Internal(ct)) => {
                let gather = |locals: &[usize]| -> Vec<f64> {
                    locals.iter().flat_map(|&v| x[v * d..(v + 1) * d].iter().copied()).collect()
                };
                let xl = gather(&left.parent_local);
                let xr = gather(&right.parent_local);
                let out_l = self.node(*left_child, &xl, d)?;
                let out_r = self.node(*right_child, &xr, d)?;

                // Field rows summed per distinct pivot distance.
                let group_sums = |xs: &[f64], id_d: &[usize], groups: usize| -> Vec<f64> {
                    let mut s = vec![0.0; groups * d];
                    for (k, &j) in id_d.iter().enumerate() {
                        for c in 0..d {
                            s[j * d + c] += xs[k * d + c];
                        }
                    }
                    s
                };
                let xp = group_sums(&xr, &right.id_d, right.group_count());
                let yp = group_sums(&xl, &left.id_d, left.group_count());
                let cx = ct.mul.apply(&xp, d)?;
                let cy = ct.mul.apply_transpose(&yp, d)?;

                let m = left.len() + right.len() - 1;
                let mut out = vec![0.0; m * d];
                // The pivot (group 0) is already inside each side's own sum.
                for k in 1..left.len() {
                    let (i, v) = (left.id_d[k], left.parent_local[k]);
                    for c in 0..d {
                        out[v * d + c] = out_l[k * d + c] + cx[i * d + c] - ct.f_left[i] * xp[c];
                    }
                }
                for k in 1..right.len() {
                    let (j, v) = (right.id_d[k], right.parent_local[k]);
                    for c in 0..d {
                        out[v * d + c] = out_r[k * d + c] + cy[j * d + c] - ct.f_right[j] * yp[c];
                    }
                }
                let p = *pivot_local;
                for c in 0..d {
                    out[p * d + c] = out_l[c] + out_r[c] - self.f0 * x[p * d + c];
                }
                Ok(out)
            }
            _ => unreachable!("prepared nodes mirror the tree"),
        }
    }
}

/// One-shot fast integration.
pub fn ftfi_integrate(it: &IntegratorTree, f: &ScalarMap, field: &TensorField, hint: StrategyHint) -> Result<TensorField> {
    let opts = EngineOptions { hint, ..Default::default() };
    IntegrationSession::new(it, f, &opts)?.integrate(field)
}

/// Materialized `n x n` kernel `f(dist(i, j))`.
pub struct DenseKernel {
    n: usize,
    mat: Vec<f64>,
}

fn guard(n: usize, limit: usize) -> Result<()> {
    if n > limit {
        return Err(FtfiError::DenseGuard { n, limit });
    }
    Ok(())
}

impl DenseKernel {
    pub fn from_distances(n: usize, dist: &[f64], f: &ScalarMap) -> Result<Self> {
        assert_eq!(dist.len(), n * n);
        Ok(DenseKernel { n, mat: eval_all(f, dist)? })
    }

    /// Tree kernel from `n` single-source passes. Errors above `limit` vertices.
    pub fn for_tree(t: &WeightedTree, f: &ScalarMap, limit: usize) -> Result<Self> {
        guard(t.n(), limit)?;
        Self::from_distances(t.n(), &tree_distance_matrix(t), f)
    }

    /// Graph kernel from all-pairs Dijkstra. Errors above `limit` vertices.
    pub fn for_graph(g: &WeightedGraph, f: &ScalarMap, limit: usize) -> Result<Self> {
        guard(g.n(), limit)?;
        Self::from_distances(g.n(), &graph_distance_matrix(g)?, f)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &[f64] {
        &self.mat
    }

    pub fn apply(&self, field: &TensorField) -> Result<TensorField> {
        if field.n() != self.n {
            return Err(FtfiError::invalid(format!("field has {} rows, kernel is {} x {}", field.n(), self.n, self.n)));
        }
        let d = field.width();
        let x = field.data();
        let mut out = vec![0.0; self.n * d];
        for i in 0..self.n {
            let row = &mut out[i * d..(i + 1) * d];
            for (j, &k) in self.mat[i * self.n..(i + 1) * self.n].iter().enumerate() {
                for (o, &xj) in row.iter_mut().zip(&x[j * d..(j + 1) * d]) {
                    *o += k * xj;
                }
            }
        }
        Ok(field.with_data(out))
    }
}

pub fn btfi_integrate(t: &WeightedTree, f: &ScalarMap, field: &TensorField) -> Result<TensorField> {
    DenseKernel::for_tree(t, f, DENSE_GUARD)?.apply(field)
}

pub fn bgfi_integrate(g: &WeightedGraph, f: &ScalarMap, field: &TensorField) -> Result<TensorField> {
    DenseKernel::for_graph(g, f, DENSE_GUARD)?.apply(field)
}
