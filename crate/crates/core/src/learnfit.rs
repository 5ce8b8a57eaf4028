//! Fitting a rational `f` so that `f(tree distance)` approximates graph
//! distance, and the relative Frobenius error of the resulting kernel.

use std::collections::{BTreeSet, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::DenseKernel;
use crate::error::{FtfiError, Result};
use crate::graph::{dijkstra, WeightedGraph, WeightedTree};
use crate::scalar_map::{horner, ScalarMap};

/// Vertex limit for [`relative_frobenius_error`].
pub const EPS_GUARD: usize = 3000;
const PENALTY_MARGIN: f64 = 1e-3;
const PENALTY_GRID: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSample {
    pub v: usize,
    pub w: usize,
    pub d_graph: f64,
    pub d_tree: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricPairDataset {
    pub samples: Vec<MetricSample>,
}

/// Distances in a rooted tree through lowest common ancestors.
struct TreeMetric {
    depth: Vec<usize>,
    root_dist: Vec<f64>,
    /// `up[k][v]` is the `2^k`-th ancestor of `v` (the root maps to itself).
    up: Vec<Vec<usize>>,
}

impl TreeMetric {
    fn new(t: &WeightedTree) -> Self {
        let n = t.n();
        let (order, parent) = t.bfs(0);
        let mut depth = vec![0usize; n];
        let mut root_dist = vec![0.0; n];
        let mut first = vec![0usize; n];
        for &v in &order[1..] {
            let p = parent[v];
            let w = t.neighbors(v).iter().find(|&&(u, _)| u == p).map(|&(_, w)| w).unwrap();
            depth[v] = depth[p] + 1;
            root_dist[v] = root_dist[p] + w;
            first[v] = p;
        }
        let levels = (usize::BITS - n.max(1).leading_zeros()) as usize;
        let mut up = vec![first];
        for k in 1..levels.max(1) {
            let prev = &up[k - 1];
            let next = (0..n).map(|v| prev[prev[v]]).collect();
            up.push(next);
        }
        TreeMetric { depth, root_dist, up }
    }

    fn lca(&self, mut a: usize, mut b: usize) -> usize {
        if self.depth[a] < self.depth[b] {
            std::mem::swap(&mut a, &mut b);
        }
        let diff = self.depth[a] - self.depth[b];
        for (k, row) in self.up.iter().enumerate() {
            if diff >> k & 1 == 1 {
                a = row[a];
            }
        }
        if a == b {
            return a;
        }
        for row in self.up.iter().rev() {
            if row[a] != row[b] {
                a = row[a];
                b = row[b];
            }
        }
        self.up[0][a]
    }

    fn distance(&self, a: usize, b: usize) -> f64 {
        let c = self.lca(a, b);
        self.root_dist[a] + self.root_dist[b] - 2.0 * self.root_dist[c]
    }
}

fn check_spanning(g: &WeightedGraph, t: &WeightedTree) -> Result<()> {
    if g.n() != t.n() {
        return Err(FtfiError::invalid(format!("tree has {} vertices, graph has {}", t.n(), g.n())));
    }
    let edges: HashSet<(usize, usize)> = g.edges().iter().map(|e| (e.u.min(e.v), e.u.max(e.v))).collect();
    if let Some(e) = t.edges().iter().find(|e| !edges.contains(&(e.u, e.v))) {
        return Err(FtfiError::invalid(format!("tree edge ({}, {}) is not an edge of the graph", e.u, e.v)));
    }
    Ok(())
}

/// `count` uniformly random pairs `v != w`, distinct unless `with_replacement`.
pub fn sample_dataset(
    g: &WeightedGraph,
    t: &WeightedTree,
    count: usize,
    seed: u64,
    with_replacement: bool,
) -> Result<MetricPairDataset> {
    check_spanning(g, t)?;
    let n = g.n();
    let pairs_available = n * n.saturating_sub(1) / 2;
    if n < 2 || (!with_replacement && count > pairs_available) {
        return Err(FtfiError::invalid(format!(
            "cannot draw {count} distinct pairs from {pairs_available}; allow replacement instead"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut pairs = Vec::with_capacity(count);
    while pairs.len() < count {
        let v = rng.random_range(0..n);
        let w = rng.random_range(0..n);
        if v == w || (!with_replacement && !seen.insert((v.min(w), v.max(w)))) {
            continue;
        }
        pairs.push((v, w));
    }

    let sources: BTreeSet<usize> = pairs.iter().map(|&(v, _)| v).collect();
    let mut from_source = vec![Vec::new(); n];
    for &s in &sources {
        from_source[s] = dijkstra(g, s);
    }
    let metric = TreeMetric::new(t);
    let samples = pairs
        .into_iter()
        .map(|(v, w)| MetricSample { v, w, d_graph: from_source[v][w], d_tree: metric.distance(v, w) })
        .collect();
    Ok(MetricPairDataset { samples })
}

/// `f(z) = (sum a_k z^k) / (sum b_k z^k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalParams {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
}

impl RationalParams {
    /// `f(z) = z` with numerator degree `t >= 1` and denominator degree `s`.
    pub fn identity(t: usize, s: usize) -> Self {
        let mut num = vec![0.0; t + 1];
        num[1] = 1.0;
        let mut den = vec![0.0; s + 1];
        den[0] = 1.0;
        RationalParams { num, den }
    }

    pub fn eval(&self, z: f64) -> f64 {
        horner(&self.num, z) / horner(&self.den, z)
    }

    pub fn to_scalar_map(&self) -> ScalarMap {
        ScalarMap::Rational { num: self.num.clone(), den: self.den.clone() }
    }

    /// Parameters of `z -> scale * g(z / scale)` where `self` is `g`.
    fn rescaled(&self, scale: f64) -> Self {
        let num = self.num.iter().enumerate().map(|(k, a)| a * scale.powi(1 - k as i32)).collect();
        let den = self.den.iter().enumerate().map(|(k, b)| b * scale.powi(-(k as i32))).collect();
        RationalParams { num, den }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub steps: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Minibatch size per step; `None` uses every sample.
    pub batch: Option<usize>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { steps: 200, learning_rate: 1e-2, seed: 0, batch: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Best feasible iterate, acting on raw distances.
    pub params: RationalParams,
    /// Full-data MSE in raw units, before each step and after the last.
    pub loss_trace: Vec<f64>,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Index into `loss_trace` of the returned parameters.
    pub best_step: usize,
}

/// MSE of `y - P(z)/Q(z)` and its gradient with respect to the numerator
/// and denominator coefficients.
pub fn mse_gradient(data: &[(f64, f64)], num: &[f64], den: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let n = data.len() as f64;
    let mut loss = 0.0;
    let mut g_num = vec![0.0; num.len()];
    let mut g_den = vec![0.0; den.len()];
    for &(z, y) in data {
        let p = horner(num, z);
        let q = horner(den, z);
        let r = y - p / q;
        loss += r * r / n;
        let mut zk = 1.0;
        for k in 0..num.len().max(den.len()) {
            if k < num.len() {
                g_num[k] -= 2.0 * r * zk / (q * n);
            }
            if k < den.len() {
                g_den[k] += 2.0 * r * p * zk / (q * q * n);
            }
            zk *= z;
        }
    }
    (loss, g_num, g_den)
}

/// Penalty `max(0, margin - min_grid Q)^2` and its gradient in `den`.
fn penalty(den: &[f64], z_max: f64) -> (f64, Vec<f64>) {
    let (z_min, q_min) = (0..PENALTY_GRID)
        .map(|k| {
            let z = z_max * k as f64 / (PENALTY_GRID - 1) as f64;
            (z, horner(den, z))
        })
        .fold((0.0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
    let gap = PENALTY_MARGIN - q_min;
    let mut grad = vec![0.0; den.len()];
    if gap <= 0.0 {
        return (0.0, grad);
    }
    let mut zk = 1.0;
    for g in grad.iter_mut() {
        *g = -2.0 * gap * zk;
        zk *= z_min;
    }
    (gap * gap, grad)
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.t += 1;
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grad[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grad[i] * grad[i];
            let m_hat = self.m[i] / (1.0 - B1.powi(self.t));
            let v_hat = self.v[i] / (1.0 - B2.powi(self.t));
            params[i] -= lr * m_hat / (v_hat.sqrt() + 1e-8);
        }
    }
}

/// Adam on the MSE between graph distances and `f(tree distance)`, starting
/// from `f = id`. Distances are divided by their mean tree distance during
/// the fit; the returned parameters act on raw distances.
pub fn fit_rational(ds: &MetricPairDataset, degrees: (usize, usize), opts: &FitOptions) -> Result<FitResult> {
    let (t, s) = degrees;
    if t == 0 {
        return Err(FtfiError::invalid("numerator degree must be at least 1 to start from f = id"));
    }
    if opts.steps == 0 {
        return Err(FtfiError::invalid("steps must be at least 1"));
    }
    if ds.samples.is_empty() {
        return Err(FtfiError::invalid("empty dataset"));
    }
    let scale = ds.samples.iter().map(|s| s.d_tree).sum::<f64>() / ds.samples.len() as f64;
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let data: Vec<(f64, f64)> = ds.samples.iter().map(|s| (s.d_tree / scale, s.d_graph / scale)).collect();
    let z_max = data.iter().map(|d| d.0).fold(0.0, f64::max);

    let init = RationalParams::identity(t, s);
    let mut params: Vec<f64> = init.num.iter().chain(&init.den).copied().collect();
    let split = t + 1;
    let mut adam = Adam { m: vec![0.0; params.len()], v: vec![0.0; params.len()], t: 0 };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let to_raw = |mse: f64| mse * scale * scale;

    let mut trace = Vec::with_capacity(opts.steps + 1);
    let mut best = (f64::INFINITY, 0, params.clone());
    for step in 0..=opts.steps {
        let (num, den) = params.split_at(split);
        let (mse, _, _) = mse_gradient(&data, num, den);
        let (pen, _) = penalty(den, z_max);
        if !mse.is_finite() {
            return Err(FtfiError::Diverged { step });
        }
        trace.push(to_raw(mse));
        if pen == 0.0 && mse < best.0 {
            best = (mse, step, params.clone());
        }
        if step == opts.steps {
            break;
        }
        let batch: Vec<(f64, f64)> = match opts.batch {
            Some(b) if b < data.len() => (0..b).map(|_| data[rng.random_range(0..data.len())]).collect(),
            _ => data.clone(),
        };
        let (_, g_num, mut g_den) = mse_gradient(&batch, num, den);
        let (_, g_pen) = penalty(den, z_max);
        g_den.iter_mut().zip(g_pen).for_each(|(g, p)| *g += p);
        let grad: Vec<f64> = g_num.into_iter().chain(g_den).collect();
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(FtfiError::Diverged { step });
        }
        adam.step(&mut params, &grad, opts.learning_rate);
    }

    let (num, den) = best.2.split_at(split);
    let fitted = RationalParams { num: num.to_vec(), den: den.to_vec() }.rescaled(scale);
    Ok(FitResult {
        params: fitted,
        initial_loss: trace[0],
        final_loss: to_raw(best.0),
        best_step: best.1,
        loss_trace: trace,
    })
}

/// `||f(D_tree) - D_graph||_F / ||D_graph||_F` over all vertex pairs.
pub fn relative_frobenius_error(g: &WeightedGraph, t: &WeightedTree, f: &ScalarMap) -> Result<f64> {
    relative_frobenius_error_with_guard(g, t, f, EPS_GUARD)
}

pub fn relative_frobenius_error_with_guard(
    g: &WeightedGraph,
    t: &WeightedTree,
    f: &ScalarMap,
    limit: usize,
) -> Result<f64> {
    if g.n() != t.n() {
        return Err(FtfiError::invalid(format!("tree has {} vertices, graph has {}", t.n(), g.n())));
    }
    let tree = DenseKernel::for_tree(t, f, limit)?;
    let graph = DenseKernel::for_graph(g, &ScalarMap::identity(), limit)?;
    Ok(crate::field::relative_frobenius(tree.matrix(), graph.matrix()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generators::{open_unit, path_plus_random_edges, random_tree};
    use crate::graph::minimum_spanning_tree;

    #[test]
    fn lca_distances_match_dfs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = random_tree(300, &mut rng, open_unit);
        let metric = TreeMetric::new(&t);
        for a in [0, 5, 77, 299] {
            let truth = t.distances_from(a);
            for b in 0..300 {
                assert!((metric.distance(a, b) - truth[b]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tree_dataset_has_equal_metrics_and_zero_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = random_tree(120, &mut rng, open_unit);
        let ds = sample_dataset(&t.as_graph(), &t, 100, 7, false).unwrap();
        assert_eq!(ds.samples.len(), 100);
        assert!(ds.samples.iter().all(|s| (s.d_graph - s.d_tree).abs() < 1e-12 && s.v != s.w));
        assert_eq!(ds, sample_dataset(&t.as_graph(), &t, 100, 7, false).unwrap());

        let fit = fit_rational(&ds, (1, 0), &FitOptions { steps: 20, ..Default::default() }).unwrap();
        assert!(fit.initial_loss < 1e-20);
        assert_eq!(fit.best_step, 0);
        assert_eq!(fit.params, RationalParams::identity(1, 0));
    }

    #[test]
    fn too_many_pairs_without_replacement() {
        let t = crate::graph::generators::path_tree(4, 1.0);
        assert!(sample_dataset(&t.as_graph(), &t, 7, 0, false).is_err());
        assert!(sample_dataset(&t.as_graph(), &t, 7, 0, true).is_ok());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<(f64, f64)> = (0..50).map(|_| (rng.random_range(0.0..3.0), rng.random_range(0.0..2.0))).collect();
        for _ in 0..10 {
            let num: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut den: Vec<f64> = (0..3).map(|_| rng.random_range(-0.3..0.3)).collect();
            den[0] = 2.0;
            let (_, g_num, g_den) = mse_gradient(&data, &num, &den);
            let h = 1e-6;
            for k in 0..3 {
                let fd = |bump: &dyn Fn(f64) -> (Vec<f64>, Vec<f64>)| {
                    let (n1, d1) = bump(h);
                    let (n2, d2) = bump(-h);
                    (mse_gradient(&data, &n1, &d1).0 - mse_gradient(&data, &n2, &d2).0) / (2.0 * h)
                };
                let fd_num = fd(&|e| {
                    let mut n = num.clone();
                    n[k] += e;
                    (n, den.clone())
                });
                let fd_den = fd(&|e| {
                    let mut d = den.clone();
                    d[k] += e;
                    (num.clone(), d)
                });
                assert!((fd_num - g_num[k]).abs() <= 1e-5 * g_num[k].abs().max(1e-3));
                assert!((fd_den - g_den[k]).abs() <= 1e-5 * g_den[k].abs().max(1e-3));
            }
        }
    }

    #[test]
    fn rescaling_preserves_the_function() {
        let p = RationalParams { num: vec![0.1, 1.0, -0.2], den: vec![1.0, 0.3, 0.05] };
        let scale = 3.7;
        let raw = p.rescaled(scale);
        for d in [0.0, 1.0, 5.0, 11.0] {
            assert!((raw.eval(d) - scale * p.eval(d / scale)).abs() < 1e-12);
        }
    }

    #[test]
    fn epsilon_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = random_tree(60, &mut rng, open_unit);
        let g = t.as_graph();
        assert_eq!(relative_frobenius_error(&g, &t, &ScalarMap::identity()).unwrap(), 0.0);
        assert_eq!(relative_frobenius_error(&g, &t, &ScalarMap::constant(0.0)).unwrap(), 1.0);
    }

    #[test]
    fn fit_is_deterministic_and_improves() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = path_plus_random_edges(200, 150, &mut rng).unwrap();
        let t = minimum_spanning_tree(&g).unwrap();
        let ds = sample_dataset(&g, &t, 100, 1, false).unwrap();
        let opts = FitOptions { steps: 60, seed: 3, batch: Some(32), ..Default::default() };
        let a = fit_rational(&ds, (2, 2), &opts).unwrap();
        let b = fit_rational(&ds, (2, 2), &opts).unwrap();
        assert_eq!(a, b);
        assert!(a.final_loss < a.initial_loss);
    }

    #[test]
    fn json_shape() {
        let p = RationalParams::identity(2, 1);
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"{"num":[0.0,1.0,0.0],"den":[1.0,0.0]}"#);
        assert_eq!(serde_json::from_str::<RationalParams>(&s).unwrap(), p);
    }
}
