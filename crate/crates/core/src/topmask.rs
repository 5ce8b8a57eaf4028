//! Low-rank (kernelized) attention with a topological mask
//! `M(i, j) = f(dist(i, j))` on a spanning tree of the token grid.
//!
//! The fast path never forms `M`: it integrates the stacked field
//! `[V1 | V2]` over the tree, where row `i` of `V1` is the row-major
//! flattening of the `m x d` outer product `phi(k_i) v_i^T` and row `i` of
//! `V2` is `phi(k_i)`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::engine::{EngineOptions, IntegrationSession};
use crate::error::{FtfiError, Result};
use crate::field::TensorField;
use crate::graph::{generators::grid_graph, minimum_spanning_tree, tree_distance_matrix, WeightedTree};
use crate::integrator_tree::{IntegratorTree, ItConfig};
use crate::scalar_map::{horner, ScalarMap, MAX_DEGREE};

/// Largest sequence length accepted by the explicit reference.
pub const EXPLICIT_GUARD: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureMap {
    Relu,
    Square,
    Fourth,
    Exp,
}

impl FeatureMap {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            FeatureMap::Relu => x.max(0.0),
            FeatureMap::Square => x * x,
            FeatureMap::Fourth => (x * x) * (x * x),
            FeatureMap::Exp => x.exp(),
        }
    }

    pub const ALL: [FeatureMap; 4] = [FeatureMap::Relu, FeatureMap::Square, FeatureMap::Fourth, FeatureMap::Exp];
}

impl FromStr for FeatureMap {
    type Err = FtfiError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(FeatureMap::Relu),
            "square" | "x2" => Ok(FeatureMap::Square),
            "fourth" | "x4" => Ok(FeatureMap::Fourth),
            "exp" => Ok(FeatureMap::Exp),
            _ => Err(FtfiError::invalid(format!("unknown feature map {s:?} (relu, square, fourth, exp)"))),
        }
    }
}

impl fmt::Display for FeatureMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureMap::Relu => "relu",
            FeatureMap::Square => "square",
            FeatureMap::Fourth => "fourth",
            FeatureMap::Exp => "exp",
        })
    }
}

/// Outer function `g` of the mask `f(x) = g(a_0 + a_1 x + ... + a_t x^t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskLink {
    Exp,
    Reciprocal,
}

impl FromStr for MaskLink {
    type Err = FtfiError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exp" => Ok(MaskLink::Exp),
            "recip" | "reciprocal" => Ok(MaskLink::Reciprocal),
            _ => Err(FtfiError::invalid(format!("unknown mask link {s:?} (exp, recip)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionInputs {
    l: usize,
    d_qk: usize,
    d_v: usize,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    phi: FeatureMap,
}

impl AttentionInputs {
    pub fn new(l: usize, d_qk: usize, d_v: usize, q: Vec<f64>, k: Vec<f64>, v: Vec<f64>, phi: FeatureMap) -> Result<Self> {
        if l == 0 || d_qk == 0 || d_v == 0 {
            return Err(FtfiError::invalid("attention dimensions must be positive"));
        }
        if q.len() != l * d_qk || k.len() != l * d_qk || v.len() != l * d_v {
            return Err(FtfiError::invalid("Q, K, V shapes do not match L x d"));
        }
        if q.iter().chain(&k).chain(&v).any(|x| !x.is_finite()) {
            return Err(FtfiError::NonFinite("attention inputs"));
        }
        Ok(AttentionInputs { l, d_qk, d_v, q, k, v, phi })
    }

    /// Q and K uniform on `[-0.3, 1)` (mostly positive, so ReLU rows rarely
    /// vanish), V uniform on `[-1, 1)`.
    pub fn random<R: Rng>(l: usize, d_qk: usize, d_v: usize, phi: FeatureMap, rng: &mut R) -> Self {
        let mut draw = |n: usize, lo: f64, hi: f64| (0..n).map(|_| rng.random_range(lo..hi)).collect::<Vec<_>>();
        let q = draw(l * d_qk, -0.3, 1.0);
        let k = draw(l * d_qk, -0.3, 1.0);
        let v = draw(l * d_v, -1.0, 1.0);
        AttentionInputs { l, d_qk, d_v, q, k, v, phi }
    }

    pub fn len(&self) -> usize {
        self.l
    }

    pub fn is_empty(&self) -> bool {
        self.l == 0
    }

    pub fn value_dim(&self) -> usize {
        self.d_v
    }

    fn phi_q(&self) -> Vec<f64> {
        self.q.iter().map(|&x| self.phi.apply(x)).collect()
    }

    fn phi_k(&self) -> Vec<f64> {
        self.k.iter().map(|&x| self.phi.apply(x)).collect()
    }
}

/// Unit-weight `h x w` grid (row-major tokens) reduced to its minimum
/// spanning tree.
pub fn grid_mst(h: usize, w: usize) -> Result<WeightedTree> {
    minimum_spanning_tree(&grid_graph(h, w)?)
}

#[derive(Debug, Clone)]
pub struct TopologicalMask {
    tree: WeightedTree,
    it: IntegratorTree,
    link: MaskLink,
    coeffs: Vec<f64>,
}

impl TopologicalMask {
    /// `coeffs = [a_0, ..., a_t]`. The tree is integrated on the unit grid
    /// when all its weights are integers.
    pub fn new(tree: WeightedTree, link: MaskLink, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() || coeffs.len() > MAX_DEGREE + 1 || coeffs.iter().any(|a| !a.is_finite()) {
            return Err(FtfiError::invalid(format!(
                "mask needs 1 to {} finite coefficients",
                MAX_DEGREE + 1
            )));
        }
        let integral = tree.edges().iter().all(|e| e.w.fract() == 0.0);
        let config = ItConfig { quantum: integral.then_some(1.0), ..Default::default() };
        let it = IntegratorTree::build(&tree, &config)?;
        let mask = TopologicalMask { tree, it, link, coeffs };
        if link == MaskLink::Reciprocal {
            for z in mask.observed_distances() {
                let p = horner(&mask.coeffs, z);
                if !(p > 0.0) {
                    return Err(FtfiError::Pole { at: z });
                }
            }
        }
        Ok(mask)
    }

    pub fn tree(&self) -> &WeightedTree {
        &self.tree
    }

    pub fn integrator_tree(&self) -> &IntegratorTree {
        &self.it
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn link(&self) -> MaskLink {
        self.link
    }

    /// Number of learnable coefficients.
    pub fn num_parameters(&self) -> usize {
        self.coeffs.len()
    }

    /// Every distinct tree distance between two tokens.
    fn observed_distances(&self) -> Vec<f64> {
        if self.it.quantum().is_some() {
            let diam = self.tree.diameter().round() as usize;
            return (0..=diam).map(|k| k as f64).collect();
        }
        let mut d = tree_distance_matrix(&self.tree);
        d.sort_by(f64::total_cmp);
        d.dedup();
        d
    }

    /// The mask function `f` in the most structured form available.
    pub fn scalar_map(&self) -> ScalarMap {
        let a = &self.coeffs;
        match (self.link, a.len()) {
            (MaskLink::Exp, 1) => ScalarMap::constant(a[0].exp()),
            (MaskLink::Exp, 2) => ScalarMap::ExpTimesPoly { lambda: a[1], coeffs: vec![a[0].exp()] },
            (MaskLink::Exp, 3) => ScalarMap::ExpQuadratic { u: a[2], v: a[1], w: a[0] },
            (MaskLink::Exp, _) => {
                let a = a.clone();
                ScalarMap::tabulated(format!("exp(poly{})", a.len() - 1), move |z| horner(&a, z).exp())
            }
            (MaskLink::Reciprocal, _) => ScalarMap::Rational { num: vec![1.0], den: a.clone() },
        }
    }

    /// `d f / d a_k` as a function of distance.
    fn derivative_map(&self, k: usize) -> ScalarMap {
        let a = self.coeffs.clone();
        match self.link {
            MaskLink::Exp => ScalarMap::tabulated(format!("dexp/da{k}"), move |z| horner(&a, z).exp() * z.powi(k as i32)),
            MaskLink::Reciprocal => ScalarMap::tabulated(format!("drecip/da{k}"), move |z| {
                let p = horner(&a, z);
                -z.powi(k as i32) / (p * p)
            }),
        }
    }

    /// Dense `L x L` mask, for the explicit reference.
    pub fn mask_matrix(&self) -> Result<Vec<f64>> {
        let f = self.scalar_map();
        tree_distance_matrix(&self.tree).into_iter().map(|z| f.try_eval(z)).collect()
    }
}

/// `D^{-1} (M . phi(Q) phi(K)^T) V` computed entry by entry.
pub fn masked_attention_explicit(inp: &AttentionInputs, mask: &[f64]) -> Result<Vec<f64>> {
    let (l, m, d) = (inp.l, inp.d_qk, inp.d_v);
    if l > EXPLICIT_GUARD {
        return Err(FtfiError::DenseGuard { n: l, limit: EXPLICIT_GUARD });
    }
    if mask.len() != l * l {
        return Err(FtfiError::invalid(format!("mask has {} entries, expected {l} x {l}", mask.len())));
    }
    let (pq, pk) = (inp.phi_q(), inp.phi_k());
    let mut out = vec![0.0; l * d];
    for i in 0..l {
        let qi = &pq[i * m..(i + 1) * m];
        let mut norm = 0.0;
        let row = &mut out[i * d..(i + 1) * d];
        for j in 0..l {
            let kern: f64 = qi.iter().zip(&pk[j * m..(j + 1) * m]).map(|(a, b)| a * b).sum();
            let a = mask[i * l + j] * kern;
            norm += a;
            for (o, &vj) in row.iter_mut().zip(&inp.v[j * d..(j + 1) * d]) {
                *o += a * vj;
            }
        }
        if !(norm > 0.0) {
            return Err(FtfiError::NonPositiveNormalizer { row: i, value: norm });
        }
        row.iter_mut().for_each(|o| *o /= norm);
    }
    Ok(out)
}

/// Unmasked linear attention, `phi(Q) (phi(K)^T V)` normalized by
/// `phi(Q) (phi(K)^T 1)`.
pub fn linear_attention(inp: &AttentionInputs) -> Result<Vec<f64>> {
    let (l, m, d) = (inp.l, inp.d_qk, inp.d_v);
    let (pq, pk) = (inp.phi_q(), inp.phi_k());
    let mut kv = vec![0.0; m * d];
    let mut ksum = vec![0.0; m];
    for j in 0..l {
        for a in 0..m {
            ksum[a] += pk[j * m + a];
            for c in 0..d {
                kv[a * d + c] += pk[j * m + a] * inp.v[j * d + c];
            }
        }
    }
    let mut out = vec![0.0; l * d];
    for i in 0..l {
        let qi = &pq[i * m..(i + 1) * m];
        let norm: f64 = qi.iter().zip(&ksum).map(|(a, b)| a * b).sum();
        if !(norm > 0.0) {
            return Err(FtfiError::NonPositiveNormalizer { row: i, value: norm });
        }
        for c in 0..d {
            out[i * d + c] = (0..m).map(|a| qi[a] * kv[a * d + c]).sum::<f64>() / norm;
        }
    }
    Ok(out)
}

/// `[V1 | V2]`, width `m d + m`.
fn stacked_field(inp: &AttentionInputs) -> Result<TensorField> {
    let (l, m, d) = (inp.l, inp.d_qk, inp.d_v);
    let pk = inp.phi_k();
    let width = m * d + m;
    let mut data = vec![0.0; l * width];
    for i in 0..l {
        let row = &mut data[i * width..(i + 1) * width];
        for a in 0..m {
            for c in 0..d {
                row[a * d + c] = pk[i * m + a] * inp.v[i * d + c];
            }
            row[m * d + a] = pk[i * m + a];
        }
    }
    TensorField::from_rows(l, width, data)
}

/// Per row `i`: `phi(q_i)^T devec(D1_i)` (length `d`) and `phi(q_i) . D2_i`.
fn contract(inp: &AttentionInputs, pq: &[f64], integrated: &TensorField) -> (Vec<f64>, Vec<f64>) {
    let (l, m, d) = (inp.l, inp.d_qk, inp.d_v);
    let mut num = vec![0.0; l * d];
    let mut den = vec![0.0; l];
    for i in 0..l {
        let row = integrated.row(i);
        let qi = &pq[i * m..(i + 1) * m];
        for a in 0..m {
            for c in 0..d {
                num[i * d + c] += qi[a] * row[a * d + c];
            }
            den[i] += qi[a] * row[m * d + a];
        }
    }
    (num, den)
}

fn integrate_mask(mask: &TopologicalMask, f: &ScalarMap, field: &TensorField) -> Result<TensorField> {
    IntegrationSession::new(&mask.it, f, &EngineOptions::default())?.integrate(field)
}

fn check_len(inp: &AttentionInputs, mask: &TopologicalMask) -> Result<()> {
    if mask.tree.n() != inp.l {
        return Err(FtfiError::invalid(format!("mask has {} tokens, inputs have {}", mask.tree.n(), inp.l)));
    }
    Ok(())
}

/// Masked attention through tree integration, without forming `M`.
pub fn masked_attention_fast(inp: &AttentionInputs, mask: &TopologicalMask) -> Result<Vec<f64>> {
    check_len(inp, mask)?;
    let integrated = integrate_mask(mask, &mask.scalar_map(), &stacked_field(inp)?)?;
    let (mut num, den) = contract(inp, &inp.phi_q(), &integrated);
    let d = inp.d_v;
    for (i, &z) in den.iter().enumerate() {
        if !(z > 0.0) {
            return Err(FtfiError::NonPositiveNormalizer { row: i, value: z });
        }
        num[i * d..(i + 1) * d].iter_mut().for_each(|x| *x /= z);
    }
    Ok(num)
}

/// Gradient of `<upstream, output>` with respect to each mask coefficient,
/// by differentiating the mask values and pushing the derivative masks
/// through the same integration.
pub fn mask_gradients(inp: &AttentionInputs, mask: &TopologicalMask, upstream: &[f64]) -> Result<Vec<f64>> {
    check_len(inp, mask)?;
    let (l, d) = (inp.l, inp.d_v);
    if upstream.len() != l * d {
        return Err(FtfiError::invalid("upstream gradient must be L x d"));
    }
    let field = stacked_field(inp)?;
    let pq = inp.phi_q();
    let (num, den) = contract(inp, &pq, &integrate_mask(mask, &mask.scalar_map(), &field)?);
    if let Some(i) = den.iter().position(|&z| !(z > 0.0)) {
        return Err(FtfiError::NonPositiveNormalizer { row: i, value: den[i] });
    }

    let mut grads = Vec::with_capacity(mask.coeffs.len());
    for k in 0..mask.coeffs.len() {
        let (dnum, dden) = contract(inp, &pq, &integrate_mask(mask, &mask.derivative_map(k), &field)?);
        let mut g = 0.0;
        for i in 0..l {
            for c in 0..d {
                let r = num[i * d + c] / den[i];
                let dr = (dnum[i * d + c] - r * dden[i]) / den[i];
                g += upstream[i * d + c] * dr;
            }
        }
        grads.push(g);
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::relative_frobenius;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grid_trees() {
        let path = grid_mst(1, 4).unwrap();
        assert_eq!(path.edges().len(), 3);
        assert!(path.edges().iter().all(|e| e.v == e.u + 1));

        let square = grid_mst(2, 2).unwrap();
        let pairs: Vec<(usize, usize)> = square.edges().iter().map(|e| (e.u, e.v)).collect();
        assert_eq!(pairs, vec![(0, 1), (0, 2), (1, 3)]);

        let vit = grid_mst(14, 14).unwrap();
        assert_eq!((vit.n(), vit.edges().len()), (196, 195));
    }

    #[test]
    fn single_token_returns_v() {
        let inp = AttentionInputs::new(1, 2, 3, vec![0.5, 0.2], vec![0.3, 0.9], vec![1.0, -2.0, 3.0], FeatureMap::Square)
            .unwrap();
        let out = masked_attention_explicit(&inp, &[2.0]).unwrap();
        for (o, v) in out.iter().zip([1.0, -2.0, 3.0]) {
            assert!((o - v).abs() < 1e-15);
        }
    }

    #[test]
    fn all_ones_mask_is_linear_attention() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let inp = AttentionInputs::random(32, 4, 3, FeatureMap::Exp, &mut rng);
        let a = masked_attention_explicit(&inp, &vec![1.0; 32 * 32]).unwrap();
        let b = linear_attention(&inp).unwrap();
        assert!(relative_frobenius(&a, &b) < 1e-13);

        let mask = TopologicalMask::new(grid_mst(4, 8).unwrap(), MaskLink::Exp, vec![0.0, 0.0]).unwrap();
        let c = masked_attention_fast(&inp, &mask).unwrap();
        assert!(relative_frobenius(&c, &b) < 1e-12);
    }

    #[test]
    fn rows_are_stochastic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let inp = AttentionInputs::random(32, 4, 1, FeatureMap::Square, &mut rng);
        let ones = AttentionInputs { v: vec![1.0; 32], ..inp };
        let mask = TopologicalMask::new(grid_mst(4, 8).unwrap(), MaskLink::Exp, vec![0.1, -0.4]).unwrap();
        let out = masked_attention_explicit(&ones, &mask.mask_matrix().unwrap()).unwrap();
        assert!(out.iter().all(|o| (o - 1.0).abs() < 1e-12));
    }

    #[test]
    fn fast_matches_explicit() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let tree = grid_mst(8, 8).unwrap();
        for (link, coeffs) in [
            (MaskLink::Exp, vec![0.2, -0.3, 0.01]),
            (MaskLink::Exp, vec![0.0, -0.2, 0.01, -0.001, 0.0001, 0.0]),
            (MaskLink::Reciprocal, vec![1.0, 1.0]),
        ] {
            let mask = TopologicalMask::new(tree.clone(), link, coeffs).unwrap();
            for phi in FeatureMap::ALL {
                let inp = AttentionInputs::random(64, 4, 3, phi, &mut rng);
                let fast = masked_attention_fast(&inp, &mask).unwrap();
                let slow = masked_attention_explicit(&inp, &mask.mask_matrix().unwrap()).unwrap();
                assert!(relative_frobenius(&fast, &slow) <= 1e-6);
            }
        }
    }

    #[test]
    fn reciprocal_pole_is_rejected() {
        let tree = grid_mst(3, 3).unwrap();
        assert!(matches!(
            TopologicalMask::new(tree, MaskLink::Reciprocal, vec![1.0, -0.5]),
            Err(FtfiError::Pole { .. })
        ));
    }

    #[test]
    fn parameter_count() {
        let mask = TopologicalMask::new(grid_mst(3, 3).unwrap(), MaskLink::Exp, vec![0.0, 0.1, 0.2]).unwrap();
        assert_eq!(mask.num_parameters(), 3);
    }

    #[test]
    fn constant_mask_has_zero_offset_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let inp = AttentionInputs::random(16, 3, 2, FeatureMap::Relu, &mut rng);
        let mask = TopologicalMask::new(grid_mst(4, 4).unwrap(), MaskLink::Exp, vec![0.7, 0.0]).unwrap();
        let upstream: Vec<f64> = (0..32).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = mask_gradients(&inp, &mask, &upstream).unwrap();
        assert!(g[0].abs() < 1e-12);
        let zero = mask_gradients(&inp, &mask, &[0.0; 32]).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let tree = grid_mst(8, 8).unwrap();
        for (link, coeffs) in [(MaskLink::Exp, vec![0.1, -0.3, 0.02]), (MaskLink::Reciprocal, vec![1.0, 0.5, 0.1])] {
            let inp = AttentionInputs::random(64, 3, 2, FeatureMap::Square, &mut rng);
            let upstream: Vec<f64> = (0..128).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mask = TopologicalMask::new(tree.clone(), link, coeffs.clone()).unwrap();
            let g = mask_gradients(&inp, &mask, &upstream).unwrap();
            let h = 1e-5;
            for k in 0..coeffs.len() {
                let objective = |e: f64| {
                    let mut a = coeffs.clone();
                    a[k] += e;
                    let m = TopologicalMask::new(tree.clone(), link, a).unwrap();
                    let out = masked_attention_fast(&inp, &m).unwrap();
                    out.iter().zip(&upstream).map(|(o, u)| o * u).sum::<f64>()
                };
                let fd = (objective(h) - objective(-h)) / (2.0 * h);
                assert!((fd - g[k]).abs() <= 1e-4 * g[k].abs().max(1e-6), "k={k} fd={fd} g={}", g[k]);
            }
        }
    }
}
