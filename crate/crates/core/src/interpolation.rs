//! Vertex-normal interpolation on meshes: hide a random subset of normals
//! and predict them by integrating the known ones over the mesh MST with
//! `f(x) = 1 / (1 + lambda x^2)`.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::engine::{DenseKernel, EngineOptions, IntegrationSession, DENSE_GUARD};
use crate::error::{FtfiError, Result};
use crate::field::{relative_frobenius, TensorField};
use crate::graph::{minimum_spanning_tree, tree_distance_matrix};
use crate::integrator_tree::{IntegratorTree, ItConfig, DEFAULT_LEAF_THRESHOLD};
use crate::mesh::{dot3, norm3, MeshGraph, Vec3};
use crate::scalar_map::ScalarMap;

#[derive(Debug, Clone)]
pub struct InterpolationOptions {
    /// Fraction of vertices whose normals are hidden, in `[0, 1)`.
    pub mask_fraction: f64,
    pub lambdas: Vec<f64>,
    pub seed: u64,
    pub leaf_threshold: usize,
    /// Largest `n` for which the brute-force comparison runs.
    pub oracle_guard: usize,
}

impl Default for InterpolationOptions {
    fn default() -> Self {
        InterpolationOptions {
            mask_fraction: 0.8,
            lambdas: vec![0.0, 0.1, 1.0, 10.0, 100.0],
            seed: 0,
            leaf_threshold: DEFAULT_LEAF_THRESHOLD,
            oracle_guard: DENSE_GUARD,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaResult {
    pub lambda: f64,
    pub mean_cosine: f64,
    pub integrate_seconds: f64,
    pub btfi_seconds: Option<f64>,
    /// Relative Frobenius difference between fast and brute-force
    /// predictions on the masked rows.
    pub oracle_rel_diff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationReport {
    pub n: usize,
    pub masked: Vec<usize>,
    pub preprocess_seconds: f64,
    pub results: Vec<LambdaResult>,
    pub warnings: Vec<String>,
}

impl InterpolationReport {
    pub fn best(&self) -> Option<&LambdaResult> {
        self.results.iter().max_by(|a, b| a.mean_cosine.total_cmp(&b.mean_cosine))
    }
}

pub fn mesh_kernel(lambda: f64) -> ScalarMap {
    ScalarMap::Rational { num: vec![1.0], den: vec![1.0, 0.0, lambda] }
}

/// Sorted indices of `round(fraction * n)` vertices chosen uniformly.
pub fn choose_mask(n: usize, fraction: f64, seed: u64) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    ids.truncate((fraction * n as f64).round() as usize);
    ids.sort_unstable();
    ids
}

fn cosine(a: Vec3, b: Vec3) -> f64 {
    let d = norm3(a) * norm3(b);
    if d > 0.0 {
        dot3(a, b) / d
    } else {
        0.0
    }
}

fn masked_rows(field: &TensorField, masked: &[usize]) -> Vec<f64> {
    masked.iter().flat_map(|&i| field.row(i).iter().copied()).collect()
}

pub fn interpolate_normals(mesh: &MeshGraph, opts: &InterpolationOptions) -> Result<InterpolationReport> {
    if !(0.0..1.0).contains(&opts.mask_fraction) {
        return Err(FtfiError::invalid(format!("mask fraction must lie in [0, 1), got {}", opts.mask_fraction)));
    }
    if opts.lambdas.is_empty() {
        return Err(FtfiError::invalid("empty lambda grid"));
    }
    if let Some(l) = opts.lambdas.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
        return Err(FtfiError::invalid(format!("lambda must be finite and non-negative, got {l}")));
    }
    let n = mesh.graph.n();
    let mut warnings = Vec::new();

    let start = Instant::now();
    let tree = minimum_spanning_tree(&mesh.graph)?;
    let it = IntegratorTree::build(&tree, &ItConfig { leaf_threshold: opts.leaf_threshold, quantum: None })?;
    let preprocess_seconds = start.elapsed().as_secs_f64();

    let masked = choose_mask(n, opts.mask_fraction, opts.seed);
    if masked.is_empty() {
        warnings.push("no vertices are masked; mean cosine similarity reported as 1.0".to_string());
    }
    let mut data: Vec<f64> = mesh.normals.iter().flatten().copied().collect();
    for &i in &masked {
        data[3 * i..3 * i + 3].fill(0.0);
    }
    let known = TensorField::from_rows(n, 3, data)?;

    let oracle_dist = (n <= opts.oracle_guard && !masked.is_empty()).then(|| tree_distance_matrix(&tree));
    let mut results = Vec::with_capacity(opts.lambdas.len());
    for &lambda in &opts.lambdas {
        let f = mesh_kernel(lambda);
        let t0 = Instant::now();
        let pred = IntegrationSession::new(&it, &f, &EngineOptions::default())?.integrate(&known)?;
        let integrate_seconds = t0.elapsed().as_secs_f64();

        let mean_cosine = if masked.is_empty() {
            1.0
        } else {
            let total: f64 = masked
                .iter()
                .map(|&i| {
                    let p = pred.row(i);
                    cosine([p[0], p[1], p[2]], mesh.normals[i])
                })
                .sum();
            total / masked.len() as f64
        };

        let (btfi_seconds, oracle_rel_diff) = match &oracle_dist {
            Some(dist) => {
                let t1 = Instant::now();
                let brute = DenseKernel::from_distances(n, dist, &f)?.apply(&known)?;
                let secs = t1.elapsed().as_secs_f64();
                let diff = relative_frobenius(&masked_rows(&pred, &masked), &masked_rows(&brute, &masked));
                (Some(secs), Some(diff))
            }
            None => (None, None),
        };
        results.push(LambdaResult { lambda, mean_cosine, integrate_seconds, btfi_seconds, oracle_rel_diff });
    }
    Ok(InterpolationReport { n, masked, preprocess_seconds, results, warnings })
}
