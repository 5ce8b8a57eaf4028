//! Smallest eigenvalues of the f-distance matrix of a tree, using only
//! fast integrations as matrix-vector products.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{EngineOptions, IntegrationSession};
use crate::error::{FtfiError, Result};
use crate::field::TensorField;
use crate::integrator_tree::IntegratorTree;
use crate::scalar_map::ScalarMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EigenOrder {
    /// Most negative first.
    #[default]
    Algebraic,
    /// Closest to zero first.
    Magnitude,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralOptions {
    pub k: usize,
    pub tol: f64,
    /// Defaults to `5 k + 50`.
    pub max_iter: Option<usize>,
    pub seed: u64,
    pub order: EigenOrder,
    /// Spend two extra products verifying that the operator is symmetric.
    pub check_symmetry: bool,
    /// Upper bound on extra runs, each with the eigenvectors found so far
    /// shifted out of the way, that pick up further copies of repeated
    /// eigenvalues. A single Krylov space sees every eigenvalue only once.
    pub deflation_passes: usize,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        SpectralOptions {
            k: 10,
            tol: 1e-8,
            max_iter: None,
            seed: 0,
            order: EigenOrder::Algebraic,
            check_symmetry: true,
            deflation_passes: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFeatures {
    /// Ascending in the requested order's key.
    pub eigenvalues: Vec<f64>,
    /// `||A x - lambda x||` for unit Ritz vectors.
    pub residual_norms: Vec<f64>,
    pub converged: Vec<bool>,
    /// Lanczos steps taken.
    pub iterations: usize,
    pub matvecs: usize,
}

impl SpectralFeatures {
    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|&c| c)
    }
}

pub fn smallest_eigenvalues(it: &IntegratorTree, f: &ScalarMap, opts: &SpectralOptions) -> Result<SpectralFeatures> {
    let session = IntegrationSession::new(it, f, &EngineOptions::default())?;
    let n = it.n();
    lanczos(n, |x| Ok(session.integrate(&TensorField::from_rows(n, 1, x.to_vec())?)?.into_data()), opts)
}

/// The `min(k, n)` smallest eigenvalues of a dense symmetric row-major
/// `n x n` matrix, for small inputs and as a reference.
pub fn dense_smallest_eigenvalues(matrix: &[f64], n: usize, k: usize, order: EigenOrder) -> Result<Vec<f64>> {
    if matrix.len() != n * n {
        return Err(FtfiError::invalid(format!("expected {} entries, got {}", n * n, matrix.len())));
    }
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(n, n, matrix));
    let key = |v: f64| if order == EigenOrder::Magnitude { v.abs() } else { v };
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(|a, b| key(*a).total_cmp(&key(*b)));
    values.truncate(k);
    Ok(values)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Two passes of classical Gram-Schmidt against `basis`.
fn orthogonalize(w: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let c = dot(w, b);
            w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
    }
}

fn random_unit(n: usize, rng: &mut ChaCha8Rng, basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    for _ in 0..8 {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        orthogonalize(&mut v, basis);
        let nv = norm(&v);
        if nv > 1e-8 {
            v.iter_mut().for_each(|x| *x /= nv);
            return Some(v);
        }
    }
    None
}

struct RitzPair {
    value: f64,
    residual: f64,
    converged: bool,
    vector: Vec<f64>,
}

struct KrylovRun {
    pairs: Vec<RitzPair>,
    iterations: usize,
    matvecs: usize,
    /// Largest Ritz value magnitude, a lower bound on the operator norm.
    norm_estimate: f64,
}

/// One Lanczos run with full reorthogonalization, restarting from a fresh
/// direction on breakdown.
fn krylov_run(
    n: usize,
    op: &mut dyn FnMut(&[f64]) -> Result<Vec<f64>>,
    opts: &SpectralOptions,
    rng: &mut ChaCha8Rng,
) -> Result<KrylovRun> {
    let k = opts.k;
    let max_iter = opts.max_iter.unwrap_or(5 * k + 50).min(n);
    let mut basis: Vec<Vec<f64>> = vec![random_unit(n, rng, &[]).expect("random start vector")];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut matvecs = 0;
    let mut step = 0;
    loop {
        let v = &basis[step];
        let mut w = op(v)?;
        matvecs += 1;
        if w.iter().any(|x| !x.is_finite()) {
            return Err(FtfiError::NonFinite("operator output"));
        }
        alpha.push(dot(&w, v));
        orthogonalize(&mut w, &basis);
        let b = norm(&w);

        let (values, residuals) = ritz(&alpha, &beta, b, opts.order);
        let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let take = k.min(values.len());
        let all_converged = take == k && residuals[..take].iter().all(|&r| r <= opts.tol * scale);
        step += 1;
        let restart = if all_converged || step == max_iter {
            None
        } else if b <= 1e-12 * scale {
            // Invariant subspace: continue from a fresh direction.
            random_unit(n, rng, &basis)
        } else {
            beta.push(b);
            basis.push(w.into_iter().map(|x| x / b).collect());
            continue;
        };
        match restart {
            Some(next) => {
                beta.push(0.0);
                basis.push(next);
            }
            None => {
                let (values, residuals, vectors) = ritz_with_vectors(&alpha, &beta, b, opts.order, take);
                let pairs = (0..take)
                    .map(|i| {
                        let mut y = vec![0.0; n];
                        for (q, c) in basis.iter().zip(&vectors[i]) {
                            y.iter_mut().zip(q).for_each(|(a, b)| *a += c * b);
                        }
                        RitzPair {
                            value: values[i],
                            residual: residuals[i],
                            converged: residuals[i] <= opts.tol * scale,
                            vector: y,
                        }
                    })
                    .collect();
                return Ok(KrylovRun { pairs, iterations: step, matvecs, norm_estimate: scale });
            }
        }
    }
}

fn order_key(order: EigenOrder, v: f64) -> f64 {
    match order {
        EigenOrder::Algebraic => v,
        EigenOrder::Magnitude => v.abs(),
    }
}

/// Lanczos for the `k` smallest eigenvalues of a symmetric operator on
/// `R^n`. Returns whatever converged within the iteration budget, with
/// flags. When the first run converges, further runs on
/// `A + sigma Y Y^T` (with `Y` the eigenvectors found so far and `sigma`
/// beyond the spectrum) look for repeated eigenvalues the first run could
/// not see; they stop as soon as one finds nothing new.
pub fn lanczos(
    n: usize,
    mut op: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    opts: &SpectralOptions,
) -> Result<SpectralFeatures> {
    let k = opts.k;
    if k == 0 || k >= n {
        return Err(FtfiError::invalid(format!("need 0 < k < n, got k = {k}, n = {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut matvecs = 0;

    if opts.check_symmetry {
        let x = random_unit(n, &mut rng, &[]).unwrap();
        let y = random_unit(n, &mut rng, &[]).unwrap();
        let (ax, ay) = (op(&x)?, op(&y)?);
        matvecs += 2;
        let scale = norm(&ax).max(norm(&ay)).max(1.0);
        let gap = (dot(&ax, &y) - dot(&x, &ay)).abs();
        if gap > 1e-9 * scale {
            return Err(FtfiError::invalid(format!("operator is not symmetric (|<Ax,y> - <x,Ay>| = {gap:e})")));
        }
    }

    let first = krylov_run(n, &mut op, opts, &mut rng)?;
    matvecs += first.matvecs;
    let mut iterations = first.iterations;
    let sigma = 2.0 * first.norm_estimate + 1.0;
    let mut pairs = first.pairs;
    let mut locked: Vec<Vec<f64>> = Vec::new();
    for _ in 0..opts.deflation_passes {
        if pairs.len() < k || !pairs.iter().all(|p| p.converged) {
            break;
        }
        for p in &pairs {
            let mut y = p.vector.clone();
            orthogonalize(&mut y, &locked);
            let ny = norm(&y);
            if ny > 1e-6 {
                y.iter_mut().for_each(|x| *x /= ny);
                locked.push(y);
            }
        }
        if locked.len() >= n {
            break;
        }
        let mut shifted = |x: &[f64]| -> Result<Vec<f64>> {
            let mut y = op(x)?;
            for q in &locked {
                let c = sigma * dot(q, x);
                y.iter_mut().zip(q).for_each(|(a, b)| *a += c * b);
            }
            Ok(y)
        };
        let run = krylov_run(n, &mut shifted, opts, &mut rng)?;
        matvecs += run.matvecs;
        iterations += run.iterations;
        // Values must beat the current k-th by more than the tolerance, so
        // rounding noise in the deflated operator is not taken as new.
        let bound = order_key(opts.order, pairs[k - 1].value) - opts.tol * first.norm_estimate;
        let fresh: Vec<RitzPair> =
            run.pairs.into_iter().filter(|p| p.converged && order_key(opts.order, p.value) < bound).collect();
        if fresh.is_empty() {
            break;
        }
        pairs.extend(fresh);
        pairs.sort_by(|a, b| order_key(opts.order, a.value).total_cmp(&order_key(opts.order, b.value)));
        pairs.truncate(k);
    }
    Ok(SpectralFeatures {
        eigenvalues: pairs.iter().map(|p| p.value).collect(),
        residual_norms: pairs.iter().map(|p| p.residual).collect(),
        converged: pairs.iter().map(|p| p.converged).collect(),
        iterations,
        matvecs,
    })
}

fn tridiagonal_eigen(alpha: &[f64], beta: &[f64]) -> SymmetricEigen<f64, nalgebra::Dyn> {
    let m = alpha.len();
    let t = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    SymmetricEigen::new(t)
}

/// Ritz values of the tridiagonal `(alpha, beta)` in the requested order,
/// with residual bounds `|b * s_last|`.
fn ritz(alpha: &[f64], beta: &[f64], b: f64, order: EigenOrder) -> (Vec<f64>, Vec<f64>) {
    let (values, residuals, _) = ritz_with_vectors(alpha, beta, b, order, 0);
    (values, residuals)
}

/// As [`ritz`], plus the first `take` eigenvectors of the tridiagonal.
fn ritz_with_vectors(
    alpha: &[f64],
    beta: &[f64],
    b: f64,
    order: EigenOrder,
    take: usize,
) -> (Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
    let m = alpha.len();
    let eig = tridiagonal_eigen(alpha, beta);
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&a, &c| order_key(order, eig.eigenvalues[a]).total_cmp(&order_key(order, eig.eigenvalues[c])));
    let values = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let residuals = idx.iter().map(|&i| (b * eig.eigenvectors[(m - 1, i)]).abs()).collect();
    let vectors = idx[..take].iter().map(|&i| eig.eigenvectors.column(i).iter().copied().collect()).collect();
    (values, residuals, vectors)
}
