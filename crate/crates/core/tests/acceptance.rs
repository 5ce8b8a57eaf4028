//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines are never captured. Arguments filter criteria by
//! name; `FTFI_ACCEPTANCE_STRICT=1` makes any FAIL exit non-zero.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use ftfi::engine::DenseKernel;
use ftfi::field::relative_frobenius;
use ftfi::graph::generators::{open_unit, path_plus_random_edges, random_tree};
use ftfi::graph::{minimum_spanning_tree, tree_distance_matrix};
use ftfi::interpolation::{interpolate_normals, InterpolationOptions};
use ftfi::learnfit::{fit_rational, relative_frobenius_error, sample_dataset, FitOptions, RationalParams};
use ftfi::mesh::load_off_mesh;
use ftfi::rff::{RffSampler, SpectralDensity};
use ftfi::integrator_tree::{build_integrator_tree, DEFAULT_LEAF_THRESHOLD};
use ftfi::separator::pivot_decompose;
use ftfi::spectral::{smallest_eigenvalues, SpectralOptions};
use ftfi::structured::dense_matrix;
use ftfi::topmask::{
    grid_mst, mask_gradients, masked_attention_explicit, masked_attention_fast, AttentionInputs, FeatureMap, MaskLink,
    TopologicalMask,
};
use ftfi::{
    build_multiplier, Edge, EngineOptions, IntegrationSession, IntegratorTree, ItConfig, MultiplierOptions, ScalarMap,
    StrategyHint, TensorField, WeightedTree,
};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Random trees of three shapes: uniform attachment, long paths, bushy stars.
fn shaped_tree(n: usize, shape: usize, rng: &mut ChaCha8Rng, weight: &mut impl FnMut(&mut ChaCha8Rng) -> f64) -> WeightedTree {
    let edges = (1..n)
        .map(|i| {
            let parent = match shape % 3 {
                0 => rng.random_range(0..i),
                1 if rng.random_bool(0.9) => i - 1,
                1 => rng.random_range(0..i),
                _ => rng.random_range(0..i.min(3)),
            };
            Edge::new(parent, i, weight(rng))
        })
        .collect();
    WeightedTree::from_edges(n, edges).unwrap()
}

/// Least-squares slope of `log y` against `log x`.
fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let k = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / k, ly.iter().sum::<f64>() / k);
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    cov / var
}

/// Smallest per-call time over batches, running for at least `budget` seconds.
fn min_time(budget: f64, mut f: impl FnMut()) -> f64 {
    let start = Instant::now();
    let mut best = f64::INFINITY;
    let mut batches = 0;
    while batches < 5 || start.elapsed().as_secs_f64() < budget {
        let t = Instant::now();
        f();
        best = best.min(t.elapsed().as_secs_f64());
        batches += 1;
    }
    best
}

/// Per-round times: each round runs every job repeatedly for about `slice`
/// seconds and keeps its fastest call. Jobs run back to back within a round,
/// so ratios taken inside one round share the same machine speed.
fn round_times(jobs: &mut [Box<dyn FnMut() + '_>], rounds: usize, slice: f64) -> Vec<Vec<f64>> {
    (0..rounds)
        .map(|_| {
            jobs.iter_mut()
                .map(|job| {
                    let start = Instant::now();
                    let mut best = f64::INFINITY;
                    loop {
                        let t = Instant::now();
                        job();
                        best = best.min(t.elapsed().as_secs_f64());
                        if start.elapsed().as_secs_f64() >= slice {
                            return best;
                        }
                    }
                })
                .collect()
        })
        .collect()
}

/// Median over rounds of `time[b] / time[a]`.
fn median_ratio(rounds: &[Vec<f64>], a: usize, b: usize) -> f64 {
    let mut r: Vec<f64> = rounds.iter().map(|t| t[b] / t[a]).collect();
    r.sort_by(f64::total_cmp);
    r[r.len() / 2]
}

/// Median ratio of each job's time to the previous job's.
fn doubling_ratios(rounds: &[Vec<f64>]) -> Vec<f64> {
    (1..rounds[0].len()).map(|j| median_ratio(rounds, j - 1, j)).collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let start = Instant::now();
    let mut worst = (0.0f64, String::new());
    let mut runs = 0;
    for trial in 0..50 {
        let n = rng.random_range(10..=2000);
        let d = [1, 3, 8][trial % 3];
        let t = shaped_tree(n, trial, &mut rng, &mut open_unit);
        let it = IntegratorTree::build(&t, &ItConfig { leaf_threshold: 16, quantum: None }).unwrap();
        let tq = shaped_tree(n, trial, &mut rng, &mut |r: &mut ChaCha8Rng| r.random_range(1..=4) as f64 / 4.0);
        let itq = IntegratorTree::build(&tq, &ItConfig { leaf_threshold: 16, quantum: Some(4.0) }).unwrap();

        let deg = rng.random_range(0..=4);
        let poly = ScalarMap::Polynomial((0..=deg).map(|_| rng.random_range(-1.0..1.0)).collect());
        let lam = rng.random_range(-1.0..0.3);
        let c = rng.random_range(0.2..2.0);
        let families: Vec<(ScalarMap, bool)> = vec![
            (poly, false),
            (ScalarMap::Exponential { lambda: lam }, false),
            (
                ScalarMap::ExpTimesPoly {
                    lambda: -rng.random_range(0.1..1.0),
                    coeffs: (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
                },
                false,
            ),
            (format!("trig:cos,{}", rng.random_range(0.1..2.0)).parse().unwrap(), false),
            (format!("trig:sin,{}", rng.random_range(0.1..2.0)).parse().unwrap(), false),
            (ScalarMap::ExpOverLinear { lambda: -rng.random_range(0.0..1.0), c }, false),
            (
                ScalarMap::Rational {
                    num: (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    den: vec![1.0, rng.random_range(0.0..1.0), rng.random_range(0.05..1.0)],
                },
                false,
            ),
            (ScalarMap::ExpQuadratic { u: -rng.random_range(0.001..0.05), v: rng.random_range(-0.2..0.2), w: 0.1 }, true),
        ];
        for (f, quantized) in families {
            let (tree, itree) = if quantized { (&tq, &itq) } else { (&t, &it) };
            let x = TensorField::random(n, d, &mut rng);
            let fast = IntegrationSession::new(itree, &f, &EngineOptions::default())
                .and_then(|s| s.integrate(&x))
                .map_err(|e| format!("{f} n={n}: {e}"))?;
            let slow = DenseKernel::for_tree(tree, &f, usize::MAX).unwrap().apply(&x).unwrap();
            let err = relative_frobenius(fast.data(), slow.data());
            if err > worst.0 {
                worst = (err, format!("{f}, n={n}, D={d}"));
            }
            runs += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst.0 <= 1e-8, || format!("worst relative diff {:.2e} ({})", worst.0, worst.1))?;
    ensure(secs <= 300.0, || format!("took {secs:.1}s"))?;
    Ok(format!("{runs} runs, worst relative diff {:.2e} ({}), {secs:.1}s", worst.0, worst.1))
}

fn decomposition() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for trial in 0..1000 {
        let n = (6.0 * (5000.0f64 / 6.0).powf(rng.random::<f64>())).round() as usize;
        let t = shaped_tree(n, trial, &mut rng, &mut open_unit);
        let dec = pivot_decompose(&t).map_err(|e| e.to_string())?;
        dec.validate(&t).map_err(|e| format!("trial {trial}, n={n}: {e}"))?;
        let mut both: Vec<usize> = dec.left.iter().filter(|v| dec.right.binary_search(v).is_ok()).copied().collect();
        both.dedup();
        ensure(both == [dec.pivot], || format!("trial {trial}: sides share {both:?}"))?;
    }
    let sizes = [1_000usize, 10_000, 100_000, 1_000_000];
    let mut times = Vec::new();
    let mut local_times = Vec::new();
    for &n in &sizes {
        let t = random_tree(n, &mut rng, open_unit);
        times.push(min_time(1.0, || {
            std::hint::black_box(pivot_decompose(&t).unwrap());
        }));
        // Same tree with vertices renumbered in BFS order, for comparison.
        let (order, _) = t.bfs(0);
        let mut rank = vec![0; n];
        for (i, &v) in order.iter().enumerate() {
            rank[v] = i;
        }
        let edges = t.edges().iter().map(|e| Edge::new(rank[e.u], rank[e.v], e.w)).collect();
        let local = WeightedTree::from_edges(n, edges).unwrap();
        local_times.push(min_time(1.0, || {
            std::hint::black_box(pivot_decompose(&local).unwrap());
        }));
    }
    let xs: Vec<f64> = sizes.iter().map(|&n| n as f64).collect();
    let slope = loglog_slope(&xs, &times);
    let local_slope = loglog_slope(&xs, &local_times);
    let per_vertex: Vec<String> = times.iter().zip(&sizes).map(|(t, &n)| format!("{:.0}ns", t / n as f64 * 1e9)).collect();
    ensure(slope <= 1.15, || {
        format!(
            "1000 trees valid; runtime exponent {slope:.3} > 1.15 (per vertex {per_vertex:?}); \
             {local_slope:.3} after BFS renumbering"
        )
    })?;
    Ok(format!("1000 trees valid, runtime exponent {slope:.3} ({local_slope:.3} after BFS renumbering)"))
}

fn membership() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = (0.0f64, String::new());
    let mut failures = Vec::new();
    for e in 10..=14 {
        let n = 1usize << e;
        let bound = (n as f64).ln() / (4.0f64 / 3.0).ln() + 2.0;
        for _ in 0..3 {
            let t = random_tree(n, &mut rng, open_unit);
            let it = build_integrator_tree(&t, DEFAULT_LEAF_THRESHOLD).unwrap();
            let counts = it.vertex_multiplicities();
            let max = *counts.iter().max().unwrap();
            let v = counts.iter().position(|&c| c == max).unwrap();
            let note = format!("n={n}: {max} > {bound:.1} at a vertex of degree {}", t.neighbors(v).len());
            if max as f64 > bound {
                failures.push(note.clone());
            }
            if max as f64 / bound > worst.0 {
                worst = (max as f64 / bound, note);
            }
        }
    }
    ensure(failures.is_empty(), || format!("{} of 15 trees exceed the bound, e.g. {}", failures.len(), worst.1))?;
    Ok(format!("worst multiplicity/bound {:.2}", worst.0))
}

fn scaling() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let f: ScalarMap = "poly:1,0.5,0.25".parse().unwrap();
    let cases: Vec<_> = (10..=16)
        .map(|e| {
            let n = 1usize << e;
            let t = random_tree(n, &mut rng, |_| 1.0);
            let it = IntegratorTree::build(&t, &ItConfig::default()).unwrap();
            let x = TensorField::random(n, 1, &mut rng);
            (t, it, x)
        })
        .collect();
    let sessions: Vec<_> = cases
        .iter()
        .map(|(_, it, _)| IntegrationSession::new(it, &f, &EngineOptions::default()).unwrap())
        .collect();
    let mut jobs: Vec<Box<dyn FnMut() + '_>> = sessions
        .iter()
        .zip(&cases)
        .map(|(session, (_, _, x))| {
            Box::new(move || {
                std::hint::black_box(session.integrate(x).unwrap());
            }) as Box<dyn FnMut()>
        })
        .collect();
    let rounds = round_times(&mut jobs, 15, 0.02);
    drop(jobs);
    let fast = median(rounds.iter().map(|t| t[3]).collect());

    let (t, _, x) = &cases[3];
    let kernel = DenseKernel::for_tree(t, &f, usize::MAX).unwrap();
    let slow = min_time(0.5, || {
        std::hint::black_box(kernel.apply(x).unwrap());
    });
    let speedup = slow / fast;

    let ratios = doubling_ratios(&rounds);
    let worst = ratios.iter().copied().fold(0.0, f64::max);
    ensure(worst <= 2.8, || format!("doubling ratios {ratios:.2?}"))?;
    ensure(speedup >= 2.0, || format!("speedup at 8192 only {speedup:.2}x"))?;
    Ok(format!("doubling ratios {ratios:.2?}, speedup at 8192 {speedup:.1}x"))
}

fn multipliers() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst_err = 0.0f64;
    let mut worst_adj = 0.0f64;
    let mut counts = std::collections::BTreeMap::new();
    for trial in 0..200 {
        let a = rng.random_range(1..=512);
        let b = rng.random_range(1..=512);
        let d = rng.random_range(1..=3);
        let q = [1.0, 4.0, 10.0][trial % 3];
        let quantized = |rng: &mut ChaCha8Rng, len: usize| -> Vec<f64> {
            (0..len).map(|_| rng.random_range(0..(6.0 * q) as usize) as f64 / q).collect()
        };
        let real = |rng: &mut ChaCha8Rng, len: usize| -> Vec<f64> { (0..len).map(|_| rng.random_range(0.0..6.0)).collect() };
        let (x, y, f, hint) = match trial % 7 {
            0 => (real(&mut rng, a), real(&mut rng, b), ScalarMap::tabulated("log1p", |z: f64| z.ln_1p()), StrategyHint::Dense),
            1 => {
                let deg = rng.random_range(0..=6);
                let f = ScalarMap::Polynomial((0..=deg).map(|_| rng.random_range(-1.0..1.0)).collect());
                (real(&mut rng, a), real(&mut rng, b), f, StrategyHint::OuterProductSum)
            }
            2 => {
                let f = match rng.random_range(0..3) {
                    0 => ScalarMap::Exponential { lambda: rng.random_range(-1.0..0.5) },
                    1 => format!("trig:cos,{}", rng.random_range(0.1..3.0)).parse().unwrap(),
                    _ => format!("exppoly:{};1,-0.5,0.2", -rng.random_range(0.0..1.0)).parse().unwrap(),
                };
                (real(&mut rng, a), real(&mut rng, b), f, StrategyHint::OuterProductSum)
            }
            3 => (
                quantized(&mut rng, a),
                quantized(&mut rng, b),
                ScalarMap::tabulated("sqrt1p", |z: f64| (1.0 + z).sqrt()),
                StrategyHint::HankelFft,
            ),
            4 => (
                real(&mut rng, a),
                real(&mut rng, b),
                ScalarMap::ExpOverLinear { lambda: -rng.random_range(0.0..1.0), c: rng.random_range(0.1..2.0) },
                StrategyHint::CauchyLike,
            ),
            5 => (
                real(&mut rng, a),
                quantized(&mut rng, b),
                ScalarMap::ExpQuadratic { u: -rng.random_range(0.01..0.3), v: rng.random_range(-0.5..0.5), w: 0.0 },
                StrategyHint::VandermondeQuantized,
            ),
            _ => (
                real(&mut rng, a),
                real(&mut rng, b),
                ScalarMap::Rational { num: vec![1.0, -0.3, 0.05], den: vec![1.0, 0.2, 0.1] },
                StrategyHint::RationalSum,
            ),
        };
        let mul = build_multiplier(&x, &y, &f, &MultiplierOptions { hint, quantum: Some(q) }).map_err(|e| e.to_string())?;
        let strategy = mul.strategy();
        *counts.entry(strategy.name()).or_insert(0) += 1;
        let tol = strategy.tolerance().unwrap();
        let dense = dense_matrix(&x, &y, &f).unwrap();
        let v: Vec<f64> = (0..b * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..a * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cv = mul.apply(&v, d).unwrap();
        let ctw = mul.apply_transpose(&w, d).unwrap();
        let mut cv_ref = vec![0.0; a * d];
        let mut ctw_ref = vec![0.0; b * d];
        for i in 0..a {
            for j in 0..b {
                let m = dense[i * b + j];
                for k in 0..d {
                    cv_ref[i * d + k] += m * v[j * d + k];
                    ctw_ref[j * d + k] += m * w[i * d + k];
                }
            }
        }
        let err = relative_frobenius(&cv, &cv_ref).max(relative_frobenius(&ctw, &ctw_ref));
        ensure(err <= tol, || format!("trial {trial} {strategy} ({a}x{b}): error {err:.2e} > {tol:.0e}"))?;
        worst_err = worst_err.max(err / tol);

        let lhs: f64 = cv.iter().zip(&w).map(|(p, q)| p * q).sum();
        let rhs: f64 = v.iter().zip(&ctw).map(|(p, q)| p * q).sum();
        let norm = |u: &[f64]| u.iter().map(|t| t * t).sum::<f64>().sqrt();
        let scale = (norm(&cv) * norm(&w)).max(norm(&v) * norm(&ctw));
        let adj = if scale > 0.0 { (lhs - rhs).abs() / scale } else { 0.0 };
        ensure(adj <= 1e-9, || format!("trial {trial} {strategy}: adjoint gap {adj:.2e}"))?;
        worst_adj = worst_adj.max(adj);
    }
    Ok(format!("{counts:?}, worst error/tolerance {worst_err:.2e}, worst adjoint gap {worst_adj:.2e}"))
}

fn rff() -> Outcome {
    let sigma = 2.0;
    let f = ScalarMap::gaussian(sigma);
    let density = || SpectralDensity::for_map(&f).unwrap();

    // Unbiasedness: average many small-m estimates of single entries.
    let seeds = 400;
    let entries = [(0.1, 0.2), (0.5, 1.0), (1.5, 0.7), (2.0, 2.5), (0.0, 4.0)];
    for &(x, y) in &entries {
        let exact = f.eval(x + y);
        let est: Vec<f64> = (0..seeds)
            .map(|s| {
                let sampler = RffSampler::new(8, s, density()).unwrap();
                ftfi::rff::rff_apply(&[x], &[y], &sampler, &[1.0], 1).unwrap()[0]
            })
            .collect();
        let mean = est.iter().sum::<f64>() / seeds as f64;
        let var = est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (seeds - 1) as f64;
        let se = (var / seeds as f64).sqrt();
        ensure((mean - exact).abs() <= 4.0 * se, || {
            format!("entry ({x},{y}): mean {mean:.5} vs exact {exact:.5}, se {se:.2e}")
        })?;
    }

    // Error of the approximated 256 x 256 kernel matrix, over seeds.
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let n = 256;
    let t = random_tree(n, &mut rng, open_unit);
    let it = IntegratorTree::build(&t, &ItConfig::default()).unwrap();
    let identity = TensorField::from_rows(n, n, (0..n * n).map(|k| if k / n == k % n { 1.0 } else { 0.0 }).collect()).unwrap();
    let exact = DenseKernel::for_tree(&t, &f, usize::MAX).unwrap();
    let exact = exact.matrix();
    let mut medians = Vec::new();
    for m in [256, 1024, 4096] {
        let errs: Vec<f64> = (0..21)
            .map(|seed| {
                let opts = EngineOptions { hint: StrategyHint::Rff { m, seed }, ..Default::default() };
                let approx = IntegrationSession::new(&it, &f, &opts).unwrap().integrate(&identity).unwrap();
                relative_frobenius(approx.data(), exact)
            })
            .collect();
        medians.push(median(errs));
    }
    let ratios: Vec<f64> = medians.windows(2).map(|w| w[0] / w[1]).collect();
    ensure(medians[2] <= 0.05, || format!("median error at m=4096 is {:.3}", medians[2]))?;
    // Monte Carlo error scales like m^(-1/2): a factor 4 over a 16x range.
    let overall = medians[0] / medians[2];
    ensure(ratios.iter().all(|&r| r > 1.0) && overall >= 2.0, || {
        format!("error does not shrink with m: medians {medians:.4?}")
    })?;
    Ok(format!("entries within 4 SE; median errors {medians:.4?} at m = 256/1024/4096, ratios {ratios:.2?}"))
}

fn learnable() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let g = path_plus_random_edges(800, 600, &mut rng).map_err(|e| e.to_string())?;
    let t = minimum_spanning_tree(&g).unwrap();
    let ds = sample_dataset(&g, &t, 100, 1, false).unwrap();
    let degrees = (2, 2);
    let fit = fit_rational(&ds, degrees, &FitOptions { steps: 200, seed: 2, ..Default::default() })
        .map_err(|e| e.to_string())?;
    let eps_before = relative_frobenius_error(&g, &t, &RationalParams::identity(2, 2).to_scalar_map()).unwrap();
    let eps_after = relative_frobenius_error(&g, &t, &fit.params.to_scalar_map()).unwrap();
    ensure(eps_after < eps_before, || format!("epsilon {eps_before:.4} -> {eps_after:.4}"))?;
    let loss40 = fit.loss_trace[..=40].iter().copied().fold(f64::INFINITY, f64::min);
    ensure(loss40 < fit.loss_trace[0], || format!("loss did not drop within 40 steps: {:?}", &fit.loss_trace[..=40]))?;

    let tree = random_tree(300, &mut rng, open_unit);
    let eps_tree = relative_frobenius_error(&tree.as_graph(), &tree, &RationalParams::identity(2, 2).to_scalar_map()).unwrap();
    ensure(eps_tree == 0.0, || format!("tree epsilon at init {eps_tree:e}"))?;
    Ok(format!(
        "epsilon {eps_before:.4} -> {eps_after:.4}, loss {:.4} -> {loss40:.4} by step 40, tree epsilon 0",
        fit.loss_trace[0]
    ))
}

fn attention() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut worst = 0.0f64;
    let mut worst_grad = 0.0f64;
    let grids = [(4, 4), (8, 8), (14, 14)];
    let trees: Vec<WeightedTree> = grids.iter().map(|&(h, w)| grid_mst(h, w).unwrap()).collect();
    for trial in 0..50 {
        let gi = trial % 3;
        let (h, w) = grids[gi];
        let l = h * w;
        let phi = FeatureMap::ALL[trial % 4];
        let link = if trial % 2 == 0 { MaskLink::Exp } else { MaskLink::Reciprocal };
        let t = rng.random_range(0..=3);
        let coeffs: Vec<f64> = match link {
            // Leading coefficient negative so the mask decays with distance.
            MaskLink::Exp => (0..=t)
                .map(|k| {
                    let hi = if k == t && t > 0 { -0.01 } else { 0.5 };
                    rng.random_range(-0.5..hi) / (1 + k * k) as f64
                })
                .collect(),
            MaskLink::Reciprocal => {
                let mut a: Vec<f64> = (0..=t).map(|_| rng.random_range(0.0..0.5)).collect();
                a[0] = 1.0;
                a
            }
        };
        let inp = AttentionInputs::random(l, 8, 3, phi, &mut rng);
        let mask = TopologicalMask::new(trees[gi].clone(), link, coeffs.clone()).map_err(|e| e.to_string())?;
        let fast = masked_attention_fast(&inp, &mask).map_err(|e| e.to_string())?;
        let explicit = masked_attention_explicit(&inp, &mask.mask_matrix().unwrap()).unwrap();
        let err = relative_frobenius(&fast, &explicit);
        ensure(err <= 1e-6, || format!("trial {trial} (L={l}, {phi}, {link:?}): deviation {err:.2e}"))?;
        worst = worst.max(err);

        if trial % 5 == 0 {
            let upstream: Vec<f64> = (0..l * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g = mask_gradients(&inp, &mask, &upstream).unwrap();
            let objective = |k: usize, e: f64| {
                let mut a = coeffs.clone();
                a[k] += e;
                let m = TopologicalMask::new(trees[gi].clone(), link, a).unwrap();
                let out = masked_attention_explicit(&inp, &m.mask_matrix().unwrap()).unwrap();
                out.iter().zip(&upstream).map(|(o, u)| o * u).sum::<f64>()
            };
            for k in 0..coeffs.len() {
                // Five-point central difference.
                let h = 1e-4;
                let fd = (8.0 * (objective(k, h) - objective(k, -h)) - (objective(k, 2.0 * h) - objective(k, -2.0 * h)))
                    / (12.0 * h);
                // The constant coefficient of the exp link cancels in the
                // normalization, so its gradient is zero up to rounding.
                let rel = (fd - g[k]).abs() / g[k].abs().max(fd.abs()).max(1e-6);
                ensure(rel <= 1e-4, || format!("trial {trial} coefficient {k}: fd {fd:e} vs {:e}", g[k]))?;
                worst_grad = worst_grad.max(rel);
            }
        }
    }
    Ok(format!("worst deviation {worst:.2e}, worst gradient mismatch {worst_grad:.2e}"))
}

fn spectral() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let maps = ["poly:0,1", "trig:cos", "exp:-1", "rat:1/1,0,1"];
    let mut worst = 0.0f64;
    for trial in 0..20 {
        let n = rng.random_range(50..=300);
        let t = shaped_tree(n, trial, &mut rng, &mut open_unit);
        let f: ScalarMap = maps[trial % maps.len()].parse().unwrap();
        let it = IntegratorTree::build(&t, &ItConfig { leaf_threshold: 16, quantum: None }).unwrap();
        let opts = SpectralOptions { k: 10, seed: trial as u64, max_iter: Some(n), ..Default::default() };
        let out = smallest_eigenvalues(&it, &f, &opts).map_err(|e| e.to_string())?;
        ensure(out.all_converged(), || format!("trial {trial} ({f}, n={n}) did not converge"))?;
        let d = tree_distance_matrix(&t);
        let mut truth: Vec<f64> =
            SymmetricEigen::new(DMatrix::from_fn(n, n, |i, j| f.eval(d[i * n + j]))).eigenvalues.iter().copied().collect();
        truth.sort_by(f64::total_cmp);
        for (a, b) in out.eigenvalues.iter().zip(&truth) {
            worst = worst.max((a - b).abs());
        }
        ensure(worst <= 1e-6, || format!("trial {trial} ({f}, n={n}): eigenvalue error {worst:.2e}"))?;
    }
    Ok(format!("20 trees, worst eigenvalue error {worst:.2e}"))
}

fn mesh_interpolation() -> Outcome {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/torus.off");
    let mesh = load_off_mesh(path).map_err(|e| e.to_string())?;
    let n = mesh.graph.n();
    ensure(n <= 5000, || format!("mesh has {n} vertices"))?;
    let report = interpolate_normals(&mesh, &InterpolationOptions { seed: 1, ..Default::default() }).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for r in &report.results {
        let diff = r.oracle_rel_diff.ok_or("brute-force comparison did not run")?;
        ensure(diff <= 1e-8, || format!("lambda {}: relative diff {diff:.2e}", r.lambda))?;
        worst = worst.max(diff);
    }
    let best = report.best().unwrap();
    ensure(best.mean_cosine > 0.0, || format!("best mean cosine {}", best.mean_cosine))?;
    Ok(format!(
        "n={n}, worst FTFI/BTFI diff {worst:.2e}, best lambda {} with mean cosine {:.4}",
        best.lambda, best.mean_cosine
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("exactness", exactness),
        ("decomposition invariants", decomposition),
        ("membership bound", membership),
        ("scaling", scaling),
        ("structured multipliers", multipliers),
        ("random features", rff),
        ("learnable f", learnable),
        ("masked attention", attention),
        ("spectral features", spectral),
        ("mesh interpolation", mesh_interpolation),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let (mut passed, mut failed) = (0, 0);
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => {
                passed += 1;
                println!("PASS {:>2} {name}: {detail} [{secs:.1}s]", i + 1);
            }
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("acceptance: {passed} passed, {failed} failed");
    // Failures are reported above; only strict mode turns them into a
    // failing exit status.
    if failed > 0 && std::env::var_os("FTFI_ACCEPTANCE_STRICT").is_some_and(|v| v == "1") {
        std::process::exit(1);
    }
}
