use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ftfi::engine::{DenseKernel, DENSE_GUARD};
use ftfi::field::max_abs_diff;
use ftfi::graph::generators::path_plus_random_edges;
use ftfi::graph::minimum_spanning_tree;
use ftfi::integrator_tree::DEFAULT_LEAF_THRESHOLD;
use ftfi::mesh::{mesh_to_graph, torus};
use ftfi::{EngineOptions, IntegrationSession, IntegratorTree, ItConfig, ScalarMap, StrategyHint, TensorField, WeightedGraph};

use crate::common::{dense_limit, emit, parse_f, CliResult, Failure, F_SPEC_HELP, SCHEMA_VERSION};

pub const BENCH_HEADER: &str = "n,method,phase,repeat,seconds,max_abs_diff,oracle,strategy";

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// Path graph plus random chords, weights uniform in (0, 1).
    Synthetic,
    /// Torus triangle mesh with Euclidean edge lengths.
    Mesh,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchMethod {
    Ftfi,
    Btfi,
    Bgfi,
    Rff,
}

impl BenchMethod {
    fn label(self) -> &'static str {
        match self {
            BenchMethod::Ftfi => "FTFI",
            BenchMethod::Btfi => "BTFI",
            BenchMethod::Bgfi => "BGFI",
            BenchMethod::Rff => "RFF",
        }
    }
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Vertex counts (approximate for meshes).
    #[arg(long, value_delimiter = ',', required = true)]
    pub sizes: Vec<usize>,
    #[arg(long, value_enum, default_value_t = Kind::Synthetic)]
    pub kind: Kind,
    #[arg(long, value_parser = parse_f, default_value = "exp:-1", long_help = F_SPEC_HELP)]
    pub f: ScalarMap,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "ftfi,btfi")]
    pub methods: Vec<BenchMethod>,
    /// Columns of the random field.
    #[arg(long, default_value_t = 1)]
    pub width: usize,
    /// Random chords per vertex added to the path (synthetic kind).
    #[arg(long, default_value_t = 0.75)]
    pub extra_ratio: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_LEAF_THRESHOLD)]
    pub leaf_threshold: usize,
    /// Random features per cross block for the RFF method.
    #[arg(long, default_value_t = 256)]
    pub rff_m: usize,
    /// Largest n for dense methods and the oracle column.
    #[arg(long, default_value_t = DENSE_GUARD)]
    pub oracle_guard: usize,
    #[arg(long)]
    pub force_dense: bool,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn make_graph(kind: Kind, n: usize, extra_ratio: f64, rng: &mut ChaCha8Rng) -> CliResult<WeightedGraph> {
    match kind {
        Kind::Synthetic => {
            if !(extra_ratio.is_finite() && extra_ratio >= 0.0) {
                return Err(Failure::precondition(format!("extra ratio must be non-negative, got {extra_ratio}")));
            }
            Ok(path_plus_random_edges(n, (extra_ratio * n as f64).round() as usize, rng)?)
        }
        Kind::Mesh => {
            let minor = ((n as f64 / 2.5).sqrt().round() as usize).max(3);
            let major = ((n as f64 / minor as f64).round() as usize).max(3);
            Ok(mesh_to_graph(&torus(major, minor, 2.0, 0.7))?.graph)
        }
    }
}

struct Row<'a> {
    n: usize,
    method: BenchMethod,
    phase: &'a str,
    repeat: usize,
    seconds: f64,
    diff: Option<f64>,
    oracle: &'a str,
    strategy: &'a str,
}

fn push_row(out: &mut String, r: Row) {
    let diff = r.diff.map(|d| format!("{d:e}")).unwrap_or_default();
    let _ = writeln!(
        out,
        "{},{},{},{},{:e},{},{},{}",
        r.n,
        r.method.label(),
        r.phase,
        r.repeat,
        r.seconds,
        diff,
        r.oracle,
        r.strategy
    );
}

pub fn run(a: &BenchArgs) -> CliResult<()> {
    if a.repeats == 0 || a.width == 0 {
        return Err(Failure::precondition("repeats and width must be positive"));
    }
    let limit = dense_limit(a.force_dense, a.oracle_guard);
    let mut out = format!("# schema_version: {SCHEMA_VERSION}\n{BENCH_HEADER}\n");
    for (si, &size) in a.sizes.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed.wrapping_add(si as u64));
        let graph = make_graph(a.kind, size, a.extra_ratio, &mut rng)?;
        let n = graph.n();
        let field = TensorField::random(n, a.width, &mut rng);
        let oracle = if n <= limit {
            let tree = minimum_spanning_tree(&graph)?;
            Some(DenseKernel::for_tree(&tree, &a.f, usize::MAX)?.apply(&field)?)
        } else {
            eprintln!("n = {n}: above the dense guard, oracle and dense methods skipped");
            None
        };
        let oracle_flag = if oracle.is_some() { "btfi" } else { "skipped" };

        for &method in &a.methods {
            if matches!(method, BenchMethod::Btfi | BenchMethod::Bgfi) && n > limit {
                continue;
            }
            for repeat in 0..a.repeats {
                let t0 = Instant::now();
                let (result, pre, secs, strategy) = match method {
                    BenchMethod::Ftfi | BenchMethod::Rff => {
                        let tree = minimum_spanning_tree(&graph)?;
                        let config = ItConfig { leaf_threshold: a.leaf_threshold, quantum: None };
                        let it = IntegratorTree::build(&tree, &config)?;
                        let pre = t0.elapsed().as_secs_f64();
                        let t1 = Instant::now();
                        let hint = if method == BenchMethod::Rff {
                            StrategyHint::Rff { m: a.rff_m, seed: a.seed.wrapping_add(repeat as u64) }
                        } else {
                            StrategyHint::Auto
                        };
                        let session = IntegrationSession::new(&it, &a.f, &EngineOptions { hint, ..Default::default() })?;
                        let result = session.integrate(&field)?;
                        let secs = t1.elapsed().as_secs_f64();
                        let strategy = session
                            .strategy_counts()
                            .iter()
                            .map(|(k, v)| format!("{k}:{v}"))
                            .collect::<Vec<_>>()
                            .join(";");
                        (result, pre, secs, strategy)
                    }
                    BenchMethod::Btfi | BenchMethod::Bgfi => {
                        let kernel = if method == BenchMethod::Btfi {
                            DenseKernel::for_tree(&minimum_spanning_tree(&graph)?, &a.f, limit)?
                        } else {
                            DenseKernel::for_graph(&graph, &a.f, limit)?
                        };
                        let pre = t0.elapsed().as_secs_f64();
                        let t1 = Instant::now();
                        let result = kernel.apply(&field)?;
                        (result, pre, t1.elapsed().as_secs_f64(), "dense".to_string())
                    }
                };
                let fast = matches!(method, BenchMethod::Ftfi | BenchMethod::Rff);
                let diff = match (&oracle, fast) {
                    (Some(o), true) => Some(max_abs_diff(result.data(), o.data())),
                    _ => None,
                };
                let flag = if fast { oracle_flag } else { "" };
                let common = |phase, seconds, diff| Row { n, method, phase, repeat, seconds, diff, oracle: flag, strategy: &strategy };
                push_row(&mut out, common("preprocess", pre, None));
                push_row(&mut out, common("integrate", secs, diff));
            }
        }
    }
    emit(a.out.as_deref(), &out)
}
