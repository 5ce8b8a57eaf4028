use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use ftfi::engine::{DenseKernel, DENSE_GUARD};
use ftfi::integrator_tree::DEFAULT_LEAF_THRESHOLD;
use ftfi::{EngineOptions, IntegrationSession, IntegratorTree, ItConfig, ScalarMap, StrategyHint, TensorField};

use crate::common::{dense_limit, emit, emit_json, format_field, parse_f, read_field, CliResult, TreeInput, F_SPEC_HELP};

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyArg {
    Auto,
    Dense,
    Outer,
    Hankel,
    Cauchy,
    Vandermonde,
    Rational,
    Rff,
}

impl StrategyArg {
    pub fn hint(self, rff_m: usize, seed: u64) -> StrategyHint {
        match self {
            StrategyArg::Auto => StrategyHint::Auto,
            StrategyArg::Dense => StrategyHint::Dense,
            StrategyArg::Outer => StrategyHint::OuterProductSum,
            StrategyArg::Hankel => StrategyHint::HankelFft,
            StrategyArg::Cauchy => StrategyHint::CauchyLike,
            StrategyArg::Vandermonde => StrategyHint::VandermondeQuantized,
            StrategyArg::Rational => StrategyHint::RationalSum,
            StrategyArg::Rff => StrategyHint::Rff { m: rff_m, seed },
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Fast integration over the integrator tree.
    Ftfi,
    /// Dense tree-distance kernel.
    Btfi,
    /// Dense graph-distance kernel (the tree itself for `--tree` input).
    Bgfi,
}

#[derive(Args, Debug, Clone)]
#[group(required = true, multiple = false)]
pub struct FieldSource {
    /// Field CSV with rows `vertex,x_0,...,x_{D-1}`.
    #[arg(long)]
    pub field: Option<PathBuf>,
    /// Random field with D columns, uniform in [-1, 1).
    #[arg(long, value_name = "D")]
    pub random: Option<usize>,
}

#[derive(Args, Debug)]
pub struct IntegrateArgs {
    #[command(flatten)]
    pub input: TreeInput,
    #[arg(long, value_parser = parse_f, long_help = F_SPEC_HELP)]
    pub f: ScalarMap,
    #[command(flatten)]
    pub source: FieldSource,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_LEAF_THRESHOLD)]
    pub leaf_threshold: usize,
    /// Tree weights are integer multiples of 1/q; enables grid strategies.
    #[arg(long)]
    pub quantum: Option<f64>,
    #[arg(long, value_enum, default_value_t = StrategyArg::Auto)]
    pub strategy: StrategyArg,
    /// Random features per cross block when `--strategy rff`.
    #[arg(long, default_value_t = 256)]
    pub rff_m: usize,
    #[arg(long, value_enum, default_value_t = Method::Ftfi)]
    pub method: Method,
    /// Allow dense methods above 30000 vertices.
    #[arg(long)]
    pub force_dense: bool,
    /// Output CSV for the integrated field.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(a: &IntegrateArgs) -> CliResult<()> {
    let start = Instant::now();
    let input = a.input.load()?;
    let n = input.tree.n();
    let field = match (&a.source.field, a.source.random) {
        (Some(path), _) => read_field(path, n)?,
        (None, Some(d)) => TensorField::random(n, d, &mut ChaCha8Rng::seed_from_u64(a.seed)),
        (None, None) => unreachable!("clap enforces the field group"),
    };
    let load_seconds = start.elapsed().as_secs_f64();

    let limit = dense_limit(a.force_dense, DENSE_GUARD);
    let mut strategies = serde_json::Map::new();
    let t0 = Instant::now();
    let (out, preprocess_seconds, integrate_seconds) = match a.method {
        Method::Ftfi => {
            let config = ItConfig { leaf_threshold: a.leaf_threshold, quantum: a.quantum };
            let it = IntegratorTree::build(&input.tree, &config)?;
            let pre = t0.elapsed().as_secs_f64();
            let t1 = Instant::now();
            let opts = EngineOptions { hint: a.strategy.hint(a.rff_m, a.seed), ..Default::default() };
            let session = IntegrationSession::new(&it, &a.f, &opts)?;
            let out = session.integrate(&field)?;
            let secs = t1.elapsed().as_secs_f64();
            for (name, count) in session.strategy_counts() {
                strategies.insert(name, json!(count));
            }
            (out, pre, secs)
        }
        Method::Btfi | Method::Bgfi => {
            let kernel = if a.method == Method::Btfi {
                DenseKernel::for_tree(&input.tree, &a.f, limit)?
            } else {
                match &input.graph {
                    Some(g) => DenseKernel::for_graph(g, &a.f, limit)?,
                    None => DenseKernel::for_graph(&input.tree.as_graph(), &a.f, limit)?,
                }
            };
            let pre = t0.elapsed().as_secs_f64();
            let t1 = Instant::now();
            let out = kernel.apply(&field)?;
            strategies.insert("dense".into(), json!(1));
            (out, pre, t1.elapsed().as_secs_f64())
        }
    };

    emit(Some(&a.out), &format_field(&out))?;
    emit_json(
        None,
        &json!({
            "schema_version": crate::common::SCHEMA_VERSION,
            "command": "integrate",
            "method": format!("{:?}", a.method).to_lowercase(),
            "f": a.f.to_string(),
            "n": n,
            "width": field.width(),
            "leaf_threshold": a.leaf_threshold,
            "load_seconds": load_seconds,
            "preprocess_seconds": preprocess_seconds,
            "integrate_seconds": integrate_seconds,
            "strategies": strategies,
        }),
    )
}
