use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde_json::{json, Value};

use ftfi::graph::{load_edge_list, minimum_spanning_tree};
use ftfi::learnfit::{
    fit_rational, relative_frobenius_error_with_guard, sample_dataset, FitOptions, RationalParams, EPS_GUARD,
};
use ftfi::{WeightedGraph, WeightedTree};

use crate::common::{dense_limit, emit_json, parse_pair, CliResult, Failure, SCHEMA_VERSION};

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Edge list of a connected graph.
    #[arg(long)]
    pub graph: PathBuf,
    /// Spanning tree to use instead of the minimum spanning tree.
    #[arg(long)]
    pub tree: Option<PathBuf>,
    /// Numerator and denominator degrees `t,s`.
    #[arg(long, value_parser = parse_pair::<usize>, default_value = "2,2")]
    pub degrees: (usize, usize),
    /// Number of random vertex pairs in the training set.
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub learning_rate: f64,
    /// Minibatch size; full batch when omitted.
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Draw pairs with replacement (needed when samples exceed the pair count).
    #[arg(long)]
    pub with_replacement: bool,
    /// Compute epsilon above 3000 vertices.
    #[arg(long)]
    pub force_dense: bool,
    /// Output JSON; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalEpsArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub tree: Option<PathBuf>,
    /// JSON with `num` and `den` arrays, or the output of `fit`.
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub force_dense: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn load_pair(graph: &Path, tree: Option<&Path>) -> CliResult<(WeightedGraph, WeightedTree)> {
    let g = load_edge_list(graph).map_err(|e| Failure::from(e).context(graph))?;
    let t = match tree {
        Some(p) => load_edge_list(p).map_err(|e| Failure::from(e).context(p))?.to_tree()?,
        None => minimum_spanning_tree(&g)?,
    };
    Ok((g, t))
}

pub fn read_params(path: &Path) -> CliResult<RationalParams> {
    let text = fs::read_to_string(path).map_err(|e| Failure::from(e).context(path))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| Failure::from(e).context(path))?;
    let inner = value.get("params").cloned().unwrap_or(value);
    Ok(serde_json::from_value(inner)?)
}

pub fn run_fit(a: &FitArgs) -> CliResult<()> {
    let (g, t) = load_pair(&a.graph, a.tree.as_deref())?;
    let limit = dense_limit(a.force_dense, EPS_GUARD);
    let ds = sample_dataset(&g, &t, a.samples, a.seed, a.with_replacement)?;
    let opts = FitOptions { steps: a.steps, learning_rate: a.learning_rate, seed: a.seed, batch: a.batch };
    let fit = fit_rational(&ds, a.degrees, &opts)?;

    let (eps_before, eps_after) = if g.n() <= limit {
        let before = RationalParams::identity(a.degrees.0, a.degrees.1).to_scalar_map();
        (
            Some(relative_frobenius_error_with_guard(&g, &t, &before, limit)?),
            Some(relative_frobenius_error_with_guard(&g, &t, &fit.params.to_scalar_map(), limit)?),
        )
    } else {
        eprintln!("warning: n = {} exceeds {EPS_GUARD}; epsilon not computed (use --force-dense)", g.n());
        (None, None)
    };
    emit_json(
        a.out.as_deref(),
        &json!({
            "schema_version": SCHEMA_VERSION,
            "command": "fit",
            "n": g.n(),
            "degrees": [a.degrees.0, a.degrees.1],
            "samples": a.samples,
            "steps": a.steps,
            "seed": a.seed,
            "params": fit.params,
            "loss_trace": fit.loss_trace,
            "initial_loss": fit.initial_loss,
            "final_loss": fit.final_loss,
            "best_step": fit.best_step,
            "eps_before": eps_before,
            "eps_after": eps_after,
        }),
    )
}

pub fn run_eval(a: &EvalEpsArgs) -> CliResult<()> {
    let params = read_params(&a.params)?;
    let (g, t) = load_pair(&a.graph, a.tree.as_deref())?;
    if params.num.is_empty() || params.den.is_empty() {
        return Err(Failure::parse("params need non-empty `num` and `den`"));
    }
    let f = params.to_scalar_map();
    let eps = relative_frobenius_error_with_guard(&g, &t, &f, dense_limit(a.force_dense, EPS_GUARD))?;
    emit_json(
        a.out.as_deref(),
        &json!({
            "schema_version": SCHEMA_VERSION,
            "command": "eval-eps",
            "n": g.n(),
            "params": params,
            "epsilon": eps,
        }),
    )
}
