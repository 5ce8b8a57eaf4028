use std::path::PathBuf;

use clap::Args;
use serde_json::json;

use ftfi::engine::DENSE_GUARD;
use ftfi::integrator_tree::DEFAULT_LEAF_THRESHOLD;
use ftfi::interpolation::{interpolate_normals, InterpolationOptions};
use ftfi::mesh::load_off_mesh;

use crate::common::{dense_limit, emit_json, CliResult, Failure, SCHEMA_VERSION};

#[derive(Args, Debug)]
pub struct MeshInterpolateArgs {
    /// Triangle mesh in OFF (or NOFF) format.
    #[arg(long)]
    pub off: PathBuf,
    /// Fraction of vertices whose normals are hidden, in [0, 1).
    #[arg(long, default_value_t = 0.8)]
    pub mask_fraction: f64,
    /// Grid of lambda values for f(x) = 1 / (1 + lambda x^2).
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,1,10,100")]
    pub lambda: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_LEAF_THRESHOLD)]
    pub leaf_threshold: usize,
    /// Largest n for the brute-force equality check.
    #[arg(long, default_value_t = DENSE_GUARD)]
    pub oracle_guard: usize,
    #[arg(long)]
    pub force_dense: bool,
    /// Output JSON; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(a: &MeshInterpolateArgs) -> CliResult<()> {
    let mesh = load_off_mesh(&a.off).map_err(|e| Failure::from(e).context(&a.off))?;
    let opts = InterpolationOptions {
        mask_fraction: a.mask_fraction,
        lambdas: a.lambda.clone(),
        seed: a.seed,
        leaf_threshold: a.leaf_threshold,
        oracle_guard: dense_limit(a.force_dense, a.oracle_guard),
    };
    let report = interpolate_normals(&mesh, &opts)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let results: Vec<_> = report
        .results
        .iter()
        .map(|r| {
            json!({
                "lambda": r.lambda,
                "mean_cosine": r.mean_cosine,
                "integrate_seconds": r.integrate_seconds,
                "btfi_seconds": r.btfi_seconds,
                "oracle_rel_diff": r.oracle_rel_diff,
            })
        })
        .collect();
    let best = report.best().map(|b| json!({ "lambda": b.lambda, "mean_cosine": b.mean_cosine }));
    emit_json(
        a.out.as_deref(),
        &json!({
            "schema_version": SCHEMA_VERSION,
            "command": "mesh-interpolate",
            "n": report.n,
            "masked": report.masked.len(),
            "degenerate_faces": mesh.degenerate_faces,
            "seed": a.seed,
            "preprocess_seconds": report.preprocess_seconds,
            "results": results,
            "best": best,
            "warnings": report.warnings,
        }),
    )
}
