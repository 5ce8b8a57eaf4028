use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use clap::{Args, ValueEnum};

use ftfi::engine::DenseKernel;
use ftfi::graph::{load_edge_list, minimum_spanning_tree};
use ftfi::integrator_tree::DEFAULT_LEAF_THRESHOLD;
use ftfi::spectral::{dense_smallest_eigenvalues, smallest_eigenvalues, EigenOrder, SpectralOptions};
use ftfi::{IntegratorTree, ItConfig, ScalarMap};

use crate::common::{emit, parse_f, CliResult, Failure, F_SPEC_HELP, SCHEMA_VERSION};

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderArg {
    /// Most negative first.
    Algebraic,
    /// Closest to zero first.
    Magnitude,
}

#[derive(Args, Debug)]
pub struct FeaturesArgs {
    /// Directory of edge-list files, one graph per file.
    #[arg(long)]
    pub graphs: PathBuf,
    #[arg(long, value_parser = parse_f, default_value = "poly:0,1", long_help = F_SPEC_HELP)]
    pub f: ScalarMap,
    /// Eigenvalues per graph.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Lanczos steps; defaults to 5k + 50.
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Extra deflated Lanczos runs that recover repeated eigenvalues.
    #[arg(long, default_value_t = 10)]
    pub deflation_passes: usize,
    #[arg(long, value_enum, default_value_t = OrderArg::Algebraic)]
    pub order: OrderArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_LEAF_THRESHOLD)]
    pub leaf_threshold: usize,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(a: &FeaturesArgs) -> CliResult<()> {
    if a.k == 0 {
        return Err(Failure::precondition("k must be positive"));
    }
    let order = match a.order {
        OrderArg::Algebraic => EigenOrder::Algebraic,
        OrderArg::Magnitude => EigenOrder::Magnitude,
    };
    let mut files: Vec<PathBuf> = fs::read_dir(&a.graphs)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && !p.file_name().is_some_and(|s| s.to_string_lossy().starts_with('.')))
        .collect();
    files.sort();

    let mut out = format!("# schema_version: {SCHEMA_VERSION}\ngraph_id");
    for i in 1..=a.k {
        let _ = write!(out, ",ev_{i}");
    }
    out.push('\n');
    for path in &files {
        let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        if id.contains(',') {
            return Err(Failure::precondition(format!("graph id {id:?} contains a comma")));
        }
        let g = load_edge_list(path).map_err(|e| Failure::from(e).context(path))?;
        let tree = if g.edges().len() + 1 == g.n() { g.to_tree()? } else { minimum_spanning_tree(&g)? };
        let n = tree.n();
        let values = if a.k >= n {
            // Too small for a Krylov method; every eigenvalue fits in k columns.
            let kernel = DenseKernel::for_tree(&tree, &a.f, usize::MAX)?;
            dense_smallest_eigenvalues(kernel.matrix(), n, a.k, order)?
        } else {
            let it = IntegratorTree::build(&tree, &ItConfig { leaf_threshold: a.leaf_threshold, quantum: None })?;
            let opts = SpectralOptions {
                k: a.k,
                tol: a.tol,
                max_iter: a.max_iter,
                seed: a.seed,
                order,
                check_symmetry: true,
                deflation_passes: a.deflation_passes,
            };
            let feats = smallest_eigenvalues(&it, &a.f, &opts)?;
            if !feats.all_converged() {
                let missing = feats.converged.iter().filter(|c| !**c).count() + a.k - feats.converged.len();
                eprintln!("warning: {id}: {missing} of {} eigenvalues did not converge (raise --max-iter)", a.k);
            }
            feats.eigenvalues
        };
        out.push_str(&id);
        for i in 0..a.k {
            out.push(',');
            if let Some(v) = values.get(i) {
                let _ = write!(out, "{v}");
            }
        }
        out.push('\n');
    }
    emit(a.out.as_deref(), &out)
}
