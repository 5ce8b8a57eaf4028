use std::path::PathBuf;

use clap::{Args, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ftfi::graph::format_edge_list;
use ftfi::graph::generators::{grid_graph, open_unit, path_plus_random_edges, path_tree, random_tree};
use ftfi::mesh::{format_off, torus};

use crate::common::{emit, parse_pair, CliResult, Failure};

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphKind {
    /// Path with weights in (0, 1) plus random chords.
    PathPlusEdges,
    /// Uniform random recursive tree with weights in (0, 1).
    RandomTree,
    /// Unit-weight path.
    Path,
    /// Unit-weight h x w grid (uses --grid).
    Grid,
}

#[derive(Args, Debug)]
pub struct GenGraphArgs {
    #[arg(long, value_enum)]
    pub kind: GraphKind,
    #[arg(long)]
    pub n: Option<usize>,
    /// Chords for path-plus-edges; defaults to round(0.75 n).
    #[arg(long)]
    pub extra: Option<usize>,
    /// Grid dimensions `h,w`.
    #[arg(long, value_parser = parse_pair::<usize>)]
    pub grid: Option<(usize, usize)>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output edge list; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GenMeshArgs {
    /// Segments around the main ring and around the tube.
    #[arg(long, value_parser = parse_pair::<usize>, default_value = "48,50")]
    pub torus: (usize, usize),
    /// Ring and tube radii.
    #[arg(long, value_parser = parse_pair::<f64>, default_value = "2,0.7")]
    pub radii: (f64, f64),
    /// Output OFF file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run_graph(a: &GenGraphArgs) -> CliResult<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let need_n = || a.n.filter(|&n| n >= 2).ok_or_else(|| Failure::precondition("--n >= 2 is required for this kind"));
    let edges = match a.kind {
        GraphKind::PathPlusEdges => {
            let n = need_n()?;
            let extra = a.extra.unwrap_or((0.75 * n as f64).round() as usize);
            path_plus_random_edges(n, extra, &mut rng)?.edges().to_vec()
        }
        GraphKind::RandomTree => random_tree(need_n()?, &mut rng, open_unit).edges(),
        GraphKind::Path => path_tree(need_n()?, 1.0).edges(),
        GraphKind::Grid => {
            let (h, w) = a.grid.ok_or_else(|| Failure::precondition("--grid h,w is required for the grid kind"))?;
            grid_graph(h, w)?.edges().to_vec()
        }
    };
    emit(a.out.as_deref(), &format_edge_list(&edges))
}

pub fn run_mesh(a: &GenMeshArgs) -> CliResult<()> {
    let (major, minor) = a.torus;
    let (big_r, small_r) = a.radii;
    if major < 3 || minor < 3 {
        return Err(Failure::precondition("torus needs at least 3 segments in each direction"));
    }
    if !(small_r > 0.0 && big_r > small_r) {
        return Err(Failure::precondition("radii must satisfy 0 < tube radius < ring radius"));
    }
    emit(a.out.as_deref(), &format_off(&torus(major, minor, big_r, small_r)))
}
