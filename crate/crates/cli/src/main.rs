//! `ftfi` command-line harness.
//!
//! Exit codes: 0 success, 2 parse or I/O error (including bad flags),
//! 3 violated precondition, 4 numeric failure.

mod commands;
mod common;

use clap::{CommandFactory, Parser, Subcommand};

use commands::{attention, bench, features, fit, generate, integrate, mesh};

#[derive(Parser, Debug)]
#[command(name = "ftfi", version, about = "Fast exact integration of tensor fields over weighted trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate a vertex field over a tree (or the MST of a graph).
    Integrate(integrate::IntegrateArgs),
    /// Time FTFI against brute-force baselines on synthetic graphs or meshes.
    Bench(bench::BenchArgs),
    /// Predict hidden vertex normals of a triangle mesh.
    MeshInterpolate(mesh::MeshInterpolateArgs),
    /// Fit a rational f so that f(tree distance) approximates graph distance.
    Fit(fit::FitArgs),
    /// Relative Frobenius error of fitted parameters on a graph.
    EvalEps(fit::EvalEpsArgs),
    /// Smallest eigenvalues of the f-distance matrix for every graph in a directory.
    Features(features::FeaturesArgs),
    /// Compare fast and explicit masked linear attention on a token grid.
    AttentionDemo(attention::AttentionArgs),
    /// Write a random graph or tree as an edge list.
    GenGraph(generate::GenGraphArgs),
    /// Write a torus triangle mesh in OFF format.
    GenMesh(generate::GenMeshArgs),
}

fn usage_for(subcommand: Option<String>) -> clap::builder::StyledStr {
    let mut cmd = Cli::command();
    cmd.build();
    match subcommand.and_then(|name| cmd.find_subcommand_mut(&name).cloned()) {
        Some(mut sub) => sub.render_usage(),
        None => cmd.render_usage(),
    }
}

fn main() {
    let cli = Cli::try_parse().unwrap_or_else(|e| {
        if e.use_stderr() {
            // Bad flags or values: show the error followed by the usage line.
            let rendered = e.render().to_string();
            eprint!("{rendered}");
            if !rendered.contains("Usage:") {
                eprintln!("\n{}", usage_for(std::env::args().nth(1)));
            }
            std::process::exit(2);
        }
        e.exit()
    });
    let result = match cli.command {
        Command::Integrate(a) => integrate::run(&a),
        Command::Bench(a) => bench::run(&a),
        Command::MeshInterpolate(a) => mesh::run(&a),
        Command::Fit(a) => fit::run_fit(&a),
        Command::EvalEps(a) => fit::run_eval(&a),
        Command::Features(a) => features::run(&a),
        Command::AttentionDemo(a) => attention::run(&a),
        Command::GenGraph(a) => generate::run_graph(&a),
        Command::GenMesh(a) => generate::run_mesh(&a),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.code);
    }
}
