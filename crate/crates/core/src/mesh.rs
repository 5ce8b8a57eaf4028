//! Triangle meshes in OFF format, viewed as graphs with Euclidean edge
//! lengths.

use std::collections::BTreeSet;
use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{FtfiError, Result};
use crate::graph::{Edge, WeightedGraph};

pub type Vec3 = [f64; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub positions: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
    /// Per-vertex normals stored in the file (NOFF), if any.
    pub normals: Option<Vec<Vec3>>,
}

#[derive(Debug, Clone)]
pub struct MeshGraph {
    pub graph: WeightedGraph,
    pub positions: Vec<Vec3>,
    /// Unit normals; zero for vertices that touch no usable face.
    pub normals: Vec<Vec3>,
    /// Zero-area faces that were skipped.
    pub degenerate_faces: usize,
}

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub fn dot3(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm3(a: Vec3) -> f64 {
    dot3(a, a).sqrt()
}

fn normalized(a: Vec3) -> Vec3 {
    let n = norm3(a);
    if n > 0.0 {
        [a[0] / n, a[1] / n, a[2] / n]
    } else {
        [0.0; 3]
    }
}

/// Parses OFF or NOFF text. Only triangular faces are accepted.
pub fn parse_off(text: &str) -> Result<Mesh> {
    // Tokens with their 1-based line numbers, comments removed.
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let err = |line: usize, msg: String| FtfiError::Parse { line, msg };

    let (line_no, header) = lines.next().ok_or_else(|| err(1, "empty OFF file".into()))?;
    let mut head = header.split_whitespace();
    let with_normals = match head.next() {
        Some("OFF") => false,
        Some("NOFF") => true,
        other => return Err(err(line_no, format!("expected OFF or NOFF header, found {other:?}"))),
    };
    let mut rest: Vec<&str> = head.collect();
    let mut counts_line = line_no;
    if rest.is_empty() {
        let (l, counts) = lines.next().ok_or_else(|| err(line_no, "missing counts line".into()))?;
        counts_line = l;
        rest = counts.split_whitespace().collect();
    }
    let parse_usize = |s: &str, line: usize| s.parse::<usize>().map_err(|_| err(line, format!("bad integer {s:?}")));
    if rest.len() < 2 {
        return Err(err(counts_line, "counts line needs vertex and face counts".into()));
    }
    let nv = parse_usize(rest[0], counts_line)?;
    let nf = parse_usize(rest[1], counts_line)?;

    let per_vertex = if with_normals { 6 } else { 3 };
    let mut positions = Vec::with_capacity(nv);
    let mut normals = Vec::with_capacity(if with_normals { nv } else { 0 });
    for _ in 0..nv {
        let (l, s) = lines.next().ok_or_else(|| err(counts_line, format!("expected {nv} vertices")))?;
        let xs: Vec<f64> = s
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| err(l, format!("bad coordinate {t:?}"))))
            .collect::<Result<_>>()?;
        if xs.len() < per_vertex || xs[..per_vertex].iter().any(|x| !x.is_finite()) {
            return Err(err(l, format!("vertex line needs {per_vertex} finite numbers")));
        }
        positions.push([xs[0], xs[1], xs[2]]);
        if with_normals {
            normals.push([xs[3], xs[4], xs[5]]);
        }
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (l, s) = lines.next().ok_or_else(|| err(counts_line, format!("expected {nf} faces")))?;
        let ids: Vec<usize> = s.split_whitespace().map(|t| parse_usize(t, l)).collect::<Result<_>>()?;
        if ids.first() != Some(&3) || ids.len() < 4 {
            return Err(err(l, "only triangular faces are supported".into()));
        }
        let tri = [ids[1], ids[2], ids[3]];
        if tri.iter().any(|&v| v >= nv) {
            return Err(err(l, format!("face references a vertex outside 0..{nv}")));
        }
        faces.push(tri);
    }
    Ok(Mesh { positions, faces, normals: with_normals.then_some(normals) })
}

pub fn format_off(mesh: &Mesh) -> String {
    let mut s = String::new();
    s.push_str(if mesh.normals.is_some() { "NOFF\n" } else { "OFF\n" });
    let _ = writeln!(s, "{} {} 0", mesh.positions.len(), mesh.faces.len());
    for (i, p) in mesh.positions.iter().enumerate() {
        let _ = write!(s, "{} {} {}", p[0], p[1], p[2]);
        if let Some(n) = &mesh.normals {
            let _ = write!(s, " {} {} {}", n[i][0], n[i][1], n[i][2]);
        }
        s.push('\n');
    }
    for f in &mesh.faces {
        let _ = writeln!(s, "3 {} {} {}", f[0], f[1], f[2]);
    }
    s
}

pub fn write_off(path: impl AsRef<Path>, mesh: &Mesh) -> Result<()> {
    std::fs::write(path, format_off(mesh))?;
    Ok(())
}

/// Area-weighted vertex normals (sum of face cross products, normalized)
/// and the number of zero-area faces skipped.
pub fn vertex_normals(positions: &[Vec3], faces: &[[usize; 3]]) -> (Vec<Vec3>, usize) {
    let mut acc = vec![[0.0; 3]; positions.len()];
    let mut degenerate = 0;
    for f in faces {
        let [a, b, c] = f.map(|v| positions[v]);
        let n = cross(sub(b, a), sub(c, a));
        if norm3(n) == 0.0 {
            degenerate += 1;
            continue;
        }
        for &v in f {
            for k in 0..3 {
                acc[v][k] += n[k];
            }
        }
    }
    (acc.into_iter().map(normalized).collect(), degenerate)
}

/// Graph on the unique edges of non-degenerate faces, weighted by length.
pub fn mesh_to_graph(mesh: &Mesh) -> Result<MeshGraph> {
    if mesh.faces.is_empty() {
        return Err(FtfiError::invalid("mesh has no faces"));
    }
    let (computed, degenerate_faces) = vertex_normals(&mesh.positions, &mesh.faces);
    let mut pairs = BTreeSet::new();
    for f in &mesh.faces {
        let [a, b, c] = f.map(|v| mesh.positions[v]);
        if norm3(cross(sub(b, a), sub(c, a))) == 0.0 {
            continue;
        }
        for (u, v) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
            pairs.insert((u.min(v), u.max(v)));
        }
    }
    let edges = pairs
        .into_iter()
        .map(|(u, v)| Edge::new(u, v, norm3(sub(mesh.positions[u], mesh.positions[v]))))
        .collect();
    let graph = WeightedGraph::new(mesh.positions.len(), edges)?;
    let normals = match &mesh.normals {
        Some(given) => given.iter().map(|&n| normalized(n)).collect(),
        None => computed,
    };
    Ok(MeshGraph { graph, positions: mesh.positions.clone(), normals, degenerate_faces })
}

pub fn load_off_mesh(path: impl AsRef<Path>) -> Result<MeshGraph> {
    mesh_to_graph(&parse_off(&std::fs::read_to_string(path)?)?)
}

/// Torus with `major x minor` vertices, radii `big_r > small_r > 0`,
/// outward-facing triangles.
pub fn torus(major: usize, minor: usize, big_r: f64, small_r: f64) -> Mesh {
    let mut positions = Vec::with_capacity(major * minor);
    for i in 0..major {
        let u = TAU * i as f64 / major as f64;
        for j in 0..minor {
            let v = TAU * j as f64 / minor as f64;
            let ring = big_r + small_r * v.cos();
            positions.push([ring * u.cos(), ring * u.sin(), small_r * v.sin()]);
        }
    }
    let id = |i: usize, j: usize| (i % major) * minor + (j % minor);
    let mut faces = Vec::with_capacity(2 * major * minor);
    for i in 0..major {
        for j in 0..minor {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    Mesh { positions, faces, normals: None }
}
