//! Weighted graphs and trees, shortest paths, minimum spanning trees and
//! edge-list ingestion.
//!
//! Both [`WeightedGraph`] and [`WeightedTree`] are immutable once built.
//! Adjacency is stored in compressed rows with neighbors sorted by id, which
//! fixes traversal order (and therefore floating-point summation order) for
//! every routine in the crate.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use crate::error::{FtfiError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub w: f64,
}

impl Edge {
    pub fn new(u: usize, v: usize, w: f64) -> Self {
        Edge { u, v, w }
    }

    fn canonical(&self) -> (usize, usize) {
        (self.u.min(self.v), self.u.max(self.v))
    }
}

/// Compressed adjacency rows, neighbors ascending by id.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Adjacency {
    start: Vec<usize>,
    items: Vec<(usize, f64)>,
}

impl Adjacency {
    fn build(n: usize, edges: &[Edge]) -> Self {
        let mut degree = vec![0usize; n + 1];
        for e in edges {
            degree[e.u] += 1;
            degree[e.v] += 1;
        }
        let mut start = vec![0usize; n + 1];
        for v in 0..n {
            start[v + 1] = start[v] + degree[v];
        }
        let mut fill = start.clone();
        let mut items = vec![(0usize, 0.0f64); start[n]];
        for e in edges {
            items[fill[e.u]] = (e.v, e.w);
            fill[e.u] += 1;
            items[fill[e.v]] = (e.u, e.w);
            fill[e.v] += 1;
        }
        for v in 0..n {
            items[start[v]..start[v + 1]].sort_by_key(|&(u, _)| u);
        }
        Adjacency { start, items }
    }

    #[inline]
    pub(crate) fn row(&self, v: usize) -> &[(usize, f64)] {
        &self.items[self.start[v]..self.start[v + 1]]
    }
}

struct DisjointSets {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets { parent: (0..n).collect(), rank: vec![0; n] }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            Ordering::Less => self.parent[ra] = rb,
            Ordering::Greater => self.parent[rb] = ra,
            Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

fn check_edge(n: usize, e: &Edge) -> Result<()> {
    if e.u >= n || e.v >= n {
        return Err(FtfiError::invalid(format!("edge ({}, {}) out of range for n = {n}", e.u, e.v)));
    }
    if e.u == e.v {
        return Err(FtfiError::invalid(format!("self-loop at vertex {}", e.u)));
    }
    if !(e.w.is_finite() && e.w > 0.0) {
        return Err(FtfiError::invalid(format!("nonpositive weight {} on edge ({}, {})", e.w, e.u, e.v)));
    }
    Ok(())
}

/// Undirected graph with strictly positive edge weights. Need not be connected.
#[derive(Debug, Clone)]
pub struct WeightedGraph {
    n: usize,
    edges: Vec<Edge>,
    adj: Adjacency,
}

impl WeightedGraph {
    pub fn new(n: usize, edges: Vec<Edge>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(edges.len());
        for e in &edges {
            check_edge(n, e)?;
            if !seen.insert(e.canonical()) {
                return Err(FtfiError::invalid(format!("duplicate edge ({}, {})", e.u, e.v)));
            }
        }
        let adj = Adjacency::build(n, &edges);
        Ok(WeightedGraph { n, edges, adj })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        self.adj.row(v)
    }

    pub fn component_count(&self) -> usize {
        let mut sets = DisjointSets::new(self.n);
        let mut components = self.n;
        for e in &self.edges {
            if sets.union(e.u, e.v) {
                components -= 1;
            }
        }
        components
    }

    pub fn is_connected(&self) -> bool {
        self.n > 0 && self.component_count() == 1
    }

    fn require_connected(&self) -> Result<()> {
        let components = self.component_count();
        if self.n == 0 || components != 1 {
            return Err(FtfiError::Disconnected { components });
        }
        Ok(())
    }

    /// Interprets the graph as a tree if it has exactly `n - 1` edges and is connected.
    pub fn to_tree(&self) -> Result<WeightedTree> {
        WeightedTree::from_edges(self.n, self.edges.clone())
    }
}

/// Undirected tree with positive weights: exactly `n - 1` edges, connected.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedTree {
    n: usize,
    adj: Adjacency,
}

impl WeightedTree {
    pub fn from_edges(n: usize, edges: Vec<Edge>) -> Result<Self> {
        if n == 0 {
            return Err(FtfiError::invalid("a tree needs at least one vertex"));
        }
        if edges.len() != n - 1 {
            return Err(FtfiError::invalid(format!(
                "a tree on {n} vertices has {} edges, got {}",
                n - 1,
                edges.len()
            )));
        }
        let mut sets = DisjointSets::new(n);
        for e in &edges {
            check_edge(n, e)?;
            if !sets.union(e.u, e.v) {
                return Err(FtfiError::invalid(format!("edge ({}, {}) closes a cycle", e.u, e.v)));
            }
        }
        Ok(WeightedTree { n, adj: Adjacency::build(n, &edges) })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        self.adj.row(v)
    }

    /// Edges with `u < v`, ordered by `(u, v)`.
    pub fn edges(&self) -> Vec<Edge> {
        let mut out = Vec::with_capacity(self.n.saturating_sub(1));
        for u in 0..self.n {
            for &(v, w) in self.neighbors(u) {
                if u < v {
                    out.push(Edge::new(u, v, w));
                }
            }
        }
        out
    }

    pub fn total_weight(&self) -> f64 {
        self.edges().iter().map(|e| e.w).sum()
    }

    pub fn is_unit_weight(&self) -> bool {
        self.adj.items.iter().all(|&(_, w)| w == 1.0)
    }

    /// Distances from `root` along the unique tree paths.
    pub fn distances_from(&self, root: usize) -> Vec<f64> {
        let mut dist = vec![f64::NAN; self.n];
        dist[root] = 0.0;
        let mut stack = vec![(root, usize::MAX)];
        while let Some((v, parent)) = stack.pop() {
            // Reverse push keeps the pop order ascending by neighbor id.
            for &(u, w) in self.neighbors(v).iter().rev() {
                if u != parent {
                    dist[u] = dist[v] + w;
                    stack.push((u, v));
                }
            }
        }
        dist
    }

    /// Breadth-first order from `root` and the parent of every vertex
    /// (`usize::MAX` for the root).
    pub fn bfs(&self, root: usize) -> (Vec<usize>, Vec<usize>) {
        let mut order = Vec::with_capacity(self.n);
        let mut parent = vec![usize::MAX; self.n];
        order.push(root);
        let mut head = 0;
        while head < order.len() {
            let v = order[head];
            head += 1;
            for &(u, _) in self.neighbors(v) {
                if u != parent[v] {
                    parent[u] = v;
                    order.push(u);
                }
            }
        }
        (order, parent)
    }

    /// Largest tree distance between any two vertices (two sweeps).
    pub fn diameter(&self) -> f64 {
        let d0 = self.distances_from(0);
        let far = argmax(&d0);
        let d1 = self.distances_from(far);
        d1.iter().copied().fold(0.0, f64::max)
    }

    pub fn as_graph(&self) -> WeightedGraph {
        let edges = self.edges();
        let adj = self.adj.clone();
        WeightedGraph { n: self.n, edges, adj }
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Free-function form of [`WeightedTree::distances_from`].
pub fn tree_distances_from(t: &WeightedTree, root: usize) -> Result<Vec<f64>> {
    if root >= t.n() {
        return Err(FtfiError::invalid(format!("root {root} out of range for n = {}", t.n())));
    }
    Ok(t.distances_from(root))
}

/// Row-major `n x n` matrix of all pairwise tree distances.
pub fn tree_distance_matrix(t: &WeightedTree) -> Vec<f64> {
    let n = t.n();
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        out.extend(t.distances_from(i));
    }
    out
}

#[derive(Copy, Clone, PartialEq)]
struct HeapItem {
    dist: f64,
    v: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.total_cmp(&self.dist).then_with(|| other.v.cmp(&self.v))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Single-source Dijkstra; unreachable vertices get `f64::INFINITY`.
pub fn dijkstra(g: &WeightedGraph, source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; g.n()];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(HeapItem { dist: 0.0, v: source });
    while let Some(HeapItem { dist: d, v }) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        for &(u, w) in g.neighbors(v) {
            let nd = d + w;
            if nd < dist[u] {
                dist[u] = nd;
                heap.push(HeapItem { dist: nd, v: u });
            }
        }
    }
    dist
}

/// Exact shortest-path distances from each source; one row per source.
pub fn graph_shortest_paths(g: &WeightedGraph, sources: &[usize]) -> Result<Vec<Vec<f64>>> {
    g.require_connected()?;
    sources
        .iter()
        .map(|&s| {
            if s >= g.n() {
                return Err(FtfiError::invalid(format!("source {s} out of range")));
            }
            Ok(dijkstra(g, s))
        })
        .collect()
}

/// Row-major `n x n` matrix of all-pairs graph distances.
pub fn graph_distance_matrix(g: &WeightedGraph) -> Result<Vec<f64>> {
    g.require_connected()?;
    let n = g.n();
    let mut out = Vec::with_capacity(n * n);
    for s in 0..n {
        out.extend(dijkstra(g, s));
    }
    Ok(out)
}

/// Kruskal with edges ordered by `(weight, min endpoint, max endpoint)`.
pub fn minimum_spanning_tree(g: &WeightedGraph) -> Result<WeightedTree> {
    g.require_connected()?;
    let mut order: Vec<Edge> = g
        .edges()
        .iter()
        .map(|e| {
            let (u, v) = e.canonical();
            Edge::new(u, v, e.w)
        })
        .collect();
    order.sort_by(|a, b| a.w.total_cmp(&b.w).then(a.u.cmp(&b.u)).then(a.v.cmp(&b.v)));
    let mut sets = DisjointSets::new(g.n());
    let mut chosen = Vec::with_capacity(g.n() - 1);
    for e in order {
        if sets.union(e.u, e.v) {
            chosen.push(e);
            if chosen.len() + 1 == g.n() {
                break;
            }
        }
    }
    WeightedTree::from_edges(g.n(), chosen)
}

/// Parses the `u v w` edge-list format; `#` starts a comment.
pub fn parse_edge_list(text: &str) -> Result<WeightedGraph> {
    let mut edges = Vec::new();
    let mut seen = HashSet::new();
    let mut max_id: Option<usize> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |msg: String| FtfiError::Parse { line: line_no, msg };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(parse_err(format!("expected `u v w`, found {} fields", fields.len())));
        }
        let u: usize = fields[0].parse().map_err(|_| parse_err(format!("bad vertex id `{}`", fields[0])))?;
        let v: usize = fields[1].parse().map_err(|_| parse_err(format!("bad vertex id `{}`", fields[1])))?;
        let w: f64 = fields[2].parse().map_err(|_| parse_err(format!("bad weight `{}`", fields[2])))?;
        if !(w.is_finite() && w > 0.0) {
            return Err(parse_err(format!("nonpositive weight {w}")));
        }
        if u == v {
            return Err(parse_err(format!("self-loop at vertex {u}")));
        }
        if !seen.insert((u.min(v), u.max(v))) {
            return Err(parse_err(format!("duplicate edge ({u}, {v})")));
        }
        max_id = Some(max_id.map_or(u.max(v), |m| m.max(u).max(v)));
        edges.push(Edge::new(u, v, w));
    }
    WeightedGraph::new(max_id.map_or(0, |m| m + 1), edges)
}

pub fn load_edge_list(path: impl AsRef<Path>) -> Result<WeightedGraph> {
    parse_edge_list(&std::fs::read_to_string(path)?)
}

pub fn format_edge_list(edges: &[Edge]) -> String {
    let mut out = String::new();
    for e in edges {
        // `{}` on f64 prints the shortest representation that round-trips.
        let _ = writeln!(out, "{} {} {}", e.u, e.v, e.w);
    }
    out
}

pub fn write_edge_list(path: impl AsRef<Path>, edges: &[Edge]) -> Result<()> {
    std::fs::write(path, format_edge_list(edges))?;
    Ok(())
}

/// Random graph and tree generators used by tests, benchmarks and the CLI.
pub mod generators {
    use super::*;

    /// Weight in the open interval (0, 1).
    pub fn open_unit<R: Rng>(rng: &mut R) -> f64 {
        rng.sample(rand::distr::Open01)
    }

    /// Random recursive tree: vertex `i > 0` attaches to a uniform earlier vertex.
    pub fn random_tree<R: Rng>(n: usize, rng: &mut R, mut weight: impl FnMut(&mut R) -> f64) -> WeightedTree {
        let edges = (1..n)
            .map(|i| {
                let p = rng.random_range(0..i);
                Edge::new(p, i, weight(rng))
            })
            .collect();
        WeightedTree::from_edges(n, edges).expect("generator produces a valid tree")
    }

    pub fn path_tree(n: usize, weight: f64) -> WeightedTree {
        let edges = (1..n).map(|i| Edge::new(i - 1, i, weight)).collect();
        WeightedTree::from_edges(n, edges).expect("path is a tree")
    }

    /// Path `0 - 1 - ... - (n-1)` plus `extra` distinct random chords, all
    /// weights uniform in (0, 1).
    pub fn path_plus_random_edges<R: Rng>(n: usize, extra: usize, rng: &mut R) -> Result<WeightedGraph> {
        let max_extra = if n >= 2 { n * (n - 1) / 2 - (n - 1) } else { 0 };
        if extra > max_extra {
            return Err(FtfiError::invalid(format!("cannot add {extra} chords to a path on {n} vertices")));
        }
        let mut seen: HashSet<(usize, usize)> = (1..n).map(|i| (i - 1, i)).collect();
        let mut edges: Vec<Edge> = (1..n).map(|i| Edge::new(i - 1, i, open_unit(rng))).collect();
        while edges.len() < n - 1 + extra {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a == b {
                continue;
            }
            let key = (a.min(b), a.max(b));
            if seen.insert(key) {
                edges.push(Edge::new(key.0, key.1, open_unit(rng)));
            }
        }
        WeightedGraph::new(n, edges)
    }

    /// Unit-weight `h x w` grid, vertex `r * w + c` in row-major order.
    pub fn grid_graph(h: usize, w: usize) -> Result<WeightedGraph> {
        let mut edges = Vec::new();
        for r in 0..h {
            for c in 0..w {
                let v = r * w + c;
                if c + 1 < w {
                    edges.push(Edge::new(v, v + 1, 1.0));
                }
                if r + 1 < h {
                    edges.push(Edge::new(v, v + w, 1.0));
                }
            }
        }
        WeightedGraph::new(h * w, edges)
    }

    /// Random connected graph: a random tree plus `extra` random chords.
    pub fn random_connected_graph<R: Rng>(n: usize, extra: usize, rng: &mut R) -> WeightedGraph {
        let tree = random_tree(n, rng, open_unit);
        let mut edges = tree.edges();
        let mut seen: HashSet<(usize, usize)> = edges.iter().map(|e| (e.u, e.v)).collect();
        let target = edges.len() + extra.min(n * n.saturating_sub(1) / 2 - edges.len());
        while edges.len() < target {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a != b && seen.insert((a.min(b), a.max(b))) {
                edges.push(Edge::new(a.min(b), a.max(b), open_unit(rng)));
            }
        }
        WeightedGraph::new(n, edges).expect("generator produces a valid graph")
    }
}

#[cfg(test)]
mod tests {
    use super::generators::*;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn triangle() -> WeightedGraph {
        WeightedGraph::new(3, vec![Edge::new(0, 1, 1.0), Edge::new(1, 2, 2.0), Edge::new(0, 2, 3.0)]).unwrap()
    }

    #[test]
    fn parses_simple_edge_list() {
        let g = parse_edge_list("0 1 1.0\n1 2 2.0").unwrap();
        assert_eq!(g.n(), 3);
        assert_eq!(g.edges().len(), 2);
    }

    #[test]
    fn edge_list_comments_and_blank_lines() {
        let g = parse_edge_list("# header\n\n0 1 0.5 # trailing\n  2 1 1\n").unwrap();
        assert_eq!(g.n(), 3);
        assert_eq!(g.edges()[1], Edge::new(2, 1, 1.0));
    }

    #[test]
    fn edge_list_errors_carry_line_numbers() {
        match parse_edge_list("0 1 -1.0") {
            Err(FtfiError::Parse { line: 1, msg }) => assert!(msg.contains("nonpositive")),
            other => panic!("unexpected {other:?}"),
        }
        match parse_edge_list("0 1 1\n1 0 2") {
            Err(FtfiError::Parse { line: 2, msg }) => assert!(msg.contains("duplicate")),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_edge_list("0 1\n"), Err(FtfiError::Parse { line: 1, .. })));
        assert!(matches!(parse_edge_list("0 x 1\n"), Err(FtfiError::Parse { line: 1, .. })));
    }

    #[test]
    fn synthetic_file_has_expected_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = path_plus_random_edges(800, 600, &mut rng).unwrap();
        let dir = std::env::temp_dir().join(format!("ftfi-graph-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("synthetic.txt");
        write_edge_list(&path, g.edges()).unwrap();
        let back = load_edge_list(&path).unwrap();
        assert_eq!(back.n(), 800);
        assert_eq!(back.edges().len(), 1399);
        assert_eq!(back.edges(), g.edges());
        std::fs::remove_dir_all(dir).ok();
    }

    #[test]
    fn mst_of_triangle_drops_heaviest_edge() {
        let t = minimum_spanning_tree(&triangle()).unwrap();
        assert_eq!(t.edges(), vec![Edge::new(0, 1, 1.0), Edge::new(1, 2, 2.0)]);
        assert_eq!(t.total_weight(), 3.0);
    }

    #[test]
    fn mst_of_path_is_the_path() {
        let p = path_tree(10, 0.5);
        let t = minimum_spanning_tree(&p.as_graph()).unwrap();
        assert_eq!(t, p);
    }

    #[test]
    fn mst_rejects_disconnected() {
        let g = WeightedGraph::new(4, vec![Edge::new(0, 1, 1.0), Edge::new(2, 3, 1.0)]).unwrap();
        assert!(matches!(minimum_spanning_tree(&g), Err(FtfiError::Disconnected { components: 2 })));
    }

    #[test]
    fn tree_distances_on_path_and_star() {
        let t = WeightedTree::from_edges(3, vec![Edge::new(0, 1, 1.0), Edge::new(1, 2, 2.0)]).unwrap();
        assert_eq!(tree_distances_from(&t, 0).unwrap(), vec![0.0, 1.0, 3.0]);
        let star = WeightedTree::from_edges(5, (1..5).map(|i| Edge::new(0, i, 1.0)).collect()).unwrap();
        assert_eq!(star.distances_from(3), vec![1.0, 2.0, 2.0, 0.0, 2.0]);
        assert!(tree_distances_from(&t, 3).is_err());
    }

    #[test]
    fn triangle_shortest_paths() {
        let d = graph_shortest_paths(&triangle(), &[0]).unwrap();
        assert_eq!(d[0], vec![0.0, 1.0, 3.0]);
    }

    #[test]
    fn tree_rejects_cycles_and_bad_counts() {
        assert!(WeightedTree::from_edges(3, vec![Edge::new(0, 1, 1.0)]).is_err());
        assert!(WeightedTree::from_edges(
            4,
            vec![Edge::new(0, 1, 1.0), Edge::new(1, 2, 1.0), Edge::new(2, 0, 1.0)]
        )
        .is_err());
        assert!(WeightedTree::from_edges(2, vec![Edge::new(0, 1, 0.0)]).is_err());
    }

    #[test]
    fn diameter_of_path() {
        assert_eq!(path_tree(6, 2.0).diameter(), 10.0);
    }
}
