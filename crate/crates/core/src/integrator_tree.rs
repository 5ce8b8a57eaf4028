//! The IntegratorTree: a one-time recursive pivot decomposition of a tree,
//! reusable for every field and every function `f`.
//!
//! Each internal node stores, per side, the side's vertices grouped by their
//! distance from the pivot. Leaves store raw (untransformed) pairwise
//! distances; `f` is applied when integrating.
//!
//! Numbering: every node has its own local vertex ids `0..m`. The root's
//! local ids are the original ids. A side's local ids are assigned in
//! breadth-first order from the pivot (so the pivot is local id 0 on both
//! sides) and become the local ids of the corresponding child node.

use std::collections::BTreeMap;

use crate::error::{FtfiError, Result};
use crate::graph::{Edge, WeightedTree};
use crate::separator;

pub const DEFAULT_LEAF_THRESHOLD: usize = 32;
const QUANTUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ItConfig {
    /// Subtrees with at most this many vertices become dense leaves.
    pub leaf_threshold: usize,
    /// When set, every edge weight must be a positive multiple of `1 / q`
    /// and all stored distances are snapped to that grid.
    pub quantum: Option<f64>,
}

impl Default for ItConfig {
    fn default() -> Self {
        ItConfig { leaf_threshold: DEFAULT_LEAF_THRESHOLD, quantum: None }
    }
}

/// Per-side arrays of an internal node.
#[derive(Debug, Clone, PartialEq)]
pub struct Side {
    /// Side-local id -> local id in the owning node.
    pub parent_local: Vec<usize>,
    /// Side-local id -> original tree id.
    pub ids: Vec<usize>,
    /// Distinct pivot distances, strictly increasing, `dists[0] == 0`.
    pub dists: Vec<f64>,
    /// Side-local id -> index into `dists`.
    pub id_d: Vec<usize>,
    group_start: Vec<usize>,
    group_members: Vec<usize>,
}

impl Side {
    fn from_distances(parent_local: Vec<usize>, ids: Vec<usize>, dist: &[f64]) -> Side {
        let m = dist.len();
        let mut by_dist: Vec<usize> = (0..m).collect();
        by_dist.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
        let mut dists = Vec::new();
        let mut id_d = vec![0usize; m];
        let mut group_start = Vec::new();
        for (pos, &v) in by_dist.iter().enumerate() {
            if dists.last() != Some(&dist[v]) {
                dists.push(dist[v]);
                group_start.push(pos);
            }
            id_d[v] = dists.len() - 1;
        }
        group_start.push(m);
        Side { parent_local, ids, dists, id_d, group_start, group_members: by_dist }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn group_count(&self) -> usize {
        self.dists.len()
    }

    /// Side-local ids at distance `dists[j]`, ascending.
    pub fn group(&self, j: usize) -> &[usize] {
        &self.group_members[self.group_start[j]..self.group_start[j + 1]]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ItNode {
    Leaf {
        /// Local id -> original id.
        ids: Vec<usize>,
        /// Row-major `m x m` raw tree distances within the leaf subtree.
        dist: Vec<f64>,
    },
    Internal {
        /// Original id of the pivot.
        pivot: usize,
        /// Node-local id of the pivot.
        pivot_local: usize,
        left_child: usize,
        right_child: usize,
        left: Side,
        right: Side,
    },
}

impl ItNode {
    pub fn vertex_count(&self) -> usize {
        match self {
            ItNode::Leaf { ids, .. } => ids.len(),
            ItNode::Internal { left, right, .. } => left.len() + right.len() - 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorTree {
    n: usize,
    config: ItConfig,
    /// Post-order arena: children precede parents, the root is last.
    nodes: Vec<ItNode>,
}

pub fn build_integrator_tree(t: &WeightedTree, leaf_threshold: usize) -> Result<IntegratorTree> {
    IntegratorTree::build(t, &ItConfig { leaf_threshold, quantum: None })
}

impl IntegratorTree {
    pub fn build(t: &WeightedTree, config: &ItConfig) -> Result<Self> {
        // Subtrees of three or fewer vertices cannot be split.
        if config.leaf_threshold < 3 {
            return Err(FtfiError::invalid(format!(
                "leaf threshold must be at least 3, got {}",
                config.leaf_threshold
            )));
        }
        if let Some(q) = config.quantum {
            if !(q.is_finite() && q > 0.0) {
                return Err(FtfiError::invalid(format!("quantum must be positive, got {q}")));
            }
            for e in t.edges() {
                let units = e.w * q;
                if (units - units.round()).abs() >= QUANTUM_TOL || units.round() < 1.0 {
                    return Err(FtfiError::invalid(format!(
                        "edge ({}, {}) weight {} is not a positive multiple of 1/{q}",
                        e.u, e.v, e.w
                    )));
                }
            }
        }
        let mut builder = Builder { config: *config, nodes: Vec::new() };
        builder.build_node(t.clone(), (0..t.n()).collect());
        Ok(IntegratorTree { n: t.n(), config: *config, nodes: builder.nodes })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn leaf_threshold(&self) -> usize {
        self.config.leaf_threshold
    }

    pub fn quantum(&self) -> Option<f64> {
        self.config.quantum
    }

    pub fn config(&self) -> &ItConfig {
        &self.config
    }

    pub fn root(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn node(&self, id: usize) -> &ItNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[ItNode] {
        &self.nodes
    }

    /// Number of IT nodes whose vertex set contains each original vertex.
    pub fn vertex_multiplicities(&self) -> Vec<usize> {
        let mut count = vec![0usize; self.n];
        for node in &self.nodes {
            match node {
                ItNode::Leaf { ids, .. } => ids.iter().for_each(|&v| count[v] += 1),
                ItNode::Internal { left, right, .. } => {
                    left.ids.iter().for_each(|&v| count[v] += 1);
                    right.ids[1..].iter().for_each(|&v| count[v] += 1);
                }
            }
        }
        count
    }

    pub fn stats(&self) -> ItStats {
        it_stats(self)
    }
}

struct Builder {
    config: ItConfig,
    nodes: Vec<ItNode>,
}

impl Builder {
    fn snap(&self, d: f64) -> f64 {
        match self.config.quantum {
            Some(q) => (d * q).round() / q,
            None => d,
        }
    }

    fn build_node(&mut self, tree: WeightedTree, ids: Vec<usize>) -> usize {
        let m = tree.n();
        if m <= self.config.leaf_threshold || m < 4 {
            let mut dist = Vec::with_capacity(m * m);
            for i in 0..m {
                dist.extend(tree.distances_from(i).into_iter().map(|d| self.snap(d)));
            }
            self.nodes.push(ItNode::Leaf { ids, dist });
            return self.nodes.len() - 1;
        }

        let dec = separator::split(&tree);
        let pivot_dist: Vec<f64> = tree.distances_from(dec.pivot).into_iter().map(|d| self.snap(d)).collect();
        let (left, left_tree) = self.side(&tree, &ids, dec.pivot, &dec.left, &pivot_dist);
        let (right, right_tree) = self.side(&tree, &ids, dec.pivot, &dec.right, &pivot_dist);

        let left_ids = left.ids.clone();
        let right_ids = right.ids.clone();
        let left_child = self.build_node(left_tree, left_ids);
        let right_child = self.build_node(right_tree, right_ids);
        self.nodes.push(ItNode::Internal {
            pivot: ids[dec.pivot],
            pivot_local: dec.pivot,
            left_child,
            right_child,
            left,
            right,
        });
        self.nodes.len() - 1
    }

    /// Side arrays plus the side's subtree relabelled in BFS order from the pivot.
    fn side(
        &self,
        tree: &WeightedTree,
        ids: &[usize],
        pivot: usize,
        members: &[usize],
        pivot_dist: &[f64],
    ) -> (Side, WeightedTree) {
        let mut local = vec![usize::MAX; tree.n()];
        for &v in members {
            local[v] = 0;
        }
        let mut order = Vec::with_capacity(members.len());
        let mut edges = Vec::with_capacity(members.len() - 1);
        local[pivot] = 0;
        order.push(pivot);
        let mut head = 0;
        while head < order.len() {
            let v = order[head];
            head += 1;
            for &(u, w) in tree.neighbors(v) {
                // Members not yet reached are marked 0; everything else is MAX or visited.
                if local[u] == 0 && u != pivot {
                    local[u] = order.len();
                    edges.push(Edge::new(local[v], order.len(), w));
                    order.push(u);
                }
            }
        }
        debug_assert_eq!(order.len(), members.len());
        let dist: Vec<f64> = order.iter().map(|&v| pivot_dist[v]).collect();
        let original: Vec<usize> = order.iter().map(|&v| ids[v]).collect();
        let sub = WeightedTree::from_edges(order.len(), edges).expect("side of a tree is a tree");
        (Side::from_distances(order, original, &dist), sub)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItStats {
    pub node_count: usize,
    pub leaf_count: usize,
    /// Longest root-to-leaf path, in edges.
    pub depth: usize,
    pub max_vertex_multiplicity: usize,
    /// Number of distinct pivot distances on a side -> how many sides have it.
    pub distinct_distance_histogram: BTreeMap<usize, usize>,
    /// `(side size, distinct distances)` for every side of every internal node.
    pub side_profiles: Vec<(usize, usize)>,
}

pub fn it_stats(it: &IntegratorTree) -> ItStats {
    let mut depth_of = vec![0usize; it.nodes.len()];
    let mut depth = 0;
    let mut histogram = BTreeMap::new();
    let mut side_profiles = Vec::new();
    let mut leaf_count = 0;
    // Parents come after children in the arena, so walk it backwards.
    for id in (0..it.nodes.len()).rev() {
        depth = depth.max(depth_of[id]);
        match &it.nodes[id] {
            ItNode::Leaf { .. } => leaf_count += 1,
            ItNode::Internal { left_child, right_child, left, right, .. } => {
                depth_of[*left_child] = depth_of[id] + 1;
                depth_of[*right_child] = depth_of[id] + 1;
                for side in [left, right] {
                    *histogram.entry(side.group_count()).or_insert(0) += 1;
                    side_profiles.push((side.len(), side.group_count()));
                }
            }
        }
    }
    ItStats {
        node_count: it.nodes.len(),
        leaf_count,
        depth,
        max_vertex_multiplicity: it.vertex_multiplicities().into_iter().max().unwrap_or(0),
        distinct_distance_histogram: histogram,
        side_profiles,
    }
}

// Binary format, all integers u64 and floats f64 little-endian:
//   magic "FTFIIT\0\0", version, n, leaf_threshold, has_quantum, quantum,
//   node_count, then per node a tag (0 leaf, 1 internal) followed by
//   leaf:     m, ids[m], dist[m*m]
//   internal: pivot, pivot_local, left_child, right_child, left side, right side
//   side:     len, parent_local[len], ids[len], groups, dists[groups], id_d[len]
const MAGIC: &[u8; 8] = b"FTFIIT\0\0";
const FORMAT_VERSION: u64 = 1;

impl IntegratorTree {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Vec::new();
        w.extend_from_slice(MAGIC);
        put_u64(&mut w, FORMAT_VERSION);
        put_u64(&mut w, self.n as u64);
        put_u64(&mut w, self.config.leaf_threshold as u64);
        put_u64(&mut w, self.config.quantum.is_some() as u64);
        put_f64(&mut w, self.config.quantum.unwrap_or(0.0));
        put_u64(&mut w, self.nodes.len() as u64);
        for node in &self.nodes {
            match node {
                ItNode::Leaf { ids, dist } => {
                    put_u64(&mut w, 0);
                    put_u64(&mut w, ids.len() as u64);
                    ids.iter().for_each(|&v| put_u64(&mut w, v as u64));
                    dist.iter().for_each(|&d| put_f64(&mut w, d));
                }
                ItNode::Internal { pivot, pivot_local, left_child, right_child, left, right } => {
                    put_u64(&mut w, 1);
                    for x in [*pivot, *pivot_local, *left_child, *right_child] {
                        put_u64(&mut w, x as u64);
                    }
                    for side in [left, right] {
                        put_u64(&mut w, side.len() as u64);
                        side.parent_local.iter().for_each(|&v| put_u64(&mut w, v as u64));
                        side.ids.iter().for_each(|&v| put_u64(&mut w, v as u64));
                        put_u64(&mut w, side.dists.len() as u64);
                        side.dists.iter().for_each(|&d| put_f64(&mut w, d));
                        side.id_d.iter().for_each(|&v| put_u64(&mut w, v as u64));
                    }
                }
            }
        }
        w
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(FtfiError::invalid("not an IntegratorTree file"));
        }
        let version = r.u64()?;
        if version != FORMAT_VERSION {
            return Err(FtfiError::invalid(format!("unsupported IntegratorTree format version {version}")));
        }
        let n = r.usize()?;
        let leaf_threshold = r.usize()?;
        let has_quantum = r.u64()? != 0;
        let q = r.f64()?;
        let node_count = r.usize()?;
        let mut nodes = Vec::with_capacity(node_count.min(1 << 20));
        for _ in 0..node_count {
            match r.u64()? {
                0 => {
                    let m = r.usize()?;
                    let ids = r.usizes(m)?;
                    let dist = r.f64s(m.checked_mul(m).ok_or_else(|| FtfiError::invalid("leaf too large"))?)?;
                    nodes.push(ItNode::Leaf { ids, dist });
                }
                1 => {
                    let pivot = r.usize()?;
                    let pivot_local = r.usize()?;
                    let left_child = r.usize()?;
                    let right_child = r.usize()?;
                    let left = r.side()?;
                    let right = r.side()?;
                    if left_child >= nodes.len() || right_child >= nodes.len() {
                        return Err(FtfiError::invalid("child index does not precede parent"));
                    }
                    nodes.push(ItNode::Internal { pivot, pivot_local, left_child, right_child, left, right });
                }
                tag => return Err(FtfiError::invalid(format!("unknown node tag {tag}"))),
            }
        }
        if nodes.is_empty() || r.pos != bytes.len() {
            return Err(FtfiError::invalid("truncated or trailing IntegratorTree data"));
        }
        let quantum = has_quantum.then_some(q);
        Ok(IntegratorTree { n, config: ItConfig { leaf_threshold, quantum }, nodes })
    }
}

fn put_u64(w: &mut Vec<u8>, x: u64) {
    w.extend_from_slice(&x.to_le_bytes());
}

fn put_f64(w: &mut Vec<u8>, x: f64) {
    w.extend_from_slice(&x.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(k).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| FtfiError::invalid("truncated IntegratorTree data"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| FtfiError::invalid("index overflows usize"))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usizes(&mut self, k: usize) -> Result<Vec<usize>> {
        (0..k).map(|_| self.usize()).collect()
    }

    fn f64s(&mut self, k: usize) -> Result<Vec<f64>> {
        (0..k).map(|_| self.f64()).collect()
    }

    fn side(&mut self) -> Result<Side> {
        let len = self.usize()?;
        let parent_local = self.usizes(len)?;
        let ids = self.usizes(len)?;
        let groups = self.usize()?;
        let dists = self.f64s(groups)?;
        let id_d = self.usizes(len)?;
        if id_d.iter().any(|&j| j >= groups) {
            return Err(FtfiError::invalid("distance index out of range"));
        }
        let mut group_members: Vec<usize> = (0..len).collect();
        group_members.sort_by_key(|&v| (id_d[v], v));
        let mut group_start = vec![0usize; groups + 1];
        for &j in &id_d {
            group_start[j + 1] += 1;
        }
        for j in 0..groups {
            group_start[j + 1] += group_start[j];
        }
        Ok(Side { parent_local, ids, dists, id_d, group_start, group_members })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generators::{open_unit, path_tree, random_tree};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// The 9-vertex path 4-2-1-3-0-6-5-7-8 (pivot 0 in the middle).
    fn figure_tree() -> WeightedTree {
        let chain = [4, 2, 1, 3, 0, 6, 5, 7, 8];
        let edges = chain.windows(2).map(|p| Edge::new(p[0], p[1], 1.0)).collect();
        WeightedTree::from_edges(9, edges).unwrap()
    }

    fn leaf_sets(it: &IntegratorTree) -> Vec<Vec<usize>> {
        let mut sets: Vec<Vec<usize>> = it
            .nodes()
            .iter()
            .filter_map(|n| match n {
                ItNode::Leaf { ids, .. } => {
                    let mut s = ids.clone();
                    s.sort();
                    Some(s)
                }
                _ => None,
            })
            .collect();
        sets.sort();
        sets
    }

    #[test]
    fn nine_vertex_tree_gives_four_leaves_of_three() {
        let it = build_integrator_tree(&figure_tree(), 3).unwrap();
        let stats = it.stats();
        assert_eq!(stats.leaf_count, 4);
        assert_eq!(stats.node_count, 7);
        assert_eq!(stats.depth, 2);
        assert_eq!(leaf_sets(&it), vec![vec![0, 1, 3], vec![0, 5, 6], vec![1, 2, 4], vec![5, 7, 8]]);
        match it.node(it.root()) {
            ItNode::Internal { pivot, .. } => assert_eq!(*pivot, 0),
            _ => panic!("root should be internal"),
        }
    }

    #[test]
    fn small_tree_is_single_leaf() {
        let t = path_tree(10, 1.0);
        let it = build_integrator_tree(&t, 32).unwrap();
        let stats = it.stats();
        assert_eq!((stats.node_count, stats.depth), (1, 0));
        match it.node(it.root()) {
            ItNode::Leaf { ids, dist } => {
                assert_eq!(ids.len(), 10);
                assert_eq!(dist[3 * 10 + 7], 4.0);
            }
            _ => panic!(),
        }
    }

    #[test]
    fn side_arrays_are_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = random_tree(700, &mut rng, open_unit);
        let it = build_integrator_tree(&t, 8).unwrap();
        for node in it.nodes() {
            if let ItNode::Internal { pivot, left, right, .. } = node {
                let truth = t.distances_from(*pivot);
                for side in [left, right] {
                    assert_eq!(side.ids[0], *pivot);
                    assert_eq!(side.dists[0], 0.0);
                    assert_eq!(side.group(0), &[0]);
                    assert!(side.dists.windows(2).all(|w| w[0] < w[1]));
                    let mut seen = vec![false; side.len()];
                    for j in 0..side.group_count() {
                        for &v in side.group(j) {
                            assert!(!seen[v]);
                            seen[v] = true;
                            assert_eq!(side.id_d[v], j);
                        }
                    }
                    assert!(seen.iter().all(|&s| s));
                    for (v, &orig) in side.ids.iter().enumerate() {
                        assert_eq!(side.dists[side.id_d[v]], truth[orig]);
                    }
                }
            }
        }
    }

    #[test]
    fn unit_path_distinct_distances_bounded_by_side_size() {
        let it = build_integrator_tree(&path_tree(1024, 1.0), 32).unwrap();
        for (size, distinct) in it.stats().side_profiles {
            assert!(distinct <= size);
        }
    }

    #[test]
    fn membership_is_logarithmic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 4096;
        let t = random_tree(n, &mut rng, |_| 1.0);
        let it = build_integrator_tree(&t, 32).unwrap();
        let bound = ((n as f64).ln() / (4.0f64 / 3.0).ln()).ceil() as usize + 2;
        assert!(it.stats().max_vertex_multiplicity <= bound);
    }

    #[test]
    fn serialization_round_trips_and_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let t = random_tree(500, &mut rng, open_unit);
        let a = build_integrator_tree(&t, 16).unwrap();
        let b = build_integrator_tree(&t, 16).unwrap();
        let bytes = a.to_bytes();
        assert_eq!(bytes, b.to_bytes());
        assert_eq!(IntegratorTree::from_bytes(&bytes).unwrap(), a);
        assert!(IntegratorTree::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    }

    #[test]
    fn quantum_rejects_off_grid_weights() {
        let t = path_tree(40, 0.25);
        assert!(IntegratorTree::build(&t, &ItConfig { leaf_threshold: 8, quantum: Some(4.0) }).is_ok());
        assert!(IntegratorTree::build(&t, &ItConfig { leaf_threshold: 8, quantum: Some(3.0) }).is_err());
    }

    #[test]
    fn rejects_tiny_threshold() {
        assert!(build_integrator_tree(&path_tree(10, 1.0), 2).is_err());
    }
}
