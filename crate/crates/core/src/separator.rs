//! Balanced pivot decomposition of a tree.
//!
//! A pivot `p` splits a tree into two connected subtrees sharing only `p`,
//! each holding at least a quarter of the vertices. The construction roots
//! the tree, computes subtree sizes, takes the first vertex (by id) whose
//! removal leaves components of at most `n / 2` vertices, orders those
//! components by root id and cuts the sequence at the first prefix reaching
//! `3n / 4`. All thresholds are integer comparisons on vertex counts.

use crate::error::{FtfiError, Result};
use crate::graph::WeightedTree;

/// Smallest tree for which the quarter-balance guarantee is proven.
pub const MIN_PIVOT_SIZE: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PivotDecomposition {
    pub pivot: usize,
    /// Ascending vertex ids, includes the pivot.
    pub left: Vec<usize>,
    /// Ascending vertex ids, includes the pivot.
    pub right: Vec<usize>,
}

pub fn pivot_decompose(t: &WeightedTree) -> Result<PivotDecomposition> {
    if t.n() < MIN_PIVOT_SIZE {
        return Err(FtfiError::TreeTooSmall { n: t.n(), min: MIN_PIVOT_SIZE });
    }
    Ok(split(t))
}

/// The same construction without the size guard. Valid for `n >= 4`: every
/// hanging component has at most `n / 2` vertices and together they hold
/// `n - 1 >= 3n / 4`, so the cut index exists and is not the first one.
pub(crate) fn split(t: &WeightedTree) -> PivotDecomposition {
    let n = t.n();
    debug_assert!(n >= 4);
    assert!(n <= u32::MAX as usize);

    // Preorder from vertex 0. Positions index `order`, `ppos` and `size`, so
    // every subtree is the contiguous range `pos .. pos + size[pos]`.
    let mut order: Vec<u32> = Vec::with_capacity(n);
    let mut ppos: Vec<u32> = Vec::with_capacity(n);
    let mut pre = vec![0u32; n];
    let mut stack: Vec<(u32, u32, u32)> = vec![(0, u32::MAX, u32::MAX)];
    while let Some((v, parent, parent_pos)) = stack.pop() {
        let pos = order.len() as u32;
        pre[v as usize] = pos;
        order.push(v);
        ppos.push(parent_pos);
        for &(u, _) in t.neighbors(v as usize) {
            if u as u32 != parent {
                stack.push((u as u32, v, pos));
            }
        }
    }
    let mut size = vec![1u32; n];
    for i in (1..n).rev() {
        size[ppos[i] as usize] += size[i];
    }
    let parent_of = |v: usize| -> Option<usize> {
        let p = ppos[pre[v] as usize];
        (p != u32::MAX).then(|| order[p as usize] as usize)
    };
    let subtree = |u: usize| size[pre[u] as usize] as usize;

    // Walk towards the heavy child. The only other centroid, if any, is a
    // child holding exactly half the vertices; keep the smaller id.
    let mut c = 0usize;
    'walk: loop {
        for &(u, _) in t.neighbors(c) {
            if Some(u) != parent_of(c) && 2 * subtree(u) > n {
                c = u;
                continue 'walk;
            }
        }
        break;
    }
    let pivot = t
        .neighbors(c)
        .iter()
        .filter(|&&(u, _)| Some(u) != parent_of(c) && 2 * subtree(u) == n)
        .map(|&(u, _)| u)
        .fold(c, usize::min);

    // Components hanging off the pivot, in ascending order of their root id.
    let roots: Vec<usize> = t.neighbors(pivot).iter().map(|&(u, _)| u).collect();
    let up = parent_of(pivot);
    let comp_sizes: Vec<usize> = roots.iter().map(|&u| if Some(u) == up { n - subtree(pivot) } else { subtree(u) }).collect();

    let mut prefix = 0;
    let mut cut = comp_sizes.len();
    for (i, &s) in comp_sizes.iter().enumerate() {
        prefix += s;
        if 4 * prefix >= 3 * n {
            cut = i;
            break;
        }
    }
    debug_assert!(cut > 0 && cut < comp_sizes.len());

    // Child subtrees of the pivot as (first position, component index),
    // sorted by position for lookup.
    let mut ranges: Vec<(u32, usize)> =
        roots.iter().enumerate().filter(|&(_, &u)| Some(u) != up).map(|(ci, &u)| (pre[u], ci)).collect();
    ranges.sort_unstable();
    let up_comp = up.map(|u| roots.binary_search(&u).unwrap());
    let lo = pre[pivot];
    let hi = lo + size[lo as usize];

    let mut left = Vec::new();
    let mut right = Vec::new();
    for v in 0..n {
        if v == pivot {
            left.push(v);
            right.push(v);
            continue;
        }
        let p = pre[v];
        let comp = if p > lo && p < hi {
            let k = ranges.partition_point(|&(start, _)| start <= p) - 1;
            ranges[k].1
        } else {
            up_comp.expect("vertex outside the pivot subtree")
        };
        if comp < cut {
            left.push(v);
        } else {
            right.push(v);
        }
    }
    PivotDecomposition { pivot, left, right }
}

impl PivotDecomposition {
    /// Checks the partition, balance and connectivity invariants against `t`.
    pub fn validate(&self, t: &WeightedTree) -> std::result::Result<(), String> {
        let n = t.n();
        let quarter = n.div_ceil(4);
        let mut count = vec![0u8; n];
        for &v in self.left.iter().chain(&self.right) {
            count[v] += 1;
        }
        for (v, &c) in count.iter().enumerate() {
            let expected = if v == self.pivot { 2 } else { 1 };
            if c != expected {
                return Err(format!("vertex {v} appears {c} times across sides"));
            }
        }
        for (name, side) in [("left", &self.left), ("right", &self.right)] {
            if side.len() < quarter {
                return Err(format!("{name} side has {} < ceil(n/4) = {quarter} vertices", side.len()));
            }
            if !induced_connected(t, side, self.pivot) {
                return Err(format!("{name} side is not connected"));
            }
        }
        Ok(())
    }
}

fn induced_connected(t: &WeightedTree, side: &[usize], start: usize) -> bool {
    let mut inside = vec![false; t.n()];
    for &v in side {
        inside[v] = true;
    }
    let mut seen = vec![false; t.n()];
    seen[start] = true;
    let mut stack = vec![start];
    let mut reached = 1;
    while let Some(v) = stack.pop() {
        for &(u, _) in t.neighbors(v) {
            if inside[u] && !seen[u] {
                seen[u] = true;
                reached += 1;
                stack.push(u);
            }
        }
    }
    reached == side.len()
}
