//! Exact k-nearest-neighbor search and the symmetrized kernel support.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pointcloud::{squared_distance, Coords, PointCloud};

const LEAF_SIZE: usize = 16;
/// Above this ambient dimension the tree prunes poorly; fall back to a scan.
const MAX_TREE_DIM: usize = 16;

/// Per-point sorted nearest-neighbor lists, row-major `N × k`.
///
/// Column 0 is always the point itself at distance 0; the remaining
/// columns are ordered by distance, ties by smaller index.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborGraph {
    k: usize,
    indices: Vec<u32>,
    distances: Vec<f64>,
}

impl NeighborGraph {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.indices.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self, i: usize) -> &[u32] {
        &self.indices[i * self.k..(i + 1) * self.k]
    }

    pub fn distances(&self, i: usize) -> &[f64] {
        &self.distances[i * self.k..(i + 1) * self.k]
    }

    /// Debug dump of `(i, j, distance)` triples.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "i,j,distance")?;
        for i in 0..self.len() {
            for (j, d) in self.indices(i).iter().zip(self.distances(i)) {
                writeln!(out, "{i},{j},{}", crate::pointcloud::fmt_f64(*d))?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Candidate {
    d2: f64,
    idx: u32,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2.total_cmp(&other.d2).then(self.idx.cmp(&other.idx))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

enum Node {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f64, left: usize, right: usize },
}

struct KdTree<'a> {
    pts: &'a Coords,
    order: Vec<u32>,
    nodes: Vec<Node>,
}

impl<'a> KdTree<'a> {
    fn build(pts: &'a Coords) -> Self {
        let mut tree = KdTree {
            pts,
            order: (0..pts.nrows() as u32).collect(),
            nodes: Vec::new(),
        };
        tree.build_node(0, pts.nrows());
        tree
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return self.nodes.len() - 1;
        }
        let dims = self.pts.ncols();
        let mut best = (0, -1.0);
        for dim in 0..dims {
            let (lo, hi) = self.order[start..end].iter().fold(
                (f64::INFINITY, f64::NEG_INFINITY),
                |(lo, hi), &i| {
                    let v = self.pts.row(i as usize)[dim];
                    (lo.min(v), hi.max(v))
                },
            );
            if hi - lo > best.1 {
                best = (dim, hi - lo);
            }
        }
        let dim = best.0;
        if best.1 <= 0.0 {
            self.nodes.push(Node::Leaf { start, end });
            return self.nodes.len() - 1;
        }
        let mid = start + (end - start) / 2;
        let pts = self.pts;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            pts.row(a as usize)[dim]
                .total_cmp(&pts.row(b as usize)[dim])
                .then(a.cmp(&b))
        });
        let value = pts.row(self.order[mid] as usize)[dim];
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[slot] = Node::Split { dim, value, left, right };
        slot
    }

    /// The `m` nearest points to `query`, skipping index `skip`.
    fn nearest(&self, query: &[f64], skip: usize, m: usize) -> Vec<Candidate> {
        let mut heap = BinaryHeap::with_capacity(m + 1);
        if m > 0 {
            self.search(0, query, skip, m, &mut heap);
        }
        heap.into_sorted_vec()
    }

    fn search(
        &self,
        node: usize,
        query: &[f64],
        skip: usize,
        m: usize,
        heap: &mut BinaryHeap<Candidate>,
    ) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &j in &self.order[start..end] {
                    if j as usize == skip {
                        continue;
                    }
                    let c = Candidate {
                        d2: squared_distance(query, self.pts.row(j as usize)),
                        idx: j,
                    };
                    push_bounded(heap, c, m);
                }
            }
            Node::Split { dim, value, left, right } => {
                let diff = query[dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, query, skip, m, heap);
                // `<=` keeps equal-distance points with smaller indices reachable
                if heap.len() < m || diff * diff <= heap.peek().map_or(f64::INFINITY, |c| c.d2) {
                    self.search(far, query, skip, m, heap);
                }
            }
        }
    }
}

fn push_bounded(heap: &mut BinaryHeap<Candidate>, c: Candidate, m: usize) {
    if heap.len() < m {
        heap.push(c);
    } else if let Some(top) = heap.peek() {
        if c < *top {
            heap.pop();
            heap.push(c);
        }
    }
}

fn brute_nearest(pts: &Coords, i: usize, m: usize) -> Vec<Candidate> {
    let q = pts.row(i);
    let mut all: Vec<Candidate> = (0..pts.nrows())
        .filter(|&j| j != i)
        .map(|j| Candidate {
            d2: squared_distance(q, pts.row(j)),
            idx: j as u32,
        })
        .collect();
    if m < all.len() {
        all.select_nth_unstable(m);
        all.truncate(m);
    }
    all.sort_unstable();
    all
}

/// Exact `k` nearest neighbors of every point (the point itself included
/// as neighbor 0).
pub fn knn(cloud: &PointCloud, k: usize) -> Result<NeighborGraph> {
    let n = cloud.len();
    if k == 0 {
        return Err(Error::InvalidInput("k must be positive".into()));
    }
    if k > n {
        return Err(Error::KTooLarge { k, n });
    }
    if n > u32::MAX as usize {
        return Err(Error::InvalidInput("too many points".into()));
    }
    let pts = cloud.points();
    let tree = (cloud.ambient_dim() <= MAX_TREE_DIM).then(|| KdTree::build(pts));
    let rows: Vec<Vec<Candidate>> = (0..n)
        .into_par_iter()
        .map(|i| match &tree {
            Some(t) => t.nearest(pts.row(i), i, k - 1),
            None => brute_nearest(pts, i, k - 1),
        })
        .collect();
    let mut indices = Vec::with_capacity(n * k);
    let mut distances = Vec::with_capacity(n * k);
    for (i, row) in rows.into_iter().enumerate() {
        indices.push(i as u32);
        distances.push(0.0);
        for c in row {
            indices.push(c.idx);
            distances.push(c.d2.sqrt());
        }
    }
    Ok(NeighborGraph { k, indices, distances })
}

/// Symmetric sparse pattern in CSR form (sorted columns per row).
#[derive(Clone, Debug, PartialEq)]
pub struct Pattern {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
}

impl Pattern {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    #[inline]
    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[u32] {
        &self.cols[self.row_range(i)]
    }

    #[inline]
    pub fn cols(&self) -> &[u32] {
        &self.cols
    }

    /// Position of entry `(i, j)` in the value arrays.
    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        let r = self.row_range(i);
        self.cols[r.clone()]
            .binary_search(&(j as u32))
            .ok()
            .map(|p| r.start + p)
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.find(i, j).is_some()
    }

    /// Sub-pattern of the entries where `keep` holds, with `keep`'s positions.
    pub(crate) fn filter(&self, keep: &[bool]) -> Pattern {
        let mut row_ptr = Vec::with_capacity(self.n + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for i in 0..self.n {
            for p in self.row_range(i) {
                if keep[p] {
                    cols.push(self.cols[p]);
                }
            }
            row_ptr.push(cols.len());
        }
        Pattern { n: self.n, row_ptr, cols }
    }

    /// Dense all-pairs pattern.
    pub fn full(n: usize) -> Pattern {
        Pattern {
            n,
            row_ptr: (0..=n).map(|i| i * n).collect(),
            cols: (0..n).flat_map(|_| 0..n as u32).collect(),
        }
    }
}

/// Union of `(i, j)` and `(j, i)` over all neighbor pairs, together with
/// the weight each entry receives in `(K + Kᵀ)/2`: `1` when the pair is
/// listed in both directions (always on the diagonal), `1/2` when only one
/// point lists the other.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricSupport {
    pattern: std::sync::Arc<Pattern>,
    mutual: Vec<bool>,
}

impl SymmetricSupport {
    pub fn pattern(&self) -> &Pattern {
        &self.pattern
    }

    pub fn shared_pattern(&self) -> std::sync::Arc<Pattern> {
        self.pattern.clone()
    }

    pub fn dim(&self) -> usize {
        self.pattern.n
    }

    pub fn nnz(&self) -> usize {
        self.pattern.nnz()
    }

    /// `(K + Kᵀ)/2` weight of the stored entry at position `p`.
    #[inline]
    pub fn weight(&self, p: usize) -> f64 {
        if self.mutual[p] {
            1.0
        } else {
            0.5
        }
    }

    /// Every pair connected, each with weight 1.
    pub fn full(n: usize) -> SymmetricSupport {
        let pattern = Pattern::full(n);
        let mutual = vec![true; pattern.nnz()];
        SymmetricSupport {
            pattern: std::sync::Arc::new(pattern),
            mutual,
        }
    }
}

/// Builds the symmetrized support of a neighbor graph.
pub fn symmetrized_support(graph: &NeighborGraph) -> SymmetricSupport {
    let n = graph.len();
    let mut rows: Vec<Vec<u32>> = vec![Vec::with_capacity(graph.k() + 4); n];
    for i in 0..n {
        for &j in graph.indices(i) {
            let j = j as usize;
            rows[i].push(j as u32);
            rows[j].push(i as u32);
        }
    }
    let mut row_ptr = Vec::with_capacity(n + 1);
    row_ptr.push(0);
    let mut cols = Vec::new();
    let mut mutual = Vec::new();
    for mut row in rows {
        row.sort_unstable();
        let mut p = 0;
        while p < row.len() {
            let mut q = p + 1;
            while q < row.len() && row[q] == row[p] {
                q += 1;
            }
            cols.push(row[p]);
            mutual.push(q - p >= 2);
            p = q;
        }
        row_ptr.push(cols.len());
    }
    SymmetricSupport {
        pattern: std::sync::Arc::new(Pattern { n, row_ptr, cols }),
        mutual,
    }
}

/// Sum range used by density estimation and the tuning curve.
#[derive(Clone, Copy, Debug)]
pub enum Support<'a> {
    /// All pairs.
    Full,
    /// Each point's own neighbor list (diagonal included).
    Neighbors(&'a NeighborGraph),
}

/// Above this size, kernel sums default to the neighbor support.
pub const FULL_SUM_MAX_N: usize = 5000;

impl<'a> Support<'a> {
    /// Full sums up to [`FULL_SUM_MAX_N`] points, neighbor sums beyond.
    pub fn auto(n: usize, graph: &'a NeighborGraph) -> Support<'a> {
        if n <= FULL_SUM_MAX_N || graph.k() == n {
            Support::Full
        } else {
            Support::Neighbors(graph)
        }
    }
}
