//! Weighted undirected graphs built from feature matrices.
//!
//! The forest graph connects every pair of points that share a leaf in a
//! random projection tree; a pair's weight is the fraction of trees in which
//! that happens. The k-nn, heat-kernel and self-tuning builders are the
//! classical baselines.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::index;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kdtree::{squared_distance, KdTree};
use crate::linalg::Matrix;
use crate::rng;
use crate::rptree::{build_tree, RpTree, TreeConfig};

/// Default pruning threshold for kernel weights.
pub const KERNEL_PRUNE: f64 = 1e-12;

/// Symmetric weighted adjacency without self-loops. Edges are keyed by
/// `(i, j)` with `i < j`; iteration is in key order.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    n: usize,
    edges: BTreeMap<(usize, usize), f64>,
}

fn key(i: usize, j: usize) -> (usize, usize) {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

impl WeightedGraph {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            edges: BTreeMap::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Inserts or overwrites the edge `{i, j}`.
    pub fn set_edge(&mut self, i: usize, j: usize, w: f64) -> Result<()> {
        if i >= self.n || j >= self.n {
            return Err(Error::invalid(format!("edge ({i}, {j}) out of range for n = {}", self.n)));
        }
        if i == j {
            return Err(Error::invalid(format!("self-loop at node {i}")));
        }
        if !(w.is_finite() && w > 0.0) {
            return Err(Error::invalid(format!("edge ({i}, {j}) has weight {w}; must be finite and > 0")));
        }
        self.edges.insert(key(i, j), w);
        Ok(())
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        self.edges.get(&key(i, j)).copied()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains_key(&key(i, j))
    }

    /// `(i, j, w)` with `i < j`, ordered by `(i, j)`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.edges.iter().map(|(&(i, j), &w)| (i, j, w))
    }

    /// Sum of edge weights, each undirected edge counted once.
    pub fn total_weight(&self) -> f64 {
        self.edges.values().sum()
    }

    /// Sum over the full symmetric adjacency matrix, i.e. twice
    /// [`total_weight`](Self::total_weight).
    pub fn total_weight_doubled(&self) -> f64 {
        2.0 * self.total_weight()
    }

    /// Weighted degree `D_ii = Σ_j A_ij`.
    pub fn degrees(&self) -> Vec<f64> {
        let mut deg = vec![0.0; self.n];
        for (&(i, j), &w) in &self.edges {
            deg[i] += w;
            deg[j] += w;
        }
        deg
    }

    /// Number of neighbours of every node.
    pub fn neighbour_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n];
        for &(i, j) in self.edges.keys() {
            counts[i] += 1;
            counts[j] += 1;
        }
        counts
    }

    pub fn adjacency_lists(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.n];
        for (&(i, j), &w) in &self.edges {
            adj[i].push((j, w));
            adj[j].push((i, w));
        }
        adj
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n, self.n);
        for (&(i, j), &w) in &self.edges {
            m.set(i, j, w);
            m.set(j, i, w);
        }
        m
    }

    /// Connected-component id of every node, ids assigned in order of the
    /// lowest node they contain. Returns `(ids, component count)`.
    pub fn components(&self) -> (Vec<usize>, usize) {
        let adj = self.adjacency_lists();
        let mut comp = vec![usize::MAX; self.n];
        let mut count = 0;
        let mut queue = VecDeque::new();
        for start in 0..self.n {
            if comp[start] != usize::MAX {
                continue;
            }
            comp[start] = count;
            queue.push_back(start);
            while let Some(u) = queue.pop_front() {
                for &(v, _) in &adj[u] {
                    if comp[v] == usize::MAX {
                        comp[v] = count;
                        queue.push_back(v);
                    }
                }
            }
            count += 1;
        }
        (comp, count)
    }

    pub fn component_count(&self) -> usize {
        self.components().1
    }

    /// Edge-list text: a header line `n=<count>` then `i,j,w` per edge with
    /// `i < j`. Weights use the shortest representation that parses back to
    /// the same `f64`.
    pub fn to_edge_list(&self) -> String {
        let mut s = String::with_capacity(16 * (self.edges.len() + 1));
        writeln!(s, "n={}", self.n).unwrap();
        for (&(i, j), &w) in &self.edges {
            writeln!(s, "{i},{j},{w}").unwrap();
        }
        s
    }

    pub fn from_edge_list(text: &str) -> Result<Self> {
        Self::read_edge_list(text.as_bytes())
    }

    pub fn read_edge_list(reader: impl BufRead) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let parse_err = |line: usize, reason: String| Error::Parse { line: line + 1, reason };
        let (_, header) = lines.next().ok_or_else(|| parse_err(0, "empty input".into()))?;
        let header = header.map_err(|e| parse_err(0, e.to_string()))?;
        let n: usize = header
            .trim()
            .strip_prefix("n=")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| parse_err(0, format!("expected 'n=<count>', got '{header}'")))?;
        let mut g = WeightedGraph::new(n);
        for (ln, line) in lines {
            let line = line.map_err(|e| parse_err(ln, e.to_string()))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let (Some(i), Some(j), Some(w), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
                return Err(parse_err(ln, format!("expected 'i,j,w', got '{line}'")));
            };
            let i: usize = i.trim().parse().map_err(|_| parse_err(ln, format!("bad node '{i}'")))?;
            let j: usize = j.trim().parse().map_err(|_| parse_err(ln, format!("bad node '{j}'")))?;
            let w: f64 = w.trim().parse().map_err(|_| parse_err(ln, format!("bad weight '{w}'")))?;
            if i >= j {
                return Err(parse_err(ln, format!("edge ({i}, {j}) must satisfy i < j")));
            }
            g.set_edge(i, j, w).map_err(|e| parse_err(ln, e.to_string()))?;
        }
        Ok(g)
    }

    pub fn write_edge_list_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_edge_list().as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read_edge_list_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_edge_list(std::io::BufReader::new(f))
    }
}

/// Builds `trees` random projection trees with per-tree seeds derived from
/// `(seed, t)`. Tree `t` does not depend on how many trees are requested, so
/// a larger forest extends a smaller one with the same seed.
pub fn build_forest(x: &Matrix, trees: usize, config: TreeConfig, seed: u64) -> Result<Vec<RpTree>> {
    if trees == 0 {
        return Err(Error::invalid("forest needs at least one tree"));
    }
    (0..trees)
        .into_par_iter()
        .map(|t| build_tree(x, config, forest_tree_seed(seed, t)))
        .collect()
}

pub fn forest_tree_seed(seed: u64, tree: usize) -> u64 {
    rng::derive(rng::derive(seed, rng::FOREST), tree as u64)
}

/// Per-pair leaf co-occurrence counts, keyed `(i, j)` with `i < j`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CooccurrenceCounts {
    counts: HashMap<(usize, usize), u32>,
    trees: usize,
}

impl CooccurrenceCounts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn trees(&self) -> usize {
        self.trees
    }

    /// Adds one tree's leaf partition.
    pub fn add_partition(&mut self, leaves: &[Vec<usize>]) {
        for leaf in leaves {
            let mut leaf = leaf.clone();
            leaf.sort_unstable();
            leaf.dedup();
            for (a, &i) in leaf.iter().enumerate() {
                for &j in &leaf[a + 1..] {
                    *self.counts.entry((i, j)).or_insert(0) += 1;
                }
            }
        }
        self.trees += 1;
    }

    pub fn count(&self, i: usize, j: usize) -> u32 {
        self.counts.get(&key(i, j)).copied().unwrap_or(0)
    }

    /// Graph with `w(i, j) = count(i, j) / trees`.
    pub fn to_graph(&self, n: usize) -> Result<WeightedGraph> {
        if self.trees == 0 {
            return Err(Error::invalid("no trees have been added"));
        }
        let t = self.trees as f64;
        let mut g = WeightedGraph::new(n);
        for (&(i, j), &c) in &self.counts {
            g.set_edge(i, j, c as f64 / t)?;
        }
        Ok(g)
    }
}

/// Co-occurrence graph from explicit leaf partitions, one per tree.
pub fn graph_from_leaf_partitions(n: usize, partitions: &[Vec<Vec<usize>>]) -> Result<WeightedGraph> {
    let mut counts = CooccurrenceCounts::new();
    for p in partitions {
        if let Some(bad) = p.iter().flatten().find(|&&i| i >= n) {
            return Err(Error::invalid(format!("leaf index {bad} out of range for n = {n}")));
        }
        counts.add_partition(p);
    }
    counts.to_graph(n)
}

pub fn forest_graph(n: usize, forest: &[RpTree]) -> Result<WeightedGraph> {
    let partitions: Vec<Vec<Vec<usize>>> = forest.iter().map(RpTree::leaves).collect();
    graph_from_leaf_partitions(n, &partitions)
}

/// The random projection forest graph with `trees` trees.
pub fn build_rpforest_graph(x: &Matrix, trees: usize, config: TreeConfig, seed: u64) -> Result<WeightedGraph> {
    let forest = build_forest(x, trees, config, seed)?;
    forest_graph(x.rows(), &forest)
}

/// Exact k-nn graph with union symmetrization: `{i, j}` is an edge of
/// weight 1 when either point is among the other's `k` nearest neighbours.
pub fn build_knn_graph(x: &Matrix, k: usize) -> Result<WeightedGraph> {
    let n = x.rows();
    if k == 0 || k >= n {
        return Err(Error::invalid(format!("k = {k} must satisfy 1 <= k < n = {n}")));
    }
    let tree = KdTree::new(x);
    let neighbours: Vec<Vec<(usize, f64)>> = (0..n).into_par_iter().map(|i| tree.knn_of(i, k)).collect();
    let mut g = WeightedGraph::new(n);
    for (i, nbrs) in neighbours.iter().enumerate() {
        for &(j, _) in nbrs {
            g.set_edge(i, j, 1.0)?;
        }
    }
    Ok(g)
}

/// Complete graph with `w = exp(-d² / (2σ²))`, dropping weights below `prune`.
pub fn build_heat_kernel_graph(x: &Matrix, sigma: f64, prune: f64) -> Result<WeightedGraph> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    let denom = 2.0 * sigma * sigma;
    kernel_graph(x, prune, |_, _, d2| (-d2 / denom).exp())
}

/// Self-tuning kernel `w = exp(-d² / (σ_i σ_j))`, `σ_i` being the distance
/// from point `i` to its `k`-th nearest neighbour. Zero scales (duplicates)
/// are replaced by the smallest positive scale in the data.
pub fn build_self_tuning_graph(x: &Matrix, k: usize, prune: f64) -> Result<WeightedGraph> {
    let sigmas = local_scales(x, k)?;
    kernel_graph(x, prune, |i, j, d2| (-d2 / (sigmas[i] * sigmas[j])).exp())
}

pub const DEFAULT_SELF_TUNING_K: usize = 7;

/// Per-point scale for the self-tuning kernel, with zero scales substituted.
pub fn local_scales(x: &Matrix, k: usize) -> Result<Vec<f64>> {
    let n = x.rows();
    if k == 0 || k >= n {
        return Err(Error::invalid(format!("K = {k} must satisfy 1 <= K < n = {n}")));
    }
    let tree = KdTree::new(x);
    let mut sigmas: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| tree.knn_of(i, k).last().map_or(0.0, |&(_, d2)| d2.sqrt()))
        .collect();
    let min_pos = sigmas.iter().copied().filter(|&s| s > 0.0).fold(f64::INFINITY, f64::min);
    if !min_pos.is_finite() {
        return Err(Error::invalid(
            "every point has a zero K-th neighbour distance; self-tuning scales are undefined",
        ));
    }
    for s in &mut sigmas {
        if *s == 0.0 {
            *s = min_pos;
        }
    }
    Ok(sigmas)
}

fn kernel_graph(x: &Matrix, prune: f64, w: impl Fn(usize, usize, f64) -> f64 + Sync) -> Result<WeightedGraph> {
    let n = x.rows();
    let rows: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            ((i + 1)..n)
                .filter_map(|j| {
                    let v = w(i, j, squared_distance(x.row(i), x.row(j)));
                    (v >= prune && v > 0.0).then_some((j, v))
                })
                .collect()
        })
        .collect();
    let mut g = WeightedGraph::new(n);
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row {
            g.set_edge(i, j, v)?;
        }
    }
    Ok(g)
}

/// Number of complement pairs taken for a given percentage.
pub fn complement_sample_size(complement: usize, percent: f64) -> usize {
    ((percent * complement as f64) / 100.0).floor() as usize
}

/// Adds `⌊percent/100 · |complement|⌋` uniformly sampled non-edges (distinct
/// unordered pairs, no self-pairs) at weight `weight`.
pub fn add_complement_edges(g: &WeightedGraph, percent: f64, weight: f64, seed: u64) -> Result<WeightedGraph> {
    if !(0.0..=100.0).contains(&percent) {
        return Err(Error::invalid(format!("percent must lie in [0, 100], got {percent}")));
    }
    if !(weight > 0.0 && weight.is_finite()) {
        return Err(Error::invalid(format!("extra edge weight must be positive, got {weight}")));
    }
    let n = g.n();
    let mut complement = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if !g.has_edge(i, j) {
                complement.push((i, j));
            }
        }
    }
    let take = complement_sample_size(complement.len(), percent);
    let mut out = g.clone();
    if take == complement.len() {
        for (i, j) in complement {
            out.set_edge(i, j, weight)?;
        }
    } else if take > 0 {
        let mut rng = rng::stream(rng::derive(seed, rng::EXTRA));
        for idx in index::sample(&mut rng, complement.len(), take) {
            let (i, j) = complement[idx];
            out.set_edge(i, j, weight)?;
        }
    }
    Ok(out)
}

pub fn total_weight(g: &WeightedGraph) -> f64 {
    g.total_weight()
}
