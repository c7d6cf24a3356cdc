//! Laplacian spectra as a connectivity diagnostic, and the tree-count sweep
//! used to pick the forest size.
//!
//! A graph is connected exactly when the eigenvalue 0 of its Laplacian is
//! simple, in which case the eigenvector `v0` is constant and its component
//! spread is zero. For a disconnected graph the zero eigenspace is spanned by
//! component indicators and `v0` is not unique; instead of trusting whatever
//! vector the eigensolver lands on, the diagnostic counts components by BFS
//! and reports the spread of a unit vector orthogonal to `1` inside that
//! eigenspace, which is exactly `1/√n`.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{build_forest, CooccurrenceCounts};
use crate::linalg::{sym_eig, Matrix};
use crate::rptree::TreeConfig;

/// Spread below which a graph counts as connected.
pub const CONNECT_THRESHOLD: f64 = 1e-6;

/// Eigenvalues below this are treated as zero.
pub const ZERO_EIGENVALUE: f64 = 1e-8;

/// Unnormalized `L = D - A` or symmetric normalized `I - D^{-1/2} A D^{-1/2}`.
pub fn graph_laplacian(g: &crate::graph::WeightedGraph, normalized: bool) -> Result<Matrix> {
    let n = g.n();
    let deg = g.degrees();
    if normalized {
        if let Some(node) = deg.iter().position(|&d| d <= 0.0) {
            return Err(Error::IsolatedNode { node });
        }
        let inv_sqrt: Vec<f64> = deg.iter().map(|d| 1.0 / d.sqrt()).collect();
        let mut l = Matrix::identity(n);
        for (i, j, w) in g.edges() {
            let v = -w * inv_sqrt[i] * inv_sqrt[j];
            l.set(i, j, v);
            l.set(j, i, v);
        }
        Ok(l)
    } else {
        let mut l = Matrix::from_diag(&deg);
        for (i, j, w) in g.edges() {
            l.set(i, j, -w);
            l.set(j, i, -w);
        }
        Ok(l)
    }
}

/// Smallest eigenpair, with `v0` signed so its first non-negligible
/// component is positive.
pub fn smallest_eigenvector(l: &Matrix) -> Result<(f64, Vec<f64>)> {
    let eig = sym_eig(l)?;
    if eig.values.is_empty() {
        return Err(Error::invalid("empty matrix has no eigenvectors"));
    }
    let mut v = eig.vector(0);
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
    Ok((eig.values[0], v))
}

/// Population standard deviation.
pub fn population_std(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Connectivity {
    /// Spread of the smallest Laplacian eigenvector (see module docs).
    pub std_v0: f64,
    /// Components found by breadth-first search.
    pub components: usize,
    /// Smallest eigenvalue, when an eigensolve was performed.
    pub lambda0: Option<f64>,
}

impl Connectivity {
    pub fn is_connected(&self) -> bool {
        self.std_v0 < CONNECT_THRESHOLD
    }
}

/// Connectivity diagnostic on the unnormalized Laplacian.
///
/// Disconnected graphs short-circuit without an eigensolve and report
/// `1/√n`.
pub fn connectivity(g: &crate::graph::WeightedGraph) -> Result<Connectivity> {
    let n = g.n();
    let components = g.component_count();
    if n <= 1 {
        return Ok(Connectivity {
            std_v0: 0.0,
            components,
            lambda0: None,
        });
    }
    if components > 1 {
        return Ok(Connectivity {
            std_v0: disconnected_std(n),
            components,
            lambda0: None,
        });
    }
    let l = graph_laplacian(g, false)?;
    let (lambda0, v0) = smallest_eigenvector(&l)?;
    Ok(Connectivity {
        std_v0: population_std(&v0),
        components,
        lambda0: Some(lambda0),
    })
}

/// Spread of any unit vector orthogonal to the constant vector.
pub fn disconnected_std(n: usize) -> f64 {
    1.0 / (n as f64).sqrt()
}

pub fn connectivity_std(g: &crate::graph::WeightedGraph) -> Result<f64> {
    Ok(connectivity(g)?.std_v0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub trees: usize,
    pub std_v0: f64,
    pub components: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCurve {
    pub dataset: String,
    pub seed: u64,
    pub points: Vec<SweepPoint>,
}

/// Connectivity of forest graphs for each tree count in `t_values`.
///
/// All forests come from one sequence of trees, so the forest with `T`
/// trees is a prefix of every larger one and edges are only ever added.
pub fn sweep_trees(x: &Matrix, t_values: &[usize], config: TreeConfig, seed: u64) -> Result<SweepCurve> {
    if t_values.is_empty() {
        return Err(Error::invalid("sweep needs at least one tree count"));
    }
    if t_values[0] == 0 || t_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("tree counts must be positive and strictly increasing"));
    }
    let max_t = *t_values.last().expect("non-empty");
    let forest = build_forest(x, max_t, config, seed)?;
    let mut counts = CooccurrenceCounts::new();
    let mut points = Vec::with_capacity(t_values.len());
    let mut next = t_values.iter().peekable();
    for (t, tree) in forest.iter().enumerate() {
        counts.add_partition(&tree.leaves());
        if next.peek() == Some(&&(t + 1)) {
            next.next();
            let g = counts.to_graph(x.rows())?;
            let c = connectivity(&g)?;
            points.push(SweepPoint {
                trees: t + 1,
                std_v0: c.std_v0,
                components: c.components,
            });
        }
    }
    Ok(SweepCurve {
        dataset: String::new(),
        seed,
        points,
    })
}

impl SweepCurve {
    /// CSV with header `T,std_v0,components`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("T,std_v0,components\n");
        for p in &self.points {
            s.push_str(&format!("{},{},{}\n", p.trees, p.std_v0, p.components));
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv().as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let headers = reader.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["T", "std_v0", "components"] {
            return Err(Error::Parse {
                line: 1,
                reason: format!("unexpected sweep header {headers:?}"),
            });
        }
        let mut points = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            let parse_err = |what: &str| Error::Parse {
                line: i + 2,
                reason: format!("bad {what}"),
            };
            points.push(SweepPoint {
                trees: rec[0].parse().map_err(|_| parse_err("T"))?,
                std_v0: rec[1].parse().map_err(|_| parse_err("std_v0"))?,
                components: rec[2].parse().map_err(|_| parse_err("components"))?,
            });
        }
        Ok(SweepCurve {
            dataset: String::new(),
            seed: 0,
            points,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Elbow {
    pub trees: usize,
    /// True when no point fell below the connection threshold and the elbow
    /// came from the largest discrete second difference instead.
    pub no_connect: bool,
}

/// Smallest `T` whose spread is below `threshold`; failing that, the
/// interior point with the largest second difference, flagged.
pub fn detect_elbow(curve: &SweepCurve, threshold: f64) -> Result<Elbow> {
    let pts = &curve.points;
    if pts.len() < 3 {
        return Err(Error::invalid(format!(
            "elbow detection needs at least 3 points, got {}",
            pts.len()
        )));
    }
    if let Some(p) = pts.iter().find(|p| p.std_v0 < threshold) {
        return Ok(Elbow {
            trees: p.trees,
            no_connect: false,
        });
    }
    let mut best = (1, f64::NEG_INFINITY);
    for i in 1..pts.len() - 1 {
        let d2 = pts[i - 1].std_v0 - 2.0 * pts[i].std_v0 + pts[i + 1].std_v0;
        if d2 > best.1 {
            best = (i, d2);
        }
    }
    Ok(Elbow {
        trees: pts[best.0].trees,
        no_connect: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::WeightedGraph;

    fn graph(n: usize, edges: &[(usize, usize, f64)]) -> WeightedGraph {
        let mut g = WeightedGraph::new(n);
        for &(i, j, w) in edges {
            g.set_edge(i, j, w).unwrap();
        }
        g
    }

    fn curve(points: &[(usize, f64)]) -> SweepCurve {
        SweepCurve {
            dataset: "t".into(),
            seed: 0,
            points: points
                .iter()
                .map(|&(trees, std_v0)| SweepPoint { trees, std_v0, components: 1 })
                .collect(),
        }
    }

    #[test]
    fn laplacian_single_edge() {
        let g = graph(2, &[(0, 1, 1.0)]);
        let want = Matrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
        assert_eq!(graph_laplacian(&g, false).unwrap(), want);
        assert_eq!(graph_laplacian(&g, true).unwrap(), want);
    }

    #[test]
    fn normalized_laplacian_rejects_isolated_nodes() {
        let g = graph(3, &[(0, 1, 1.0)]);
        assert!(matches!(graph_laplacian(&g, true), Err(Error::IsolatedNode { node: 2 })));
        assert!(graph_laplacian(&g, false).is_ok());
    }

    #[test]
    fn normalized_triangle_has_constant_null_vector() {
        let g = graph(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]);
        let (l0, v0) = smallest_eigenvector(&graph_laplacian(&g, true).unwrap()).unwrap();
        assert!(l0.abs() < 1e-12);
        for x in &v0 {
            assert!((x - 1.0 / 3f64.sqrt()).abs() < 1e-10);
        }
    }

    #[test]
    fn unnormalized_rows_sum_to_zero() {
        let g = graph(4, &[(0, 1, 0.3), (1, 2, 0.7), (0, 3, 1.0)]);
        let l = graph_laplacian(&g, false).unwrap();
        for r in 0..4 {
            assert!(l.row(r).iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn path_graph_smallest_pair() {
        let g = graph(3, &[(0, 1, 1.0), (1, 2, 1.0)]);
        let (l0, v0) = smallest_eigenvector(&graph_laplacian(&g, false).unwrap()).unwrap();
        assert!(l0.abs() < 1e-12);
        for x in v0 {
            assert!((x - 1.0 / 3f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn two_disjoint_edges_have_double_zero() {
        let g = graph(4, &[(0, 1, 1.0), (2, 3, 1.0)]);
        let eig = sym_eig(&graph_laplacian(&g, false).unwrap()).unwrap();
        assert!(eig.values[0].abs() < 1e-12 && eig.values[1].abs() < 1e-12);
        assert!(eig.values[2] > 1.0);
    }

    #[test]
    fn connectivity_cases() {
        let tri = graph(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]);
        let c = connectivity(&tri).unwrap();
        assert!(c.std_v0 < 1e-8);
        assert_eq!(c.components, 1);
        assert!(c.is_connected());

        let split = graph(4, &[(0, 1, 1.0), (2, 3, 1.0)]);
        let c = connectivity(&split).unwrap();
        assert_eq!(c.components, 2);
        assert!((c.std_v0 - 0.5).abs() < 1e-15);
        assert!(!c.is_connected());

        assert_eq!(connectivity_std(&WeightedGraph::new(1)).unwrap(), 0.0);
    }

    /// Builds the orthogonalized component-indicator vector directly and
    /// checks its spread matches the shortcut.
    #[test]
    fn disconnected_std_matches_indicator_construction() {
        let g = graph(7, &[(0, 1, 1.0), (1, 2, 0.5), (3, 4, 1.0), (5, 6, 1.0)]);
        let (ids, _) = g.components();
        let n = 7.0;
        let indicator: Vec<f64> = ids.iter().map(|&c| if c == 0 { 1.0 } else { 0.0 }).collect();
        let mean = indicator.iter().sum::<f64>() / n;
        let mut v: Vec<f64> = indicator.iter().map(|x| x - mean).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        let l = graph_laplacian(&g, false).unwrap();
        let lv = l.matmul(&Matrix::new(7, 1, v.clone()).unwrap()).unwrap();
        assert!(lv.as_slice().iter().all(|x| x.abs() < 1e-12));
        assert!((population_std(&v) - connectivity_std(&g).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn sweep_on_small_blob_with_big_leaves_connects_immediately() {
        let ds = crate::dataset::gen_clusters(
            &[crate::dataset::ClusterSpec { center: [0.0, 0.0], count: 30, sd: 1.0 }],
            2,
        )
        .unwrap();
        let cfg = TreeConfig { max_leaf_size: 30, ..Default::default() };
        let c = sweep_trees(&ds.features, &[1, 2, 3], cfg, 0).unwrap();
        assert_eq!(c.points.len(), 3);
        assert!(c.points[0].std_v0 < 1e-8);
        assert_eq!(detect_elbow(&c, CONNECT_THRESHOLD).unwrap(), Elbow { trees: 1, no_connect: false });
    }

    #[test]
    fn sweep_rejects_bad_t_values() {
        let x = Matrix::from_fn(10, 2, |r, c| (r * 3 + c) as f64);
        let cfg = TreeConfig::default();
        assert!(sweep_trees(&x, &[], cfg, 0).is_err());
        assert!(sweep_trees(&x, &[2, 2], cfg, 0).is_err());
        assert!(sweep_trees(&x, &[0, 1], cfg, 0).is_err());
    }

    #[test]
    fn sweep_matches_standalone_forests() {
        let ds = crate::dataset::preset("sparse303", 3).unwrap();
        let cfg = TreeConfig { max_leaf_size: 12, ..Default::default() };
        let curve = sweep_trees(&ds.features, &[1, 4, 6], cfg, 8).unwrap();
        for p in &curve.points {
            let g = crate::graph::build_rpforest_graph(&ds.features, p.trees, cfg, 8).unwrap();
            let c = connectivity(&g).unwrap();
            assert_eq!(c.components, p.components);
            assert_eq!(c.std_v0, p.std_v0);
        }
    }

    #[test]
    fn elbow_rules() {
        let c = curve(&[(1, 0.4), (5, 0.2), (10, 1e-9), (15, 1e-9)]);
        assert_eq!(detect_elbow(&c, CONNECT_THRESHOLD).unwrap().trees, 10);
        let c = curve(&[(2, 1e-9), (3, 1e-10), (4, 0.0)]);
        assert_eq!(detect_elbow(&c, CONNECT_THRESHOLD).unwrap().trees, 2);
        // Linear descent with a kink at T=3, then flat.
        let c = curve(&[(1, 0.9), (2, 0.7), (3, 0.5), (4, 0.45), (5, 0.4)]);
        let e = detect_elbow(&c, CONNECT_THRESHOLD).unwrap();
        assert_eq!(e, Elbow { trees: 3, no_connect: true });
        assert!(detect_elbow(&curve(&[(1, 0.1), (2, 0.0)]), CONNECT_THRESHOLD).is_err());
    }

    #[test]
    fn sweep_csv_round_trip() {
        let c = curve(&[(1, 0.25), (2, 1.5e-17), (3, 0.0)]);
        let text = c.to_csv();
        assert!(text.starts_with("T,std_v0,components\n"));
        let back = SweepCurve::from_csv(&text).unwrap();
        assert_eq!(back.points, c.points);
        assert!(SweepCurve::from_csv("a,b\n1,2\n").is_err());
    }
}
