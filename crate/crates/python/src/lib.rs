//! Python bindings for rpgcn: datasets, graph builders, spectral
//! connectivity and the two-layer GCN.
//!
//! Matrices cross the boundary as lists of rows.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use rpgcn::gcn::{self, GcnModel, Hyperparams, NormalizedAdjacency};
use rpgcn::{dataset, graph, spectral, Matrix, SplitRule, TreeConfig};

fn to_py(e: rpgcn::Error) -> PyErr {
    match e {
        rpgcn::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    Matrix::from_rows(&rows).map_err(to_py)
}

fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

fn tree_config(max_leaf_size: usize, split_rule: &str) -> PyResult<TreeConfig> {
    let split_rule: SplitRule = split_rule.parse().map_err(|e: rpgcn::Error| to_py(e))?;
    Ok(TreeConfig {
        max_leaf_size,
        split_rule,
    })
}

#[pyclass(name = "Dataset", frozen)]
struct PyDataset {
    inner: dataset::Dataset,
}

#[pymethods]
impl PyDataset {
    #[new]
    #[pyo3(signature = (features, labels, name = "custom"))]
    fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, name: &str) -> PyResult<Self> {
        let inner = dataset::Dataset::new(name, matrix(features)?, labels).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// One of `ring238`, `3rings299`, `sparse303`, `sparse622`.
    #[staticmethod]
    #[pyo3(signature = (name, seed = 0))]
    fn preset(name: &str, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: dataset::preset(name, seed).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load_csv(path: &str, label_col: &str) -> PyResult<Self> {
        Ok(Self {
            inner: dataset::load_csv(path, label_col).map_err(to_py)?,
        })
    }

    fn standardized(&self) -> Self {
        Self {
            inner: self.inner.standardized(),
        }
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn features(&self) -> Vec<Vec<f64>> {
        rows_of(&self.inner.features)
    }

    #[getter]
    fn labels(&self) -> Vec<usize> {
        self.inner.labels.clone()
    }

    #[getter]
    fn n_classes(&self) -> usize {
        self.inner.n_classes()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyclass(name = "Graph", frozen)]
struct PyGraph {
    inner: graph::WeightedGraph,
}

#[pymethods]
impl PyGraph {
    /// Parses the `n=<count>` / `i,j,w` edge-list format.
    #[staticmethod]
    fn from_edge_list(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: graph::WeightedGraph::from_edge_list(text).map_err(to_py)?,
        })
    }

    fn to_edge_list(&self) -> String {
        self.inner.to_edge_list()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn edge_count(&self) -> usize {
        self.inner.edge_count()
    }

    #[getter]
    fn total_weight(&self) -> f64 {
        self.inner.total_weight()
    }

    /// `(i, j, w)` with `i < j`, in ascending order.
    fn edges(&self) -> Vec<(usize, usize, f64)> {
        self.inner.edges().collect()
    }

    /// Component id of every node.
    fn components(&self) -> Vec<usize> {
        self.inner.components().0
    }

    /// `(std_v0, component_count)`.
    fn connectivity(&self) -> PyResult<(f64, usize)> {
        let c = spectral::connectivity(&self.inner).map_err(to_py)?;
        Ok((c.std_v0, c.components))
    }

    #[pyo3(signature = (percent, weight, seed = 0))]
    fn with_complement_edges(&self, percent: f64, weight: f64, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: graph::add_complement_edges(&self.inner, percent, weight, seed).map_err(to_py)?,
        })
    }
}

#[pyfunction]
#[pyo3(signature = (features, trees = 10, max_leaf_size = 20, split_rule = "quantile", seed = 0))]
fn rpforest_graph(features: Vec<Vec<f64>>, trees: usize, max_leaf_size: usize, split_rule: &str, seed: u64) -> PyResult<PyGraph> {
    let x = matrix(features)?;
    let cfg = tree_config(max_leaf_size, split_rule)?;
    Ok(PyGraph {
        inner: graph::build_rpforest_graph(&x, trees, cfg, seed).map_err(to_py)?,
    })
}

#[pyfunction]
#[pyo3(signature = (features, k = 10))]
fn knn_graph(features: Vec<Vec<f64>>, k: usize) -> PyResult<PyGraph> {
    Ok(PyGraph {
        inner: graph::build_knn_graph(&matrix(features)?, k).map_err(to_py)?,
    })
}

#[pyfunction]
fn heat_kernel_graph(features: Vec<Vec<f64>>, sigma: f64) -> PyResult<PyGraph> {
    Ok(PyGraph {
        inner: graph::build_heat_kernel_graph(&matrix(features)?, sigma, graph::KERNEL_PRUNE).map_err(to_py)?,
    })
}

#[pyfunction]
#[pyo3(signature = (features, k = 7))]
fn self_tuning_graph(features: Vec<Vec<f64>>, k: usize) -> PyResult<PyGraph> {
    Ok(PyGraph {
        inner: graph::build_self_tuning_graph(&matrix(features)?, k, graph::KERNEL_PRUNE).map_err(to_py)?,
    })
}

/// `[(T, std_v0, components)]` and the elbow `(T, no_connect)`.
#[pyfunction]
#[pyo3(signature = (features, t_values, max_leaf_size = 20, split_rule = "quantile", seed = 0))]
#[allow(clippy::type_complexity)]
fn sweep_trees(
    features: Vec<Vec<f64>>,
    t_values: Vec<usize>,
    max_leaf_size: usize,
    split_rule: &str,
    seed: u64,
) -> PyResult<(Vec<(usize, f64, usize)>, Option<(usize, bool)>)> {
    let x = matrix(features)?;
    let curve = spectral::sweep_trees(&x, &t_values, tree_config(max_leaf_size, split_rule)?, seed).map_err(to_py)?;
    let elbow = spectral::detect_elbow(&curve, spectral::CONNECT_THRESHOLD)
        .ok()
        .map(|e| (e.trees, e.no_connect));
    let points = curve.points.iter().map(|p| (p.trees, p.std_v0, p.components)).collect();
    Ok((points, elbow))
}

/// Stratified `(train, val, test)` index lists.
#[pyfunction]
#[pyo3(signature = (labels, n_train, n_val, seed = 0))]
fn split_masks(labels: Vec<usize>, n_train: usize, n_val: usize, seed: u64) -> PyResult<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let m = dataset::split_masks(labels.len(), n_train, n_val, &labels, seed).map_err(to_py)?;
    Ok((m.train, m.val, m.test))
}

#[pyclass(name = "Model", frozen)]
struct PyModel {
    inner: GcnModel,
}

#[pyclass(name = "TrainReport", frozen, get_all)]
struct PyTrainReport {
    train_loss: Vec<f64>,
    val_loss: Vec<f64>,
    val_accuracy: Vec<f64>,
    epochs_run: usize,
    best_epoch: Option<usize>,
    test_accuracy: f64,
}

#[pymethods]
impl PyModel {
    /// Trains on `train`, early-stops on `val` and reports accuracy on `test`.
    #[staticmethod]
    #[pyo3(signature = (data, graph, train, val, test, hidden = 16, epochs = 200, learning_rate = 0.01, weight_decay = 5e-4, patience = 20, dropout = 0.0, seed = 0))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        data: &PyDataset,
        graph: &PyGraph,
        train: Vec<usize>,
        val: Vec<usize>,
        test: Vec<usize>,
        hidden: usize,
        epochs: usize,
        learning_rate: f64,
        weight_decay: f64,
        patience: usize,
        dropout: f64,
        seed: u64,
    ) -> PyResult<(Self, PyTrainReport)> {
        let hyper = Hyperparams {
            hidden,
            learning_rate,
            epochs,
            weight_decay,
            patience,
            dropout,
            seed,
        };
        let masks = dataset::SplitMasks { train, val, test };
        let adj = NormalizedAdjacency::from_graph(&graph.inner);
        let (model, r) = gcn::train(&data.inner, &masks, &adj, hyper).map_err(to_py)?;
        Ok((
            Self { inner: model },
            PyTrainReport {
                train_loss: r.train_loss,
                val_loss: r.val_loss,
                val_accuracy: r.val_accuracy,
                epochs_run: r.epochs_run,
                best_epoch: r.best_epoch,
                test_accuracy: r.test_accuracy,
            },
        ))
    }

    #[staticmethod]
    fn from_checkpoint(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: GcnModel::from_checkpoint(text, Hyperparams::default()).map_err(to_py)?,
        })
    }

    fn to_checkpoint(&self) -> String {
        self.inner.to_checkpoint()
    }

    /// Class logits for every node.
    fn logits(&self, data: &PyDataset, graph: &PyGraph) -> PyResult<Vec<Vec<f64>>> {
        let adj = NormalizedAdjacency::from_graph(&graph.inner);
        let out = gcn::forward(&self.inner, &data.inner.features, &adj).map_err(to_py)?;
        Ok(rows_of(&out.logits))
    }

    fn accuracy(&self, data: &PyDataset, graph: &PyGraph, mask: Vec<usize>) -> PyResult<f64> {
        let adj = NormalizedAdjacency::from_graph(&graph.inner);
        gcn::evaluate(&self.inner, &data.inner.features, &adj, &data.inner.labels, &mask).map_err(to_py)
    }
}

#[pymodule]
fn pyrpgcn(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}

/// Adds every class and function to `m`.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyGraph>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyTrainReport>()?;
    m.add_function(wrap_pyfunction!(rpforest_graph, m)?)?;
    m.add_function(wrap_pyfunction!(knn_graph, m)?)?;
    m.add_function(wrap_pyfunction!(heat_kernel_graph, m)?)?;
    m.add_function(wrap_pyfunction!(self_tuning_graph, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_trees, m)?)?;
    m.add_function(wrap_pyfunction!(split_masks, m)?)?;
    Ok(())
}
