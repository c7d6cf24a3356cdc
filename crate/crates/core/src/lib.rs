//! Graph construction from raw feature matrices with random projection
//! forests, spectral connectivity diagnostics for choosing the forest size,
//! and a two-layer graph convolutional network for semi-supervised node
//! classification.
//!
//! The modules build on each other bottom-up:
//!
//! * [`linalg`]: dense row-major matrices and a cyclic Jacobi eigensolver.
//! * [`dataset`]: synthetic 2D generators, CSV ingestion, stratified splits.
//! * [`rptree`]: a single random projection tree.
//! * [`graph`]: forest co-occurrence graphs and the k-nn / kernel baselines.
//! * [`spectral`]: Laplacians, the smallest-eigenvector connectivity check and
//!   the tree-count sweep.
//! * [`gcn`]: normalized adjacency, forward pass, gradients, training.
//! * [`experiment`]: the configuration-driven runner behind the `rpgcn` CLI.

// `!(x > 0.0)` rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod error;
pub mod experiment;
pub mod gcn;
pub mod graph;
mod kdtree;
pub mod linalg;
pub mod plot;
pub mod rng;
pub mod rptree;
pub mod spectral;

pub use dataset::{Dataset, SplitMasks};
pub use error::{Error, Result};
pub use gcn::{GcnModel, Hyperparams, NormalizedAdjacency, TrainReport};
pub use graph::WeightedGraph;
pub use linalg::Matrix;
pub use rptree::{RpNode, RpTree, SplitRule, TreeConfig};
pub use spectral::{Connectivity, Elbow, SweepCurve, SweepPoint};
