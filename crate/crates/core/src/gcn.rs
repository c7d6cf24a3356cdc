//! Two-layer graph convolutional network for node classification.
//!
//! `logits = Â · ReLU(Â X W0) · W1` with `Â = D̃^{-1/2} (A + I) D̃^{-1/2}`.
//! Softmax is folded into the masked cross-entropy loss.

use std::fmt::Write as _;

use rand::Rng;

use crate::dataset::{Dataset, SplitMasks};
use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::linalg::Matrix;
use crate::rng;

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` in CSR form. Rows are sorted by column.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl NormalizedAdjacency {
    pub fn from_graph(g: &WeightedGraph) -> Self {
        let n = g.n();
        let deg: Vec<f64> = g.degrees().iter().map(|d| d + 1.0).collect();
        let inv_sqrt: Vec<f64> = deg.iter().map(|d| 1.0 / d.sqrt()).collect();
        let mut rows: Vec<Vec<(usize, f64)>> = g.adjacency_lists();
        for (i, row) in rows.iter_mut().enumerate() {
            row.push((i, 1.0));
            row.sort_by_key(|&(j, _)| j);
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for (i, row) in rows.into_iter().enumerate() {
            for (j, w) in row {
                col_idx.push(j);
                values.push(w * inv_sqrt[i] * inv_sqrt[j]);
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[row.clone()].binary_search(&j) {
            Ok(pos) => self.values[row.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                m.set(i, self.col_idx[k], self.values[k]);
            }
        }
        m
    }

    /// `Â · m`.
    pub fn matmul(&self, m: &Matrix) -> Result<Matrix> {
        if m.rows() != self.n {
            return Err(Error::DimensionMismatch {
                op: "adjacency matmul",
                lhs: (self.n, self.n),
                rhs: m.shape(),
            });
        }
        let mut out = Matrix::zeros(self.n, m.cols());
        for i in 0..self.n {
            let out_row = out.row_mut(i);
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let a = self.values[k];
                for (o, &b) in out_row.iter_mut().zip(m.row(self.col_idx[k])) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }
}

pub fn normalize_adjacency(g: &WeightedGraph) -> NormalizedAdjacency {
    NormalizedAdjacency::from_graph(g)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    pub hidden: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub weight_decay: f64,
    /// Epochs without validation-loss improvement before stopping.
    pub patience: usize,
    /// Dropout rate on the hidden layer during training; 0 disables it.
    pub dropout: f64,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            hidden: 16,
            learning_rate: 0.01,
            epochs: 200,
            weight_decay: 5e-4,
            patience: 20,
            dropout: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnModel {
    pub w0: Matrix,
    pub w1: Matrix,
    pub hyper: Hyperparams,
}

impl GcnModel {
    /// Glorot-uniform initialization.
    pub fn init(in_features: usize, n_classes: usize, hyper: Hyperparams) -> Self {
        let mut rng = rng::stream(rng::derive(hyper.seed, rng::MODEL));
        let mut glorot = |fan_in: usize, fan_out: usize| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            Matrix::from_fn(fan_in, fan_out, |_, _| rng.random_range(-limit..limit))
        };
        let w0 = glorot(in_features, hyper.hidden);
        let w1 = glorot(hyper.hidden, n_classes);
        Self { w0, w1, hyper }
    }

    pub fn from_weights(w0: Matrix, w1: Matrix, hyper: Hyperparams) -> Result<Self> {
        if w0.cols() != w1.rows() {
            return Err(Error::DimensionMismatch {
                op: "model weights",
                lhs: w0.shape(),
                rhs: w1.shape(),
            });
        }
        let hyper = Hyperparams {
            hidden: w0.cols(),
            ..hyper
        };
        Ok(Self { w0, w1, hyper })
    }

    pub fn n_classes(&self) -> usize {
        self.w1.cols()
    }

    pub fn is_finite(&self) -> bool {
        self.w0.is_finite() && self.w1.is_finite()
    }

    /// Text checkpoint: shapes followed by row-major weights, one matrix
    /// row per line. Values round-trip exactly.
    pub fn to_checkpoint(&self) -> String {
        let mut s = String::from("gcn-checkpoint 1\n");
        for (name, m) in [("w0", &self.w0), ("w1", &self.w1)] {
            writeln!(s, "{name} {} {}", m.rows(), m.cols()).unwrap();
            for r in 0..m.rows() {
                let row: Vec<String> = m.row(r).iter().map(|v| v.to_string()).collect();
                writeln!(s, "{}", row.join(" ")).unwrap();
            }
        }
        s
    }

    pub fn from_checkpoint(text: &str, hyper: Hyperparams) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let err = |line: usize, reason: &str| Error::Parse {
            line: line + 1,
            reason: reason.to_string(),
        };
        match lines.next() {
            Some((_, "gcn-checkpoint 1")) => {}
            _ => return Err(err(0, "missing 'gcn-checkpoint 1' header")),
        }
        let mut read_matrix = |name: &str| -> Result<Matrix> {
            let (ln, header) = lines.next().ok_or_else(|| err(0, "truncated checkpoint"))?;
            let parts: Vec<&str> = header.split_whitespace().collect();
            if parts.len() != 3 || parts[0] != name {
                return Err(err(ln, &format!("expected '{name} <rows> <cols>'")));
            }
            let rows: usize = parts[1].parse().map_err(|_| err(ln, "bad row count"))?;
            let cols: usize = parts[2].parse().map_err(|_| err(ln, "bad column count"))?;
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let (ln, line) = lines.next().ok_or_else(|| err(ln, "truncated matrix"))?;
                let before = data.len();
                for tok in line.split_whitespace() {
                    data.push(tok.parse::<f64>().map_err(|_| err(ln, "bad weight"))?);
                }
                if data.len() - before != cols {
                    return Err(err(ln, "wrong number of columns"));
                }
            }
            Matrix::new(rows, cols, data)
        };
        let w0 = read_matrix("w0")?;
        let w1 = read_matrix("w1")?;
        Self::from_weights(w0, w1, hyper)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    /// `n × c`, before softmax.
    pub logits: Matrix,
    /// `n × h`, after ReLU.
    pub hidden: Matrix,
}

pub fn forward(model: &GcnModel, x: &Matrix, adj: &NormalizedAdjacency) -> Result<Forward> {
    let ax = adj.matmul(x)?;
    forward_from_propagated(model, &ax, adj)
}

/// Forward pass given the precomputed first-layer propagation `Â X`.
fn forward_from_propagated(model: &GcnModel, ax: &Matrix, adj: &NormalizedAdjacency) -> Result<Forward> {
    let hidden = ax.matmul(&model.w0)?.map(|v| v.max(0.0));
    let logits = adj.matmul(&hidden.matmul(&model.w1)?)?;
    Ok(Forward { logits, hidden })
}

fn check_mask(mask: &[usize], labels: &[usize], logits: &Matrix) -> Result<()> {
    if mask.is_empty() {
        return Err(Error::invalid("mask is empty"));
    }
    if labels.len() != logits.rows() {
        return Err(Error::invalid(format!(
            "{} labels for {} nodes",
            labels.len(),
            logits.rows()
        )));
    }
    for &i in mask {
        if i >= logits.rows() {
            return Err(Error::invalid(format!("mask index {i} out of range")));
        }
        if labels[i] >= logits.cols() {
            return Err(Error::invalid(format!(
                "label {} of node {i} exceeds {} classes",
                labels[i],
                logits.cols()
            )));
        }
    }
    Ok(())
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Mean of `-log softmax(logits_i)[y_i]` over masked nodes.
pub fn masked_cross_entropy(logits: &Matrix, labels: &[usize], mask: &[usize]) -> Result<f64> {
    check_mask(mask, labels, logits)?;
    let total: f64 = mask
        .iter()
        .map(|&i| {
            let row = logits.row(i);
            log_sum_exp(row) - row[labels[i]]
        })
        .sum();
    Ok(total / mask.len() as f64)
}

/// Fraction of masked nodes whose arg-max logit equals the label; ties go
/// to the lowest class index.
pub fn accuracy(logits: &Matrix, labels: &[usize], mask: &[usize]) -> Result<f64> {
    check_mask(mask, labels, logits)?;
    let correct = mask.iter().filter(|&&i| argmax(logits.row(i)) == labels[i]).count();
    Ok(correct as f64 / mask.len() as f64)
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = k;
        }
    }
    best
}

pub fn evaluate(model: &GcnModel, x: &Matrix, adj: &NormalizedAdjacency, labels: &[usize], mask: &[usize]) -> Result<f64> {
    let out = forward(model, x, adj)?;
    accuracy(&out.logits, labels, mask)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w0: Matrix,
    pub w1: Matrix,
}

/// Gradients of `masked CE + (λ/2)(‖W0‖² + ‖W1‖²)`, λ being the model's
/// weight decay.
pub fn gradients(
    model: &GcnModel,
    x: &Matrix,
    adj: &NormalizedAdjacency,
    labels: &[usize],
    mask: &[usize],
) -> Result<Gradients> {
    let ax = adj.matmul(x)?;
    Ok(loss_and_gradients(model, &ax, adj, labels, mask, None)?.1)
}

/// Objective value matching [`gradients`].
pub fn objective(model: &GcnModel, x: &Matrix, adj: &NormalizedAdjacency, labels: &[usize], mask: &[usize]) -> Result<f64> {
    let out = forward(model, x, adj)?;
    Ok(masked_cross_entropy(&out.logits, labels, mask)? + decay_penalty(model))
}

fn decay_penalty(model: &GcnModel) -> f64 {
    let sq = |m: &Matrix| m.as_slice().iter().map(|v| v * v).sum::<f64>();
    0.5 * model.hyper.weight_decay * (sq(&model.w0) + sq(&model.w1))
}

/// Returns (data loss, gradients of data loss + decay). `keep` is an
/// optional inverted-dropout multiplier on the hidden layer.
fn loss_and_gradients(
    model: &GcnModel,
    ax: &Matrix,
    adj: &NormalizedAdjacency,
    labels: &[usize],
    mask: &[usize],
    keep: Option<&Matrix>,
) -> Result<(f64, Gradients)> {
    let pre = ax.matmul(&model.w0)?;
    let mut hidden = pre.map(|v| v.max(0.0));
    if let Some(keep) = keep {
        for (h, k) in hidden.as_mut_slice().iter_mut().zip(keep.as_slice()) {
            *h *= k;
        }
    }
    let logits = adj.matmul(&hidden.matmul(&model.w1)?)?;
    let loss = masked_cross_entropy(&logits, labels, mask)?;

    // dL/dlogits = (softmax - onehot) / |mask| on masked rows.
    let mut d_logits = Matrix::zeros(logits.rows(), logits.cols());
    let scale = 1.0 / mask.len() as f64;
    for &i in mask {
        let row = logits.row(i);
        let lse = log_sum_exp(row);
        let d = d_logits.row_mut(i);
        for (k, (dk, &z)) in d.iter_mut().zip(row).enumerate() {
            *dk = ((z - lse).exp() - if k == labels[i] { 1.0 } else { 0.0 }) * scale;
        }
    }
    // Â is symmetric, so Âᵀ dlogits = Â dlogits.
    let d_q = adj.matmul(&d_logits)?;
    let mut d_w1 = hidden.t_matmul(&d_q)?;
    let mut d_hidden = d_q.matmul_t(&model.w1)?;
    if let Some(keep) = keep {
        for (h, k) in d_hidden.as_mut_slice().iter_mut().zip(keep.as_slice()) {
            *h *= k;
        }
    }
    for (dh, &p) in d_hidden.as_mut_slice().iter_mut().zip(pre.as_slice()) {
        if p <= 0.0 {
            *dh = 0.0;
        }
    }
    let mut d_w0 = ax.t_matmul(&d_hidden)?;
    let lambda = model.hyper.weight_decay;
    if lambda != 0.0 {
        for (g, w) in d_w0.as_mut_slice().iter_mut().zip(model.w0.as_slice()) {
            *g += lambda * w;
        }
        for (g, w) in d_w1.as_mut_slice().iter_mut().zip(model.w1.as_slice()) {
            *g += lambda * w;
        }
    }
    Ok((loss, Gradients { w0: d_w0, w1: d_w1 }))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub val_accuracy: Vec<f64>,
    pub epochs_run: usize,
    /// Epoch whose weights were kept (best validation loss); `None` when
    /// no epoch ran or there is no validation set and the last one is kept.
    pub best_epoch: Option<usize>,
    pub test_accuracy: f64,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Adam {
    fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.t);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.t);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + ADAM_EPS);
        }
    }
}

/// Full-batch Adam on the training mask with early stopping on validation
/// loss. The returned model holds the weights of the best validation epoch.
pub fn train(dataset: &Dataset, masks: &SplitMasks, adj: &NormalizedAdjacency, hyper: Hyperparams) -> Result<(GcnModel, TrainReport)> {
    let x = &dataset.features;
    let labels = &dataset.labels;
    if adj.n() != dataset.len() {
        return Err(Error::DimensionMismatch {
            op: "train",
            lhs: (adj.n(), adj.n()),
            rhs: x.shape(),
        });
    }
    if masks.train.is_empty() {
        return Err(Error::invalid("training mask is empty"));
    }
    if !(0.0..1.0).contains(&hyper.dropout) {
        return Err(Error::invalid(format!("dropout must lie in [0, 1), got {}", hyper.dropout)));
    }
    if hyper.hidden == 0 {
        return Err(Error::invalid("hidden size must be positive"));
    }

    let mut model = GcnModel::init(x.cols(), dataset.n_classes(), hyper);
    let ax = adj.matmul(x)?;
    let mut report = TrainReport::default();
    let mut adam0 = Adam::new(model.w0.as_slice().len());
    let mut adam1 = Adam::new(model.w1.as_slice().len());
    let mut dropout_rng = rng::stream(rng::derive(hyper.seed, rng::MODEL ^ 0xd0));
    let keep_scale = 1.0 / (1.0 - hyper.dropout);

    let mut best: Option<(f64, GcnModel, usize)> = None;
    let mut since_best = 0;
    for epoch in 0..hyper.epochs {
        let keep = (hyper.dropout > 0.0).then(|| {
            Matrix::from_fn(x.rows(), hyper.hidden, |_, _| {
                if dropout_rng.random::<f64>() < hyper.dropout {
                    0.0
                } else {
                    keep_scale
                }
            })
        });
        let (loss, grads) = loss_and_gradients(&model, &ax, adj, labels, &masks.train, keep.as_ref())?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        adam0.step(model.w0.as_mut_slice(), grads.w0.as_slice(), hyper.learning_rate);
        adam1.step(model.w1.as_mut_slice(), grads.w1.as_slice(), hyper.learning_rate);
        if !model.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        report.train_loss.push(loss);
        report.epochs_run = epoch + 1;

        if masks.val.is_empty() {
            continue;
        }
        let out = forward_from_propagated(&model, &ax, adj)?;
        let val_loss = masked_cross_entropy(&out.logits, labels, &masks.val)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        report.val_loss.push(val_loss);
        report.val_accuracy.push(accuracy(&out.logits, labels, &masks.val)?);
        if best.as_ref().is_none_or(|(b, _, _)| val_loss < *b) {
            best = Some((val_loss, model.clone(), epoch));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= hyper.patience {
                break;
            }
        }
    }
    if let Some((_, best_model, epoch)) = best {
        model = best_model;
        report.best_epoch = Some(epoch);
    }
    if !masks.test.is_empty() {
        let out = forward_from_propagated(&model, &ax, adj)?;
        report.test_accuracy = accuracy(&out.logits, labels, &masks.test)?;
    }
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn edge_graph() -> WeightedGraph {
        let mut g = WeightedGraph::new(2);
        g.set_edge(0, 1, 1.0).unwrap();
        g
    }

    #[test]
    fn empty_graph_normalizes_to_identity() {
        let adj = normalize_adjacency(&WeightedGraph::new(4));
        assert_eq!(adj.to_dense(), Matrix::identity(4));
        assert_eq!(adj.nnz(), 4);
    }

    #[test]
    fn single_edge_normalizes_to_halves() {
        let adj = normalize_adjacency(&edge_graph());
        let want = Matrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert!(adj.to_dense().max_abs_diff(&want) < 1e-15);
        assert_eq!(adj.get(0, 1), adj.get(1, 0));
    }

    #[test]
    fn sparse_matmul_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut g = WeightedGraph::new(6);
        for (i, j) in [(0, 1), (1, 2), (2, 5), (3, 4), (0, 5)] {
            g.set_edge(i, j, rng.random_range(0.1..1.0)).unwrap();
        }
        let adj = normalize_adjacency(&g);
        let m = Matrix::from_fn(6, 3, |_, _| rng.random_range(-1.0..1.0));
        let sparse = adj.matmul(&m).unwrap();
        let dense = adj.to_dense().matmul(&m).unwrap();
        assert!(sparse.max_abs_diff(&dense) < 1e-15);
        assert!(adj.matmul(&Matrix::zeros(5, 1)).is_err());
    }

    #[test]
    fn identity_chain_forward() {
        let hyper = Hyperparams { hidden: 3, ..Default::default() };
        let model = GcnModel::from_weights(Matrix::identity(3), Matrix::identity(3), hyper).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, 0.0, 2.0], vec![0.5, 0.5, 0.0], vec![3.0, 1.0, 1.0]]).unwrap();
        let adj = normalize_adjacency(&WeightedGraph::new(3));
        let out = forward(&model, &x, &adj).unwrap();
        assert_eq!(out.logits, x);
        let zero = forward(&model, &Matrix::zeros(3, 3), &adj).unwrap();
        assert_eq!(zero.logits, Matrix::zeros(3, 3));
    }

    #[test]
    fn forward_shape_mismatch() {
        let model = GcnModel::init(4, 2, Hyperparams::default());
        let adj = normalize_adjacency(&WeightedGraph::new(3));
        assert!(forward(&model, &Matrix::zeros(3, 5), &adj).is_err());
        assert!(forward(&model, &Matrix::zeros(2, 4), &adj).is_err());
    }

    #[test]
    fn uniform_logits_cost_ln_c() {
        let logits = Matrix::zeros(4, 5);
        let loss = masked_cross_entropy(&logits, &[0, 1, 2, 3], &[0, 2, 3]).unwrap();
        assert!((loss - 5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn confident_logits_cost_nothing() {
        let logits = Matrix::from_rows(&[vec![1000.0, 0.0], vec![0.0, 1000.0]]).unwrap();
        assert!(masked_cross_entropy(&logits, &[0, 1], &[0, 1]).unwrap() < 1e-300);
        assert!(masked_cross_entropy(&logits, &[0, 1], &[]).is_err());
    }

    #[test]
    fn cross_entropy_matches_per_node_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let logits = Matrix::from_fn(7, 3, |_, _| rng.random_range(-3.0..3.0));
        let labels = vec![0, 2, 1, 1, 0, 2, 2];
        let mask = vec![0, 3, 4, 6];
        let mut want = 0.0;
        for &i in &mask {
            let denom: f64 = (0..3).map(|k| logits.get(i, k).exp()).sum();
            want += -(logits.get(i, labels[i]).exp() / denom).ln();
        }
        want /= mask.len() as f64;
        let got = masked_cross_entropy(&logits, &labels, &mask).unwrap();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn accuracy_rules() {
        let perfect = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 2.0]]).unwrap();
        assert_eq!(accuracy(&perfect, &[0, 1], &[0, 1]).unwrap(), 1.0);
        assert_eq!(accuracy(&perfect, &[1, 0], &[0, 1]).unwrap(), 0.0);
        // Tie goes to class 0.
        let tie = Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        assert_eq!(accuracy(&tie, &[0], &[0]).unwrap(), 1.0);
        assert!(accuracy(&tie, &[0], &[]).is_err());
    }

    #[test]
    fn accuracy_matches_direct_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let logits = Matrix::from_fn(20, 4, |_, _| rng.random_range(-1.0..1.0));
        let labels: Vec<usize> = (0..20).map(|i| i % 4).collect();
        let mask: Vec<usize> = (0..20).filter(|i| i % 3 != 0).collect();
        let mut hits = 0;
        for &i in &mask {
            let row = logits.row(i);
            let mut best = 0;
            for k in 1..4 {
                if row[k] > row[best] {
                    best = k;
                }
            }
            if best == labels[i] {
                hits += 1;
            }
        }
        let want = hits as f64 / mask.len() as f64;
        assert_eq!(accuracy(&logits, &labels, &mask).unwrap(), want);
    }

    #[test]
    fn dead_input_has_zero_first_layer_gradient() {
        let hyper = Hyperparams { hidden: 3, weight_decay: 0.0, ..Default::default() };
        let model = GcnModel::init(2, 2, hyper);
        let adj = normalize_adjacency(&edge_graph());
        let g = gradients(&model, &Matrix::zeros(2, 2), &adj, &[0, 1], &[0, 1]).unwrap();
        assert!(g.w0.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn decay_only_gradient_is_lambda_w() {
        // Dead input and zero-output second layer leave only the decay term.
        let hyper = Hyperparams { hidden: 3, weight_decay: 0.1, ..Default::default() };
        let mut model = GcnModel::init(2, 2, hyper);
        let adj = normalize_adjacency(&edge_graph());
        let g = gradients(&model, &Matrix::zeros(2, 2), &adj, &[0, 1], &[0, 1]).unwrap();
        assert!(g.w0.max_abs_diff(&model.w0.scale(0.1)) < 1e-15);
        assert!(g.w1.max_abs_diff(&model.w1.scale(0.1)) < 1e-15);
        model.hyper.weight_decay = 0.0;
        let g = gradients(&model, &Matrix::zeros(2, 2), &adj, &[0, 1], &[0, 1]).unwrap();
        assert!(g.w1.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn checkpoint_round_trip_exact() {
        let model = GcnModel::init(5, 3, Hyperparams { hidden: 4, seed: 9, ..Default::default() });
        let text = model.to_checkpoint();
        let back = GcnModel::from_checkpoint(&text, model.hyper).unwrap();
        assert_eq!(back, model);
        assert!(GcnModel::from_checkpoint("nope", model.hyper).is_err());
        let truncated: String = text.lines().take(3).collect::<Vec<_>>().join("\n");
        assert!(GcnModel::from_checkpoint(&truncated, model.hyper).is_err());
    }

    #[test]
    fn init_is_seeded() {
        let h = Hyperparams::default();
        assert_eq!(GcnModel::init(3, 2, h), GcnModel::init(3, 2, h));
        assert_ne!(GcnModel::init(3, 2, h), GcnModel::init(3, 2, Hyperparams { seed: 1, ..h }));
    }
}
