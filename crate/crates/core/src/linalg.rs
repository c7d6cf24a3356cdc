//! Dense row-major matrices and a symmetric eigensolver.

use std::fmt;

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    /// Builds a matrix from row-major data, rejecting wrong lengths and
    /// non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "data length {} does not match {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / cols.max(1),
                col: pos % cols.max(1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("ragged rows"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    /// Matrix product `self * other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                op: "matmul",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ * other` without materializing the transpose.
    pub fn t_matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::DimensionMismatch {
                op: "t_matmul",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        let mut out = Matrix::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let b_row = other.row(k);
            for (i, &a) in self.row(k).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self * otherᵀ` without materializing the transpose.
    pub fn matmul_t(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                op: "matmul_t",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        Ok(Matrix::from_fn(self.rows, other.rows, |i, j| {
            self.row(i).iter().zip(other.row(j)).map(|(a, b)| a * b).sum()
        }))
    }

    pub fn scale(&self, s: f64) -> Matrix {
        self.map(|v| v * s)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    fn zip_with(&self, other: &Matrix, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                op,
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// Largest absolute elementwise difference; `inf` on shape mismatch.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        if self.shape() != other.shape() {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Selects a subset of rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEig {
    /// Ascending.
    pub values: Vec<f64>,
    /// Column `i` is the unit eigenvector for `values[i]`.
    pub vectors: Matrix,
}

impl SymEig {
    pub fn vector(&self, i: usize) -> Vec<f64> {
        self.vectors.column(i)
    }
}

pub const SYMMETRY_TOL: f64 = 1e-10;
pub const JACOBI_MAX_SWEEPS: usize = 100;
pub const JACOBI_OFF_TOL: f64 = 1e-12;

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// The input must be square and symmetric to within [`SYMMETRY_TOL`]; it is
/// symmetrized as `(M + Mᵀ)/2` before rotating. Sweeps stop once the
/// off-diagonal Frobenius norm drops below `JACOBI_OFF_TOL · max(1, ‖M‖_F)`.
pub fn sym_eig(m: &Matrix) -> Result<SymEig> {
    let n = m.rows;
    if m.rows != m.cols {
        return Err(Error::NotSquare {
            rows: m.rows,
            cols: m.cols,
        });
    }
    if let Some(pos) = m.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            row: pos / n,
            col: pos % n,
        });
    }
    let mut a = m.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let (x, y) = (m.get(i, j), m.get(j, i));
            let diff = (x - y).abs();
            if diff > SYMMETRY_TOL {
                return Err(Error::NotSymmetric { row: i, col: j, diff });
            }
            let avg = 0.5 * (x + y);
            a.set(i, j, avg);
            a.set(j, i, avg);
        }
    }

    let tol = JACOBI_OFF_TOL * a.frobenius_norm().max(1.0);
    // Rows of `vt` are the eigenvectors, kept transposed so rotations touch
    // contiguous memory.
    let mut vt = Matrix::identity(n);
    let mut converged = n <= 1;
    let mut off = off_diagonal_norm(&a);
    for sweep in 0..JACOBI_MAX_SWEEPS {
        if off < tol {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.data[p * n + q];
                // Late in the iteration, entries too small to change either
                // diagonal entry are zeroed without rotating.
                let g = 100.0 * apq.abs();
                let (app, aqq) = (a.data[p * n + p], a.data[q * n + q]);
                if sweep > 3 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    a.data[p * n + q] = 0.0;
                    a.data[q * n + p] = 0.0;
                    continue;
                }
                rotate(&mut a, &mut vt, p, q);
            }
        }
        off = off_diagonal_norm(&a);
    }
    if !converged && off >= tol {
        return Err(Error::NoConvergence {
            max_sweeps: JACOBI_MAX_SWEEPS,
            off_norm: off,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(i, i).total_cmp(&a.get(j, j)).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a.get(i, i)).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| vt.get(order[c], r));
    Ok(SymEig { values, vectors })
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.rows;
    let mut s = 0.0;
    for i in 0..n {
        for (j, v) in a.row(i).iter().enumerate() {
            if i != j {
                s += v * v;
            }
        }
    }
    s.sqrt()
}

/// One Jacobi rotation annihilating `a[p][q]`.
fn rotate(a: &mut Matrix, vt: &mut Matrix, p: usize, q: usize) {
    let n = a.rows;
    let apq = a.get(p, q);
    if apq == 0.0 {
        return;
    }
    let app = a.get(p, p);
    let aqq = a.get(q, q);
    let theta = (aqq - app) / (2.0 * apq);
    let t = if theta.is_finite() {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    } else {
        // |theta| overflowed: the rotation is the identity to working precision.
        1.0 / (2.0 * theta)
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    // `a` stays symmetric, so rows p and q double as columns p and q.
    let data = &mut a.data;
    for r in 0..n {
        if r == p || r == q {
            continue;
        }
        let arp = data[p * n + r];
        let arq = data[q * n + r];
        let new_rp = c * arp - s * arq;
        let new_rq = s * arp + c * arq;
        data[p * n + r] = new_rp;
        data[q * n + r] = new_rq;
        data[r * n + p] = new_rp;
        data[r * n + q] = new_rq;
    }
    data[p * n + p] = app - t * apq;
    data[q * n + q] = aqq + t * apq;
    data[p * n + q] = 0.0;
    data[q * n + p] = 0.0;

    debug_assert!(p < q);
    let (lo, hi) = vt.data.split_at_mut(q * n);
    let (vp, vq) = (&mut lo[p * n..(p + 1) * n], &mut hi[..n]);
    for (x, y) in vp.iter_mut().zip(vq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_sym(n: usize, seed: u64) -> Matrix {
        let a = random(n, n, seed);
        a.add(&a.transpose()).unwrap().scale(0.5)
    }

    fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = vec![vec![0.0; b.cols()]; a.rows()];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                for k in 0..a.cols() {
                    *cell += a.get(i, k) * b.get(k, j);
                }
            }
        }
        Matrix::from_rows(&out).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let m = random(3, 3, 1);
        assert_eq!(Matrix::identity(3).matmul(&m).unwrap(), m);
    }

    #[test]
    fn matmul_zero() {
        let z = Matrix::zeros(2, 3);
        let ones = Matrix::from_fn(3, 2, |_, _| 1.0);
        assert_eq!(z.matmul(&ones).unwrap(), Matrix::zeros(2, 2));
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let a = random(4, 4, 2);
        let b = random(4, 4, 3);
        assert!(a.matmul(&b).unwrap().max_abs_diff(&naive_matmul(&a, &b)) < 1e-12);
        assert!(a.t_matmul(&b).unwrap().max_abs_diff(&naive_matmul(&a.transpose(), &b)) < 1e-12);
        assert!(a.matmul_t(&b).unwrap().max_abs_diff(&naive_matmul(&a, &b.transpose())) < 1e-12);
    }

    #[test]
    fn matmul_dimension_mismatch() {
        let err = Matrix::zeros(2, 3).matmul(&Matrix::zeros(2, 3)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn new_rejects_nan_and_bad_length() {
        assert!(Matrix::new(1, 2, vec![1.0]).is_err());
        assert!(matches!(
            Matrix::new(1, 2, vec![1.0, f64::NAN]),
            Err(Error::NonFinite { row: 0, col: 1 })
        ));
    }

    #[test]
    fn eig_diagonal() {
        let e = sym_eig(&Matrix::from_diag(&[3.0, 1.0, 2.0])).unwrap();
        assert_eq!(e.values, vec![1.0, 2.0, 3.0]);
        let expected_axes = [1, 2, 0];
        for (col, &axis) in expected_axes.iter().enumerate() {
            let v = e.vector(col);
            for (k, x) in v.iter().enumerate() {
                let want = if k == axis { 1.0 } else { 0.0 };
                assert!((x.abs() - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn eig_swap_matrix() {
        let m = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let e = sym_eig(&m).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eig_residuals_random_6x6() {
        let m = random_sym(6, 11);
        let e = sym_eig(&m).unwrap();
        for i in 0..6 {
            let v = Matrix::new(6, 1, e.vector(i)).unwrap();
            let mv = m.matmul(&v).unwrap();
            let resid = mv.max_abs_diff(&v.scale(e.values[i]));
            assert!(resid < 1e-8, "pair {i}: residual {resid}");
        }
        assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn eig_reconstruction_and_orthogonality_50x50() {
        let m = random_sym(50, 5);
        let e = sym_eig(&m).unwrap();
        let v = &e.vectors;
        let recon = v
            .matmul(&Matrix::from_diag(&e.values))
            .unwrap()
            .matmul_t(v)
            .unwrap();
        assert!(recon.max_abs_diff(&m) < 1e-8);
        assert!(v.t_matmul(v).unwrap().max_abs_diff(&Matrix::identity(50)) < 1e-8);
    }

    #[test]
    fn eig_rejects_bad_input() {
        assert!(matches!(sym_eig(&Matrix::zeros(2, 3)), Err(Error::NotSquare { .. })));
        let asym = Matrix::from_rows(&[vec![0.0, 1.0], vec![0.5, 0.0]]).unwrap();
        assert!(matches!(sym_eig(&asym), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn eig_symmetrizes_within_tolerance() {
        let m = Matrix::from_rows(&[vec![2.0, 1.0 + 1e-11], vec![1.0, 2.0]]).unwrap();
        let e = sym_eig(&m).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-10);
        assert!((e.values[1] - 3.0).abs() < 1e-10);
    }

    #[test]
    fn eig_trivial_sizes() {
        let e = sym_eig(&Matrix::zeros(0, 0)).unwrap();
        assert!(e.values.is_empty());
        let e = sym_eig(&Matrix::from_diag(&[4.0])).unwrap();
        assert_eq!(e.values, vec![4.0]);
        assert_eq!(e.vectors.get(0, 0), 1.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]
            #[test]
            fn reconstruction_holds(n in 1usize..20, seed in any::<u64>()) {
                let m = random_sym(n, seed);
                let e = sym_eig(&m).unwrap();
                let v = &e.vectors;
                let recon = v.matmul(&Matrix::from_diag(&e.values)).unwrap().matmul_t(v).unwrap();
                prop_assert!(recon.max_abs_diff(&m) < 1e-8);
                prop_assert!(v.t_matmul(v).unwrap().max_abs_diff(&Matrix::identity(n)) < 1e-8);
            }
        }
    }
}
