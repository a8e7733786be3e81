use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative pivot threshold for the symmetric factorization.
const SPD_PIVOT_EPS: f64 = 1e-12;
/// Relative off-diagonal threshold for the Jacobi sweeps.
const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;
const SYMMETRY_TOL: f64 = 1e-10;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
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
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Builds a matrix from row-major data. Fails if the length does not
    /// match or any entry is non-finite.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("matrix entries must be finite".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Self::from_row_major(r, c, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// `column(j) . x` without allocating.
    pub fn column_dot(&self, j: usize, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.rows);
        x.iter()
            .enumerate()
            .map(|(i, xi)| self.data[i * self.cols + j] * xi)
            .sum()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(other.row(k)) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn mat_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix times vector of length {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// `A diag(d) A^T` for a `p x N` matrix A and N weights.
    pub fn weighted_gram(&self, weights: &[f64]) -> Self {
        debug_assert_eq!(weights.len(), self.cols);
        let p = self.rows;
        let mut out = Self::zeros(p, p);
        for a in 0..p {
            let ra = self.row(a);
            for b in a..p {
                let rb = self.row(b);
                let s: f64 = ra
                    .iter()
                    .zip(rb)
                    .zip(weights)
                    .map(|((x, y), w)| x * y * w)
                    .sum();
                out[(a, b)] = s;
                out[(b, a)] = s;
            }
        }
        out
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Symmetric within `tol` relative to the largest entry magnitude.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        let scale = self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-300);
        (0..self.rows).all(|i| {
            (i + 1..self.cols).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol * scale)
        })
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

fn check_symmetric(a: &DenseMatrix) -> Result<()> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "expected a square matrix, got {}x{}",
            a.rows, a.cols
        )));
    }
    if !a.is_symmetric(SYMMETRY_TOL) {
        return Err(Error::Domain("matrix is not symmetric".into()));
    }
    Ok(())
}

/// Lower Cholesky factor, failing on pivots at or below
/// `1e-12 * trace(A) / p`.
fn cholesky(a: &DenseMatrix) -> Result<DenseMatrix> {
    check_symmetric(a)?;
    let n = a.rows;
    let threshold = SPD_PIVOT_EPS * a.trace() / n.max(1) as f64;
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut pivot = a[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if !(pivot > threshold) || !pivot.is_finite() {
            return Err(Error::NotPositiveDefinite { index: j, pivot });
        }
        let ljj = pivot.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

fn cholesky_solve(l: &DenseMatrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows;
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[(k, i)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    y
}

/// Solves `A x = b` for symmetric positive definite A.
pub fn solve_spd(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.rows {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} system with right-hand side of length {}",
            a.rows,
            a.cols,
            b.len()
        )));
    }
    let l = cholesky(a)?;
    Ok(cholesky_solve(&l, b))
}

/// Inverse of a symmetric positive definite matrix, symmetrized.
pub fn spd_inverse(a: &DenseMatrix) -> Result<DenseMatrix> {
    let l = cholesky(a)?;
    let n = a.rows;
    let mut inv = DenseMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[j] = 1.0;
        let col = cholesky_solve(&l, &e);
        for (i, v) in col.into_iter().enumerate() {
            inv[(i, j)] = v;
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            let m = 0.5 * (inv[(i, j)] + inv[(j, i)]);
            inv[(i, j)] = m;
            inv[(j, i)] = m;
        }
    }
    Ok(inv)
}

/// Eigenvalues of a symmetric matrix in descending order, by cyclic Jacobi
/// rotations.
pub fn sym_eigenvalues(a: &DenseMatrix) -> Result<Vec<f64>> {
    check_symmetric(a)?;
    let n = a.rows;
    let mut m = a.clone();
    let threshold = JACOBI_TOL * a.frobenius_norm();
    let off_norm = |m: &DenseMatrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                s += 2.0 * m[(i, j)] * m[(i, j)];
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    while off_norm(&m) > threshold {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::ConvergenceFailure { sweeps });
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    Ok(eig)
}
