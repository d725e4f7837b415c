//! Small dense matrices.
//!
//! Everything here is row-major `f64` storage sized for trait dimensions in
//! the tens, not thousands. [`SymMatrix`] is the validated symmetric form used
//! for covariance matrices and quadratic forms; [`Matrix`] is the general
//! rectangular form used for operators such as `G (G + E)^-1` and for stacking
//! basis vectors as columns.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance on `|M[i][j] - M[j][i]|` accepted before symmetrization.
pub const SYMMETRY_TOL: f64 = 1e-10;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Scales `v` to unit length in place and returns the original norm.
pub fn normalize(v: &mut [f64]) -> f64 {
    let n = norm(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Flips `v` so that its first component with magnitude above `1e-8` is positive.
pub fn canonical_sign(v: &mut [f64]) {
    if let Some(&lead) = v.iter().find(|x| x.abs() > 1e-8) {
        if lead < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// General dense matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
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

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Stacks equal-length vectors as the columns of a matrix.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        let mut m = Self::zeros(rows, cols);
        for (j, c) in columns.iter().enumerate() {
            if c.len() != rows {
                return Err(Error::DimensionMismatch(format!(
                    "column {j} has length {}, expected {rows}",
                    c.len()
                )));
            }
            for (i, &x) in c.iter().enumerate() {
                m[(i, j)] = x;
            }
        }
        Ok(m)
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

    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.cols).map(|j| self.column(j)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix applied to vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    pub fn add_assign(&mut self, other: &Matrix) -> Result<()> {
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} += {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// The single entry of a 1x1 matrix.
    pub fn scalar(&self) -> Option<f64> {
        (self.rows == 1 && self.cols == 1).then(|| self.data[0])
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Square matrix that is exactly symmetric in storage.
///
/// Construction accepts input that is symmetric to within
/// [`SYMMETRY_TOL`] relative to the largest entry and stores `(M + M')/2`.
/// Serialized as `{"dim": K, "entries": [row-major K*K reals]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SymMatrixRepr", into = "SymMatrixRepr")]
pub struct SymMatrix {
    inner: Matrix,
}

#[derive(Serialize, Deserialize)]
struct SymMatrixRepr {
    dim: usize,
    entries: Vec<f64>,
}

impl TryFrom<SymMatrixRepr> for SymMatrix {
    type Error = Error;

    fn try_from(r: SymMatrixRepr) -> Result<Self> {
        SymMatrix::from_row_major(r.dim, r.entries)
    }
}

impl From<SymMatrix> for SymMatrixRepr {
    fn from(m: SymMatrix) -> Self {
        SymMatrixRepr {
            dim: m.dim(),
            entries: m.inner.data,
        }
    }
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            inner: Matrix::zeros(dim, dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            inner: Matrix::identity(dim),
        }
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let mut m = Matrix::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        Self { inner: m }
    }

    pub fn from_row_major(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::InvalidMatrix(format!(
                "dim {dim} needs {} entries, got {}",
                dim * dim,
                entries.len()
            )));
        }
        Self::from_matrix(Matrix {
            rows: dim,
            cols: dim,
            data: entries,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidMatrix(
                "rows must all have length equal to the row count".into(),
            ));
        }
        Self::from_row_major(dim, rows.concat())
    }

    /// Validates finiteness and symmetry, then stores the symmetrized average.
    pub fn from_matrix(m: Matrix) -> Result<Self> {
        if m.rows != m.cols {
            return Err(Error::InvalidMatrix(format!(
                "{}x{} matrix is not square",
                m.rows, m.cols
            )));
        }
        if let Some(pos) = m.data.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidMatrix(format!(
                "non-finite entry at ({}, {})",
                pos / m.cols,
                pos % m.cols
            )));
        }
        let tol = SYMMETRY_TOL * m.max_abs().max(1.0);
        let n = m.rows;
        let mut out = m.clone();
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (m[(i, j)], m[(j, i)]);
                if (a - b).abs() > tol {
                    return Err(Error::InvalidMatrix(format!("asymmetric at ({i}, {j}): {a} vs {b}")));
                }
                let avg = 0.5 * (a + b);
                out[(i, j)] = avg;
                out[(j, i)] = avg;
            }
        }
        Ok(Self { inner: out })
    }

    /// Builds `sum_k w_k u_k u_k'` from columns `u_k`, symmetrized exactly.
    pub fn from_spectral(values: &[f64], vectors: &Matrix) -> Self {
        let n = vectors.rows();
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let s: f64 = values
                    .iter()
                    .enumerate()
                    .map(|(k, &w)| w * vectors[(i, k)] * vectors[(j, k)])
                    .sum();
                m[(i, j)] = s;
                m[(j, i)] = s;
            }
        }
        Self { inner: m }
    }

    pub fn dim(&self) -> usize {
        self.inner.rows
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner[(i, j)]
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.inner
    }

    pub fn entries(&self) -> &[f64] {
        &self.inner.data
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.inner.mul_vec(v)
    }

    /// `v' M v`.
    pub fn quadratic_form(&self, v: &[f64]) -> Result<f64> {
        Ok(dot(v, &self.mul_vec(v)?))
    }

    pub fn add(&self, other: &SymMatrix) -> Result<SymMatrix> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &SymMatrix) -> Result<SymMatrix> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> SymMatrix {
        let data = self.inner.data.iter().map(|x| x * s).collect();
        SymMatrix {
            inner: Matrix { data, ..self.inner },
        }
    }

    fn zip_with(&self, other: &SymMatrix, f: impl Fn(f64, f64) -> f64) -> Result<SymMatrix> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.dim(),
                self.dim(),
                other.dim(),
                other.dim()
            )));
        }
        let data = self
            .inner
            .data
            .iter()
            .zip(&other.inner.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(SymMatrix {
            inner: Matrix { data, ..self.inner },
        })
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.inner.frobenius_norm()
    }

    /// `P' M P` for a `K x L` matrix `P`.
    pub fn congruence(&self, p: &Matrix) -> Result<SymMatrix> {
        let mp = self.inner.matmul(p)?;
        let out = p.transpose().matmul(&mp)?;
        let l = out.rows;
        let mut sym = out.clone();
        for i in 0..l {
            for j in (i + 1)..l {
                let avg = 0.5 * (out[(i, j)] + out[(j, i)]);
                sym[(i, j)] = avg;
                sym[(j, i)] = avg;
            }
        }
        Ok(SymMatrix { inner: sym })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetrizes_within_tolerance() {
        let m = SymMatrix::from_row_major(2, vec![1.0, 2.0, 2.0 + 1e-12, 3.0]).unwrap();
        assert_eq!(m.get(0, 1), m.get(1, 0));
    }

    #[test]
    fn rejects_asymmetry_and_nan() {
        assert!(matches!(
            SymMatrix::from_row_major(2, vec![1.0, 2.0, 2.1, 3.0]),
            Err(Error::InvalidMatrix(_))
        ));
        assert!(matches!(
            SymMatrix::from_row_major(2, vec![1.0, f64::NAN, f64::NAN, 3.0]),
            Err(Error::InvalidMatrix(_))
        ));
        assert!(SymMatrix::from_row_major(2, vec![1.0; 3]).is_err());
    }

    #[test]
    fn json_shape() {
        let m = SymMatrix::diagonal(&[1.0, 2.0]);
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, r#"{"dim":2,"entries":[1.0,0.0,0.0,2.0]}"#);
        let back: SymMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<SymMatrix>(r#"{"dim":2,"entries":[1,2,3,4]}"#).is_err());
    }

    #[test]
    fn matmul_and_congruence() {
        let a = Matrix::from_row_major(2, 3, vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let b = a.transpose();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.as_slice(), &[14., 32., 32., 77.]);
        let s = SymMatrix::identity(3).congruence(&b).unwrap();
        assert_eq!(s.entries(), c.as_slice());
        assert!(a.matmul(&a).is_err());
    }
}
