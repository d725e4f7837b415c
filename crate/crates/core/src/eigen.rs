//! Symmetric eigendecomposition by cyclic Jacobi rotations.
//!
//! Output is fully determined by the input bits: sweeps visit `(p, q)` pairs
//! in a fixed row-major order, eigenpairs are stably sorted by descending
//! eigenvalue, and each eigenvector is signed so that its first component of
//! magnitude above `1e-8` is positive.

use crate::error::Result;
use crate::linalg::{canonical_sign, Matrix, SymMatrix};

const MAX_SWEEPS: usize = 100;
const OFF_DIAGONAL_TOL: f64 = 1e-15;
/// Relative eigenvalue gap below which adjacent eigenpairs are flagged as tied.
pub const DEGENERACY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    values: Vec<f64>,
    /// Eigenvectors as columns, in the order of `values`.
    vectors: Matrix,
    degenerate_pairs: Vec<usize>,
}

impl EigenDecomposition {
    /// Assembles a decomposition from already ordered parts.
    pub(crate) fn from_parts(values: Vec<f64>, vectors: Matrix) -> Self {
        let degenerate_pairs = find_ties(&values);
        Self {
            values,
            vectors,
            degenerate_pairs,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Eigenvalues, descending.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn vectors(&self) -> &Matrix {
        &self.vectors
    }

    pub fn vector(&self, k: usize) -> Vec<f64> {
        self.vectors.column(k)
    }

    /// Indices `k` with `lambda_k` and `lambda_{k+1}` tied within
    /// `DEGENERACY_TOL * max|lambda|`.
    pub fn degenerate_pairs(&self) -> &[usize] {
        &self.degenerate_pairs
    }

    pub fn is_degenerate(&self) -> bool {
        !self.degenerate_pairs.is_empty()
    }

    pub fn reconstruct(&self) -> SymMatrix {
        SymMatrix::from_spectral(&self.values, &self.vectors)
    }
}

fn find_ties(values: &[f64]) -> Vec<usize> {
    let scale = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    values
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0] - w[1] <= DEGENERACY_TOL * scale)
        .map(|(k, _)| k)
        .collect()
}

/// Eigenvalues (descending) and orthonormal eigenvectors of `m`.
///
/// `SymMatrix` construction already rejects non-finite entries, so this cannot
/// fail on valid input; the `Result` is kept for callers that chain it with
/// construction.
pub fn symmetric_eigen(m: &SymMatrix) -> Result<EigenDecomposition> {
    let n = m.dim();
    let mut a = m.as_matrix().clone();
    let mut v = Matrix::identity(n);
    let scale = m.frobenius_norm();

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| a[(p, q)] * a[(p, q)])
            .sum();
        if off.sqrt() <= OFF_DIAGONAL_TOL * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    // stable: ties keep their Jacobi order
    order.sort_by(|&i, &j| a[(j, j)].partial_cmp(&a[(i, i)]).unwrap_or(std::cmp::Ordering::Equal));

    let values: Vec<f64> = order.iter().map(|&i| a[(i, i)]).collect();
    let mut columns = Vec::with_capacity(n);
    for &i in &order {
        let mut col = v.column(i);
        canonical_sign(&mut col);
        columns.push(col);
    }
    let vectors = if n == 0 {
        Matrix::zeros(0, 0)
    } else {
        Matrix::from_columns(&columns)?
    };
    Ok(EigenDecomposition::from_parts(values, vectors))
}

/// One Jacobi rotation annihilating `a[p][q]`.
fn rotate(a: &mut Matrix, v: &mut Matrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    if apq == 0.0 {
        return;
    }
    let (app, aqq) = (a[(p, p)], a[(q, q)]);
    // negligible relative to both diagonals: drop it
    if apq.abs() < f64::EPSILON * 1e-2 * app.abs().min(aqq.abs()) {
        a[(p, q)] = 0.0;
        a[(q, p)] = 0.0;
        return;
    }
    let theta = (aqq - app) / (2.0 * apq);
    let t = if theta.is_infinite() {
        0.5 / theta
    } else {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let n = a.rows();

    for k in 0..n {
        let (akp, akq) = (a[(k, p)], a[(k, q)]);
        a[(k, p)] = c * akp - s * akq;
        a[(k, q)] = s * akp + c * akq;
    }
    for k in 0..n {
        let (apk, aqk) = (a[(p, k)], a[(q, k)]);
        a[(p, k)] = c * apk - s * aqk;
        a[(q, k)] = s * apk + c * aqk;
    }
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;

    for k in 0..n {
        let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identity_gives_axes() {
        let e = symmetric_eigen(&SymMatrix::identity(6)).unwrap();
        assert_eq!(e.values(), &[1.0; 6]);
        assert_eq!(e.vectors(), &Matrix::identity(6));
        assert_eq!(e.degenerate_pairs(), &[0, 1, 2, 3, 4]);
    }

    #[test]
    fn diagonal_is_permuted_axes() {
        let e = symmetric_eigen(&SymMatrix::diagonal(&[3.0, 1.0, 2.0])).unwrap();
        assert_eq!(e.values(), &[3.0, 2.0, 1.0]);
        assert_eq!(e.vector(0), vec![1.0, 0.0, 0.0]);
        assert_eq!(e.vector(1), vec![0.0, 0.0, 1.0]);
        assert_eq!(e.vector(2), vec![0.0, 1.0, 0.0]);
        assert!(!e.is_degenerate());
    }

    #[test]
    fn two_by_two_hand_solved() {
        // det([[2-x,1],[1,2-x]]) = (2-x)^2 - 1 -> x = 3, 1
        let m = SymMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let e = symmetric_eigen(&m).unwrap();
        assert_abs_diff_eq!(e.values()[0], 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e.values()[1], 1.0, epsilon = 1e-14);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let v0 = e.vector(0);
        let v1 = e.vector(1);
        assert_abs_diff_eq!(v0[0], r, epsilon = 1e-14);
        assert_abs_diff_eq!(v0[1], r, epsilon = 1e-14);
        assert_abs_diff_eq!(v1[0], r, epsilon = 1e-14);
        assert_abs_diff_eq!(v1[1], -r, epsilon = 1e-14);
    }

    #[test]
    fn empty_and_zero_matrices() {
        let e = symmetric_eigen(&SymMatrix::zeros(0)).unwrap();
        assert_eq!(e.dim(), 0);
        let z = symmetric_eigen(&SymMatrix::zeros(3)).unwrap();
        assert_eq!(z.values(), &[0.0; 3]);
        assert!(z.is_degenerate());
    }

    #[test]
    fn deterministic() {
        let m = SymMatrix::from_rows(&[
            vec![4.0, 1.0, -2.0, 0.5],
            vec![1.0, 3.0, 0.3, 0.0],
            vec![-2.0, 0.3, 5.0, 1.1],
            vec![0.5, 0.0, 1.1, 0.2],
        ])
        .unwrap();
        assert_eq!(symmetric_eigen(&m).unwrap(), symmetric_eigen(&m).unwrap());
    }
}
