//! Quadratic simplicity measures `v' L v` and simplicity-ordered bases.
//!
//! Measures follow the "larger is simpler" convention. Roughness penalties
//! (where small means simple) are converted with `c I - L0`, where `c` is
//! either the Schatzman bound 4 (first differences) or the largest eigenvalue
//! of the penalty.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::eigen::symmetric_eigen;
use crate::error::{Error, Result};
use crate::grid::TraitGrid;
use crate::linalg::{canonical_sign, dot, Matrix, SymMatrix};

/// Tolerance on `| |v| - 1 |` accepted by [`simplicity_score`].
pub const UNIT_TOL: f64 = 1e-8;
/// Residual norm below which Gram-Schmidt declares a vector dependent.
pub const RANK_TOL: f64 = 1e-12;
/// Relative gap below which adjacent simplicity scores count as tied.
pub const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasureKind {
    #[serde(alias = "d1")]
    FirstDifference,
    #[serde(alias = "d2")]
    SecondDifference,
    #[serde(alias = "sparse")]
    Sparseness,
    Custom,
}

impl MeasureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MeasureKind::FirstDifference => "first-difference",
            MeasureKind::SecondDifference => "second-difference",
            MeasureKind::Sparseness => "sparseness",
            MeasureKind::Custom => "custom",
        }
    }

    /// Builds the measure of this kind on `grid`.
    pub fn build(self, grid: &TraitGrid) -> Result<SimplicityMeasure> {
        match self {
            MeasureKind::FirstDifference => Ok(SimplicityMeasure::first_difference(grid)),
            MeasureKind::SecondDifference => SimplicityMeasure::second_difference(grid),
            MeasureKind::Sparseness => SimplicityMeasure::sparseness(grid.len()),
            MeasureKind::Custom => Err(Error::InvalidParameter(
                "custom measures need an explicit matrix".into(),
            )),
        }
    }
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MeasureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "d1" | "first-difference" => Ok(MeasureKind::FirstDifference),
            "d2" | "second-difference" => Ok(MeasureKind::SecondDifference),
            "sparse" | "sparseness" => Ok(MeasureKind::Sparseness),
            other => Err(Error::InvalidParameter(format!(
                "unknown measure '{other}' (expected d1, d2 or sparse)"
            ))),
        }
    }
}

/// A nonnegative-definite quadratic form scoring simplicity, larger = simpler.
///
/// Serializes as the matrix JSON (`dim`, `entries`) plus `kind` and
/// `score_upper_bound`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplicityMeasure {
    pub kind: MeasureKind,
    pub score_upper_bound: f64,
    #[serde(flatten)]
    lambda: SymMatrix,
}

impl SimplicityMeasure {
    /// `4 v'v - min_j(dt_j) * sum_j (v_j - v_{j-1})^2 / dt_j`, bounded in `[0, 4]`.
    pub fn first_difference(grid: &TraitGrid) -> Self {
        let penalty = first_difference_penalty(grid);
        let k = grid.len();
        let lambda = SymMatrix::identity(k)
            .scale(4.0)
            .sub(&penalty.scale(grid.min_gap()))
            .expect("same dimension");
        Self {
            kind: MeasureKind::FirstDifference,
            score_upper_bound: 4.0,
            lambda,
        }
    }

    /// Second-divided-difference roughness converted to `c I - L0`.
    pub fn second_difference(grid: &TraitGrid) -> Result<Self> {
        let penalty = second_difference_penalty(grid)?;
        let mut m = Self::from_penalty(penalty)?;
        m.kind = MeasureKind::SecondDifference;
        Ok(m)
    }

    /// Varimax-style `sum_i (v_i - mean(v))^2`, i.e. `L = I - J/K`.
    pub fn sparseness(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::GridTooSmall { got: k, need: 2 });
        }
        let inv = 1.0 / k as f64;
        let entries = (0..k * k)
            .map(|idx| if idx / k == idx % k { 1.0 - inv } else { -inv })
            .collect();
        Ok(Self {
            kind: MeasureKind::Sparseness,
            score_upper_bound: 1.0,
            lambda: SymMatrix::from_row_major(k, entries)?,
        })
    }

    /// Uses `lambda` as given; it must be nonnegative definite.
    pub fn custom(lambda: SymMatrix) -> Result<Self> {
        let eig = symmetric_eigen(&lambda)?;
        let top = eig.values().first().copied().unwrap_or(0.0);
        let min = eig.values().last().copied().unwrap_or(0.0);
        if min < -1e-9 * lambda.frobenius_norm().max(1.0) {
            return Err(Error::InvalidMatrix(format!(
                "simplicity form must be nonnegative definite (smallest eigenvalue {min})"
            )));
        }
        Ok(Self {
            kind: MeasureKind::Custom,
            score_upper_bound: top.max(0.0),
            lambda,
        })
    }

    /// Converts a "small is simple" penalty `L0` into `c I - L0` with
    /// `c = max eigenvalue of L0`.
    pub fn from_penalty(penalty: SymMatrix) -> Result<Self> {
        let eig = symmetric_eigen(&penalty)?;
        let top = eig.values().first().copied().unwrap_or(0.0);
        let lambda = SymMatrix::identity(penalty.dim()).scale(top).sub(&penalty)?;
        let mut m = Self::custom(lambda)?;
        m.score_upper_bound = top;
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.lambda.dim()
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.lambda
    }
}

/// `L0` with `v' L0 v = sum_j (v_j - v_{j-1})^2 / (t_j - t_{j-1})`.
pub fn first_difference_penalty(grid: &TraitGrid) -> SymMatrix {
    let k = grid.len();
    let mut m = Matrix::zeros(k, k);
    for (j, gap) in grid.gaps().into_iter().enumerate() {
        let w = 1.0 / gap;
        m[(j, j)] += w;
        m[(j + 1, j + 1)] += w;
        m[(j, j + 1)] -= w;
        m[(j + 1, j)] -= w;
    }
    SymMatrix::from_matrix(m).expect("tridiagonal penalty is symmetric")
}

/// Riemann-sum approximation of `integral (f'')^2`.
///
/// At each interior point `f''(t_j)` is approximated by twice the second
/// divided difference `f[t_{j-1}, t_j, t_{j+1}]` and weighted by the midpoint
/// width `(t_{j+1} - t_{j-1}) / 2`.
pub fn second_difference_penalty(grid: &TraitGrid) -> Result<SymMatrix> {
    let k = grid.len();
    if k < 3 {
        return Err(Error::GridTooSmall { got: k, need: 3 });
    }
    let t = grid.points();
    let mut m = Matrix::zeros(k, k);
    for j in 1..k - 1 {
        let h0 = t[j] - t[j - 1];
        let h1 = t[j + 1] - t[j];
        let span = h0 + h1;
        // row of D: 2 * f[t_{j-1}, t_j, t_{j+1}]
        let d = [2.0 / (h0 * span), -2.0 / (h0 * h1), 2.0 / (h1 * span)];
        let w = 0.5 * span;
        for (a, da) in d.iter().enumerate() {
            for (b, db) in d.iter().enumerate() {
                m[(j - 1 + a, j - 1 + b)] += w * da * db;
            }
        }
    }
    SymMatrix::from_matrix(m)
}

/// `v' L v` for a unit vector `v`.
pub fn simplicity_score(v: &[f64], measure: &SimplicityMeasure) -> Result<f64> {
    if v.len() != measure.dim() {
        return Err(Error::DimensionMismatch(format!(
            "vector of length {} scored by a {}-dimensional measure",
            v.len(),
            measure.dim()
        )));
    }
    let n = dot(v, v).sqrt();
    if (n - 1.0).abs() > UNIT_TOL {
        return Err(Error::NotUnitVector { norm: n });
    }
    measure.lambda.quadratic_form(v)
}

/// Orthonormal basis of a subspace ordered from simplest to least simple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplicityBasis {
    pub vectors: Vec<Vec<f64>>,
    pub scores: Vec<f64>,
    /// True when two adjacent scores tie; only the span of tied vectors is
    /// then well defined.
    pub degenerate: bool,
}

impl SimplicityBasis {
    pub fn empty() -> Self {
        Self {
            vectors: Vec::new(),
            scores: Vec::new(),
            degenerate: false,
        }
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn simplest(&self) -> Option<&[f64]> {
        self.vectors.first().map(Vec::as_slice)
    }
}

/// Orthonormalizes `vectors` with two passes of modified Gram-Schmidt.
pub fn orthonormalize(vectors: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    for (index, v) in vectors.iter().enumerate() {
        let mut w = v.clone();
        for _pass in 0..2 {
            for q in &out {
                let c = dot(q, &w);
                w.iter_mut().zip(q).for_each(|(x, qi)| *x -= c * qi);
            }
        }
        let n = dot(&w, &w).sqrt();
        if n.is_nan() || n <= RANK_TOL {
            return Err(Error::RankDeficientSubspace { index });
        }
        w.iter_mut().for_each(|x| *x /= n);
        out.push(w);
    }
    Ok(out)
}

/// Simplicity basis of `span(subspace_basis)` under `measure`.
///
/// With `P` the re-orthonormalized input, the eigenvectors `a_k` of `P' L P`
/// (eigenvalues descending) give the basis `P a_k` and the eigenvalues are the
/// scores.
pub fn simplicity_basis(subspace_basis: &[Vec<f64>], measure: &SimplicityMeasure) -> Result<SimplicityBasis> {
    if subspace_basis.is_empty() {
        return Ok(SimplicityBasis::empty());
    }
    if let Some(bad) = subspace_basis.iter().find(|v| v.len() != measure.dim()) {
        return Err(Error::DimensionMismatch(format!(
            "basis vector of length {} for a {}-dimensional measure",
            bad.len(),
            measure.dim()
        )));
    }
    let q = orthonormalize(subspace_basis)?;
    let p = Matrix::from_columns(&q)?;
    let reduced = measure.lambda.congruence(&p)?;
    let eig = symmetric_eigen(&reduced)?;

    let vectors: Vec<Vec<f64>> = (0..eig.dim())
        .map(|k| {
            let mut w = p.mul_vec(&eig.vector(k)).expect("P is K x L");
            canonical_sign(&mut w);
            w
        })
        .collect();
    let scores = eig.values().to_vec();
    let scale = scores.first().map_or(1.0, |s| s.abs().max(1.0));
    let degenerate = scores.windows(2).any(|w| w[0] - w[1] < TIE_TOL * scale);
    Ok(SimplicityBasis {
        vectors,
        scores,
        degenerate,
    })
}
