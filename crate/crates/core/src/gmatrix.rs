use serde::{Deserialize, Serialize};

use crate::eigen::{symmetric_eigen, EigenDecomposition};
use crate::error::{Error, Result};
use crate::grid::TraitGrid;
use crate::linalg::SymMatrix;

/// Eigenvalues within this fraction of `max|lambda|` of zero count as zero and
/// are never rebuilt, which keeps clipping idempotent bit for bit.
pub const NUMERICAL_ZERO: f64 = 1e-12;

/// Smallest eigenvalue accepted for a covariance, relative to `lambda_1`.
pub const PSD_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClippedEigenvalue {
    pub index: usize,
    pub value: f64,
}

/// Genetic covariance matrix with its cached eigendecomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct GMatrix {
    matrix: SymMatrix,
    eig: EigenDecomposition,
    grid: Option<TraitGrid>,
    clipped: Vec<ClippedEigenvalue>,
}

impl GMatrix {
    /// Wraps a matrix that is already PSD within `PSD_TOL`.
    pub fn new(matrix: SymMatrix) -> Result<Self> {
        let eig = symmetric_eigen(&matrix)?;
        check_psd(eig.values())?;
        Ok(Self {
            matrix,
            eig,
            grid: None,
            clipped: Vec::new(),
        })
    }

    pub fn identity(k: usize) -> Self {
        Self::new(SymMatrix::identity(k)).expect("identity is PSD")
    }

    pub fn with_grid(mut self, grid: TraitGrid) -> Result<Self> {
        if grid.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "grid has {} points but matrix is {}x{}",
                grid.len(),
                self.dim(),
                self.dim()
            )));
        }
        self.grid = Some(grid);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.matrix
    }

    pub fn eigen(&self) -> &EigenDecomposition {
        &self.eig
    }

    pub fn eigenvalues(&self) -> &[f64] {
        self.eig.values()
    }

    pub fn grid(&self) -> Option<&TraitGrid> {
        self.grid.as_ref()
    }

    /// Eigenvalues that were reset to zero when this matrix was built.
    pub fn clipped(&self) -> &[ClippedEigenvalue] {
        &self.clipped
    }

    pub fn clipped_indices(&self) -> Vec<usize> {
        self.clipped.iter().map(|c| c.index).collect()
    }

    pub fn rank(&self) -> usize {
        let scale = self.eig.values().first().copied().unwrap_or(0.0).abs();
        self.eig
            .values()
            .iter()
            .filter(|v| v.abs() > NUMERICAL_ZERO * scale)
            .count()
    }

    pub fn total_variance(&self) -> f64 {
        self.eig.values().iter().sum()
    }

    /// Re-clips using the cached decomposition. A no-op on an already clipped
    /// matrix.
    pub fn clip(&self, tol: f64) -> Result<GMatrix> {
        let mut out = clip_decomposed(&self.matrix, self.eig.clone(), tol)?;
        out.grid = self.grid.clone();
        if out.clipped.is_empty() {
            out.clipped = self.clipped.clone();
        }
        Ok(out)
    }
}

fn check_psd(values: &[f64]) -> Result<()> {
    let top = values.first().copied().unwrap_or(0.0).max(0.0);
    if let Some(&min) = values.last() {
        if min < -PSD_TOL * top {
            return Err(Error::InvalidCovariance(format!(
                "smallest eigenvalue {min} is negative (largest {top})"
            )));
        }
    }
    Ok(())
}

/// Replaces eigenvalues below `tol` by exactly zero and rebuilds `V L+ V'`.
///
/// Eigenvectors are kept as they are. Eigenvalues that are already zero to
/// working precision (`NUMERICAL_ZERO` relative) are left in place, so
/// clipping the output again returns it unchanged.
pub fn clip_negative_eigenvalues(m: &SymMatrix, tol: f64) -> Result<GMatrix> {
    let eig = symmetric_eigen(m)?;
    clip_decomposed(m, eig, tol)
}

fn clip_decomposed(m: &SymMatrix, eig: EigenDecomposition, tol: f64) -> Result<GMatrix> {
    if tol < 0.0 || !tol.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "clip tolerance must be finite and >= 0, got {tol}"
        )));
    }
    let scale = eig.values().iter().fold(0.0_f64, |s, v| s.max(v.abs()));
    let mut values = eig.values().to_vec();
    let mut clipped = Vec::new();
    for (index, v) in values.iter_mut().enumerate() {
        if *v < tol && v.abs() > NUMERICAL_ZERO * scale {
            clipped.push(ClippedEigenvalue { index, value: *v });
            *v = 0.0;
        }
    }
    if clipped.is_empty() {
        return Ok(GMatrix {
            matrix: m.clone(),
            eig,
            grid: None,
            clipped,
        });
    }
    let vectors = eig.vectors().clone();
    let matrix = SymMatrix::from_spectral(&values, &vectors);
    let eig = EigenDecomposition::from_parts(values, vectors);
    Ok(GMatrix {
        matrix,
        eig,
        grid: None,
        clipped,
    })
}
