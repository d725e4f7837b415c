//! Model space / nearly null space partitions, selection responses and
//! subspace distances.

use serde::{Deserialize, Serialize};

use crate::eigen::symmetric_eigen;
use crate::error::{Error, Result};
use crate::gmatrix::GMatrix;
use crate::linalg::{dot, norm, Matrix, SymMatrix};
use crate::par::{self, Execution};
use crate::simplicity::{simplicity_basis, MeasureKind, SimplicityBasis, SimplicityMeasure};

/// Largest condition number of `G + E` accepted by the linear solves.
pub const MAX_CONDITION: f64 = 1e12;
/// Relative gap below which `lambda_J` and `lambda_{J+1}` count as tied.
pub const BOUNDARY_TIE_TOL: f64 = 1e-9;

/// One basis vector of a partition with its bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisVector {
    pub coordinates: Vec<f64>,
    /// Eigenvalue of G; only set for model-space (PC) vectors.
    pub eigenvalue: Option<f64>,
    pub simplicity_score: f64,
    /// `|G v|`, the expected response to selection along `v`.
    pub response_norm: f64,
    /// `response_norm` divided by the sum over the full K-vector basis.
    pub proportion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspacePartition {
    pub dim: usize,
    pub model_dim: usize,
    pub measure: MeasureKind,
    pub eigenvalues: Vec<f64>,
    /// Top-J principal components, largest eigenvalue first.
    pub model: Vec<BasisVector>,
    /// Simplicity basis of the complement, simplest first.
    pub null: Vec<BasisVector>,
    /// Share of total genetic variance (trace) carried by the model space.
    pub model_variance_fraction: f64,
    pub null_variance_fraction: f64,
    /// Sum of `proportion` over the null vectors (norm-of-response convention).
    pub null_response_share: f64,
    /// Adjacent simplicity scores tie, so individual null vectors are not unique.
    pub null_degenerate: bool,
    /// `lambda_J` ties `lambda_{J+1}`, so the split is not well defined.
    pub boundary_tie: bool,
    /// Total response norm was zero; proportions are all reported as zero.
    pub zero_variance: bool,
}

impl SubspacePartition {
    pub fn null_dim(&self) -> usize {
        self.null.len()
    }

    pub fn null_basis(&self) -> SimplicityBasis {
        SimplicityBasis {
            vectors: self.null.iter().map(|b| b.coordinates.clone()).collect(),
            scores: self.null.iter().map(|b| b.simplicity_score).collect(),
            degenerate: self.null_degenerate,
        }
    }

    /// Model vectors followed by null vectors.
    pub fn all_vectors(&self) -> impl Iterator<Item = &BasisVector> {
        self.model.iter().chain(&self.null)
    }
}

/// Splits trait space at `model_dim` and re-expresses the complement in its
/// simplicity basis.
pub fn partition(g: &GMatrix, model_dim: usize, measure: &SimplicityMeasure) -> Result<SubspacePartition> {
    let k = g.dim();
    if model_dim > k {
        return Err(Error::InvalidParameter(format!("J = {model_dim} exceeds K = {k}")));
    }
    if measure.dim() != k {
        return Err(Error::DimensionMismatch(format!(
            "measure is {}-dimensional, G is {k}x{k}",
            measure.dim()
        )));
    }
    let eig = g.eigen();
    let values = eig.values();
    let null_span: Vec<Vec<f64>> = (model_dim..k).map(|i| eig.vector(i)).collect();
    let null_basis = simplicity_basis(&null_span, measure)?;

    let mut model = Vec::with_capacity(model_dim);
    for (i, &value) in values.iter().enumerate().take(model_dim) {
        let v = eig.vector(i);
        let score = measure.matrix().quadratic_form(&v)?;
        model.push(BasisVector {
            response_norm: norm(&g.matrix().mul_vec(&v)?),
            coordinates: v,
            eigenvalue: Some(value),
            simplicity_score: score,
            proportion: 0.0,
        });
    }
    let mut null = Vec::with_capacity(null_basis.len());
    for (v, &score) in null_basis.vectors.iter().zip(&null_basis.scores) {
        null.push(BasisVector {
            response_norm: norm(&g.matrix().mul_vec(v)?),
            coordinates: v.clone(),
            eigenvalue: None,
            simplicity_score: score,
            proportion: 0.0,
        });
    }

    let total_norm: f64 = model.iter().chain(&null).map(|b| b.response_norm).sum();
    let zero_variance = total_norm.is_nan() || total_norm <= 0.0;
    if !zero_variance {
        for b in model.iter_mut().chain(null.iter_mut()) {
            b.proportion = b.response_norm / total_norm;
        }
    }
    let null_response_share = null.iter().map(|b| b.proportion).sum();

    let total: f64 = values.iter().sum();
    let model_var: f64 = values[..model_dim].iter().sum();
    let (model_variance_fraction, null_variance_fraction) = if total > 0.0 {
        let m = model_var / total;
        (m, 1.0 - m)
    } else if model_dim == k {
        (1.0, 0.0)
    } else {
        (0.0, 0.0)
    };

    let scale = values.first().map_or(1.0, |v| v.abs().max(1.0));
    let boundary_tie =
        model_dim > 0 && model_dim < k && values[model_dim - 1] - values[model_dim] <= BOUNDARY_TIE_TOL * scale;

    Ok(SubspacePartition {
        dim: k,
        model_dim,
        measure: measure.kind,
        eigenvalues: values.to_vec(),
        model,
        null,
        model_variance_fraction,
        null_variance_fraction,
        null_response_share,
        null_degenerate: null_basis.degenerate,
        boundary_tie,
        zero_variance,
    })
}

/// Partitions for every `J = 0..=K`, in order.
pub fn sweep_partitions(g: &GMatrix, measure: &SimplicityMeasure) -> Result<Vec<SubspacePartition>> {
    sweep_partitions_with(Execution::default(), g, measure)
}

pub fn sweep_partitions_with(
    exec: Execution,
    g: &GMatrix,
    measure: &SimplicityMeasure,
) -> Result<Vec<SubspacePartition>> {
    par::try_map_indexed(exec, g.dim() + 1, |j| partition(g, j, measure))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionVectors {
    /// Selection gradient `beta`.
    pub gradient: Vec<f64>,
    /// Selection differential `s = (G + E) beta`, when E is known.
    pub differential: Option<Vec<f64>>,
    /// Expected response `mu_o - mu_p`.
    pub response: Vec<f64>,
    pub response_norm: f64,
}

/// `G beta`.
pub fn response_to_selection(g: &GMatrix, beta: &[f64]) -> Result<SelectionVectors> {
    let response = g.matrix().mul_vec(beta)?;
    Ok(SelectionVectors {
        gradient: beta.to_vec(),
        differential: None,
        response_norm: norm(&response),
        response,
    })
}

/// Breeder's equation `G (G + E)^-1 s`, also recovering `beta = (G + E)^-1 s`.
pub fn breeders_response(g: &GMatrix, e: &SymMatrix, s: &[f64]) -> Result<SelectionVectors> {
    let phenotypic = PhenotypicInverse::new(g, e)?;
    let beta = phenotypic.solve(s)?;
    let response = g.matrix().mul_vec(&beta)?;
    Ok(SelectionVectors {
        gradient: beta,
        differential: Some(s.to_vec()),
        response_norm: norm(&response),
        response,
    })
}

/// `G (G + E)^-1` as a general operator; the scalar heritability when K = 1.
pub fn heritability_matrix(g: &GMatrix, e: &SymMatrix) -> Result<Matrix> {
    let inv = PhenotypicInverse::new(g, e)?.inverse();
    g.matrix().as_matrix().matmul(&inv)
}

/// Spectral factorization of `P = G + E` with a condition guard.
struct PhenotypicInverse {
    values: Vec<f64>,
    vectors: Matrix,
}

impl PhenotypicInverse {
    fn new(g: &GMatrix, e: &SymMatrix) -> Result<Self> {
        let p = g.matrix().add(e)?;
        let eig = symmetric_eigen(&p)?;
        let largest = eig.values().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let smallest = eig.values().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        let condition = if smallest > 0.0 {
            largest / smallest
        } else {
            f64::INFINITY
        };
        if condition.is_nan() || condition > MAX_CONDITION {
            return Err(Error::SingularPhenotypicCovariance { condition });
        }
        Ok(Self {
            values: eig.values().to_vec(),
            vectors: eig.vectors().clone(),
        })
    }

    fn solve(&self, s: &[f64]) -> Result<Vec<f64>> {
        let coeffs = self.vectors.transpose().mul_vec(s)?;
        let scaled: Vec<f64> = coeffs.iter().zip(&self.values).map(|(c, l)| c / l).collect();
        self.vectors.mul_vec(&scaled)
    }

    fn inverse(&self) -> Matrix {
        let inv: Vec<f64> = self.values.iter().map(|l| 1.0 / l).collect();
        SymMatrix::from_spectral(&inv, &self.vectors).as_matrix().clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceProportions {
    pub norms: Vec<f64>,
    pub proportions: Vec<f64>,
    /// All norms were zero; proportions are reported as zero.
    pub zero_total: bool,
}

/// `|G b|` for each basis vector and its share of the sum of norms.
pub fn variance_proportions(g: &GMatrix, basis: &[Vec<f64>]) -> Result<VarianceProportions> {
    check_orthonormal(basis, g.dim())?;
    let norms = basis
        .iter()
        .map(|b| g.matrix().mul_vec(b).map(|r| norm(&r)))
        .collect::<Result<Vec<_>>>()?;
    let total: f64 = norms.iter().sum();
    let zero_total = total.is_nan() || total <= 0.0;
    let proportions = if zero_total {
        vec![0.0; norms.len()]
    } else {
        norms.iter().map(|n| n / total).collect()
    };
    Ok(VarianceProportions {
        norms,
        proportions,
        zero_total,
    })
}

fn check_orthonormal(basis: &[Vec<f64>], k: usize) -> Result<()> {
    for (i, u) in basis.iter().enumerate() {
        if u.len() != k {
            return Err(Error::DimensionMismatch(format!(
                "basis vector {i} has length {}, expected {k}",
                u.len()
            )));
        }
        for (j, w) in basis.iter().enumerate().skip(i) {
            let target = if i == j { 1.0 } else { 0.0 };
            if (dot(u, w) - target).abs() > 1e-8 {
                return Err(Error::InvalidParameter(format!(
                    "basis is not orthonormal (<b{i}, b{j}> = {})",
                    dot(u, w)
                )));
            }
        }
    }
    Ok(())
}

/// Squared distance `L - |U'W|_F^2`: the sum of squared sines of the canonical
/// angles between `span(U)` and `span(W)`. Both inputs must be orthonormal.
pub fn canonical_angle_distance(u: &[Vec<f64>], w: &[Vec<f64>]) -> Result<f64> {
    let cross = cross_products(u, w)?;
    let l = u.len() as f64;
    let sum_cos2: f64 = cross.as_slice().iter().map(|x| x * x).sum();
    Ok((l - sum_cos2).clamp(0.0, l))
}

/// Cosines of the canonical angles (singular values of `U'W`), descending.
pub fn canonical_cosines(u: &[Vec<f64>], w: &[Vec<f64>]) -> Result<Vec<f64>> {
    let cross = cross_products(u, w)?;
    let gram = SymMatrix::identity(cross.cols()).congruence(&cross)?;
    let eig = symmetric_eigen(&gram)?;
    Ok(eig.values().iter().map(|v| v.max(0.0).sqrt().min(1.0)).collect())
}

fn cross_products(u: &[Vec<f64>], w: &[Vec<f64>]) -> Result<Matrix> {
    if u.len() != w.len() {
        return Err(Error::DimensionMismatch(format!(
            "subspaces have dimensions {} and {}",
            u.len(),
            w.len()
        )));
    }
    let k = u.first().map_or(0, Vec::len);
    if u.iter().chain(w).any(|v| v.len() != k) {
        return Err(Error::DimensionMismatch("basis vectors differ in length".into()));
    }
    let mut m = Matrix::zeros(u.len(), w.len());
    for (i, a) in u.iter().enumerate() {
        for (j, b) in w.iter().enumerate() {
            m[(i, j)] = dot(a, b);
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TraitGrid;
    use approx::assert_abs_diff_eq;

    const CATERPILLAR: [f64; 6] = [0.618, 0.200, 0.153, 0.061, 0.008, 0.0];

    fn e(k: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; k];
        v[i] = 1.0;
        v
    }

    fn cat_g() -> GMatrix {
        GMatrix::new(SymMatrix::diagonal(&CATERPILLAR)).unwrap()
    }

    fn d1() -> SimplicityMeasure {
        SimplicityMeasure::first_difference(&TraitGrid::caterpillar())
    }

    #[test]
    fn full_and_empty_model_space() {
        let g = cat_g();
        let full = partition(&g, 6, &d1()).unwrap();
        assert_eq!(full.null_dim(), 0);
        assert_eq!(full.model_variance_fraction, 1.0);
        assert_eq!(full.null_variance_fraction, 0.0);
        let empty = partition(&g, 0, &d1()).unwrap();
        assert!(empty.model.is_empty());
        assert_eq!(empty.null_dim(), 6);
        assert_abs_diff_eq!(empty.null_variance_fraction, 1.0, epsilon = 1e-15);
        assert!(partition(&g, 7, &d1()).is_err());
    }

    #[test]
    fn pc_proportions_match_eigenvalue_shares() {
        let p = partition(&cat_g(), 6, &d1()).unwrap();
        assert_abs_diff_eq!(p.model[0].proportion, 0.618 / 1.040, epsilon = 1e-12);
        for (b, lam) in p.model.iter().zip(CATERPILLAR) {
            assert_abs_diff_eq!(b.response_norm, lam, epsilon = 1e-15);
        }
    }

    #[test]
    fn caterpillar_null_fraction_at_j4() {
        let p = partition(&cat_g(), 4, &d1()).unwrap();
        assert_abs_diff_eq!(p.null_variance_fraction, 0.008 / 1.040, epsilon = 1e-12);
        assert_abs_diff_eq!(
            p.model_variance_fraction + p.null_variance_fraction,
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn boundary_tie_flagged() {
        let g = GMatrix::new(SymMatrix::diagonal(&[2.0, 1.0, 1.0])).unwrap();
        let m = SimplicityMeasure::sparseness(3).unwrap();
        assert!(partition(&g, 2, &m).unwrap().boundary_tie);
        assert!(!partition(&g, 1, &m).unwrap().boundary_tie);
    }

    #[test]
    fn sweep_has_k_plus_one_and_matches_single_calls() {
        let g = cat_g();
        let sweep = sweep_partitions(&g, &d1()).unwrap();
        assert_eq!(sweep.len(), 7);
        assert_eq!(sweep[0], partition(&g, 0, &d1()).unwrap());
        assert_eq!(sweep[6], partition(&g, 6, &d1()).unwrap());
        for p in &sweep {
            assert_abs_diff_eq!(
                p.model_variance_fraction + p.null_variance_fraction,
                1.0,
                epsilon = 1e-12
            );
            let s: f64 = p.all_vectors().map(|b| b.proportion).sum();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
        }
        let seq = sweep_partitions_with(Execution::Sequential, &g, &d1()).unwrap();
        assert_eq!(seq, sweep);
    }

    #[test]
    fn response_examples() {
        let g = cat_g();
        let r = response_to_selection(&g, &e(6, 0)).unwrap();
        assert_abs_diff_eq!(r.response_norm, 0.618, epsilon = 1e-15);
        let id = GMatrix::identity(3);
        let beta = vec![0.3, -2.0, 1.5];
        assert_eq!(response_to_selection(&id, &beta).unwrap().response, beta);
        assert_eq!(response_to_selection(&g, &[0.0; 6]).unwrap().response_norm, 0.0);
        assert!(matches!(
            response_to_selection(&g, &[1.0; 5]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn breeders_examples() {
        let g1 = GMatrix::new(SymMatrix::diagonal(&[1.0])).unwrap();
        let r = breeders_response(&g1, &SymMatrix::diagonal(&[3.0]), &[2.0]).unwrap();
        assert_abs_diff_eq!(r.response[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(r.gradient[0], 0.5, epsilon = 1e-12);

        let g = GMatrix::new(SymMatrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap()).unwrap();
        let s = [0.7, -1.2];
        let r = breeders_response(&g, &SymMatrix::zeros(2), &s).unwrap();
        assert_abs_diff_eq!(r.response[0], s[0], epsilon = 1e-12);
        assert_abs_diff_eq!(r.response[1], s[1], epsilon = 1e-12);

        let zero = GMatrix::new(SymMatrix::zeros(2)).unwrap();
        let r = breeders_response(&zero, &SymMatrix::identity(2), &s).unwrap();
        assert_eq!(r.response, vec![0.0, 0.0]);

        assert!(matches!(
            breeders_response(&zero, &SymMatrix::diagonal(&[1.0, 0.0]), &s),
            Err(Error::SingularPhenotypicCovariance { .. })
        ));
    }

    #[test]
    fn heritability_examples() {
        let g1 = GMatrix::new(SymMatrix::diagonal(&[1.0])).unwrap();
        let h = heritability_matrix(&g1, &SymMatrix::diagonal(&[3.0])).unwrap();
        assert_abs_diff_eq!(h.scalar().unwrap(), 0.25, epsilon = 1e-15);

        let g = GMatrix::new(SymMatrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap()).unwrap();
        let h = heritability_matrix(&g, &SymMatrix::zeros(2)).unwrap();
        let id = Matrix::identity(2);
        for (a, b) in h.as_slice().iter().zip(id.as_slice()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }

        // diag(2,0) (diag(3,1))^-1 = diag(2/3, 0)
        let g = GMatrix::new(SymMatrix::diagonal(&[2.0, 0.0])).unwrap();
        let h = heritability_matrix(&g, &SymMatrix::identity(2)).unwrap();
        assert_abs_diff_eq!(h[(0, 0)], 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(h[(0, 1)], 0.0);
        assert_eq!(h[(1, 0)], 0.0);
        assert_eq!(h[(1, 1)], 0.0);
    }

    #[test]
    fn variance_proportion_examples() {
        let v = variance_proportions(&cat_g(), &(0..6).map(|i| e(6, i)).collect::<Vec<_>>()).unwrap();
        assert_abs_diff_eq!(v.proportions[0], 0.618 / 1.040, epsilon = 1e-12);
        assert_abs_diff_eq!(v.proportions[0], 0.595, epsilon = 1e-3);

        let r = std::f64::consts::FRAC_1_SQRT_2;
        let basis = vec![vec![r, r, 0.0], vec![r, -r, 0.0], vec![0.0, 0.0, 1.0]];
        let v = variance_proportions(&GMatrix::identity(3), &basis).unwrap();
        for p in v.proportions {
            assert_abs_diff_eq!(p, 1.0 / 3.0, epsilon = 1e-15);
        }

        let jw = GMatrix::new(SymMatrix::diagonal(&[48.98, 0.82, 0.33, 0.08, 0.0, 0.0])).unwrap();
        let v = variance_proportions(&jw, &(0..6).map(|i| e(6, i)).collect::<Vec<_>>()).unwrap();
        assert_abs_diff_eq!(v.proportions[0], 0.975, epsilon = 1e-3);

        let zero = GMatrix::new(SymMatrix::zeros(2)).unwrap();
        let v = variance_proportions(&zero, &[e(2, 0), e(2, 1)]).unwrap();
        assert!(v.zero_total);
        assert_eq!(v.proportions, vec![0.0, 0.0]);

        assert!(variance_proportions(&zero, &[vec![1.0, 1.0]]).is_err());
    }

    #[test]
    fn canonical_distance_examples() {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(canonical_angle_distance(&[e(3, 0)], &[e(3, 0)]).unwrap(), 0.0);
        assert_eq!(canonical_angle_distance(&[e(3, 0)], &[e(3, 1)]).unwrap(), 1.0);
        assert_abs_diff_eq!(
            canonical_angle_distance(&[e(3, 0)], &[vec![r, r, 0.0]]).unwrap(),
            0.5,
            epsilon = 1e-15
        );
        assert!(matches!(
            canonical_angle_distance(&[e(3, 0)], &[e(3, 0), e(3, 1)]),
            Err(Error::DimensionMismatch(_))
        ));
        let cos = canonical_cosines(&[e(3, 0), e(3, 1)], &[vec![r, r, 0.0], e(3, 2)]).unwrap();
        assert_abs_diff_eq!(cos[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cos[1], 0.0, epsilon = 1e-12);
    }
}
