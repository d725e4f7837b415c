//! Family-structured phenotype simulation and the replicated estimation study.
//!
//! Records follow `y_ij = mu + g_ij + e_ij + eps_ij`. The genetic part is
//! split into a family effect shared by siblings and an individual deviation:
//! for a half-sib design `g_ij = f_j + w_ij` with `f_j ~ N(0, G/4)` and
//! `w_ij ~ N(0, 3G/4)`; full sibs share `G/2`. Marginally `Cov(g_ij) = G`,
//! and the between-family covariance `G/c` is what the ANOVA estimator
//! recovers. `e_ij ~ N(0, E)` and `eps_ij ~ N(0, sigma2 I)` are independent.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::eigen::symmetric_eigen;
use crate::error::{Error, Result};
use crate::estimate::{anova_estimate, Design, Family, FamilyDataset};
use crate::gmatrix::{GMatrix, PSD_TOL};
use crate::grid::TraitGrid;
use crate::linalg::{dot, Matrix, SymMatrix};
use crate::par::{self, Execution};
use crate::rng::{substream, substream_seed, RNG_DESCRIPTION};
use crate::simplicity::{simplicity_basis, MeasureKind, SimplicityMeasure};
use crate::spaces::{canonical_angle_distance, partition};

/// Stated in study reports next to the RNG description.
pub const GENERATIVE_MODEL: &str = "y = mu + f_family + w_individual + e + eps; \
     f ~ N(0, G/c), w ~ N(0, (1 - 1/c) G), e ~ N(0, E), eps ~ N(0, sigma2 I); \
     c = 4 half-sib, 2 full-sib (sire-effect decomposition)";

const FAMILY_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationParams {
    pub grid: TraitGrid,
    pub mu: Vec<f64>,
    pub g: SymMatrix,
    pub e: SymMatrix,
    /// Isotropic measurement variance.
    pub sigma2: f64,
    pub n_families: usize,
    pub family_size: usize,
    pub design: Design,
    /// Overrides the design's coefficient in the estimator only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relatedness: Option<f64>,
    pub seed: u64,
}

impl SimulationParams {
    pub fn dim(&self) -> usize {
        self.grid.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.dim();
        if self.mu.len() != k || self.g.dim() != k || self.e.dim() != k {
            return Err(Error::DimensionMismatch(format!(
                "grid has {k} points but mu has {}, G is {}x{}, E is {}x{}",
                self.mu.len(),
                self.g.dim(),
                self.g.dim(),
                self.e.dim(),
                self.e.dim()
            )));
        }
        for (name, m) in [("G", &self.g), ("E", &self.e)] {
            let eig = symmetric_eigen(m)?;
            let top = eig.values().first().copied().unwrap_or(0.0).max(0.0);
            let min = eig.values().last().copied().unwrap_or(0.0);
            if min < -PSD_TOL * top {
                return Err(Error::InvalidCovariance(format!(
                    "{name} has negative eigenvalue {min}"
                )));
            }
        }
        if self.sigma2 < 0.0 || !self.sigma2.is_finite() {
            return Err(Error::InvalidCovariance(format!(
                "sigma2 must be >= 0, got {}",
                self.sigma2
            )));
        }
        if self.n_families < 2 || self.family_size < 2 {
            return Err(Error::InvalidParameter(format!(
                "need n_families >= 2 and family_size >= 2, got {} and {}",
                self.n_families, self.family_size
            )));
        }
        if let Some(c) = self.relatedness {
            if c <= 0.0 || !c.is_finite() {
                return Err(Error::InvalidParameter(format!("relatedness must be > 0, got {c}")));
            }
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn with_families(&self, n_families: usize) -> Self {
        Self {
            n_families,
            ..self.clone()
        }
    }
}

/// `L` with `L L' = M`, built from the eigendecomposition so that rank
/// deficient covariances are handled.
fn psd_factor(m: &SymMatrix) -> Result<Matrix> {
    let eig = symmetric_eigen(m)?;
    let mut f = eig.vectors().clone();
    for (j, &lam) in eig.values().iter().enumerate() {
        let s = lam.max(0.0).sqrt();
        for i in 0..f.rows() {
            f[(i, j)] *= s;
        }
    }
    Ok(f)
}

struct Sampler {
    k: usize,
    mu: Vec<f64>,
    shared: Matrix,
    individual: Matrix,
    env: Matrix,
    sigma: f64,
}

impl Sampler {
    fn new(p: &SimulationParams) -> Result<Self> {
        p.validate()?;
        let share = match p.design {
            Design::HalfSib => 0.25,
            Design::FullSib => 0.5,
        };
        Ok(Self {
            k: p.dim(),
            mu: p.mu.clone(),
            shared: psd_factor(&p.g.scale(share))?,
            individual: psd_factor(&p.g.scale(1.0 - share))?,
            env: psd_factor(&p.e)?,
            sigma: p.sigma2.sqrt(),
        })
    }

    fn correlated<R: Rng>(&self, factor: &Matrix, rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..self.k).map(|_| rng.sample(StandardNormal)).collect();
        factor.mul_vec(&z).expect("factor is K x K")
    }
}

/// Draws a balanced dataset. Family `j` draws its shared effect from
/// substream `(seed, FAMILY, j)` and individual `i` from `(seed, j, i)`.
pub fn generate_dataset(p: &SimulationParams) -> Result<FamilyDataset> {
    let sampler = Sampler::new(p)?;
    let families = par::map_indexed(Execution::Sequential, p.n_families, |j| {
        let mut frng = substream(p.seed, &[FAMILY_STREAM, j as u64]);
        let family_effect = sampler.correlated(&sampler.shared, &mut frng);
        let records = (0..p.family_size)
            .map(|i| {
                let mut rng = substream(p.seed, &[j as u64, i as u64]);
                let w = sampler.correlated(&sampler.individual, &mut rng);
                let e = sampler.correlated(&sampler.env, &mut rng);
                (0..sampler.k)
                    .map(|t| {
                        let eps: f64 = rng.sample(StandardNormal);
                        sampler.mu[t] + family_effect[t] + w[t] + e[t] + sampler.sigma * eps
                    })
                    .collect()
            })
            .collect();
        Family {
            id: format!("F{:04}", j + 1),
            records,
        }
    });
    FamilyDataset::new(families, p.grid.clone(), p.design, p.relatedness)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyOptions {
    pub reps: usize,
    pub null_dim: usize,
    pub measure: MeasureKind,
}

fn default_reps() -> usize {
    200
}

fn default_null_dim() -> usize {
    3
}

fn default_measure() -> MeasureKind {
    MeasureKind::FirstDifference
}

/// Study configuration file: the simulation parameters plus study options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    #[serde(flatten)]
    pub params: SimulationParams,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_null_dim")]
    pub null_dim: usize,
    #[serde(default = "default_measure")]
    pub measure: MeasureKind,
}

impl StudyConfig {
    pub fn options(&self) -> StudyOptions {
        StudyOptions {
            reps: self.reps,
            null_dim: self.null_dim,
            measure: self.measure,
        }
    }
}

/// Dataset of replicate `index` in a study seeded with `p.seed`.
pub fn replicate_dataset(p: &SimulationParams, index: usize) -> Result<FamilyDataset> {
    generate_dataset(&p.with_seed(substream_seed(p.seed, &[index as u64])))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub index: usize,
    pub seed: u64,
    pub g_hat_raw: SymMatrix,
    pub raw_eigenvalues: Vec<f64>,
    pub min_raw_eigenvalue: f64,
    pub negative_min_eigenvalue: bool,
    pub clipped_indices: Vec<usize>,
    /// Eigenvalues of the clipped estimate.
    pub eigenvalues: Vec<f64>,
    /// Simplicity basis of the estimated nearly null space, simplest first.
    pub null_basis: Vec<Vec<f64>>,
    pub null_scores: Vec<f64>,
    pub simplest_vector: Vec<f64>,
    /// Eigenvectors `J+1..K` of the clipped estimate.
    pub null_eigenvectors: Vec<Vec<f64>>,
    /// `G_true w` for the simplest vector `w`.
    pub simplest_response: Vec<f64>,
    pub simplest_response_norm: f64,
    /// `|G_hat w|`, bounded by `lambda_{J+1}(G_hat)`.
    pub simplest_response_norm_estimated: f64,
    pub boundary_eigenvalue_estimated: f64,
    pub null_eigenvector_responses: Vec<Vec<f64>>,
    pub null_eigenvector_response_norms: Vec<f64>,
    /// Squared canonical-angle distance to the true nearly null space.
    pub canonical_distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    /// Sample standard deviation (n - 1); 0 for a single value.
    pub sd: f64,
}

impl MeanSd {
    pub fn of(xs: impl IntoIterator<Item = f64>) -> Self {
        let xs: Vec<f64> = xs.into_iter().collect();
        let n = xs.len() as f64;
        if xs.is_empty() {
            return Self {
                mean: f64::NAN,
                sd: f64::NAN,
            };
        }
        let mean = xs.iter().sum::<f64>() / n;
        let sd = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyAggregates {
    pub simplest_response_norm: MeanSd,
    /// One entry per null-space eigenvector, in eigenvalue order (PC J+1 first).
    pub null_eigenvector_response_norms: Vec<MeanSd>,
    pub negative_min_count: usize,
    pub negative_min_fraction: f64,
    pub smallest_raw_eigenvalue: f64,
    pub canonical_distance: MeanSd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub params: SimulationParams,
    pub options: StudyOptions,
    pub model_dim: usize,
    pub relatedness: f64,
    pub rng: String,
    pub generative_model: String,
    pub true_eigenvalues: Vec<f64>,
    /// Simplest vector of the true nearly null space.
    pub true_simplest_vector: Vec<f64>,
    pub true_simplest_response_norm: f64,
    pub true_null_eigenvectors: Vec<Vec<f64>>,
    pub replicates: Vec<ReplicateResult>,
    pub aggregates: StudyAggregates,
}

pub fn run_study(p: &SimulationParams, options: &StudyOptions) -> Result<StudySummary> {
    run_study_with(Execution::default(), p, options)
}

/// Runs `options.reps` independent replicates; replicate `r` uses the
/// substream seed `(p.seed, r)`, so results are identical for any execution.
pub fn run_study_with(exec: Execution, p: &SimulationParams, options: &StudyOptions) -> Result<StudySummary> {
    p.validate()?;
    let k = p.dim();
    if options.reps == 0 {
        return Err(Error::InvalidParameter("reps must be at least 1".into()));
    }
    if options.null_dim == 0 || options.null_dim >= k {
        return Err(Error::InvalidParameter(format!(
            "null_dim must be in 1..={}, got {}",
            k - 1,
            options.null_dim
        )));
    }
    let model_dim = k - options.null_dim;
    let measure = options.measure.build(&p.grid)?;
    let truth = GMatrix::new(p.g.clone())?;
    let true_null: Vec<Vec<f64>> = (model_dim..k).map(|i| truth.eigen().vector(i)).collect();
    let true_basis = simplicity_basis(&true_null, &measure)?;

    let mut replicates = par::try_map_indexed(exec, options.reps, |r| {
        run_replicate(r, p, model_dim, &measure, &truth, &true_null).map_err(|e| Error::Replicate {
            index: r,
            source: Box::new(e),
        })
    })?;

    // sign-align against the first replicate
    let (first_simplest, first_pcs) = {
        let r0 = &replicates[0];
        (r0.simplest_vector.clone(), r0.null_eigenvectors.clone())
    };
    for rep in &mut replicates {
        if dot(&rep.simplest_vector, &first_simplest) < 0.0 {
            flip(&mut rep.simplest_vector);
            flip(&mut rep.simplest_response);
        }
        for (m, reference) in first_pcs.iter().enumerate() {
            if dot(&rep.null_eigenvectors[m], reference) < 0.0 {
                flip(&mut rep.null_eigenvectors[m]);
                flip(&mut rep.null_eigenvector_responses[m]);
            }
        }
    }
    let mut true_simplest = true_basis.vectors[0].clone();
    if dot(&true_simplest, &first_simplest) < 0.0 {
        flip(&mut true_simplest);
    }
    let mut true_null_aligned = true_null.clone();
    for (v, reference) in true_null_aligned.iter_mut().zip(&first_pcs) {
        if dot(v, reference) < 0.0 {
            flip(v);
        }
    }

    let negative_min_count = replicates.iter().filter(|r| r.negative_min_eigenvalue).count();
    let aggregates = StudyAggregates {
        simplest_response_norm: MeanSd::of(replicates.iter().map(|r| r.simplest_response_norm)),
        null_eigenvector_response_norms: (0..options.null_dim)
            .map(|m| MeanSd::of(replicates.iter().map(|r| r.null_eigenvector_response_norms[m])))
            .collect(),
        negative_min_count,
        negative_min_fraction: negative_min_count as f64 / options.reps as f64,
        smallest_raw_eigenvalue: replicates
            .iter()
            .map(|r| r.min_raw_eigenvalue)
            .fold(f64::INFINITY, f64::min),
        canonical_distance: MeanSd::of(replicates.iter().map(|r| r.canonical_distance)),
    };
    let true_simplest_response_norm = crate::linalg::norm(&p.g.mul_vec(&true_simplest)?);

    Ok(StudySummary {
        params: p.clone(),
        options: *options,
        model_dim,
        relatedness: p.relatedness.unwrap_or_else(|| p.design.relatedness_coefficient()),
        rng: RNG_DESCRIPTION.to_string(),
        generative_model: GENERATIVE_MODEL.to_string(),
        true_eigenvalues: truth.eigenvalues().to_vec(),
        true_simplest_vector: true_simplest,
        true_simplest_response_norm,
        true_null_eigenvectors: true_null_aligned,
        replicates,
        aggregates,
    })
}

fn flip(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = -*x);
}

fn run_replicate(
    index: usize,
    p: &SimulationParams,
    model_dim: usize,
    measure: &SimplicityMeasure,
    truth: &GMatrix,
    true_null: &[Vec<f64>],
) -> Result<ReplicateResult> {
    let seed = substream_seed(p.seed, &[index as u64]);
    let data = replicate_dataset(p, index)?;
    let vc = anova_estimate(&data)?;
    let raw_eigenvalues = symmetric_eigen(&vc.g_hat_raw)?.values().to_vec();
    let min_raw_eigenvalue = raw_eigenvalues.last().copied().unwrap_or(0.0);

    let g_hat = &vc.g_hat;
    let part = partition(g_hat, model_dim, measure)?;
    let null_basis = part.null_basis();
    let simplest_vector = null_basis.vectors[0].clone();
    let null_eigenvectors: Vec<Vec<f64>> = (model_dim..p.dim()).map(|i| g_hat.eigen().vector(i)).collect();

    let simplest_response = truth.matrix().mul_vec(&simplest_vector)?;
    let null_eigenvector_responses = null_eigenvectors
        .iter()
        .map(|v| truth.matrix().mul_vec(v))
        .collect::<Result<Vec<_>>>()?;

    Ok(ReplicateResult {
        index,
        seed,
        g_hat_raw: vc.g_hat_raw.clone(),
        negative_min_eigenvalue: min_raw_eigenvalue < 0.0,
        min_raw_eigenvalue,
        raw_eigenvalues,
        clipped_indices: vc.clipped_indices(),
        eigenvalues: g_hat.eigenvalues().to_vec(),
        simplest_response_norm: crate::linalg::norm(&simplest_response),
        simplest_response,
        simplest_response_norm_estimated: part.null[0].response_norm,
        boundary_eigenvalue_estimated: g_hat.eigenvalues()[model_dim],
        null_eigenvector_response_norms: null_eigenvector_responses
            .iter()
            .map(|r| crate::linalg::norm(r))
            .collect(),
        null_eigenvector_responses,
        canonical_distance: canonical_angle_distance(&null_basis.vectors, true_null)?,
        null_scores: null_basis.scores,
        null_basis: null_basis.vectors,
        simplest_vector,
        null_eigenvectors,
    })
}

/// Eigenvalues used for the caterpillar surrogate G.
pub const CATERPILLAR_EIGENVALUES: [f64; 6] = [0.618, 0.200, 0.153, 0.061, 0.008, 0.0];

/// Stand-in for the caterpillar growth-rate study, whose fitted matrices are
/// not tabulated.
///
/// G has the published eigenvalues on an orthonormal frame taken from the
/// first-difference simplicity eigenbasis of the temperature grid (`u1`
/// constant ... `u6` roughest): PC1 = u5, PC2 = u1, PC3 = u4, PC4 = u6,
/// PC5 = u2, PC6 = u3. The smooth low-vs-high temperature contrast `u2`
/// thus sits in the nearly null space. E and sigma2 are illustrative.
pub fn caterpillar_surrogate(seed: u64) -> SimulationParams {
    let grid = TraitGrid::caterpillar();
    let frame = caterpillar_frame();
    SimulationParams {
        mu: vec![0.25, 0.45, 0.80, 1.20, 1.45, 1.10],
        g: SymMatrix::from_spectral(&CATERPILLAR_EIGENVALUES, &frame),
        e: caterpillar_environment(),
        sigma2: 0.005,
        n_families: 100,
        family_size: 20,
        design: Design::HalfSib,
        relatedness: None,
        seed,
        grid,
    }
}

/// Columns are the surrogate eigenvectors, PC1 first.
pub fn caterpillar_frame() -> Matrix {
    let m = SimplicityMeasure::first_difference(&TraitGrid::caterpillar());
    let eig = symmetric_eigen(m.matrix()).expect("valid measure");
    // simplicity order u1..u6 -> PC order
    let order = [4, 0, 3, 5, 1, 2];
    let cols: Vec<Vec<f64>> = order.iter().map(|&i| eig.vector(i)).collect();
    Matrix::from_columns(&cols).expect("6 columns of length 6")
}

fn caterpillar_environment() -> SymMatrix {
    // AR(1)-like correlation across adjacent temperatures
    let sd = [0.175, 0.200, 0.225, 0.250, 0.275, 0.300];
    let rho: f64 = 0.4;
    let rows: Vec<Vec<f64>> = (0..6)
        .map(|i| {
            (0..6)
                .map(|j| sd[i] * sd[j] * rho.powi((i as i32 - j as i32).abs()))
                .collect()
        })
        .collect();
    SymMatrix::from_rows(&rows).expect("symmetric by construction")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> SimulationParams {
        SimulationParams {
            grid: TraitGrid::uniform(3).unwrap(),
            mu: vec![1.0, 2.0, 3.0],
            g: SymMatrix::zeros(3),
            e: SymMatrix::zeros(3),
            sigma2: 0.0,
            n_families: 3,
            family_size: 4,
            design: Design::HalfSib,
            relatedness: None,
            seed: 11,
        }
    }

    #[test]
    fn zero_covariances_give_mu() {
        let d = generate_dataset(&tiny()).unwrap();
        for f in d.families() {
            for r in &f.records {
                assert_eq!(r, &vec![1.0, 2.0, 3.0]);
            }
        }
    }

    #[test]
    fn same_seed_bit_identical() {
        let p = caterpillar_surrogate(5).with_families(10);
        assert_eq!(generate_dataset(&p).unwrap(), generate_dataset(&p).unwrap());
        assert_ne!(
            generate_dataset(&p).unwrap(),
            generate_dataset(&p.with_seed(6)).unwrap()
        );
    }

    #[test]
    fn rejects_bad_params() {
        let mut p = tiny();
        p.g = SymMatrix::diagonal(&[1.0, -1.0, 0.0]);
        assert!(matches!(generate_dataset(&p), Err(Error::InvalidCovariance(_))));
        let mut p = tiny();
        p.sigma2 = -1.0;
        assert!(matches!(generate_dataset(&p), Err(Error::InvalidCovariance(_))));
        let mut p = tiny();
        p.mu.pop();
        assert!(matches!(generate_dataset(&p), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn study_preconditions() {
        let p = caterpillar_surrogate(1);
        let opts = |reps, null_dim| StudyOptions {
            reps,
            null_dim,
            measure: MeasureKind::FirstDifference,
        };
        assert!(run_study(&p, &opts(0, 3)).is_err());
        assert!(run_study(&p, &opts(1, 0)).is_err());
        assert!(run_study(&p, &opts(1, 6)).is_err());
    }

    #[test]
    fn surrogate_has_published_eigenvalues() {
        let g = GMatrix::new(caterpillar_surrogate(0).g).unwrap();
        for (a, b) in g.eigenvalues().iter().zip(CATERPILLAR_EIGENVALUES) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn shared_effect_moment() {
        // family effects of the surrogate have covariance G/4
        let p = caterpillar_surrogate(9);
        let sampler = Sampler::new(&p).unwrap();
        let n = 100_000;
        let mut acc = vec![0.0; 36];
        for j in 0..n {
            let f = sampler.correlated(&sampler.shared, &mut substream(1, &[j as u64]));
            for a in 0..6 {
                for b in 0..6 {
                    acc[a * 6 + b] += f[a] * f[b] / n as f64;
                }
            }
        }
        let target = p.g.scale(0.25);
        let diff: f64 = (0..36)
            .map(|i| (acc[i] - target.entries()[i]).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(
            diff <= 0.02 * target.frobenius_norm(),
            "relative error {}",
            diff / target.frobenius_norm()
        );
    }

    #[test]
    fn mean_sd() {
        let m = MeanSd::of([1.0, 2.0, 3.0]);
        assert_eq!(m.mean, 2.0);
        assert_eq!(m.sd, 1.0);
        assert_eq!(MeanSd::of([4.0]).sd, 0.0);
    }

    #[test]
    fn config_json_accepts_short_design() {
        let p = caterpillar_surrogate(3);
        let mut v = serde_json::to_value(&p).unwrap();
        v["design"] = "halfsib".into();
        let back: SimulationParams = serde_json::from_value(v).unwrap();
        assert_eq!(back, p);
    }
}
