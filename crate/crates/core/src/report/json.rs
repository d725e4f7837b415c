use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::eigen::symmetric_eigen;
use crate::error::{Error, Result};
use crate::estimate::{Design, FamilyDataset, VarianceComponents};
use crate::gmatrix::{ClippedEigenvalue, NUMERICAL_ZERO, PSD_TOL};
use crate::grid::TraitGrid;
use crate::linalg::SymMatrix;
use crate::simplicity::{MeasureKind, RANK_TOL, TIE_TOL, UNIT_TOL};
use crate::simulate::StudySummary;
use crate::spaces::{SubspacePartition, BOUNDARY_TIE_TOL, MAX_CONDITION};

pub const SOFTWARE: &str = env!("CARGO_PKG_NAME");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub clip_tol: f64,
    pub numerical_zero: f64,
    pub psd_tol: f64,
    pub unit_tol: f64,
    pub rank_tol: f64,
    pub tie_tol: f64,
    pub boundary_tie_tol: f64,
    pub max_condition: f64,
}

impl Tolerances {
    pub fn with_clip(clip_tol: f64) -> Self {
        Self {
            clip_tol,
            numerical_zero: NUMERICAL_ZERO,
            psd_tol: PSD_TOL,
            unit_tol: UNIT_TOL,
            rank_tol: RANK_TOL,
            tie_tol: TIE_TOL,
            boundary_tie_tol: BOUNDARY_TIE_TOL,
            max_condition: MAX_CONDITION,
        }
    }
}

/// Everything needed to reproduce an output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub software: String,
    pub version: String,
    /// Input role (e.g. `"g"`, `"grid"`, `"config"`) to path as given.
    pub inputs: BTreeMap<String, String>,
    pub tolerances: Tolerances,
    pub measure: MeasureKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<Design>,
    /// Relatedness coefficient `c`; absent when G was supplied directly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relatedness: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rng: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generative_model: Option<String>,
}

impl Provenance {
    pub fn new(measure: MeasureKind, clip_tol: f64) -> Self {
        Self {
            software: SOFTWARE.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            inputs: BTreeMap::new(),
            tolerances: Tolerances::with_clip(clip_tol),
            measure,
            seed: None,
            design: None,
            relatedness: None,
            rng: None,
            generative_model: None,
        }
    }

    pub fn input(mut self, role: &str, path: impl Into<String>) -> Self {
        self.inputs.insert(role.to_string(), path.into());
        self
    }
}

/// Analysis of one G at one J.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionReport {
    pub provenance: Provenance,
    pub grid: TraitGrid,
    /// G after clipping.
    pub g: SymMatrix,
    pub rank: usize,
    /// Eigenvalues reset to zero, by index in descending order.
    pub clipped: Vec<ClippedEigenvalue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimation: Option<EstimationSummary>,
    pub partition: SubspacePartition,
}

/// ANOVA quantities when G was estimated from family data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationSummary {
    pub design: Design,
    pub relatedness: f64,
    pub n_families: usize,
    pub family_size: usize,
    pub between_ms: SymMatrix,
    pub within_ms: SymMatrix,
    pub family_component: SymMatrix,
    pub g_hat_raw: SymMatrix,
    pub raw_eigenvalues: Vec<f64>,
}

impl EstimationSummary {
    pub fn new(data: &FamilyDataset, vc: &VarianceComponents) -> Result<Self> {
        Ok(Self {
            design: data.design(),
            relatedness: vc.relatedness,
            n_families: data.n_families(),
            family_size: data.family_size(),
            between_ms: vc.between_ms.clone(),
            within_ms: vc.within_ms.clone(),
            family_component: vc.family_component.clone(),
            g_hat_raw: vc.g_hat_raw.clone(),
            raw_eigenvalues: symmetric_eigen(&vc.g_hat_raw)?.values().to_vec(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub provenance: Provenance,
    pub summary: StudySummary,
}

/// Pretty JSON with a trailing newline. Floats use the shortest
/// representation that parses back to the same bits.
pub fn report_bytes<T: Serialize>(report: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(report)
        .map_err(|e| Error::InvalidParameter(format!("report not serializable: {e}")))?;
    out.push(b'\n');
    Ok(out)
}

pub fn write_report<T: Serialize>(path: &Path, report: &T) -> Result<()> {
    super::write_atomic(path, &report_bytes(report)?)
}

pub fn read_report<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
