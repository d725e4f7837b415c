//! One-way MANOVA (method of moments) estimation of G from balanced family
//! data, plus loading of precomputed G matrices.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmatrix::{clip_negative_eigenvalues, ClippedEigenvalue, GMatrix};
use crate::grid::TraitGrid;
use crate::linalg::{Matrix, SymMatrix};
use crate::par::{self, Execution};

/// Family structure of the breeding design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Design {
    #[serde(alias = "halfsib")]
    HalfSib,
    #[serde(alias = "fullsib")]
    FullSib,
}

impl Design {
    /// Between-family covariance is `G / c`; this returns `c`.
    pub fn relatedness_coefficient(self) -> f64 {
        match self {
            Design::HalfSib => 4.0,
            Design::FullSib => 2.0,
        }
    }
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Design::HalfSib => "half-sib",
            Design::FullSib => "full-sib",
        })
    }
}

impl FromStr for Design {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "halfsib" | "half-sib" => Ok(Design::HalfSib),
            "fullsib" | "full-sib" => Ok(Design::FullSib),
            other => Err(Error::InvalidParameter(format!(
                "unknown design '{other}' (expected halfsib or fullsib)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Family {
    pub id: String,
    /// One K-vector of trait values per individual.
    pub records: Vec<Vec<f64>>,
}

/// Balanced family-structured phenotype records.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyDataset {
    families: Vec<Family>,
    grid: TraitGrid,
    design: Design,
    relatedness: f64,
}

impl FamilyDataset {
    /// Validates balance and record lengths. `relatedness` defaults to the
    /// design's coefficient.
    pub fn new(families: Vec<Family>, grid: TraitGrid, design: Design, relatedness: Option<f64>) -> Result<Self> {
        let relatedness = relatedness.unwrap_or_else(|| design.relatedness_coefficient());
        if relatedness <= 0.0 || !relatedness.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "relatedness coefficient must be > 0, got {relatedness}"
            )));
        }
        if families.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "need at least 2 families, got {}",
                families.len()
            )));
        }
        let n = families[0].records.len();
        if let Some(f) = families.iter().find(|f| f.records.len() != n) {
            return Err(Error::UnbalancedDesign(format!(
                "family '{}' has {} members, family '{}' has {n}",
                f.id,
                f.records.len(),
                families[0].id
            )));
        }
        if n < 2 {
            return Err(Error::InsufficientData(format!(
                "need at least 2 individuals per family, got {n}"
            )));
        }
        let k = grid.len();
        for f in &families {
            if let Some(r) = f.records.iter().find(|r| r.len() != k) {
                return Err(Error::DimensionMismatch(format!(
                    "family '{}' has a record with {} values, grid has {k} points",
                    f.id,
                    r.len()
                )));
            }
            if f.records.iter().flatten().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "family '{}' has a non-finite value",
                    f.id
                )));
            }
        }
        Ok(Self {
            families,
            grid,
            design,
            relatedness,
        })
    }

    pub fn families(&self) -> &[Family] {
        &self.families
    }

    pub fn grid(&self) -> &TraitGrid {
        &self.grid
    }

    pub fn design(&self) -> Design {
        self.design
    }

    pub fn relatedness(&self) -> f64 {
        self.relatedness
    }

    pub fn n_families(&self) -> usize {
        self.families.len()
    }

    pub fn family_size(&self) -> usize {
        self.families[0].records.len()
    }

    pub fn dim(&self) -> usize {
        self.grid.len()
    }

    /// Reads `family,individual,t1,...,tK` CSV. Families keep first-seen order.
    pub fn read_csv(path: &Path, grid: TraitGrid, design: Design, relatedness: Option<f64>) -> Result<Self> {
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            message,
        };
        let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => Error::Io {
                path: path.to_path_buf(),
                source,
            },
            other => parse_err(format!("{other:?}")),
        })?;
        let headers = reader.headers().map_err(|e| parse_err(e.to_string()))?.clone();
        if headers.len() < 3 || &headers[0] != "family" || &headers[1] != "individual" {
            return Err(parse_err("header must be family,individual,t1,...,tK".into()));
        }
        let k = headers.len() - 2;
        if k != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "{}: {k} trait columns but grid has {} points",
                path.display(),
                grid.len()
            )));
        }
        let mut families: Vec<Family> = Vec::new();
        let mut index = std::collections::HashMap::new();
        for (line, row) in reader.records().enumerate() {
            let row = row.map_err(|e| parse_err(e.to_string()))?;
            let values = row
                .iter()
                .skip(2)
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| parse_err(format!("row {}: {e}", line + 2)))?;
            let id = row[0].to_string();
            let slot = *index.entry(id.clone()).or_insert_with(|| {
                families.push(Family {
                    id,
                    records: Vec::new(),
                });
                families.len() - 1
            });
            families[slot].records.push(values);
        }
        Self::new(families, grid, design, relatedness)
    }

    /// Writes the dataset in the format read by [`read_csv`](Self::read_csv).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            let mut header = vec!["family".to_string(), "individual".to_string()];
            header.extend((1..=self.dim()).map(|i| format!("t{i}")));
            w.write_record(&header).expect("in-memory write");
            for f in &self.families {
                for (i, r) in f.records.iter().enumerate() {
                    let mut row = vec![f.id.clone(), (i + 1).to_string()];
                    row.extend(r.iter().map(|x| x.to_string()));
                    w.write_record(&row).expect("in-memory write");
                }
            }
            w.flush().expect("in-memory flush");
        }
        crate::report::write_atomic(path, &buf)
    }
}

/// Mean squares and the resulting G estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceComponents {
    pub between_ms: SymMatrix,
    pub within_ms: SymMatrix,
    /// `(MSB - MSW) / n`.
    pub family_component: SymMatrix,
    /// `c * family_component`; may be indefinite.
    pub g_hat_raw: SymMatrix,
    /// `g_hat_raw` with negative eigenvalues reset to zero.
    pub g_hat: GMatrix,
    pub relatedness: f64,
}

impl VarianceComponents {
    pub fn clipped(&self) -> &[ClippedEigenvalue] {
        self.g_hat.clipped()
    }

    pub fn clipped_indices(&self) -> Vec<usize> {
        self.g_hat.clipped_indices()
    }
}

pub fn anova_estimate(data: &FamilyDataset) -> Result<VarianceComponents> {
    anova_estimate_with(Execution::default(), data)
}

pub fn anova_estimate_with(exec: Execution, data: &FamilyDataset) -> Result<VarianceComponents> {
    let mut vc = anova_from_families(exec, &data.families, data.relatedness)?;
    vc.g_hat = vc.g_hat.with_grid(data.grid.clone())?;
    Ok(vc)
}

/// Method-of-moments components for balanced families of equal-length records.
///
/// `MSB = n sum_j (m_j - m)(m_j - m)' / (N_f - 1)`,
/// `MSW = sum_j sum_i (y_ij - m_j)(y_ij - m_j)' / (N_f (n - 1))`,
/// `G_raw = c (MSB - MSW) / n`.
///
/// Per-family sums run through [`par::map_indexed`]; the reduction is always
/// in family order so the result does not depend on scheduling.
pub fn anova_from_families(exec: Execution, families: &[Family], relatedness: f64) -> Result<VarianceComponents> {
    let nf = families.len();
    if nf < 2 {
        return Err(Error::InsufficientData(format!("need at least 2 families, got {nf}")));
    }
    let n = families[0].records.len();
    if families.iter().any(|f| f.records.len() != n) {
        return Err(Error::UnbalancedDesign("families differ in size".into()));
    }
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 individuals per family, got {n}"
        )));
    }
    let k = families[0].records[0].len();
    if families.iter().flat_map(|f| &f.records).any(|r| r.len() != k) {
        return Err(Error::DimensionMismatch("records differ in length".into()));
    }

    // (family mean, within-family SSCP) per family
    let per_family = par::map_indexed(exec, nf, |j| {
        let recs = &families[j].records;
        let mut mean = vec![0.0; k];
        for r in recs {
            mean.iter_mut().zip(r).for_each(|(m, x)| *m += x);
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut sscp = Matrix::zeros(k, k);
        for r in recs {
            let d: Vec<f64> = r.iter().zip(&mean).map(|(x, m)| x - m).collect();
            accumulate_outer(&mut sscp, &d);
        }
        (mean, sscp)
    });

    let mut grand = vec![0.0; k];
    for (mean, _) in &per_family {
        grand.iter_mut().zip(mean).for_each(|(g, m)| *g += m);
    }
    grand.iter_mut().for_each(|g| *g /= nf as f64);

    let mut between = Matrix::zeros(k, k);
    let mut within = Matrix::zeros(k, k);
    for (mean, sscp) in &per_family {
        let d: Vec<f64> = mean.iter().zip(&grand).map(|(m, g)| m - g).collect();
        accumulate_outer(&mut between, &d);
        within.add_assign(sscp)?;
    }
    let between_ms = scaled_sym(&between, n as f64 / (nf - 1) as f64)?;
    let within_ms = scaled_sym(&within, 1.0 / (nf * (n - 1)) as f64)?;
    let family_component = between_ms.sub(&within_ms)?.scale(1.0 / n as f64);
    let g_hat_raw = family_component.scale(relatedness);
    let g_hat = clip_negative_eigenvalues(&g_hat_raw, 0.0)?;
    Ok(VarianceComponents {
        between_ms,
        within_ms,
        family_component,
        g_hat_raw,
        g_hat,
        relatedness,
    })
}

fn accumulate_outer(m: &mut Matrix, d: &[f64]) {
    let k = d.len();
    for a in 0..k {
        for b in 0..k {
            m[(a, b)] += d[a] * d[b];
        }
    }
}

fn scaled_sym(m: &Matrix, s: f64) -> Result<SymMatrix> {
    let data = m.as_slice().iter().map(|x| x * s).collect();
    SymMatrix::from_row_major(m.rows(), data)
}

/// Parses matrix JSON, checks it against `grid`, symmetrizes and clips.
pub fn ingest_gmatrix(json: &str, grid: Option<&TraitGrid>, clip_tol: f64) -> Result<GMatrix> {
    let raw: SymMatrix = serde_json::from_str(json).map_err(|e| {
        // surface validation errors raised inside SymMatrix::try_from unchanged
        Error::InvalidMatrix(e.to_string())
    })?;
    if let Some(grid) = grid {
        if grid.len() != raw.dim() {
            return Err(Error::DimensionMismatch(format!(
                "matrix is {}x{} but grid has {} points",
                raw.dim(),
                raw.dim(),
                grid.len()
            )));
        }
    }
    let g = clip_negative_eigenvalues(&raw, clip_tol)?;
    match grid {
        Some(grid) => g.with_grid(grid.clone()),
        None => Ok(g),
    }
}

/// [`ingest_gmatrix`] from a file.
pub fn read_gmatrix(path: &Path, grid: Option<&TraitGrid>, clip_tol: f64) -> Result<GMatrix> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ingest_gmatrix(&text, grid, clip_tol).map_err(|e| match e {
        Error::InvalidMatrix(m) => Error::InvalidMatrix(format!("{}: {m}", path.display())),
        Error::DimensionMismatch(m) => Error::DimensionMismatch(format!("{}: {m}", path.display())),
        other => other,
    })
}
