use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered measurement points (ages, temperatures) indexing the trait coordinates.
///
/// Serialized as `{"points": [t1, ..., tK]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct TraitGrid {
    points: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GridRepr {
    points: Vec<f64>,
}

impl TryFrom<GridRepr> for TraitGrid {
    type Error = Error;

    fn try_from(r: GridRepr) -> Result<Self> {
        TraitGrid::new(r.points)
    }
}

impl From<TraitGrid> for GridRepr {
    fn from(g: TraitGrid) -> Self {
        GridRepr { points: g.points }
    }
}

impl TraitGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::GridTooSmall {
                got: points.len(),
                need: 2,
            });
        }
        if points.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidGrid("non-finite grid point".into()));
        }
        if let Some(j) = points.windows(2).position(|w| w[1] - w[0] <= 0.0) {
            return Err(Error::InvalidGrid(format!(
                "points must be strictly increasing (t{} = {} >= t{} = {})",
                j + 1,
                points[j],
                j + 2,
                points[j + 1]
            )));
        }
        Ok(Self { points })
    }

    /// Grid starting at `start` with the given consecutive gaps.
    pub fn from_gaps(start: f64, gaps: &[f64]) -> Result<Self> {
        let mut points = Vec::with_capacity(gaps.len() + 1);
        points.push(start);
        let mut t = start;
        for g in gaps {
            t += g;
            points.push(t);
        }
        Self::new(points)
    }

    /// `0, 1, ..., k-1`.
    pub fn uniform(k: usize) -> Result<Self> {
        Self::new((0..k).map(|i| i as f64).collect())
    }

    /// Growth-rate temperatures, 11 to 40 degrees C.
    pub fn caterpillar() -> Self {
        Self {
            points: vec![11.0, 17.0, 23.0, 29.0, 35.0, 40.0],
        }
    }

    /// Plant-height measurement ages in days.
    pub fn jewelweed() -> Self {
        Self {
            points: vec![18.0, 26.0, 33.0, 39.0, 47.0, 57.0],
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Consecutive gaps `t_j - t_{j-1}`, length `K - 1`.
    pub fn gaps(&self) -> Vec<f64> {
        self.points.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn min_gap(&self) -> f64 {
        self.gaps().into_iter().fold(f64::INFINITY, f64::min)
    }
}
