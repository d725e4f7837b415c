//! Genetic constraint analysis: model / nearly null space partitions of a
//! genetic covariance matrix, simplicity bases, selection responses, ANOVA
//! estimation from family data and a replicated simulation harness.

pub mod cli;
pub mod eigen;
pub mod error;
pub mod estimate;
pub mod gmatrix;
pub mod grid;
pub mod linalg;
pub mod par;
pub mod report;
pub mod rng;
pub mod simplicity;
pub mod simulate;
pub mod spaces;

pub use eigen::{symmetric_eigen, EigenDecomposition};
pub use error::{Error, Result};
pub use estimate::{anova_estimate, Design, Family, FamilyDataset, VarianceComponents};
pub use gmatrix::{clip_negative_eigenvalues, GMatrix};
pub use grid::TraitGrid;
pub use linalg::{Matrix, SymMatrix};
pub use par::Execution;
pub use report::{render_partition_figure, render_study_figure, write_report, FigureSpec};
pub use simplicity::{simplicity_basis, simplicity_score, MeasureKind, SimplicityBasis, SimplicityMeasure};
pub use simulate::{generate_dataset, run_study, SimulationParams, StudyOptions, StudySummary};
pub use spaces::{
    breeders_response, canonical_angle_distance, heritability_matrix, partition, response_to_selection,
    sweep_partitions, variance_proportions, SelectionVectors, SubspacePartition,
};
