use genecon::estimate::{anova_estimate, FamilyDataset};
use genecon::simulate::{
    caterpillar_surrogate, generate_dataset, replicate_dataset, run_study, run_study_with, StudyOptions,
};
use genecon::{Execution, GMatrix, MeasureKind, SymMatrix};

fn opts(reps: usize) -> StudyOptions {
    StudyOptions {
        reps,
        null_dim: 3,
        measure: MeasureKind::FirstDifference,
    }
}

#[test]
fn study_is_schedule_independent() {
    let p = caterpillar_surrogate(7).with_families(30);
    let a = run_study_with(Execution::Sequential, &p, &opts(6)).unwrap();
    let b = run_study_with(Execution::Parallel, &p, &opts(6)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn replicate_results_do_not_depend_on_rep_count() {
    let p = caterpillar_surrogate(8).with_families(30);
    let short = run_study(&p, &opts(3)).unwrap();
    let long = run_study(&p, &opts(5)).unwrap();
    for (x, y) in short.replicates.iter().zip(&long.replicates) {
        assert_eq!(x.g_hat_raw, y.g_hat_raw);
        assert_eq!(x.simplest_response_norm, y.simplest_response_norm);
    }
}

#[test]
fn replicate_dataset_matches_study() {
    let p = caterpillar_surrogate(9).with_families(25);
    let s = run_study(&p, &opts(3)).unwrap();
    let d = replicate_dataset(&p, 2).unwrap();
    assert_eq!(anova_estimate(&d).unwrap().g_hat_raw, s.replicates[2].g_hat_raw);
}

#[test]
fn estimated_bound_and_true_response() {
    let p = caterpillar_surrogate(10).with_families(40);
    let s = run_study(&p, &opts(8)).unwrap();
    for r in &s.replicates {
        assert!(r.simplest_response_norm_estimated <= r.boundary_eigenvalue_estimated + 1e-9);
        assert_eq!(r.negative_min_eigenvalue, r.min_raw_eigenvalue < 0.0);
        assert!(r.canonical_distance >= 0.0 && r.canonical_distance <= 3.0);
        assert!(r.eigenvalues.iter().all(|&l| l >= 0.0));
    }
    // sign alignment against the first replicate
    let first = &s.replicates[0].simplest_vector;
    for r in &s.replicates {
        assert!(genecon::linalg::dot(&r.simplest_vector, first) >= 0.0);
    }
    assert!((s.true_simplest_response_norm - 0.008).abs() < 1e-12);
}

#[test]
fn marginal_covariance_of_records() {
    // Cov(y) = G + E + sigma2 I
    let mut p = caterpillar_surrogate(11).with_families(20_000);
    p.family_size = 2;
    let d = generate_dataset(&p).unwrap();
    let mut acc = [0.0; 36];
    let mut n = 0.0;
    for f in d.families() {
        for r in &f.records {
            n += 1.0;
            for a in 0..6 {
                for b in 0..6 {
                    acc[a * 6 + b] += (r[a] - p.mu[a]) * (r[b] - p.mu[b]);
                }
            }
        }
    }
    let target =
        p.g.add(&p.e)
            .unwrap()
            .add(&SymMatrix::identity(6).scale(p.sigma2))
            .unwrap();
    let err: f64 = (0..36)
        .map(|i| (acc[i] / n - target.entries()[i]).powi(2))
        .sum::<f64>()
        .sqrt();
    assert!(
        err <= 0.03 * target.frobenius_norm(),
        "relative error {}",
        err / target.frobenius_norm()
    );
}

#[test]
fn csv_round_trip_of_generated_data() {
    let p = caterpillar_surrogate(12).with_families(5);
    let d = generate_dataset(&p).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    d.write_csv(&path).unwrap();
    let back = FamilyDataset::read_csv(&path, p.grid.clone(), p.design, None).unwrap();
    assert_eq!(back, d);
}

#[test]
fn full_sib_design_recovers_g() {
    let mut p = caterpillar_surrogate(13).with_families(3000);
    p.design = genecon::Design::FullSib;
    let g_hat = anova_estimate(&generate_dataset(&p).unwrap()).unwrap().g_hat_raw;
    let err = g_hat.sub(&p.g).unwrap().frobenius_norm() / p.g.frobenius_norm();
    assert!(err < 0.1, "relative error {err}");
    assert!(GMatrix::new(p.g).is_ok());
}
