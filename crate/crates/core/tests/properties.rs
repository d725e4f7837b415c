use genecon::linalg::{dot, norm, normalize};
use genecon::simplicity::orthonormalize;
use genecon::spaces::sweep_partitions_with;
use genecon::{
    breeders_response, canonical_angle_distance, clip_negative_eigenvalues, partition, response_to_selection,
    simplicity_basis, simplicity_score, symmetric_eigen, Execution, GMatrix, SimplicityMeasure, SymMatrix, TraitGrid,
};
use proptest::prelude::*;

fn sym(k: usize) -> impl Strategy<Value = SymMatrix> {
    prop::collection::vec(-5.0..5.0f64, k * k).prop_map(move |a| {
        let rows: Vec<Vec<f64>> = (0..k)
            .map(|i| (0..k).map(|j| a[i * k + j] + a[j * k + i]).collect())
            .collect();
        SymMatrix::from_rows(&rows).unwrap()
    })
}

fn psd(k: usize) -> impl Strategy<Value = SymMatrix> {
    (prop::collection::vec(-2.0..2.0f64, k * k), 1..=k).prop_map(move |(a, rank)| {
        let rows: Vec<Vec<f64>> = (0..k)
            .map(|i| {
                (0..k)
                    .map(|j| (0..rank).map(|m| a[i * k + m] * a[j * k + m]).sum())
                    .collect()
            })
            .collect();
        SymMatrix::from_rows(&rows).unwrap()
    })
}

fn unit_vec(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, k)
        .prop_filter("nonzero", |v| norm(v) > 1e-3)
        .prop_map(|mut v| {
            normalize(&mut v);
            v
        })
}

fn grid6() -> impl Strategy<Value = TraitGrid> {
    prop::collection::vec(0.5..10.0f64, 5).prop_map(|g| TraitGrid::from_gaps(0.0, &g).unwrap())
}

fn char_poly(m: &SymMatrix, x: f64) -> f64 {
    let k = m.dim();
    let a = |i, j| m.get(i, j) - if i == j { x } else { 0.0 };
    match k {
        1 => a(0, 0),
        2 => a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0),
        3 => {
            a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) - a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0))
                + a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0))
        }
        _ => unreachable!(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn eigen_reconstructs_and_is_orthonormal(m in (1usize..8).prop_flat_map(sym)) {
        let eig = symmetric_eigen(&m).unwrap();
        let scale = m.frobenius_norm().max(1.0);
        let back = eig.reconstruct();
        for i in 0..m.dim() {
            for j in 0..m.dim() {
                prop_assert!((back.get(i, j) - m.get(i, j)).abs() <= 1e-12 * scale);
                let expected = if i == j { 1.0 } else { 0.0 };
                prop_assert!((dot(&eig.vector(i), &eig.vector(j)) - expected).abs() <= 1e-12);
            }
        }
        prop_assert!(eig.values().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn eigenvalues_are_roots_for_small_k(m in (1usize..=3).prop_flat_map(sym)) {
        let eig = symmetric_eigen(&m).unwrap();
        let scale = m.frobenius_norm().max(1.0);
        for &l in eig.values() {
            prop_assert!(char_poly(&m, l).abs() <= 1e-9 * scale.powi(m.dim() as i32));
        }
    }

    #[test]
    fn clipping_is_idempotent_and_keeps_vectors(m in (2usize..7).prop_flat_map(sym), tol in 0.0..1.0f64) {
        let once = clip_negative_eigenvalues(&m, tol).unwrap();
        let twice = clip_negative_eigenvalues(once.matrix(), tol).unwrap();
        prop_assert_eq!(once.matrix(), twice.matrix());
        let reclipped = once.clip(tol).unwrap();
        prop_assert_eq!(reclipped.matrix(), once.matrix());
        prop_assert!(once.eigenvalues().iter().all(|&l| l >= -1e-9 * m.frobenius_norm().max(1.0)));

        // eigenvectors of eigenvalues that stay distinct and nonzero survive up to sign
        let before = symmetric_eigen(&m).unwrap();
        let lam = before.values();
        let top = lam.iter().fold(0.0f64, |a, b| a.max(b.abs())).max(1e-300);
        for i in 0..lam.len() {
            let isolated = (0..lam.len()).all(|j| j == i || (lam[i] - lam[j]).abs() > 1e-3 * top);
            if lam[i] >= tol && isolated && lam[i] > 1e-3 * top {
                let v = before.vector(i);
                let after = once.matrix().mul_vec(&v).unwrap();
                for (a, b) in after.iter().zip(&v) {
                    prop_assert!((a - lam[i] * b).abs() <= 1e-9 * top);
                }
            }
        }
    }

    #[test]
    fn simplest_vector_beats_samples(grid in grid6(), raw in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 6), 1..6), coef in prop::collection::vec(-1.0..1.0f64, 5)) {
        let m = SimplicityMeasure::first_difference(&grid);
        let Ok(b) = simplicity_basis(&raw, &m) else { return Ok(()) };
        let mut v = vec![0.0; 6];
        for (r, c) in raw.iter().zip(&coef) {
            for (x, y) in v.iter_mut().zip(r) { *x += c * y; }
        }
        prop_assume!(norm(&v) > 1e-3);
        normalize(&mut v);
        prop_assert!(simplicity_score(&v, &m).unwrap() <= b.scores[0] + 1e-9);
        prop_assert!(b.scores.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn basis_scores_sum_to_trace(grid in grid6(), raw in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 6), 1..6)) {
        let m = SimplicityMeasure::first_difference(&grid);
        let Ok(p) = orthonormalize(&raw) else { return Ok(()) };
        let b = simplicity_basis(&raw, &m).unwrap();
        let trace: f64 = p.iter().map(|v| m.matrix().quadratic_form(v).unwrap()).sum();
        prop_assert!((b.scores.iter().sum::<f64>() - trace).abs() <= 1e-10);
    }

    #[test]
    fn basis_depends_only_on_span(raw in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 6), 2..5), mix in prop::collection::vec(-1.0..1.0f64, 16)) {
        let m = SimplicityMeasure::first_difference(&TraitGrid::jewelweed());
        let Ok(b1) = simplicity_basis(&raw, &m) else { return Ok(()) };
        prop_assume!(!b1.degenerate);
        let d = raw.len();
        // invertible recombination: identity plus a small perturbation
        let other: Vec<Vec<f64>> = (0..d)
            .map(|i| (0..6).map(|c| raw[i][c] + 0.2 * (0..d).map(|j| mix[i * 4 + j] * raw[j][c]).sum::<f64>()).collect())
            .collect();
        let Ok(b2) = simplicity_basis(&other, &m) else { return Ok(()) };
        for (s1, s2) in b1.scores.iter().zip(&b2.scores) {
            prop_assert!((s1 - s2).abs() <= 1e-8);
        }
        prop_assert!(canonical_angle_distance(&b1.vectors, &b2.vectors).unwrap() <= 1e-8);
    }

    #[test]
    fn breeders_equation_matches_gradient_form(g in (1usize..7).prop_flat_map(psd), beta in prop::collection::vec(-2.0..2.0f64, 6)) {
        let k = g.dim();
        let g = GMatrix::new(g).unwrap();
        let e = SymMatrix::identity(k).scale(0.5);
        let beta = &beta[..k];
        let s = g.matrix().add(&e).unwrap().mul_vec(beta).unwrap();
        let a = breeders_response(&g, &e, &s).unwrap();
        let b = response_to_selection(&g, beta).unwrap();
        for (x, y) in a.response.iter().zip(&b.response) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
    }

    #[test]
    fn canonical_distance_symmetric_and_basis_free((u, w) in (1usize..4).prop_flat_map(|d| (prop::collection::vec(unit_vec(5), d), prop::collection::vec(unit_vec(5), d)))) {
        let (Ok(u), Ok(w)) = (orthonormalize(&u), orthonormalize(&w)) else { return Ok(()) };
        let d1 = canonical_angle_distance(&u, &w).unwrap();
        let d2 = canonical_angle_distance(&w, &u).unwrap();
        prop_assert!((d1 - d2).abs() <= 1e-12);
        prop_assert!(d1 >= 0.0 && d1 <= u.len() as f64);
        // rotate u within its span
        let rot: Vec<Vec<f64>> = if u.len() >= 2 {
            let (c, s) = (0.6, 0.8);
            let mut r = u.clone();
            r[0] = u[0].iter().zip(&u[1]).map(|(a, b)| c * a + s * b).collect();
            r[1] = u[0].iter().zip(&u[1]).map(|(a, b)| -s * a + c * b).collect();
            r
        } else {
            vec![u[0].iter().map(|x| -x).collect()]
        };
        prop_assert!((canonical_angle_distance(&rot, &w).unwrap() - d1).abs() <= 1e-12);
    }

    #[test]
    fn partition_bounds(g in psd(6), j in 0usize..=6) {
        let g = GMatrix::new(g).unwrap();
        let m = SimplicityMeasure::first_difference(&TraitGrid::caterpillar());
        let p = partition(&g, j, &m).unwrap();
        let lam = g.eigenvalues();
        let tol = 1e-9 * lam[0].max(1.0);
        for v in &p.null {
            prop_assert!(v.response_norm <= lam[j] + tol);
        }
        for (i, v) in p.model.iter().enumerate() {
            prop_assert!((v.response_norm - lam[i]).abs() <= tol);
        }
        prop_assert!((p.model_variance_fraction + p.null_variance_fraction - 1.0).abs() <= 1e-12 || p.zero_variance);
    }

    #[test]
    fn sweep_is_schedule_independent(g in psd(5)) {
        let g = GMatrix::new(g).unwrap();
        let m = SimplicityMeasure::sparseness(5).unwrap();
        let a = sweep_partitions_with(Execution::Sequential, &g, &m).unwrap();
        let b = sweep_partitions_with(Execution::Parallel, &g, &m).unwrap();
        prop_assert_eq!(a, b);
    }
}
