use wmc_core::incoherence::{factor_coherence, IncoherenceReport};
use wmc_core::random::{orthonormal_factor, seeded_rng};
use wmc_core::{Mat, Subspace};

#[test]
fn m1_identities_on_random_instances() {
    let mut rng = seeded_rng(21);
    for i in 0..50 {
        let n1 = 6 + i % 20;
        let n2 = 5 + (3 * i) % 25;
        let r = 1 + i % 4;
        let u: Mat<f64> = orthonormal_factor(n1, r, &mut rng).unwrap();
        let v: Mat<f64> = orthonormal_factor(n2, r, &mut rng).unwrap();

        let t1 = Subspace::paired_dyads(u.clone(), v.clone()).unwrap();
        let (lo, hi) = t1.m1_paper_bounds().unwrap();
        let exact = t1.m1_exact();
        assert!((exact - lo).abs() <= 1e-8 * exact && lo == hi);
        let rep = IncoherenceReport::from_factors(&u, &v).unwrap();
        assert!((exact - rep.mu1).abs() <= 1e-8 * exact);

        let t2 = Subspace::outer_grid(u.clone(), v.clone()).unwrap();
        let (lo, _) = t2.m1_paper_bounds().unwrap();
        assert!((t2.m1_exact() - lo).abs() <= 1e-8 * lo);

        let t3 = Subspace::column_space(u.clone(), n2).unwrap();
        let expect = factor_coherence(&u) * n2 as f64;
        assert!((t3.m1_exact() - expect).abs() <= 1e-8 * expect);

        let t4 = Subspace::complement4(u.clone(), v.clone()).unwrap();
        let (lo, hi) = t4.m1_paper_bounds().unwrap();
        let e = t4.m1_exact();
        assert!(
            e >= lo - 1e-8 * lo && e <= hi + 1e-8 * hi,
            "T4 {e} outside [{lo}, {hi}]"
        );
    }
}

#[test]
fn m0_bracket_is_ordered_and_scaled() {
    let mut rng = seeded_rng(22);
    for _ in 0..10 {
        let u: Mat<f64> = orthonormal_factor(15, 3, &mut rng).unwrap();
        let v: Mat<f64> = orthonormal_factor(12, 3, &mut rng).unwrap();
        for t in [
            Subspace::paired_dyads(u.clone(), v.clone()).unwrap(),
            Subspace::outer_grid(u.clone(), v.clone()).unwrap(),
            Subspace::complement4(u.clone(), v.clone()).unwrap(),
        ] {
            let (lo, hi) = t.m0_bracket().unwrap();
            assert!(lo > 0.0 && lo <= hi && hi <= 12.0 / t.rho() as f64 + 1e-12);
        }
    }
}

#[test]
fn incoherence_bounds_chain() {
    let mut rng = seeded_rng(23);
    for _ in 0..30 {
        let u: Mat<f64> = orthonormal_factor(20, 3, &mut rng).unwrap();
        let v: Mat<f64> = orthonormal_factor(16, 3, &mut rng).unwrap();
        let rep = IncoherenceReport::from_factors(&u, &v).unwrap();
        assert!(rep.mu1 <= rep.mu0 * rep.mu0 * 3.0 * (1.0 + 1e-12));
        assert!(rep.mu1_joint <= rep.mu0 * rep.mu0 * 3.0 * (1.0 + 1e-12));
        assert!(rep.mu2 <= 1.0 + 1e-12 && 1.0 <= rep.mu0 + 1e-12);
    }
}
