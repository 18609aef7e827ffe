use wmc_core::certify::{
    beta1, beta_report, build_certificate, concentration_stat, error_bound_rhs, normalized_gram_apply,
    replacement_norms, CertifyOptions, ErrorBoundInputs,
};
use wmc_core::random::{gaussian_matrix, orthonormal_factor, seeded_rng};
use wmc_core::sampling::draw_with_replacement;
use wmc_core::{Mat, SampleSet, Subspace};

const CAP: usize = 4096;

fn subspaces(seed: u64, n: usize, r: usize) -> Vec<Subspace<f64>> {
    let mut rng = seeded_rng(seed);
    let u: Mat<f64> = orthonormal_factor(n, r, &mut rng).unwrap();
    let v: Mat<f64> = orthonormal_factor(n, r, &mut rng).unwrap();
    vec![
        Subspace::paired_dyads(u.clone(), v.clone()).unwrap(),
        Subspace::outer_grid(u.clone(), v.clone()).unwrap(),
        Subspace::column_space(u.clone(), n).unwrap(),
        Subspace::complement4(u, v).unwrap(),
    ]
}

fn random_unit_in(basis: &[Mat<f64>], rng: &mut impl rand::Rng) -> Mat<f64> {
    let coef: Mat<f64> = gaussian_matrix(basis.len(), 1, rng);
    let coef = &coef / coef.norm();
    let mut x = Mat::<f64>::zeros(basis[0].nrows(), basis[0].ncols());
    for (b, c) in basis.iter().zip(coef.iter()) {
        x += b * *c;
    }
    x
}

// ||A X|| with A = sqrt(n1 n2 / m) P_Omega on distinct cells, m counting repeats
fn sampled_norm(s: &SampleSet, x: &Mat<f64>) -> f64 {
    let scale = (s.n1() * s.n2()) as f64 / s.len() as f64;
    x.zip_map(&s.mask(), |v, w| v * w).norm() * scale.sqrt()
}

#[test]
fn beta1_is_a_lower_bound_on_random_directions() {
    let mut rng = seeded_rng(11);
    for (i, t) in subspaces(1, 8, 2).iter().enumerate() {
        let s = draw_with_replacement(8, 8, 40, &mut rng).unwrap();
        let exact = beta1(t, &s, CAP).unwrap();
        let basis = t.basis().unwrap();
        let mut low = f64::INFINITY;
        for _ in 0..10_000 {
            low = low.min(sampled_norm(&s, &random_unit_in(&basis, &mut rng)));
        }
        assert!(low >= exact - 1e-9, "subspace {i}: {low} < {exact}");
    }
}

#[test]
fn concentration_stat_bounds_random_directions() {
    let mut rng = seeded_rng(12);
    for (i, t) in subspaces(2, 8, 2).iter().enumerate() {
        let s = draw_with_replacement(8, 8, 50, &mut rng).unwrap();
        let exact = concentration_stat(t, &s, CAP).unwrap();
        let basis = t.basis().unwrap();
        let mut high: f64 = 0.0;
        for _ in 0..10_000 {
            let x = random_unit_in(&basis, &mut rng);
            let applied = normalized_gram_apply(&s, &x).unwrap();
            high = high.max((applied.dot(&x) - 1.0).abs());
        }
        assert!(high <= exact + 1e-9, "subspace {i}: {high} > {exact}");
        // the exact value is attained, so random probing should get close on small T
        if t.dim() <= 4 {
            assert!(high >= 0.5 * exact);
        }
    }
}

#[test]
fn replacement_inequality_under_multiplicity_bound() {
    let mut rng = seeded_rng(13);
    let n = 16;
    let limit = 4.0 * (n as f64).ln();
    let mut checked = 0;
    for _ in 0..500 {
        let s = draw_with_replacement(n, n, 128, &mut rng).unwrap();
        if s.multiplicity_max() as f64 > limit {
            continue;
        }
        let x: Mat<f64> = gaussian_matrix(n, n, &mut rng);
        let (with, without) = replacement_norms(&s, &x).unwrap();
        assert!(with <= 2.0 * (n as f64).ln().sqrt() * without + 1e-12);
        checked += 1;
    }
    assert!(checked > 400);
}

#[test]
fn certificate_keeps_the_sampled_projection() {
    let mut rng = seeded_rng(14);
    for t in subspaces(3, 10, 2) {
        let s = draw_with_replacement(10, 10, 70, &mut rng).unwrap();
        let g: Mat<f64> = t.project(&gaussian_matrix(10, 10, &mut rng)).unwrap();
        for omega in [1.0, 0.5, 0.1] {
            let (y, _) = build_certificate(&t, omega, &s, &g).unwrap();
            let direct = t.project(&normalized_gram_apply(&s, &g).unwrap()).unwrap();
            assert!((t.project(&y).unwrap() - direct).norm() <= 1e-10);
        }
    }
}

#[test]
fn repeated_single_entry_certificate() {
    let t = &subspaces(4, 5, 1)[1];
    let k = 3;
    let s = SampleSet::new(5, 5, vec![(0, 0); k], true).unwrap();
    let g: Mat<f64> = Mat::from_fn(5, 5, |i, j| 1.0 + (i * 5 + j) as f64);
    let (_, z) = build_certificate(t, 1.0, &s, &g).unwrap();
    let mut expected = Mat::<f64>::zeros(5, 5);
    expected[(0, 0)] = k as f64 * g[(0, 0)];
    assert!((z - expected).norm() <= 1e-12);
}

#[test]
fn complement_beta_respects_sampling_norm() {
    let mut rng = seeded_rng(15);
    for t in subspaces(5, 10, 2) {
        let d = t.project(&gaussian_matrix(10, 10, &mut rng)).unwrap();
        for (m, omega) in [(40, 0.3), (120, 0.7), (300, 1.0)] {
            let s = draw_with_replacement(10, 10, m, &mut rng).unwrap();
            let rep = beta_report(&t, omega, &s, &d, &CertifyOptions::default(), &mut rng).unwrap();
            assert!(rep.beta2 <= omega * (100.0 / m as f64).sqrt() * (1.0 + 1e-9));
        }
    }
}

#[test]
fn constants_follow_closed_forms_when_certified() {
    let mut rng = seeded_rng(16);
    let t = &subspaces(6, 12, 1)[0];
    let d = t.basis().unwrap()[0].clone();
    let mut certified = 0;
    for _ in 0..20 {
        let s = draw_with_replacement(12, 12, 140, &mut rng).unwrap();
        let rep = beta_report(t, 0.3, &s, &d, &CertifyOptions::default(), &mut rng).unwrap();
        let (b1, b2, b3, b4, b5) = (rep.beta1, rep.beta2, rep.beta3, rep.beta4, rep.beta5);
        assert!((rep.condition - (b2 * b3 / b1 + b4)).abs() <= 1e-12);
        if rep.condition < 1.0 {
            certified += 1;
            let slack = 1.0 - b2 * b3 / b1 - b4;
            let c1 = 2.0 * (b2 / b1 + 1.0) / slack;
            let c2 = 1.0 / b1 + (b2 / b1 + 1.0) * (b3 / b1 + b5) / slack;
            let (got1, got2) = (rep.c1.unwrap(), rep.c2.unwrap());
            assert!(got1 > 0.0 && got2 > 0.0 && got1.is_finite() && got2.is_finite());
            assert!((got1 - c1).abs() <= 1e-10 * c1 && (got2 - c2).abs() <= 1e-10 * c2);
        } else {
            assert!(rep.c1.is_none() && rep.c2.is_none());
        }
    }
    assert!(certified > 0);
}

#[test]
fn error_bound_is_monotone() {
    let base = ErrorBoundInputs {
        omega: 0.3,
        m: 400,
        n1: 30,
        n2: 30,
        rho: 2,
        eta: 0.1,
        tail_nuclear: 0.2,
        pt_perp_nuclear: 0.3,
        constants: [1.0; 3],
    };
    let at = |f: &dyn Fn(&mut ErrorBoundInputs)| {
        let mut inp = base;
        f(&mut inp);
        error_bound_rhs(&inp).unwrap().total
    };
    let mut last = 0.0;
    for eta in [0.0, 0.05, 0.1, 1.0] {
        let v = at(&|i| i.eta = eta);
        assert!(v >= last);
        last = v;
    }
    let mut last = 0.0;
    for p in [0.0, 0.1, 0.5, 2.0] {
        let v = at(&|i| i.pt_perp_nuclear = p);
        assert!(v >= last);
        last = v;
    }
    // f(omega) clamps at one
    let big = at(&|i| {
        i.omega = 1.0;
        i.m = 10;
    });
    assert!(big.is_finite());
    let inp = ErrorBoundInputs {
        omega: 1.0,
        m: 10,
        ..base
    };
    assert_eq!(error_bound_rhs(&inp).unwrap().f_omega, 1.0);
}
