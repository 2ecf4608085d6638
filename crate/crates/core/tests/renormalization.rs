use henon_renorm::poly::Poly3;
use henon_renorm::renormalization::{conjugacy_residual, conjugacy_residual_scaled, delta_profile, renormalize, TransitionData};
use henon_renorm::{linspace, Point};
use proptest::prelude::*;

/// `(x - p)^3` with `p = 1`.
fn cubic_about_p(c: f64) -> Poly3 {
    Poly3::from_terms(&[(3, 0, 0, c), (2, 0, 0, -3.0 * c), (1, 0, 0, 3.0 * c), (0, 0, 0, -c)])
}

fn eigen_data() -> TransitionData {
    TransitionData { sigma: vec![2.0], lambda: vec![0.25], ..TransitionData::toy() }
}

/// `Psi ∘ (L^n ∘ T) ∘ Psi^{-1}` written out from the chart formulas.
fn direct_composition(d: &TransitionData, n: usize, mu: f64, z: Point) -> Point {
    let s = d.sigma_at(mu).powi(n as i32);
    let l = d.lambda_at(mu).powi(n as i32);
    let (x, y) = (d.p + z[0] / (d.xi * s), l * d.q + z[1] / (d.xi * d.gamma * s * s));
    let u = x - d.p;
    let t0 = d.xi * u * u + mu + d.gamma * y + d.e1.eval(x, y, mu);
    let t1 = d.q + d.zeta * u + d.e2.eval(x, y, mu);
    let (w0, w1) = (s * t0, l * t1);
    [d.xi * s * (w0 - d.p), d.xi * d.gamma * s * s * (w1 - l * d.q)]
}

fn composition_gap(d: &TransitionData, n: usize) -> f64 {
    let res = renormalize(d, n).unwrap();
    let fam = res.family.as_ref().unwrap().to_family();
    let mut worst: f64 = 0.0;
    for mu_t in linspace(-0.1, 0.1, 5) {
        let mu = d.reparam_mn(n, mu_t).unwrap();
        let a = d.a_of_mu(n, mu);
        for x in linspace(-2.5, 2.5, 65) {
            for y in linspace(-2.5, 2.5, 65) {
                let lhs = direct_composition(d, n, mu, [x, y]);
                let rhs = fam.eval([x, y], a);
                worst = worst.max((lhs[0] - rhs[0]).abs()).max((lhs[1] - rhs[1]).abs());
            }
        }
    }
    worst
}

#[test]
fn error_term_conditions() {
    let r = TransitionData::toy().validate_e();
    assert!(r.pass);
    assert!(r.checks.iter().all(|c| c.residual == 0.0));
    let cubic = TransitionData::toy().with_error(cubic_about_p(1.0), Poly3::constant(0.0));
    assert!(cubic.validate_e().pass);
    let mux = TransitionData::toy().with_error(Poly3::monomial(1, 0, 1, 1.0), Poly3::constant(0.0));
    let r = mux.validate_e();
    assert!(!r.pass);
    let failing: Vec<_> = r.checks.iter().filter(|c| !c.pass).collect();
    assert_eq!(failing.len(), 1);
    assert!(failing[0].name.starts_with("E1"));
    // d_mu (mu x) at P = (1, 0) is p = 1.
    assert_eq!(failing[0].residual, 1.0);
    assert!(renormalize(&mux, 3).is_err());
}

#[test]
fn reparametrization_closed_form() {
    let d = eigen_data();
    for mu_t in [-1.0, -0.1, 0.0, 0.37, 1.0] {
        let m = d.reparam_mn(2, mu_t).unwrap();
        assert!((m - (mu_t / 16.0 + 3.0 / 16.0)).abs() < 1e-15);
    }
    let (lo, hi) = (d.reparam_mn(3, -0.1).unwrap(), d.reparam_mn(3, 0.1).unwrap());
    assert!(((hi - lo) - 0.2 * 2f64.powi(-6)).abs() < 1e-16);
    assert_eq!(d.reparam_mn(0, 0.5).unwrap(), 0.5 - 1.0 + 1.0);
}

#[test]
fn unperturbed_renormalization_is_pure_henon() {
    let d = TransitionData::toy();
    let res = renormalize(&d, 5).unwrap();
    assert!((res.b - 0.2f64.powi(5)).abs() < 1e-18);
    let fam = res.family.as_ref().unwrap();
    assert!(fam.pert_a.max_abs_coeff() == 0.0);
    assert!(fam.pert_b.max_abs_coeff() < 1e-15);
    assert!(fam.henon_delta().unwrap().delta < 1e-14);
    assert!(conjugacy_residual(&res, 33).unwrap().residual < 1e-12);
}

#[test]
fn cubic_error_matches_direct_composition() {
    let d = TransitionData::toy().with_error(cubic_about_p(0.01), Poly3::constant(0.0));
    let gap = composition_gap(&d, 5);
    assert!(gap < 1e-10, "direct composition gap {gap:e}");
    let res = renormalize(&d, 5).unwrap();
    let delta = res.family.as_ref().unwrap().henon_delta().unwrap().delta;
    assert!(delta > 0.0 && delta.is_finite());
    assert!(conjugacy_residual(&res, 65).unwrap().residual < 1e-10);
}

#[test]
fn single_pass_and_long_pass_residuals() {
    let d = TransitionData::toy_perturbed();
    assert!(composition_gap(&d, 1) < 1e-12);
    assert!(composition_gap(&d, 10) < 1e-9);
    assert!(renormalize(&d, 0).is_err());
}

#[test]
fn wrong_chart_scale_detected() {
    let res = renormalize(&TransitionData::toy_perturbed(), 6).unwrap();
    assert!(conjugacy_residual_scaled(&res, 33, 1.01).unwrap().residual > 1e-4);
}

#[test]
fn parameter_dependent_eigenvalues() {
    let d = TransitionData { sigma: vec![2.0, 0.1], lambda: vec![0.1, 0.02], ..TransitionData::toy_perturbed() };
    let res = renormalize(&d, 4).unwrap();
    assert!(res.family.is_none());
    assert!(res.a_affine.is_none());
    assert!(conjugacy_residual(&res, 33).unwrap().residual < 1e-9);
}

#[test]
fn determinant_shrinks_geometrically() {
    let d = TransitionData::toy_perturbed();
    for n in 1..12 {
        let r = renormalize(&d, n).unwrap();
        assert!((r.b - d.b_prime() * 0.2f64.powi(n as i32)).abs() <= 1e-15 * r.b.abs());
    }
}

#[test]
fn delta_profile_examples() {
    let k = [-2.5, 2.5, -2.5, 2.5];
    let zero = delta_profile(&TransitionData::toy(), &[5, 6, 7], k, 3).unwrap();
    assert!(zero.rows.iter().all(|r| r.delta < 1e-14));
    let ns: Vec<usize> = (5..=12).collect();
    let p = delta_profile(&TransitionData::toy_perturbed(), &ns, k, 3).unwrap();
    assert!(p.monotone);
    assert!(p.rows.windows(2).all(|w| w[1].delta < w[0].delta));
    assert!(p.slope.unwrap().slope < 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalized_parameter_identity(mu_t in -1.0..1.0f64, n in 1usize..=8) {
        let d = TransitionData::toy();
        let mu = d.reparam_mn(n, mu_t).unwrap();
        prop_assert!((d.a_of_mu(n, mu) - d.xi * mu_t).abs() < 1e-12);
        prop_assert!((d.mu_of_a(n, d.a_of_mu(n, mu)).unwrap() - mu).abs() < 1e-14);
    }

    #[test]
    fn normalized_parameter_identity_varying_eigen(mu_t in -1.0..1.0f64, n in 1usize..=4, s1 in -0.2..0.2f64) {
        let d = TransitionData { sigma: vec![2.0, s1], lambda: vec![0.1, 0.02], ..TransitionData::toy() };
        let mu = d.reparam_mn(n, mu_t).unwrap();
        prop_assert!((d.a_of_mu(n, mu) - d.xi * mu_t).abs() < 1e-12);
    }

    #[test]
    fn renormalized_map_conjugates_return_map(c3 in -0.05..0.05f64, cy in -0.05..0.05f64, n in 2usize..9) {
        let e1 = cubic_about_p(c3).add(&Poly3::from_terms(&[(0, 2, 0, cy)]));
        let e2 = Poly3::from_terms(&[(0, 2, 0, cy), (2, 0, 0, c3), (1, 0, 0, -2.0 * c3), (0, 0, 0, c3)]);
        let d = TransitionData::toy().with_error(e1, e2);
        prop_assume!(d.validate_e().pass);
        prop_assert!(composition_gap(&d, n) < 1e-9);
    }
}
