use approx::assert_relative_eq;
use henon_renorm::cone::ConeField;
use henon_renorm::family::PolyMapFamily;
use henon_renorm::hyperbolicity::{
    check_m1, check_m_dr, check_r, find_periodic_orbit, find_periodic_orbits_grid, iterate_with_jacobian,
    lyapunov_top, smoothness_budget, CertifyOptions,
};
use proptest::prelude::*;

/// Period-2 abscissae of `(x^2 + a + y, -b x)`: roots of `t^2 + (1+b) t + (1+b)^2 + a`.
fn henon_two_cycle(a: f64, b: f64) -> [f64; 2] {
    let s = 1.0 + b;
    let disc = (s * s - 4.0 * (s * s + a)).sqrt();
    [(-s - disc) / 2.0, (-s + disc) / 2.0]
}

/// Fixed point of `(x^2 + a + y, -b x)` on the right: root of `x^2 - (1+b) x + a`.
fn henon_fixed_point(a: f64, b: f64) -> f64 {
    let s = 1.0 + b;
    (s + (s * s - 4.0 * a).sqrt()) / 2.0
}

fn linear_opts(r: usize, k_max: usize) -> CertifyOptions {
    CertifyOptions { r, c: 0.5, big_lambda: 1.5, k_max, grid: 11, interior_directions: 6 }
}

#[test]
fn henon_two_cycle_matches_closed_form() {
    let (a, b) = (-1.0, 0.1);
    let f = PolyMapFamily::henon(b);
    let want = henon_two_cycle(a, b);
    let found = find_periodic_orbits_grid(&f, a, 2, [-2.0, 2.0, -2.0, 2.0], 21);
    let cycles: Vec<_> = found.iter().filter(|e| e.minimal_period == 2).collect();
    assert!(!cycles.is_empty());
    for e in cycles {
        assert!(e.residual < 1e-10);
        let mut xs: Vec<f64> = e.orbit.iter().take(2).map(|z| z[0]).collect();
        xs.sort_by(f64::total_cmp);
        assert!((xs[0] - want[0]).abs() < 1e-10 && (xs[1] - want[1]).abs() < 1e-10, "{xs:?} vs {want:?}");
        for z in &e.orbit[..2] {
            let other = e.orbit.iter().find(|w| (w[0] - z[0]).abs() > 1e-6).unwrap();
            assert!((z[1] + b * other[0]).abs() < 1e-10);
        }
    }
}

#[test]
fn non_convergent_seed_is_an_error() {
    let f = PolyMapFamily::henon(0.3);
    // a = 1 has no real periodic points; every orbit escapes.
    assert!(find_periodic_orbit(&f, 1.0, 1, [0.0, 0.0]).is_err());
}

#[test]
fn nearest_resonance_of_example_pair() {
    let r = check_r(0.1, 2.0, 5, 1e-9).unwrap();
    assert!(r.pass);
    // Exhaustive oracle.
    let mut best = f64::INFINITY;
    for i in 0..=5 {
        for j in 0..=(5 - i) {
            if i + j > 0 {
                best = best.min((0.1f64.powi(i) * 2f64.powi(j) - 1.0).abs());
            }
        }
    }
    assert_relative_eq!(r.margin, best, max_relative = 1e-15);
    assert_relative_eq!(r.margin, 0.2, max_relative = 1e-12);
    for m in 2..8 {
        let r = check_r(0.5, 2.0, m, 1e-9).unwrap();
        assert!(!r.pass && !r.dissipative);
    }
}

#[test]
fn m1_examples() {
    assert!(!check_m1(0.24, 0.3, 1.2, 12).unwrap().pass);
    let r = check_m1(-1.2, 2.0, 1.2, 6).unwrap();
    assert!(r.pass && r.vacuous);
    let r = check_m1(-1.7548776662, 0.3, 1.2, 12).unwrap();
    assert!(r.worst_margin.is_finite() && r.samples > 0);
}

#[test]
fn linear_certificate_closed_form() {
    let f = PolyMapFamily::linear(2.0, 0.1);
    let v = [-1.0, 1.0, -1.0, 1.0];
    let cone = ConeField::horizontal(0.3, v).unwrap();
    let cert = check_m_dr(&f, 0.0, &cone, v, &linear_opts(4, 10)).unwrap();
    assert!(cert.all_pass());
    // (M) is worst at k = 1 along a cone boundary; (D_r) is worst at k = 1 along the center.
    let w = 0.3f64;
    let boundary = (4.0 * w.cos().powi(2) + 0.01 * w.sin().powi(2)).sqrt();
    assert_relative_eq!(cert.tag("M").unwrap().worst_margin, boundary / 0.75, max_relative = 1e-12);
    assert_relative_eq!(cert.tag("D_r").unwrap().worst_margin, 1.0 / (2.0 * 0.2 * 0.75), max_relative = 1e-12);
    assert!(cert.invariance.invariant);
}

#[test]
fn linear_certificate_fails_for_high_order() {
    let f = PolyMapFamily::linear(2.0, 0.1);
    let v = [-1.0, 1.0, -1.0, 1.0];
    let cone = ConeField::horizontal(0.3, v).unwrap();
    let cert = check_m_dr(&f, 0.0, &cone, v, &linear_opts(8, 10)).unwrap();
    assert!(cert.tag("M").unwrap().pass);
    let dr = cert.tag("D_r").unwrap();
    assert!(!dr.pass);
    // 2^{5k} 0.2^k 0.5 1.5^k = 0.5 * 9.6^k, largest on the invariant axis at k = k_max.
    assert_relative_eq!(dr.worst_margin, 1.0 / (0.5 * 9.6f64.powi(10)), max_relative = 1e-9);
    assert_eq!(dr.witness_k, 10);
}

#[test]
fn certificate_preconditions() {
    let f = PolyMapFamily::linear(2.0, 0.1);
    let v = [-1.0, 1.0, -1.0, 1.0];
    let cone = ConeField::horizontal(0.3, v).unwrap();
    assert!(check_m_dr(&f, 0.0, &cone, v, &linear_opts(4, 41)).is_err());
    let bad = CertifyOptions { big_lambda: 1.0, ..linear_opts(4, 5) };
    assert!(check_m_dr(&f, 0.0, &cone, v, &bad).is_err());
}

#[test]
fn lyapunov_of_square_is_twice() {
    let f = PolyMapFamily::henon_classic(0.3);
    let f2 = f.iterate(2);
    // Rounding separates the two chaotic orbits quickly, so both averages must be long.
    let one = lyapunov_top(&f, 1.4, [0.0, 0.0], 10_000, 10_000_000).unwrap();
    let two = lyapunov_top(&f2, 1.4, [0.0, 0.0], 5_000, 5_000_000).unwrap();
    assert!((two.mean - 2.0 * one.mean).abs() < 1e-3, "{} vs {}", two.mean, 2.0 * one.mean);
    assert!(!one.ambiguous);
}

#[test]
fn lyapunov_reports_escape() {
    let f = PolyMapFamily::henon_classic(0.3);
    assert!(lyapunov_top(&f, 1.4, [3.0, 3.0], 100, 100).is_err());
}

#[test]
fn budget_guards() {
    assert!(smoothness_budget(0.4, 1.2).is_err());
    assert!(smoothness_budget(-0.1, 0.3).is_err());
    assert_relative_eq!(smoothness_budget(0.419, 0.3).unwrap(), 3.0 - 0.3f64.ln() / 0.419);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn eigenvalue_product_is_determinant(a in -1.9..-0.5f64, b in 0.02..0.5f64) {
        let f = PolyMapFamily::henon(b);
        let x = henon_fixed_point(a, b);
        let e = find_periodic_orbit(&f, a, 1, [x + 1e-3, -b * x]).unwrap();
        prop_assert!((e.point[0] - x).abs() < 1e-10);
        prop_assert!(e.saddle);
        prop_assert!(e.lambda.abs() < 1.0 && 1.0 < e.sigma.abs());
        prop_assert!((e.lambda * e.sigma - e.det).abs() <= 1e-9 * e.det.abs());
        prop_assert!((e.det - b).abs() < 1e-12);
        let (_, m) = iterate_with_jacobian(&f.jacobian_field(), e.point, a, 1);
        prop_assert!((e.lambda + e.sigma - m.trace()).abs() < 1e-10);
    }

    #[test]
    fn two_cycle_eigenvalues_multiply_to_b_squared(a in -1.4..-1.1f64, b in 0.02..0.2f64) {
        let f = PolyMapFamily::henon(b);
        let want = henon_two_cycle(a, b);
        let e = find_periodic_orbit(&f, a, 2, [want[1], -b * want[0]]).unwrap();
        prop_assert_eq!(e.minimal_period, 2);
        prop_assert!((e.det - b * b).abs() <= 1e-12);
        if !e.complex {
            prop_assert!((e.lambda * e.sigma - b * b).abs() <= 1e-9 * b * b);
        }
    }

    #[test]
    fn margins_decrease_in_constants(
        s in 1.5..3.0f64, l in 0.01..0.3f64, c in 0.2..1.0f64, big in 1.05..1.4f64, r in 3usize..8, k in 1usize..8,
        dc in 0.0..0.5f64, dl in 0.0..0.3f64,
    ) {
        let f = PolyMapFamily::linear(s, l);
        let v = [-1.0, 1.0, -1.0, 1.0];
        let cone = ConeField::horizontal(0.3, v).unwrap();
        let base = CertifyOptions { r, c, big_lambda: big, k_max: k, grid: 7, interior_directions: 2 };
        let harder = CertifyOptions { c: c + dc, big_lambda: big + dl, ..base.clone() };
        let longer = CertifyOptions { k_max: k + 3, ..base.clone() };
        let c0 = check_m_dr(&f, 0.0, &cone, v, &base).unwrap();
        let c1 = check_m_dr(&f, 0.0, &cone, v, &harder).unwrap();
        let c2 = check_m_dr(&f, 0.0, &cone, v, &longer).unwrap();
        for name in ["M", "D_r"] {
            let m0 = c0.tag(name).unwrap().worst_margin;
            prop_assert!(c1.tag(name).unwrap().worst_margin <= m0 * (1.0 + 1e-12));
            prop_assert!(c2.tag(name).unwrap().worst_margin <= m0 * (1.0 + 1e-12));
        }
        if c1.all_pass() {
            prop_assert!(c0.all_pass());
        }
    }

    #[test]
    fn passing_certificate_interpolates(s in 1.5..3.0f64, l in 0.01..0.2f64, r in 3usize..6) {
        let f = PolyMapFamily::linear(s, l);
        let v = [-1.0, 1.0, -1.0, 1.0];
        let cone = ConeField::horizontal(0.3, v).unwrap();
        let opts = CertifyOptions { r, c: 0.5, big_lambda: 1.2, k_max: 6, grid: 7, interior_directions: 2 };
        let cert = check_m_dr(&f, 0.0, &cone, v, &opts).unwrap();
        prop_assume!(cert.all_pass());
        prop_assert!(cert.interpolated.iter().all(|&(_, m)| m > 1.0));
        prop_assert_eq!(cert.interpolated.len(), r);
    }

    #[test]
    fn resonant_pairs_rejected(i in 1i32..5, j in 1i32..5, sigma in 1.1..4.0f64) {
        let lambda = sigma.powf(-(j as f64) / i as f64);
        prop_assume!(lambda * sigma < 1.0);
        prop_assert!(!check_r(lambda, sigma, 8, 1e-9).unwrap().pass);
    }
}
