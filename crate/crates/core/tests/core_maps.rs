use approx::assert_abs_diff_eq;
use henon_renorm::cheb::{cheb_cr_norm, cheb_fit, ChebFn};
use henon_renorm::family::{orbit_cocycle, HenonLikeFamily, PolyMapFamily, SAFETY_BOX};
use henon_renorm::poly::Poly3;
use henon_renorm::{linspace, Mat2};
use proptest::prelude::*;

fn sample_family(kind: usize) -> PolyMapFamily {
    match kind {
        0 => PolyMapFamily::henon(0.3),
        1 => PolyMapFamily::henon_classic(0.3),
        2 => PolyMapFamily::quadratic(),
        _ => {
            let f1 = Poly3::from_terms(&[(3, 0, 0, 0.2), (1, 2, 1, -0.4), (0, 1, 0, 1.0), (2, 1, 0, 0.3), (0, 0, 2, 0.7)]);
            let f2 = Poly3::from_terms(&[(1, 0, 1, -0.5), (0, 3, 0, 0.1), (1, 1, 0, 0.25)]);
            PolyMapFamily::new([f1, f2], [-2.5, 2.5, -2.5, 2.5], "mu").unwrap()
        }
    }
}

#[test]
fn jet_of_quadratic_henon_at_fixed_point() {
    let f = PolyMapFamily::henon(0.0);
    let j = f.eval_jet([1.0, 0.0], 0.0, 1).unwrap();
    assert_eq!(j.value, [1.0, 0.0]);
    assert_eq!(j.jacobian(), Mat2::new(2.0, 1.0, 0.0, 0.0));
}

#[test]
fn jet_of_classic_henon_at_origin() {
    let f = PolyMapFamily::henon_classic(0.3);
    let j = f.eval_jet([0.0, 0.0], 1.4, 1).unwrap();
    assert_abs_diff_eq!(j.value[0], 1.0);
    assert_abs_diff_eq!(j.value[1], 0.0);
    assert_eq!(j.jacobian(), Mat2::new(0.0, 1.0, 0.3, 0.0));
}

#[test]
fn order_zero_jet_is_evaluation() {
    for k in 0..4 {
        let f = sample_family(k);
        let z = [0.3, -0.7];
        let j = f.eval_jet(z, 0.4, 0).unwrap();
        assert_eq!(j.value, f.eval(z, 0.4));
        assert_eq!(j.partials.len(), 1);
        assert_eq!(j.get(0, 0, 0), Some(j.value));
    }
}

#[test]
fn jet_rejects_points_outside_box() {
    assert!(PolyMapFamily::henon(0.3).eval_jet([3.0, 0.0], -1.0, 1).is_err());
}

#[test]
fn cocycle_of_linear_map() {
    let f = PolyMapFamily::linear(2.0, 0.5);
    let c = orbit_cocycle(&f, [1.0, 1.0], 0.0, 10, Some([1.0, 0.0]), &[-2000.0, 2000.0, -2000.0, 2000.0]).unwrap();
    assert_abs_diff_eq!(c.log_norm(), 10.0 * 2f64.ln(), epsilon = 1e-12);
    assert_abs_diff_eq!(c.log_det(), 0.0, epsilon = 1e-12);
}

#[test]
fn cocycle_of_superstable_two_cycle() {
    let f = PolyMapFamily::henon(0.0);
    let c = orbit_cocycle(&f, [0.0, 0.0], -1.0, 2, None, &SAFETY_BOX).unwrap();
    assert_eq!(c.orbit, vec![[0.0, 0.0], [-1.0, 0.0], [0.0, 0.0]]);
    let direct = f.jac([-1.0, 0.0], -1.0) * f.jac([0.0, 0.0], -1.0);
    assert!((c.product() - direct).norm() < 1e-14);
}

#[test]
fn single_step_cocycle_is_jacobian() {
    let f = PolyMapFamily::henon(0.3);
    let z = [0.4, -0.2];
    let c = orbit_cocycle(&f, z, -1.2, 1, None, &SAFETY_BOX).unwrap();
    assert!((c.product() - f.jac(z, -1.2)).norm() < 1e-14);
}

#[test]
fn cocycle_reports_escape() {
    let f = PolyMapFamily::henon(0.3);
    assert!(orbit_cocycle(&f, [2.4, 0.0], 1.0, 20, None, &SAFETY_BOX).is_err());
}

#[test]
fn delta_of_pure_family_is_zero() {
    let r = HenonLikeFamily::pure(0.1, [-2.0, 0.0]).henon_delta().unwrap();
    assert_eq!(r.delta, 0.0);
    assert!(r.witness.is_none());
}

#[test]
fn delta_from_second_derivative() {
    let eps = 0.003;
    let f = HenonLikeFamily {
        pert_a: Poly3::monomial(2, 0, 0, eps),
        k_box: [-1.0, 1.0, -1.0, 1.0],
        ..HenonLikeFamily::pure(0.1, [-1.0, -1.0])
    };
    let r = f.henon_delta().unwrap();
    assert_abs_diff_eq!(r.delta, 2.0 * eps, epsilon = 1e-15);
    assert!(r.witness.is_some());
}

#[test]
fn delta_matches_dense_grid() {
    let f = HenonLikeFamily {
        pert_a: Poly3::monomial(1, 1, 0, 0.01),
        pert_b: Poly3::monomial(1, 0, 0, 0.02),
        k_box: [-2.0, 2.0, -2.0, 2.0],
        r: 3,
        ..HenonLikeFamily::pure(0.1, [-1.0, -1.0])
    };
    let got = f.henon_delta().unwrap().delta;
    // Dense oracle over 10^6 points of every derivative up to order 3.
    let xs = linspace(-2.0, 2.0, 1000);
    let mut best: f64 = 0.0;
    for p in [&f.pert_a, &f.pert_b] {
        for i in 0..=3 {
            for j in 0..=(3 - i) {
                let d = p.partial(i, j, 0);
                for &x in &xs {
                    for &y in &xs {
                        best = best.max(d.eval(x, y, -1.0).abs());
                    }
                }
            }
        }
    }
    assert!((got - best).abs() < 1e-9, "{got} vs {best}");
}

#[test]
fn det_ratio_of_pure_family_is_one() {
    let r = HenonLikeFamily::pure(0.3, [-1.5, -1.0]).det_bounds_check(33).unwrap();
    assert!(r.pass);
    assert_eq!(r.min_ratio, 1.0);
    assert_eq!(r.max_ratio, 1.0);
}

#[test]
fn det_ratio_with_small_perturbation() {
    let f = HenonLikeFamily { pert_a: Poly3::monomial(0, 1, 0, 0.01), ..HenonLikeFamily::pure(0.3, [-1.0, -1.0]) };
    let r = f.det_bounds_check(33).unwrap();
    assert!(r.pass);
    assert!(r.min_ratio >= 0.97 && r.max_ratio <= 1.03);
}

#[test]
fn det_check_guards() {
    let big = HenonLikeFamily { pert_a: Poly3::monomial(1, 0, 0, 0.4), ..HenonLikeFamily::pure(0.3, [-1.0, -1.0]) };
    assert!(big.det_bounds_check(9).is_err());
    assert!(HenonLikeFamily::pure(0.0, [-1.0, -1.0]).det_bounds_check(9).is_err());
}

#[test]
fn cheb_norm_examples() {
    let id = ChebFn::identity([-1.0, 1.0]);
    assert_abs_diff_eq!(cheb_cr_norm(&id, 1).norm, 1.0, epsilon = 1e-14);
    let s = cheb_fit(f64::sin, [-1.0, 1.0], 24);
    // sup |sin|, |cos|, |sin|, |cos| on [-1, 1] is cos(0) = 1.
    assert_abs_diff_eq!(cheb_cr_norm(&s, 3).norm, 1.0, epsilon = 1e-10);
    let c = ChebFn::constant([0.0, 2.0], -3.5);
    assert_abs_diff_eq!(cheb_cr_norm(&c, 4).norm, 3.5, epsilon = 1e-15);
    assert_eq!(c.deriv().sup_norm(), 0.0);
}

#[test]
fn tangent_extension_is_first_order_continuation() {
    let f = cheb_fit(|x| x + 0.3 * x * x, [-0.5, 0.5], 16);
    for (x, end) in [(0.7, 0.5), (-0.8, -0.5)] {
        let slope = 1.0 + 0.6 * end;
        let want = end + 0.3 * end * end + slope * (x - end);
        assert_abs_diff_eq!(f.eval_extended(x), want, epsilon = 1e-12);
    }
    assert_eq!(f.eval_extended(0.2), f.eval(0.2));
}

#[test]
fn family_json_round_trip() {
    let f = sample_family(3);
    let js = serde_json::to_string(&f).unwrap();
    let back: PolyMapFamily = serde_json::from_str(&js).unwrap();
    assert_eq!(back, f);
    assert!(serde_json::from_str::<PolyMapFamily>(r#"{"coords":[],"box":[0,1,0,1],"param":"a","x":1}"#).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mixed_partials_commute(kind in 0usize..4, x in -2.0..2.0f64, y in -2.0..2.0f64, mu in -1.0..1.0f64) {
        let f = sample_family(kind);
        let j = f.eval_jet([x, y], mu, 3).unwrap();
        for c in 0..2 {
            let xy = f.coords[c].deriv(0).deriv(1).eval(x, y, mu);
            let yx = f.coords[c].deriv(1).deriv(0).eval(x, y, mu);
            prop_assert_eq!(xy, yx);
            prop_assert_eq!(j.get(1, 1, 0).unwrap()[c], xy);
        }
    }

    #[test]
    fn first_derivatives_match_central_differences(kind in 0usize..4, x in -2.0..2.0f64, y in -2.0..2.0f64, mu in -1.0..1.0f64) {
        let f = sample_family(kind);
        let j = f.eval_jet([x, y], mu, 1).unwrap();
        let h = 1e-5;
        let fd = |dx: f64, dy: f64, dm: f64| {
            let p = f.eval([x + dx, y + dy], mu + dm);
            let m = f.eval([x - dx, y - dy], mu - dm);
            [(p[0] - m[0]) / (2.0 * h), (p[1] - m[1]) / (2.0 * h)]
        };
        for (idx, d) in [([1, 0, 0], fd(h, 0.0, 0.0)), ([0, 1, 0], fd(0.0, h, 0.0)), ([0, 0, 1], fd(0.0, 0.0, h))] {
            let exact = j.get(idx[0], idx[1], idx[2]).unwrap();
            for c in 0..2 {
                let scale = exact[c].abs().max(1.0);
                prop_assert!((exact[c] - d[c]).abs() / scale < 1e-6);
            }
        }
    }

    #[test]
    fn stabilized_cocycle_matches_direct_product(x in -0.5..0.5f64, y in -0.1..0.1f64, n in 1usize..30) {
        let f = PolyMapFamily::henon(0.3);
        let a = -1.3;
        let c = orbit_cocycle(&f, [x, y], a, n, None, &SAFETY_BOX);
        prop_assume!(c.is_ok());
        let c = c.unwrap();
        let mut m = Mat2::identity();
        for z in &c.orbit[..n] {
            m = f.jac(*z, a) * m;
        }
        let rel = (c.product() - m).norm() / m.norm();
        prop_assert!(rel < 1e-10);
        prop_assert!((c.log_det() - n as f64 * 0.3f64.ln()).abs() < 1e-11);
    }

    #[test]
    fn delta_scales_linearly(c in 0.01..5.0f64, k in 0.0..1.0f64) {
        let f = HenonLikeFamily {
            pert_a: Poly3::from_terms(&[(2, 1, 0, 0.01), (0, 1, 1, 0.02 * k)]),
            pert_b: Poly3::from_terms(&[(1, 0, 0, 0.005), (0, 2, 0, 0.003)]),
            r: 3,
            ..HenonLikeFamily::pure(0.2, [-1.5, -1.0])
        };
        let d0 = f.delta_with_grid(33, 3).delta;
        let d1 = f.scaled(c).delta_with_grid(33, 3).delta;
        prop_assert!((d1 - c * d0).abs() <= 1e-14 * d1.max(1e-300) * 10.0);
    }

    #[test]
    fn pure_family_determinant_is_b(b in 0.01..0.5f64, x in -2.5..2.5f64, y in -2.5..2.5f64, a in -2.0..0.0f64) {
        let f = HenonLikeFamily::pure(b, [a, a]).to_family();
        prop_assert!((f.jac([x, y], a).determinant().abs() - b).abs() < 1e-15);
    }
}
