use henon_renorm::cheb::ChebFn;
use henon_renorm::cone::ConeField;
use henon_renorm::family::PolyMapFamily;
use henon_renorm::hyperbolicity::find_periodic_orbit;
use henon_renorm::normal_forms::{
    build_chart_system, fiber_linearize, fiber_normalize, gap_chain_system, line_field, straighten_unstable,
    unstable_segment, verify_chart_type, ChartGraph, ChartKind, ChartSystem, ExtendedCocycle, LineFieldOptions,
    LinearizeOptions, NestedBoxes, StraightenOptions,
};
use henon_renorm::poly::Poly3;
use henon_renorm::windows::quad_iter;
use henon_renorm::{linspace, Point};
use proptest::prelude::*;

fn self_edge(iu: [f64; 2], is: [f64; 2], map: [Poly3; 2]) -> ChartSystem {
    ChartSystem::synthetic(ChartGraph::cycle(1), vec![iu], vec![is], vec![map]).unwrap()
}

fn two_cycle(iv: [f64; 2], g0: [Poly3; 2], g1: [Poly3; 2]) -> ChartSystem {
    ChartSystem::synthetic(ChartGraph::cycle(2), vec![iv; 2], vec![iv; 2], vec![g0, g1]).unwrap()
}

/// Monotone inverse of `g` near 0 by bisection on `[-1, 1]`.
fn invert(g: impl Fn(f64) -> f64, y: f64) -> f64 {
    let (mut lo, mut hi) = (-1.0, 1.0);
    for _ in 0..200 {
        let m = 0.5 * (lo + hi);
        if g(m) < y {
            lo = m;
        } else {
            hi = m;
        }
    }
    0.5 * (lo + hi)
}

/// `prod_{i >= 1} (1 + c x / 2^i)` truncated after 50 factors.
fn fiber_product(c: f64, x: f64) -> f64 {
    (1..=50).map(|i| 1.0 + c * x / 2f64.powi(i)).product()
}

fn dist_to_curve(curve: &[ChebFn; 2], eps: f64, w: Point) -> f64 {
    let d = |t: f64| (curve[0].eval(t) - w[0]).hypot(curve[1].eval(t) - w[1]);
    let ts = linspace(-eps, eps, 2001);
    let mut best = ts.iter().copied().min_by(|a, b| d(*a).total_cmp(&d(*b))).unwrap();
    let mut h = 2.0 * eps / 2000.0;
    for _ in 0..60 {
        for c in [best - h, best + h] {
            if c.abs() <= eps && d(c) < d(best) {
                best = c;
            }
        }
        h *= 0.7;
    }
    d(best)
}

#[test]
fn invariant_axis_is_unstable_segment() {
    let f = PolyMapFamily::new(
        [Poly3::from_terms(&[(1, 0, 0, 2.0), (0, 2, 0, 1.0)]), Poly3::monomial(0, 1, 0, 0.5)],
        [-3.0, 3.0, -3.0, 3.0],
        "mu",
    )
    .unwrap();
    let e = find_periodic_orbit(&f, 0.0, 1, [0.01, 0.01]).unwrap();
    let seg = unstable_segment(&f, 0.0, &e, 0.4, 24).unwrap();
    for t in linspace(-0.4, 0.4, 17) {
        assert!((seg.curve[0].eval(t).abs() - t.abs()).abs() < 1e-13);
        assert!(seg.curve[1].eval(t).abs() < 1e-13);
    }
}

#[test]
fn henon_unstable_segment_matches_forward_iteration() {
    let f = PolyMapFamily::henon(0.1);
    let e = find_periodic_orbit(&f, 0.0, 1, [1.1, -0.1]).unwrap();
    let eps = 0.2;
    let seg = unstable_segment(&f, 0.0, &e, eps, 40).unwrap();
    assert!(seg.invariance_residual < 1e-8);
    // Push a tiny segment along the unstable direction 20 times.
    let n = 20;
    let s0 = 0.5 * eps / e.sigma.abs().powi(n);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for s in linspace(-s0, s0, 41) {
        let mut z = [e.point[0] + s * e.unstable_dir[0], e.point[1] + s * e.unstable_dir[1]];
        for _ in 0..n {
            z = f.eval(z, 0.0);
        }
        if (z[0] - e.point[0]).hypot(z[1] - e.point[1]) < 0.9 * eps {
            worst = worst.max(dist_to_curve(&seg.curve, eps, z));
            checked += 1;
        }
    }
    assert!(checked > 20);
    assert!(worst < 1e-8, "forward-iteration distance {worst:e}");
}

#[test]
fn period_two_chart_system() {
    let (a, b) = (-2.0, 0.05);
    let f = PolyMapFamily::henon(b);
    let e = find_periodic_orbit(&f, a, 2, [0.62, 0.0]).unwrap();
    assert_eq!(e.minimal_period, 2);
    let (sys, s) = build_chart_system(&f, a, &e, 0.05).unwrap();
    assert_eq!(sys.graph.vertices, 2);
    assert_eq!(sys.graph.edges, vec![[0, 1], [1, 0]]);
    assert!(s.s0_residual < 1e-8);
    let centers: Vec<Point> = (0..2).map(|v| sys.chart_point(v, [0.0, 0.0]).unwrap()).collect();
    for c in &centers {
        assert!(e.orbit.iter().any(|z| (z[0] - c[0]).hypot(z[1] - c[1]) < 1e-10));
    }
    let w = f.eval(centers[0], a);
    assert!((w[0] - centers[1][0]).hypot(w[1] - centers[1][1]) < 1e-8);
}

#[test]
fn gap_chain_is_three_vertex_path() {
    let (a, c, depth) = (-1.7548776662, 0.3, 14);
    let (sys, rep) = gap_chain_system(a, c, depth, 3).unwrap();
    assert_eq!(sys.graph.vertices, 3);
    assert_eq!(sys.graph.edges, vec![[0, 1], [1, 2]]);
    assert!(rep.edges_realized);
    // Gap endpoints are preimages of the cut points +-C or +-2.
    for &gi in &rep.chain {
        let g = &rep.gaps[gi];
        for end in [g.left, g.right] {
            let hit = (0..=depth).any(|k| {
                let v = quad_iter(end, a, k).abs();
                (v - c).abs() < 1e-8 || (v - 2.0).abs() < 1e-8
            });
            assert!(hit, "endpoint {end} is not a preimage of a cut point");
        }
    }
    for (k, &gi) in rep.chain.iter().enumerate() {
        let (lo, hi) = rep.chain_images[k];
        assert!(rep.gaps[gi].contains(lo, hi));
    }
}

#[test]
fn period_two_straightening_matches_return_map_koenigs() {
    let g0 = |x: f64| 2.0 * x + 0.1 * x * x;
    let g1 = |x: f64| 1.5 * x - 0.05 * x * x * x;
    let sys = two_cycle(
        [-0.2, 0.2],
        [Poly3::from_terms(&[(1, 0, 0, 2.0), (2, 0, 0, 0.1)]), Poly3::monomial(0, 1, 0, 0.3)],
        [Poly3::from_terms(&[(1, 0, 0, 1.5), (3, 0, 0, -0.05)]), Poly3::monomial(0, 1, 0, 0.3)],
    );
    let (a, rep) = straighten_unstable(&sys, &StraightenOptions::default()).unwrap();
    let ver = verify_chart_type(&a, ChartKind::A, 33, 1e-10);
    assert!(ver.pass, "{ver:?}");
    assert!(ver.edges.iter().all(|e| e.a < 1e-10));
    // phi_0 linearizes the return map g1 o g0 with multiplier 3.
    let mut worst: f64 = 0.0;
    for x in linspace(-0.2, 0.2, 41) {
        let mut y = x;
        for _ in 0..30 {
            y = invert(g0, invert(g1, y));
        }
        worst = worst.max((3f64.powi(30) * y - rep.phis[0].eval(x)).abs());
    }
    assert!(worst < 1e-9, "return-map Koenigs gap {worst:e}");
    for x in linspace(-0.1, 0.1, 21) {
        assert!((rep.phis[1].eval(g0(x)) - 2.0 * rep.phis[0].eval(x)).abs() < 1e-10);
    }
}

#[test]
fn fiber_normalization_matches_product() {
    let sys = self_edge(
        [-0.4, 0.4],
        [-0.4, 0.4],
        [Poly3::monomial(1, 0, 0, 2.0), Poly3::from_terms(&[(0, 1, 0, 0.25), (1, 1, 0, 0.25)])],
    );
    let (a, _) = straighten_unstable(&sys, &StraightenOptions::default()).unwrap();
    let (n, rep) = fiber_normalize(&a).unwrap();
    assert!((rep.lambda[0] - 0.25).abs() < 1e-12);
    assert!(rep.post_residual < 1e-8);
    let mut worst: f64 = 0.0;
    for x in linspace(-0.4, 0.4, 41) {
        worst = worst.max((rep.deltas[0].eval(x) - fiber_product(1.0, x)).abs());
    }
    assert!(worst < 1e-10, "product oracle gap {worst:e}");
    // d_y of the new transition is constant at y = 0.
    let h = 1e-6;
    for x in linspace(-0.15, 0.15, 13) {
        let p = n.transition(0, [x, h]).unwrap();
        let m = n.transition(0, [x, -h]).unwrap();
        assert!(((p[1] - m[1]) / (2.0 * h) - 0.25).abs() < 1e-8);
    }
}

#[test]
fn two_cycle_normalized_constants_are_values_at_zero() {
    let sys = two_cycle(
        [-0.3, 0.3],
        [Poly3::monomial(1, 0, 0, 2.0), Poly3::from_terms(&[(0, 1, 0, 0.3), (1, 1, 0, 0.3 * 0.5)])],
        [Poly3::monomial(1, 0, 0, 1.5), Poly3::from_terms(&[(0, 1, 0, 0.2), (1, 1, 0, -0.2 * 0.4)])],
    );
    let (a, _) = straighten_unstable(&sys, &StraightenOptions::default()).unwrap();
    let (_, rep) = fiber_normalize(&a).unwrap();
    assert!((rep.lambda[0] - 0.3).abs() < 1e-12);
    assert!((rep.lambda[1] - 0.2).abs() < 1e-12);
    assert!(rep.post_residual < 1e-8);
}

#[test]
fn linearized_fibers_match_closed_form() {
    let sys = self_edge(
        [-0.2, 0.2],
        [-0.2, 0.2],
        [Poly3::monomial(1, 0, 0, 2.0), Poly3::from_terms(&[(0, 1, 0, 0.25), (1, 1, 0, 0.1)])],
    );
    let (a, _) = straighten_unstable(&sys, &StraightenOptions::default()).unwrap();
    let (b, _) = fiber_normalize(&a).unwrap();
    let (l, _) = fiber_linearize(&b, &LinearizeOptions::default()).unwrap();
    let rep = verify_chart_type(&l, ChartKind::Linear, 33, 1e-9);
    assert!(rep.pass, "{rep:?}");
    // The fiber is linear in y, so the chart is (x, y) -> (x, y prod(1 + 0.4 x / 2^i)).
    let mut worst: f64 = 0.0;
    for x in linspace(-0.2, 0.2, 21) {
        for y in linspace(-0.2, 0.2, 21) {
            let p = l.chart_point(0, [x, y]).unwrap();
            worst = worst.max((p[0] - x).abs()).max((p[1] - y * fiber_product(0.4, x)).abs());
        }
    }
    assert!(worst < 1e-9, "chart gap {worst:e}");
}

#[test]
fn quadratic_fibers_on_two_cycle_linearize() {
    let sys = two_cycle(
        [-0.2, 0.2],
        [Poly3::monomial(1, 0, 0, 2.0), Poly3::from_terms(&[(0, 1, 0, 0.3), (0, 2, 0, 0.1), (1, 1, 0, 0.05)])],
        [Poly3::monomial(1, 0, 0, 1.5), Poly3::from_terms(&[(0, 1, 0, 0.4), (0, 2, 0, -0.1)])],
    );
    let (a, _) = straighten_unstable(&sys, &StraightenOptions::default()).unwrap();
    let (b, _) = fiber_normalize(&a).unwrap();
    let (l, _) = fiber_linearize(&b, &LinearizeOptions::default()).unwrap();
    let rep = verify_chart_type(&l, ChartKind::Linear, 33, 1e-8);
    assert!(rep.pass, "{rep:?}");
    assert!(rep.edges.iter().all(|e| e.samples > 0));
}

#[test]
fn conjugacy_sound_on_fine_grid() {
    let sys = self_edge(
        [-0.4, 0.4],
        [-0.4, 0.4],
        [Poly3::monomial(1, 0, 0, 2.0), Poly3::from_terms(&[(0, 1, 0, 0.25), (1, 1, 0, 0.1)])],
    );
    let (a, _) = straighten_unstable(&sys, &StraightenOptions::default()).unwrap();
    let (b, _) = fiber_normalize(&a).unwrap();
    let opts = LinearizeOptions::default();
    let (l, _) = fiber_linearize(&b, &opts).unwrap();
    let rep = verify_chart_type(&l, ChartKind::Linear, 65, 10.0 * opts.tol);
    assert!(rep.pass, "{rep:?}");
}

#[test]
fn type_a_output_and_fault_injection() {
    let sys = self_edge(
        [-0.2, 0.2],
        [-0.2, 0.2],
        [Poly3::from_terms(&[(1, 0, 0, 2.0), (2, 0, 0, 1.0)]), Poly3::from_terms(&[(0, 1, 0, 0.3), (1, 1, 0, 0.2)])],
    );
    let (a, _) = straighten_unstable(&sys, &StraightenOptions::default()).unwrap();
    let rep = verify_chart_type(&a, ChartKind::A, 33, 1e-10);
    assert!(rep.pass);
    assert!(rep.edges[0].a < 1e-10 && rep.edges[0].linear > 1e-3);
    let bad = verify_chart_type(&a.perturbed(0, 1e-3), ChartKind::A, 33, 1e-10);
    assert!(!bad.pass);
    assert!(bad.edges[0].a >= 1e-4, "{:e}", bad.edges[0].a);
}

#[test]
fn chart_system_json_round_trip() {
    let sys = self_edge(
        [-0.2, 0.2],
        [-0.2, 0.2],
        [Poly3::from_terms(&[(1, 0, 0, 2.0), (2, 0, 0, 1.0)]), Poly3::monomial(0, 1, 0, 0.3)],
    );
    let (a, _) = straighten_unstable(&sys, &StraightenOptions::default()).unwrap();
    let js = serde_json::to_string(&a).unwrap();
    let back: ChartSystem = serde_json::from_str(&js).unwrap();
    assert_eq!(back, a);
}

fn cocycle_fixture() -> (PolyMapFamily, ExtendedCocycle) {
    let w = [-1.0, 1.0, -1.0, 1.0];
    let f = PolyMapFamily::new(
        [Poly3::monomial(1, 0, 0, 2.0), Poly3::from_terms(&[(0, 1, 0, 0.5), (2, 0, 0, 0.1)])],
        [-3.0, 3.0, -3.0, 3.0],
        "mu",
    )
    .unwrap();
    let boxes = vec![NestedBoxes { v: [-0.5, 0.5, -0.5, 0.5], v1: [-0.6, 0.6, -0.6, 0.6], v2: [-0.7, 0.7, -0.7, 0.7] }];
    let c = ExtendedCocycle::new(&f, 0.0, ConeField::horizontal(0.4, w).unwrap(), w, boxes).unwrap();
    (f, c)
}

#[test]
fn extended_cocycle_inequalities() {
    let (_, c) = cocycle_fixture();
    let samples = c.sample_v(21);
    assert!(!samples.is_empty());
    for s in samples {
        assert!(s.det_phi.abs() <= s.det_df.abs() * (1.0 + 1e-12), "{s:?}");
        assert!(s.norm_phi >= s.norm_df * (1.0 - 1e-12), "{s:?}");
    }
    for z in [[0.8, 0.0], [0.0, -0.9], [0.75, 0.75]] {
        assert!(c.phi(z).determinant().abs() < 1e-15);
    }
}

#[test]
fn nested_boxes_validated() {
    let w = [-1.0, 1.0, -1.0, 1.0];
    let f = PolyMapFamily::linear(2.0, 0.5);
    let boxes = vec![NestedBoxes { v: [-0.5, 0.5, -0.5, 0.5], v1: [-0.4, 0.4, -0.6, 0.6], v2: [-0.7, 0.7, -0.7, 0.7] }];
    assert!(ExtendedCocycle::new(&f, 0.0, ConeField::horizontal(0.4, w).unwrap(), w, boxes).is_err());
}

#[test]
fn line_field_is_projectively_invariant() {
    let (_, c) = cocycle_fixture();
    let lf = line_field(c, LineFieldOptions::default()).unwrap();
    assert!(lf.invariance_residual(21).unwrap() < 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn straightening_independent_of_initial_guess(
        c in -1.0..1.0f64, p2 in -0.5..0.5f64, p3 in -0.5..0.5f64,
    ) {
        let sys = self_edge(
            [-0.2, 0.2],
            [-0.2, 0.2],
            [Poly3::from_terms(&[(1, 0, 0, 2.0), (2, 0, 0, c)]), Poly3::monomial(0, 1, 0, 0.3)],
        );
        let dom = [-0.24, 0.24];
        let init = ChebFn::fit(|x| x + p2 * x * x + p3 * x * x * x, dom, 8);
        let (_, r0) = straighten_unstable(&sys, &StraightenOptions::default()).unwrap();
        let opts = StraightenOptions { initial: Some(vec![init]), ..Default::default() };
        let (_, r1) = straighten_unstable(&sys, &opts).unwrap();
        for x in linspace(-0.2, 0.2, 41) {
            prop_assert!((r0.phis[0].eval(x) - r1.phis[0].eval(x)).abs() < 1e-9);
        }
    }
}
