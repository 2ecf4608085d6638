//! Subcommand pipelines. Each returns its JSON document, CSV tables and
//! an overall pass flag.

use crate::config::*;
use anyhow::{anyhow, Context, Result};
use henon_renorm::cheb::ChebFn;
use henon_renorm::cone::ConeField;
use henon_renorm::family::{PolyMapFamily, SAFETY_BOX};
use henon_renorm::hyperbolicity::{
    check_m1, check_m_dr, check_r, find_periodic_orbit, find_periodic_orbits_grid, lyapunov_top, smoothness_budget,
    CertifyOptions, EigenData,
};
use henon_renorm::normal_forms::{
    build_chart_system, fiber_linearize, fiber_normalize, line_field, s_conditions, straighten_unstable,
    verify_chart_type, ChartSystem, ExtendedCocycle, LineFieldOptions, LinearizeOptions, NestedBoxes,
    StraightenOptions, Transitions,
};
use henon_renorm::renormalization::{
    conjugacy_residual, delta_profile, renormalize, sink_window_scan, SinkScanOptions, TransitionData,
};
use henon_renorm::windows::{
    check_window_class, hyperbolic_gap_set, quad_iter, strip_scan, superstable_parameter, window_boundaries,
    StripOptions,
};
use henon_renorm::linspace;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use std::path::Path;

pub struct Outcome {
    pub json: Value,
    pub tables: Vec<(String, Vec<u8>)>,
    pub pass: bool,
}

fn table<T: Serialize>(name: &str, rows: &[T]) -> Result<(String, Vec<u8>)> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok((format!("{name}.csv"), w.into_inner().map_err(|e| anyhow!("{e}"))?))
}

const BUILTINS: [&str; 4] = ["henon", "henon-classic", "quadratic", "toy-unfolding"];

/// Default `(a, b)` for each builtin.
fn builtin_defaults(name: &str) -> (f64, f64) {
    match name {
        "henon-classic" => (1.4, 0.3),
        "henon" => (-1.7548776662466927, 0.05),
        "quadratic" => (-1.7548776662466927, 0.0),
        _ => (0.0, 0.0),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| Usage(format!("{}: {e}", path.display())).into())
}

/// The family, its parameter value and the Jacobian parameter used.
pub fn load_family(spec: FamilySpec<'_>) -> Result<(PolyMapFamily, f64, Option<f64>)> {
    if BUILTINS.contains(&spec.family) {
        let (a0, b0) = builtin_defaults(spec.family);
        let b = spec.b.unwrap_or(b0);
        let fam = PolyMapFamily::builtin(spec.family, b)?;
        return Ok((fam, spec.a.unwrap_or(a0), Some(b)));
    }
    let path = Path::new(spec.family);
    if !path.exists() {
        return Err(Usage(format!("unknown family '{}': not a builtin and no such file", spec.family)).into());
    }
    let fam: PolyMapFamily = read_json(path)?;
    fam.validate()?;
    Ok((fam, spec.a.unwrap_or(0.0), None))
}

fn load_transition(name: &str) -> Result<TransitionData> {
    let data = match name {
        "toy-unfolding" => TransitionData::toy_perturbed(),
        "toy-exact" => TransitionData::toy(),
        path => {
            let p = Path::new(path);
            if !p.exists() {
                return Err(Usage(format!("unknown unfolding '{path}': not a builtin and no such file")).into());
            }
            read_json(p)?
        }
    };
    data.validate_shape()?;
    Ok(data)
}

/// All parameters in `[-2, 1/4]` at which the critical point of `x^2 + a`
/// has minimal period `p`, in increasing order.
pub fn superstable_all(p: usize) -> Vec<f64> {
    let grid = linspace(-2.0, 0.25, 40_001);
    let vals: Vec<f64> = grid.iter().map(|&a| quad_iter(0.0, a, p)).collect();
    let mut out: Vec<f64> = (1..grid.len())
        .into_par_iter()
        .filter(|&i| vals[i - 1].signum() != vals[i].signum())
        .filter_map(|i| superstable_parameter(p, [grid[i - 1], grid[i]]).ok())
        .collect();
    out.sort_by(f64::total_cmp);
    out.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    out
}

pub fn dispatch(cfg: &RunConfig) -> Result<Outcome> {
    match &cfg.command {
        Command::Windows(a) => windows(a),
        Command::Gapset(a) => gapset(a),
        Command::Certify(a) => certify(a),
        Command::Lyapunov(a) => lyapunov(a),
        Command::Charts(a) => charts(a, cfg.seed),
        Command::Linefield(a) => linefield(a),
        Command::Renorm(a) => renorm(a),
        Command::Sinks(a) => sinks(a),
        Command::Strip(a) => strip(a, &cfg.strip_heights()?),
        Command::Run(_) => Err(Usage("nested run".into()).into()),
    }
}

#[derive(Serialize)]
struct WindowRow {
    period: usize,
    a_star: f64,
    a_left: Option<f64>,
    a_right: Option<f64>,
    birth: String,
    class_pass: Option<bool>,
}

fn windows(args: &WindowsArgs) -> Result<Outcome> {
    let mut docs = Vec::new();
    let mut rows = Vec::new();
    let mut pass = true;
    for &p in &args.periods.0 {
        for a_star in superstable_all(p) {
            let w = window_boundaries(p, a_star);
            let class = match (&w, args.no_class) {
                (Ok(w), false) => Some(check_window_class(w, args.c, args.big_lambda, args.depth)),
                _ => None,
            };
            let class_pass = class.as_ref().map(|c| matches!(c, Ok(r) if r.pass));
            pass &= w.is_ok() && class_pass.unwrap_or(true);
            rows.push(WindowRow {
                period: p,
                a_star,
                a_left: w.as_ref().ok().map(|w| w.a_left),
                a_right: w.as_ref().ok().map(|w| w.a_right),
                birth: w.as_ref().map(|w| format!("{:?}", w.birth)).unwrap_or_else(|e| format!("error: {e}")),
                class_pass,
            });
            docs.push(json!({
                "period": p,
                "a_star": a_star,
                "window": w.as_ref().ok(),
                "error": w.as_ref().err().map(|e| e.to_string()),
                "class": class.as_ref().and_then(|c| c.as_ref().ok()),
                "class_error": class.as_ref().and_then(|c| c.as_ref().err()).map(|e| e.to_string()),
            }));
        }
    }
    Ok(Outcome { json: json!({ "windows": docs, "pass": pass }), tables: vec![table("windows", &rows)?], pass })
}

#[derive(Serialize)]
struct GapRow {
    index: usize,
    left: f64,
    right: f64,
    chain_position: Option<usize>,
}

fn gapset(args: &GapsetArgs) -> Result<Outcome> {
    let rep = hyperbolic_gap_set(args.a, args.c, args.depth, args.period)?;
    let rows: Vec<GapRow> = rep
        .gaps
        .iter()
        .enumerate()
        .map(|(i, g)| GapRow { index: i, left: g.left, right: g.right, chain_position: rep.chain.iter().position(|&c| c == i) })
        .collect();
    let pass = rep.edges_realized && rep.chain.len() == args.period;
    Ok(Outcome { json: json!({ "gapset": rep, "pass": pass }), tables: vec![table("gaps", &rows)?], pass })
}

#[derive(Serialize)]
struct TagRow {
    name: String,
    pass: bool,
    worst_margin: f64,
    witness_x: Option<f64>,
    witness_y: Option<f64>,
    witness_k: Option<usize>,
}

fn first_saddle(fam: &PolyMapFamily, mu: f64, p: usize, region: [f64; 4]) -> Option<EigenData> {
    find_periodic_orbits_grid(fam, mu, p, region, 32)
        .into_iter()
        .find(|e| e.saddle && !e.complex && e.minimal_period == p)
}

fn certify(args: &CertifyArgs) -> Result<Outcome> {
    let (fam, mu, b) = load_family(args.spec())?;
    let region = args.region.map(|r| r.0).unwrap_or(fam.domain);
    let want = |t: &str| args.tags.0.iter().any(|x| x == t);
    let mut rows = Vec::new();
    let mut doc = json!({ "family": args.family, "a": mu, "b": b, "box": region });
    if want("M") || want("D_r") {
        let cone = ConeField::horizontal(args.cone, region)?;
        let opts = CertifyOptions {
            r: args.r,
            c: args.c,
            big_lambda: args.big_lambda,
            k_max: args.k_max,
            grid: args.grid,
            interior_directions: 8,
        };
        let cert = check_m_dr(&fam, mu, &cone, region, &opts)?;
        for t in cert.tags.iter().filter(|t| want(&t.name)) {
            rows.push(TagRow {
                name: t.name.clone(),
                pass: t.pass,
                worst_margin: t.worst_margin,
                witness_x: t.witness.map(|w| w[0]),
                witness_y: t.witness.map(|w| w[1]),
                witness_k: Some(t.witness_k),
            });
        }
        doc["certificate"] = json!(cert);
    }
    if want("M1") {
        let m1 = check_m1(mu, args.c, args.big_lambda, args.depth)?;
        rows.push(TagRow {
            name: "M1".into(),
            pass: m1.pass,
            worst_margin: m1.worst_margin,
            witness_x: m1.witness.map(|w| w.0),
            witness_y: None,
            witness_k: m1.witness.map(|w| w.1),
        });
        doc["m1"] = json!(m1);
    }
    if want("R") {
        match first_saddle(&fam, mu, 1, region) {
            Some(e) => {
                let r = check_r(e.lambda.abs(), e.sigma.abs(), args.resonance_order, args.resonance_tol)?;
                rows.push(TagRow {
                    name: "R".into(),
                    pass: r.pass,
                    worst_margin: r.margin,
                    witness_x: Some(e.point[0]),
                    witness_y: Some(e.point[1]),
                    witness_k: None,
                });
                doc["r"] = json!({ "fixed_point": e, "report": r });
            }
            None => {
                rows.push(TagRow {
                    name: "R".into(),
                    pass: false,
                    worst_margin: f64::NAN,
                    witness_x: None,
                    witness_y: None,
                    witness_k: None,
                });
                doc["r"] = json!({ "error": "no real saddle fixed point found in the box" });
            }
        }
    }
    let pass = rows.iter().all(|r| r.pass);
    doc["tags"] = json!(rows.iter().map(|r| json!({ "name": r.name, "pass": r.pass })).collect::<Vec<_>>());
    doc["pass"] = json!(pass);
    Ok(Outcome { json: doc, tables: vec![table("tags", &rows)?], pass })
}

#[derive(Serialize)]
struct BlockRow {
    block: usize,
    mean: f64,
}

fn lyapunov(args: &LyapunovArgs) -> Result<Outcome> {
    let (fam, mu, b) = load_family(args.spec())?;
    let rep = lyapunov_top(&fam, mu, args.z0.0, args.transient, args.iterations)?;
    let orbit = fam.orbit(rep.final_point, mu, 1000, &SAFETY_BOX)?;
    let log_det = orbit.iter().map(|&z| fam.jac(z, mu).determinant().abs().ln()).sum::<f64>() / orbit.len() as f64;
    let det = log_det.exp();
    let budget = smoothness_budget(rep.mean, det)?;
    let rows: Vec<BlockRow> = rep.blocks.iter().enumerate().map(|(i, &m)| BlockRow { block: i, mean: m }).collect();
    Ok(Outcome {
        json: json!({
            "family": args.family, "a": mu, "b": b,
            "lyapunov": rep, "det_modulus": det, "budget": budget, "pass": true,
        }),
        tables: vec![table("blocks", &rows)?],
        pass: true,
    })
}

#[derive(Serialize)]
struct EdgeRow {
    edge: usize,
    sigma: f64,
    lambda: f64,
    a: f64,
    b: f64,
    linear: f64,
    samples: usize,
}

/// Random monotone `phi` with `phi(0) = 0`, `phi'(0) = 1` on each collared
/// unstable interval.
fn random_initial(sys: &ChartSystem, collar: f64, degree: usize, rng: &mut ChaCha8Rng) -> Vec<ChebFn> {
    sys.charts
        .iter()
        .map(|c| {
            let pad = collar * (c.iu[1] - c.iu[0]);
            let dom = [c.iu[0] - pad, c.iu[1] + pad];
            let w = dom[0].abs().max(dom[1].abs());
            let c2 = rng.random_range(-0.2..0.2) / w;
            let c3 = rng.random_range(-0.1..0.1) / (w * w);
            ChebFn::fit(|x| x + c2 * x * x + c3 * x * x * x, dom, degree)
        })
        .collect()
}

fn charts(args: &ChartsArgs, seed: u64) -> Result<Outcome> {
    let (mut sys, origin) = match &args.system {
        Some(path) => (read_json::<ChartSystem>(path)?, json!({ "system": path })),
        None => {
            let (fam, mu, b) = load_family(args.spec())?;
            let orbit = match args.seed_point {
                Some(s) => find_periodic_orbit(&fam, mu, args.period, s.0)?,
                None => first_saddle(&fam, mu, args.period, fam.domain)
                    .ok_or_else(|| anyhow!("no real saddle of period {} found in the family box", args.period))?,
            };
            let (sys, _) = build_chart_system(&fam, mu, &orbit, args.eps)?;
            (sys, json!({ "family": args.family, "a": mu, "b": b, "orbit": orbit }))
        }
    };
    let s = s_conditions(&sys, 17);
    let stages: Vec<String> = match &args.stages {
        Some(l) => l.0.clone(),
        None => match sys.transitions {
            Transitions::Map { .. } => vec!["unstable".into()],
            Transitions::Poly(_) => vec!["unstable".into(), "fiber-normalize".into(), "fiber-linearize".into()],
        },
    };
    let sopts = StraightenOptions { tol: args.tol, ..Default::default() };
    let mut reports = Vec::new();
    let mut agreement = None;
    for st in &stages {
        match st.as_str() {
            "unstable" => {
                let base = sys.clone();
                let (next, rep) = straighten_unstable(&base, &sopts)?;
                if args.random_inits > 0 {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let mut worst: f64 = 0.0;
                    for _ in 0..args.random_inits {
                        let init = random_initial(&base, sopts.collar, sopts.degree, &mut rng);
                        let o = StraightenOptions { initial: Some(init), ..sopts.clone() };
                        let (_, r2) = straighten_unstable(&base, &o)?;
                        for (p, q) in rep.phis.iter().zip(&r2.phis) {
                            worst = worst.max(p.distance(q));
                        }
                    }
                    agreement = Some(worst);
                }
                reports.push(json!({ "stage": st, "iterations": rep.iterations,
                    "final_difference": rep.final_difference, "sigma": rep.sigma }));
                sys = next;
            }
            "fiber-normalize" => {
                let (next, rep) = fiber_normalize(&sys)?;
                reports.push(json!({ "stage": st, "lambda": rep.lambda, "min_delta": rep.min_delta,
                    "post_residual": rep.post_residual, "max_factors": rep.max_factors }));
                sys = next;
            }
            "fiber-linearize" => {
                let opts = LinearizeOptions { tol: args.tol, ..Default::default() };
                let (next, rep) = fiber_linearize(&sys, &opts)?;
                reports.push(json!({ "stage": st, "contraction": rep.contraction, "lambda": rep.lambda }));
                sys = next;
            }
            other => return Err(Usage(format!("unknown stage '{other}'")).into()),
        }
    }
    let verify = verify_chart_type(&sys, sys.kind, args.verify_grid, args.threshold);
    let rows: Vec<EdgeRow> = verify
        .edges
        .iter()
        .map(|e| EdgeRow {
            edge: e.edge,
            sigma: e.sigma,
            lambda: e.lambda,
            a: e.a,
            b: e.b,
            linear: e.linear,
            samples: e.samples,
        })
        .collect();
    let pass = verify.pass && s.pass();
    let system = serde_json::to_vec_pretty(&sys)?;
    Ok(Outcome {
        json: json!({ "source": origin, "s_conditions": s, "stages": reports, "verify": verify,
            "random_init_agreement": agreement, "pass": pass }),
        tables: vec![table("edges", &rows)?, ("system.json".into(), system)],
        pass,
    })
}

#[derive(Serialize)]
struct FieldRow {
    x: f64,
    y: f64,
    angle: f64,
    cone_gap: f64,
    depth: usize,
}

fn linefield(args: &LinefieldArgs) -> Result<Outcome> {
    let (fam, mu, b) = load_family(args.spec())?;
    let cone = ConeField::horizontal(args.cone, args.w.0)?;
    let boxes = args.boxes.iter().map(|n| NestedBoxes { v: n.v, v1: n.v1, v2: n.v2 }).collect();
    let cocycle = ExtendedCocycle::new(&fam, mu, cone, args.w.0, boxes)?;
    let lf = line_field(cocycle, LineFieldOptions { tol: args.tol, ..Default::default() })?;
    let invariance = lf.invariance_residual(args.grid)?;
    let gap = lf.cone_gap(args.grid)?;
    let rows: Vec<FieldRow> = lf
        .samples(args.grid)?
        .into_iter()
        .map(|s| FieldRow { x: s.point[0], y: s.point[1], angle: s.angle, cone_gap: s.cone_gap, depth: s.depth })
        .collect();
    let pass = gap > 0.0;
    Ok(Outcome {
        json: json!({ "family": args.family, "a": mu, "b": b, "invariance_residual": invariance,
            "cone_gap": gap, "pass": pass }),
        tables: vec![table("linefield", &rows)?],
        pass,
    })
}

fn renorm(args: &RenormArgs) -> Result<Outcome> {
    let data = load_transition(&args.family)?;
    let e = data.validate_e();
    if !e.pass {
        return Err(anyhow!("error term violates its conditions: {:?}", e.checks));
    }
    let per_n: Vec<Value> = args
        .n
        .0
        .par_iter()
        .map(|&n| -> Result<Value> {
            let res = renormalize(&data, n)?;
            let residual = conjugacy_residual(&res, args.grid);
            Ok(json!({
                "n": n, "b": res.b, "sigma0": res.sigma0, "lambda0": res.lambda0, "b_prime": res.b_prime,
                "a_affine": res.a_affine,
                "conjugacy_residual": residual.as_ref().ok(),
                "residual_error": residual.as_ref().err().map(|e| e.to_string()),
            }))
        })
        .collect::<Result<_>>()?;
    let profile = delta_profile(&data, &args.n.0, args.k_box.0, args.r)?;
    let pass = profile.slope.map(|s| s.slope < 0.0).unwrap_or(false);
    Ok(Outcome {
        json: json!({ "family": args.family, "renormalizations": per_n, "delta_profile": profile, "pass": pass }),
        tables: vec![table("delta", &profile.rows)?],
        pass,
    })
}

#[derive(Serialize)]
struct SinkRow {
    n: usize,
    period: usize,
    left: f64,
    right: f64,
    length: f64,
    distance: f64,
}

fn sinks(args: &SinksArgs) -> Result<Outcome> {
    let data = load_transition(&args.family)?;
    let opts = SinkScanOptions { samples: args.samples, n_iter: args.n_iter, a_range: args.a_range.0 };
    let scan = sink_window_scan(&data, &args.n.0, &opts)?;
    let pass = scan.absent.is_empty();
    let rows: Vec<SinkRow> = scan
        .windows
        .iter()
        .map(|w| SinkRow { n: w.n, period: w.period, left: w.left, right: w.right, length: w.length, distance: w.distance })
        .collect();
    Ok(Outcome {
        json: json!({ "family": args.family, "scan": scan, "pass": pass }),
        tables: vec![table("sinks", &rows)?],
        pass,
    })
}

#[derive(Serialize)]
struct StripCsvRow {
    b: f64,
    a_left: f64,
    a_right: f64,
    h_used: Option<f64>,
}

fn strip(args: &StripArgs, heights: &[f64]) -> Result<Outcome> {
    let a_star = *superstable_all(args.period)
        .last()
        .ok_or_else(|| anyhow!("no superstable parameter of period {}", args.period))?;
    let w = window_boundaries(args.period, a_star)?;
    let opts = StripOptions { b_max: args.b_max, b_steps: args.b_steps, heights: heights.to_vec() };
    let res = strip_scan(&w, &opts)?;
    let rows: Vec<StripCsvRow> = res
        .rows
        .iter()
        .map(|r| StripCsvRow { b: r.b, a_left: r.a_left, a_right: r.a_right, h_used: r.h_used })
        .collect();
    let pass = res.rows.iter().all(|r| r.nonempty);
    Ok(Outcome {
        json: json!({ "window": w, "strip": res, "pass": pass }),
        tables: vec![table("strip", &rows)?],
        pass,
    })
}
