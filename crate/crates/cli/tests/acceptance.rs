//! Acceptance suite: one PASS/FAIL line per criterion with its pinned tolerances.

use std::f64::consts::TAU;
use std::time::Instant;

use capillary_rig::asymptotics::{geometric_grid, verify_angle_expansion, verify_h_limit, verify_mc_expansion};
use capillary_rig::boundary::{identity_residuals, BoundaryPatch, QuadraticFit};
use capillary_rig::capillary::{
    curve_estimate_integral, discrete_first_variation, gauss_bonnet_audit, winding_integral, ClosedCurve,
};
use capillary_rig::comparison::{
    check_scaled_mc_comparison, conical_comparison, homothety_scaling_check, local_comparison_sweep,
    mixed_comparison_sweep, rigidity_audit, weak_convexity_sweep, Branch, ConeSampler, DEFAULT_SEED,
};
use capillary_rig::domain::{Domain, Side};
use capillary_rig::expr::parse_expression;
use capillary_rig::foliation::{
    b_coefficients, foliate, positivity_gap, vertex_cone_foliate, LocalChart, NewtonOptions, Wall,
};
use capillary_rig::leaf::{CapillaryEnergy, LeafGeometry, PolarLeaf};
use capillary_rig::metric::{ConstantBlock, MetricField};
use capillary_rig::minimizer::{minimize, random_leaf, Classification, MinimizeOptions, MinimizerResult};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), String>;

fn models() -> Vec<Domain> {
    vec![
        Domain::sphere(1.0, -0.9, 0.9),
        Domain::cylinder(1.0, -1.0, 1.0),
        Domain::ellipsoid(1.5, 1.0, 0.8, -0.7, 0.7),
    ]
}

fn e<T>(r: capillary_rig::Result<T>) -> Result<T, String> {
    r.map_err(|x| x.to_string())
}

fn conformal(f: &str) -> Result<MetricField, String> {
    e(MetricField::conformal(&parse_expression(f).map_err(|x| x.to_string())?))
}

fn c1() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for d in models() {
        let start = Instant::now();
        let fine = e(identity_residuals(&e(e(BoundaryPatch::new(&d, 512, 256, -0.5, 0.5))?.resample_constant_speed())?))?;
        let secs = start.elapsed().as_secs_f64();
        let res = fine.max_mean_curvature.max(fine.max_divergence);
        let coarse: Vec<f64> = [32, 64]
            .iter()
            .map(|&nv| -> Result<f64, String> {
                let p = e(e(BoundaryPatch::new(&d, 512, nv, -0.5, 0.5))?.resample_constant_speed())?;
                Ok(e(identity_residuals(&p))?.max_mean_curvature)
            })
            .collect::<Result<_, _>>()?;
        // rows are nv - 1 intervals apart; residuals already at roundoff count as exact
        let order = if coarse[1] < 1e-9 { f64::INFINITY } else { (coarse[0] / coarse[1]).log2() };
        ok &= res < 1e-6 && order >= 2.0 && secs < 10.0;
        notes.push(format!("{} res {:.1e} order {:.1} {:.1}s", d.name(), res, order, secs));
    }
    Ok((ok, notes.join("; ")))
}

fn c2() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for d in models() {
        let p = e(BoundaryPatch::new(&d, 512, 256, -0.5, 0.5))?;
        let w = e(weak_convexity_sweep(&p, 1e-6))?;
        ok &= w.max_det_gap < 1e-6;
        let mut extra = String::new();
        if d.name() == "sphere" {
            let dev = w.report.samples.iter().map(|s| (s.margin - 1.0).abs()).fold(0.0f64, f64::max);
            ok &= dev < 1e-6;
            extra = format!(" |margin-1| {dev:.1e}");
        }
        notes.push(format!("{} det gap {:.1e}{}", d.name(), w.max_det_gap, extra));
    }
    Ok((ok, notes.join("; ")))
}

fn curves() -> Vec<ClosedCurve> {
    vec![
        ClosedCurve::level(512, 0.0),
        ClosedCurve::level(512, 0.3),
        ClosedCurve::slanted(512, 0.0, 0.2),
        ClosedCurve::wiggled(512, 0.1, 0.1, 3),
        ClosedCurve::wiggled(512, -0.2, 0.05, 7),
    ]
}

fn c3() -> Outcome {
    let mut worst = 0.0f64;
    let mut count = 0;
    for d in models() {
        for c in curves() {
            let w = e(winding_integral(&d, &c))?;
            worst = worst.max((w.total - TAU).abs());
            count += 1;
        }
    }
    Ok((worst < 1e-8, format!("{count} curves, max |W - 2π| {worst:.1e}")))
}

fn c4() -> Outcome {
    let euc = MetricField::euclidean();
    let eq = e(curve_estimate_integral(&Domain::sphere(1.0, -0.9, 0.9), &euc, &ClosedCurve::level(256, 0.0)))?;
    let cy = e(curve_estimate_integral(&Domain::cylinder(1.0, -1.0, 1.0), &euc, &ClosedCurve::level(256, 0.3)))?;
    let eq_err = (eq - TAU).abs().max((cy - TAU).abs());
    let sphere = Domain::sphere(1.0, -0.9, 0.9);
    let patch = e(BoundaryPatch::new(&sphere, 64, 33, -0.5, 0.5))?;
    let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_SEED);
    let (mut passing, mut tried, mut min_val) = (0, 0, f64::INFINITY);
    while passing < 20 && tried < 200 {
        tried += 1;
        let f = format!(
            "{}*(x^2 + y^2 + z^2) + {}*x*z + {}*y*z + {}*z",
            rng.random_range(0.02..0.1),
            rng.random_range(-0.03..0.03),
            rng.random_range(-0.03..0.03),
            rng.random_range(-0.05..0.05)
        );
        let g = conformal(&f)?;
        if !e(check_scaled_mc_comparison(&patch, &g, 1e-8))?.pass {
            continue;
        }
        passing += 1;
        for c in [ClosedCurve::level(256, 0.0), ClosedCurve::slanted(256, 0.0, 0.2), ClosedCurve::wiggled(256, 0.1, 0.1, 3)] {
            min_val = min_val.min(e(curve_estimate_integral(&sphere, &g, &c))?);
        }
    }
    let ok = eq_err < 1e-6 && passing == 20 && min_val >= TAU - 1e-6;
    Ok((ok, format!("equality err {eq_err:.1e}; {passing}/{tried} passing metrics, min value - 2π {:.3e}", min_val - TAU)))
}

fn c5() -> Outcome {
    let sphere = Domain::sphere(1.0, -0.9, 0.9);
    let patch = e(BoundaryPatch::new(&sphere, 100, 100, -0.5, 0.5))?;
    let mut ok = true;
    let mut notes = Vec::new();
    for f in ["0.05*(x^2 + y^2 + z^2)", "0.05*(x^2 + y^2 + z^2) + 0.02*x*z", "0.08*(x^2 + y^2 + z^2) - 0.03*z"] {
        let g = conformal(f)?;
        if !e(check_scaled_mc_comparison(&patch, &g, 1e-8))?.pass {
            notes.push(format!("hypothesis fails for {f}"));
            continue;
        }
        let local = e(local_comparison_sweep(&patch, &g, 64, 1e-8))?;
        let mixed = e(mixed_comparison_sweep(&patch, &g, 10_000, DEFAULT_SEED, 1e-8))?;
        let m = local.report.min_margin.min(mixed.min_margin);
        ok &= m >= -1e-8 && local.max_weight_error < 1e-12;
        notes.push(format!("min margin {m:.2e} weight err {:.1e}", local.max_weight_error));
    }
    for (name, g) in [("g_E", MetricField::euclidean()), ("2.25 g_E", e(MetricField::euclidean().scale_metric(2.25))?)] {
        let scaled = e(check_scaled_mc_comparison(&patch, &g, 1e-8))?;
        let local = e(local_comparison_sweep(&patch, &g, 8, 1e-8))?;
        let hit = scaled.branch == Branch::MetricMatch && local.report.branch == Branch::MetricMatch;
        ok &= hit;
        notes.push(format!("{name} branch {:?}/{:?}", scaled.branch, local.report.branch));
    }
    Ok((ok, notes.join("; ")))
}

fn c6() -> Outcome {
    let g = MetricField::euclidean();
    let domains = [models(), vec![Domain::prism(0.1, 3, -1.0, 1.0)]].concat();
    let mut worst = 0.0f64;
    for (k, d) in domains.iter().enumerate() {
        let leaf = random_leaf(d, 12, 24, 0.05, 100 + k as u64);
        let en = e(CapillaryEnergy::for_leaf(d, &g, Side::Top, &leaf))?;
        for i in 0..20u64 {
            let field = random_leaf(d, 12, 24, 0.05, 1000 * (k as u64 + 1) + i);
            let dw: Vec<f64> = field.w.iter().map(|x| x - d.mid_height()).collect();
            let disc = e(discrete_first_variation(&en, &leaf, &dw))?;
            let h = 1e-4;
            let shift = |s: f64| leaf.w.iter().zip(&dw).map(|(w, v)| w + s * v).collect::<Vec<f64>>();
            let fd = (e(en.value(&shift(h)))? - e(en.value(&shift(-h)))?) / (2.0 * h);
            worst = worst.max((disc - fd).abs() / fd.abs().max(1e-3));
        }
    }
    Ok((worst < 1e-5, format!("{} domains x 20 variations, max rel err {worst:.1e}", domains.len())))
}

fn euclidean_minimizers() -> Result<Vec<(Domain, MinimizerResult, f64)>, String> {
    let g = MetricField::euclidean();
    let mut out = Vec::new();
    for d in [Domain::cylinder(1.0, -1.0, 1.0), Domain::sphere(1.0, -0.8, 0.8)] {
        for i in 0..10u64 {
            let init = random_leaf(&d, 128, 128, 0.05, DEFAULT_SEED + i);
            let start = Instant::now();
            let r = e(minimize(&d, &g, Side::Top, &init, &MinimizeOptions::default()))?;
            out.push((d.clone(), r, start.elapsed().as_secs_f64()));
        }
    }
    Ok(out)
}

fn c7(runs: &[(Domain, MinimizerResult, f64)]) -> Outcome {
    let mut ok = true;
    let (mut en, mut h, mut ang, mut t) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for (_, r, secs) in runs {
        ok &= r.energy.abs() < 1e-6
            && r.max_mean_curvature < 1e-4
            && r.max_angle_residual < 1e-4
            && r.classification == Classification::Nontrivial
            && *secs < 60.0;
        en = en.max(r.energy.abs());
        h = h.max(r.max_mean_curvature);
        ang = ang.max(r.max_angle_residual);
        t = t.max(*secs);
    }
    Ok((ok, format!("{} runs: |E| {en:.1e} |H| {h:.1e} angle {ang:.1e} slowest {t:.1}s", runs.len())))
}

fn c8(runs: &[(Domain, MinimizerResult, f64)]) -> Outcome {
    let g = MetricField::euclidean();
    let (mut clause, mut gb) = (0.0f64, 0.0f64);
    for (d, r, _) in runs {
        let geo = e(LeafGeometry::new(d, &g, Side::Top, &r.leaf))?;
        let a = e(rigidity_audit(&geo, 1e-4))?;
        clause = [clause, a.scalar, a.second_fundamental_form, a.gauss_curvature, a.geodesic_curvature, a.contact_angle]
            .into_iter()
            .map(f64::abs)
            .fold(0.0, f64::max);
        gb = gb.max(a.gauss_bonnet.abs()).max(e(gauss_bonnet_audit(&geo))?.residual.abs());
    }
    Ok((clause < 1e-4 && gb < 1e-4, format!("max clause {clause:.1e}, Gauss-Bonnet {gb:.1e}")))
}

fn c9() -> Outcome {
    let opts = NewtonOptions::default();
    let t: Vec<f64> = (-4..=4).map(|k| 0.05 * k as f64).collect();
    let mut ok = true;
    let mut notes = Vec::new();
    let euc = MetricField::euclidean();
    for d in [Domain::cylinder(1.0, -1.0, 1.0), Domain::sphere(1.0, -0.8, 0.8)] {
        let f = e(foliate(&d, &euc, Side::Top, &PolarLeaf::flat(16, 32, 0.0), &t, &opts))?;
        let off = f.leaves.iter().map(|l| l.mean_offset.abs()).fold(0.0, f64::max);
        let h = f.leaves.iter().map(|l| l.mean_curvature.abs()).fold(0.0, f64::max);
        ok &= f.max_newton_iters <= 10 && off < 1e-10 && f.max_speed_error < 1e-6 && h < 1e-8;
        notes.push(format!(
            "{} iters {} offset {off:.1e} speed {:.1e} |H| {h:.1e}",
            d.name(),
            f.max_newton_iters,
            f.max_speed_error
        ));
    }
    for (d, f) in [
        (Domain::cylinder(1.0, -1.0, 1.0), "0.05*z^2 + 0.02*x*z + 0.01*y"),
        (Domain::sphere(1.0, -0.8, 0.8), "0.1*z^2 + 0.02*x*z"),
    ] {
        let g = conformal(f)?;
        let reference = e(minimize(&d, &g, Side::Top, &PolarLeaf::flat(16, 32, 0.0), &MinimizeOptions::default()))?.leaf;
        let r = e(foliate(&d, &g, Side::Top, &reference, &t, &opts))?;
        let off = r.leaves.iter().map(|l| l.mean_offset.abs()).fold(0.0, f64::max);
        // perturbed minimizers are not infinitesimally rigid, so the speed is reported only
        ok &= r.sign_pattern && r.max_newton_iters <= 10 && off < 1e-10;
        notes.push(format!(
            "perturbed {} sign pattern {} iters {} offset {off:.1e} speed at 0 {:.1e} (ungated)",
            d.name(),
            r.sign_pattern,
            r.max_newton_iters,
            r.speed_error_at_zero
        ));
    }
    Ok((ok, notes.join("; ")))
}

fn c10() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_SEED);
    let mut iso = 0.0f64;
    for _ in 0..100 {
        let c = rng.random_range(0.05..5.0);
        let b = e(b_coefficients(&ConstantBlock::identity(), &QuadraticFit { c11: c, c12: 0.0, c22: c }))?.b();
        iso = iso.max(b.iter().map(|x| (x - 1.0).abs()).fold(0.0, f64::max));
    }
    let mut ident = 0.0f64;
    for _ in 0..1000 {
        let (a11, a22, a33) = (rng.random_range(0.2..5.0), rng.random_range(0.2..5.0), rng.random_range(0.2..5.0));
        let g0 = ConstantBlock { a11, a22, a33, a13: rng.random_range(-0.3..0.3) * (a11 * a33).sqrt(), a23: 0.0 };
        let (c11, c22) = (rng.random_range(0.1..3.0), rng.random_range(0.1..3.0));
        let fit = QuadraticFit { c11, c12: rng.random_range(-0.95..0.95) * (c11 * c22).sqrt(), c22 };
        let bc = e(b_coefficients(&g0, &fit))?;
        ident = ident.max(bc.identity_residual(&g0, &fit).abs() / (1.0 + bc.big_b));
    }
    let anchor_g = ConstantBlock::diag(4.0, 1.0, 1.0);
    let anchor_c = QuadraticFit { c11: 1.0, c12: 0.5, c22: 1.0 };
    let mut min_gap = positivity_gap(&anchor_g, &anchor_c);
    for _ in 0..100 {
        let (a11, mut a22): (f64, f64) = (rng.random_range(0.2..5.0), rng.random_range(0.2..5.0));
        if (a11 - a22).abs() < 1e-3 {
            a22 += 0.5;
        }
        let (c11, c22) = (rng.random_range(0.1..3.0), rng.random_range(0.1..3.0));
        let fit = QuadraticFit { c11, c12: rng.random_range(-0.95..0.95) * (c11 * c22).sqrt(), c22 };
        min_gap = min_gap.min(positivity_gap(&ConstantBlock::diag(a11, a22, rng.random_range(0.2..5.0)), &fit));
    }
    let ok = iso <= 4.0 * f64::EPSILON && ident < 1e-12 && min_gap > 0.0;
    Ok((ok, format!("isotropic |b-1| {iso:.1e}; identity {ident:.1e}; min positivity gap {min_gap:.3e}")))
}

fn c11() -> Outcome {
    let grid = geometric_grid(0.1, 7);
    let anchor = LocalChart::model(Wall::quadratic(QuadraticFit { c11: 1.0, c12: 0.5, c22: 1.0 }));
    let m = MetricField::diag(4.0, 1.0, 1.0);
    let (mut lead, mut min_order) = (0.0f64, f64::INFINITY);
    for th in [0.0, 0.7, 1.9, 4.0] {
        let r = e(verify_angle_expansion(&anchor, &m, 0.02, th, &grid))?;
        lead = lead.max(r.relative_error);
        min_order = min_order.min(r.remainder.map(|f| f.exponent).unwrap_or(f64::INFINITY));
        let r0 = e(verify_angle_expansion(&anchor, &m, 0.0, th, &grid))?;
        min_order = min_order.min(r0.literal_remainder.map(|f| f.exponent).unwrap_or(f64::INFINITY));
    }
    let mut diff = 0.0f64;
    for th in [0.4, 2.2] {
        diff = diff.max(e(verify_mc_expansion(&anchor, &m, 0.02, th, &grid))?.difference.relative_error);
    }
    let euc = e(verify_h_limit(&LocalChart::model(Wall::Ellipsoid { a: 1.0, b: 1.4, c: 0.8 }), &MetricField::euclidean(), &grid, 16))?;
    let ok = lead < 0.05 && min_order >= 2.7 && diff < 0.01 && euc.extrapolated.abs() < 1e-8;
    Ok((
        ok,
        format!(
            "leading rel err {lead:.1e}; remainder exponent >= {min_order:.2}; difference rel err {diff:.1e}; Euclidean limit {:.1e}",
            euc.extrapolated
        ),
    ))
}

fn c12() -> Outcome {
    let cone = Domain::cone(0.7, 2.0);
    let euc = MetricField::euclidean();
    let mut hom = 0.0f64;
    for (leaf, r) in [(PolarLeaf::flat(8, 16, 0.8), 2.0), (PolarLeaf::flat(8, 16, 0.8), 0.5), (PolarLeaf::flat(16, 32, 0.3), 4.0)] {
        hom = hom.max(e(homothety_scaling_check(&cone, &euc, &leaf, r))?);
    }
    let opts = NewtonOptions::default();
    let hs: Vec<f64> = (2..=7).map(|k| 0.5f64.powi(k)).collect();
    let g = conformal("0.05*(x^2 + y^2 + z^2)")?;
    let v = e(vertex_cone_foliate(&Domain::cone(1.0, 2.0), &g, &hs, 8, 16, &opts))?;
    let w = e(conical_comparison(&[[1.0, 0.0, 0.0], [0.0, 4.0, 0.0], [0.0, 0.0, 1.0]], ConeSampler::Sphere, 1000, DEFAULT_SEED, 1e-8))?;
    let ok = hom < 1e-8 && v.trend[0].abs() <= 3.0 * opts.tol && w.strict_witness.is_some();
    Ok((
        ok,
        format!(
            "homothety {hom:.1e}; lambda intercept {:.1e} (3 tol {:.0e}); witness {:?}",
            v.trend[0],
            3.0 * opts.tol,
            w.strict_witness.map(|x| x.2)
        ),
    ))
}

fn c13() -> Outcome {
    let start = Instant::now();
    let (code, rows) = capillary_rig_cli::selftest(None, &Default::default());
    let secs = start.elapsed().as_secs_f64();
    let failed: Vec<&str> = rows.iter().filter(|r| r.1 != 0).map(|r| r.0.as_str()).collect();
    Ok((code == 0 && secs < 300.0, format!("{} scenarios, failed {failed:?}, {secs:.1}s", rows.len())))
}

fn main() {
    let runs = euclidean_minimizers();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("1 boundary level-curve identity", Box::new(c1)),
        ("2 weak convexity margin", Box::new(c2)),
        ("3 winding identity", Box::new(c3)),
        ("4 curve estimate", Box::new(c4)),
        ("5 comparison sweeps", Box::new(c5)),
        ("6 gradient audit", Box::new(c6)),
        ("7 Euclidean minimization", Box::new(|| c7(runs.as_ref().map_err(Clone::clone)?))),
        ("8 rigidity chain on minimizers", Box::new(|| c8(runs.as_ref().map_err(Clone::clone)?))),
        ("9 CMC foliation", Box::new(c9)),
        ("10 barrier coefficients", Box::new(c10)),
        ("11 expansion verification", Box::new(c11)),
        ("12 cone suite", Box::new(c12)),
        ("13 CLI selftest", Box::new(c13)),
    ];
    let mut failures = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        let (pass, detail) = match f() {
            Ok(x) => x,
            Err(err) => (false, format!("error: {err}")),
        };
        if !pass {
            failures += 1;
        }
        println!("[{}] {name}: {detail} ({:.1}s)", if pass { "PASS" } else { "FAIL" }, start.elapsed().as_secs_f64());
    }
    println!("acceptance: {} of 13 criteria pass", 13 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
