//! Command pipelines behind each subcommand.

use capillary_rig::asymptotics::{geometric_grid, verify_angle_expansion, verify_h_limit, verify_mc_expansion};
use capillary_rig::boundary::{identity_residuals, BoundaryPatch, QuadraticFit};
use capillary_rig::capillary::{curve_estimate_integral, winding_integral, ClosedCurve};
use capillary_rig::comparison::{
    check_scaled_mc_comparison, local_comparison_sweep, mixed_comparison_sweep, weak_convexity_sweep, DEFAULT_SEED,
};
use capillary_rig::domain::{Domain, Shape, Side};
use capillary_rig::foliation::{build_quadratic_barrier, foliate, vertex_cone_foliate, LocalChart, NewtonOptions, Wall};
use capillary_rig::leaf::PolarLeaf;
use capillary_rig::metric::MetricField;
use capillary_rig::minimizer::{minimize, random_leaf, MinimizeOptions};
use capillary_rig::Error;
use serde::Serialize;
use serde_json::json;

use crate::emit::{csv, json_report, svg_heatmap, svg_line};
use crate::scenario::{Scenario, TaskSpec};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_HYPOTHESIS: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Check,
    Minimize,
    Foliate,
    Barrier,
    Verify,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Check => "check",
            Command::Minimize => "minimize",
            Command::Foliate => "foliate",
            Command::Barrier => "barrier",
            Command::Verify => "verify",
            Command::Report => "report",
        }
    }

    pub fn of(task: &TaskSpec) -> Command {
        match task {
            TaskSpec::Check { .. } => Command::Check,
            TaskSpec::Minimize { .. } => Command::Minimize,
            TaskSpec::Foliate { .. } => Command::Foliate,
            TaskSpec::Barrier { .. } => Command::Barrier,
            TaskSpec::Verify { .. } => Command::Verify,
            TaskSpec::Report { .. } => Command::Report,
        }
    }

    /// Task options for this command: the scenario's own when the kinds agree, defaults otherwise.
    pub fn task(self, sc: &Scenario) -> TaskSpec {
        if Command::of(&sc.task) == self {
            return sc.task.clone();
        }
        let text = match self {
            Command::Check => r#"{"kind":"check"}"#,
            Command::Minimize => r#"{"kind":"minimize"}"#,
            Command::Foliate => r#"{"kind":"foliate","t":[-0.1,-0.05,0.0,0.05,0.1]}"#,
            Command::Barrier => r#"{"kind":"barrier","s":[0.01,0.02],"t":[0.0025,0.005,0.01]}"#,
            Command::Verify => r#"{"kind":"verify"}"#,
            Command::Report => r#"{"kind":"report"}"#,
        };
        serde_json::from_str(text).expect("default task parses")
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Overrides {
    pub grid: Option<[usize; 2]>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
}

/// Result of one pipeline: exit code, one-line summary and named report files.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub code: i32,
    pub summary: String,
    pub files: Vec<(String, String)>,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Scenario(_) | Error::Parse { .. } => EXIT_USAGE,
        Error::NotStrictlyConvex(_)
        | Error::NonPositiveDefinite { .. }
        | Error::DegenerateCone
        | Error::DegenerateContactAngle { .. }
        | Error::NonDiskTopology => EXIT_HYPOTHESIS,
        _ => EXIT_SOLVER,
    }
}

fn inset(d: &Domain) -> (f64, f64) {
    let span = d.v_hi - d.v_lo;
    (d.v_lo + 0.1 * span, d.v_hi - 0.1 * span)
}

fn status(code: i32) -> &'static str {
    match code {
        EXIT_PASS => "pass",
        EXIT_HYPOTHESIS => "hypothesis_failure",
        _ => "solver_failure",
    }
}

struct Files {
    stem: String,
    files: Vec<(String, String)>,
}

impl Files {
    fn add(&mut self, ext: &str, body: String) {
        self.files.push((format!("{}.{ext}", self.stem), body));
    }

    fn finish<T: Serialize>(mut self, cmd: Command, scenario: &str, code: i32, summary: String, result: &T) -> Outcome {
        let json = json_report(cmd.name(), scenario, status(code), result);
        self.files.insert(0, (format!("{}.json", self.stem), json));
        Outcome { code, summary, files: self.files }
    }
}

pub fn execute(sc: &Scenario, cmd: Command, ov: &Overrides) -> Result<Outcome, Error> {
    let built = sc.build().map_err(|e| Error::Scenario(e.to_string()))?;
    let (domain, metric) = (&built.domain, &built.metric);
    let mut task = cmd.task(sc);
    apply(&mut task, ov);
    let files = Files { stem: format!("{}.{}", sc.name, cmd.name()), files: Vec::new() };
    let seed = ov.seed.unwrap_or(DEFAULT_SEED);
    let name = sc.name.as_str();
    match task {
        TaskSpec::Check { grid, tol, samples, fan } => check(files, name, domain, metric, grid, tol, samples, fan, seed),
        TaskSpec::Minimize { grid, side, inits, amplitude, tol } => {
            run_minimize(files, name, domain, metric, grid, side, inits, amplitude, tol, seed)
        }
        TaskSpec::Foliate { grid, side, t, reference, tol } => {
            run_foliate(files, name, domain, metric, grid, side, &t, reference, tol)
        }
        TaskSpec::Barrier { s, t, nth, wall } => barrier(files, name, domain, metric, &s, &t, nth, wall),
        TaskSpec::Verify { s, theta, t0, levels, wall } => verify(files, name, domain, metric, s, theta, t0, levels, wall),
        TaskSpec::Report { grid, curves } => report(files, name, domain, metric, grid, curves),
    }
}

fn apply(task: &mut TaskSpec, ov: &Overrides) {
    match task {
        TaskSpec::Check { grid, tol, .. } | TaskSpec::Minimize { grid, tol, .. } | TaskSpec::Foliate { grid, tol, .. } => {
            if let Some(g) = ov.grid {
                *grid = g;
            }
            if let Some(t) = ov.tol {
                *tol = t;
            }
        }
        TaskSpec::Report { grid, .. } => {
            if let Some(g) = ov.grid {
                *grid = g;
            }
        }
        TaskSpec::Barrier { nth, .. } => {
            if let Some(g) = ov.grid {
                *nth = g[0];
            }
        }
        TaskSpec::Verify { .. } => {}
    }
}

#[allow(clippy::too_many_arguments)]
fn check(
    mut files: Files,
    name: &str,
    domain: &Domain,
    metric: &MetricField,
    grid: [usize; 2],
    tol: f64,
    samples: usize,
    fan: usize,
    seed: u64,
) -> Result<Outcome, Error> {
    let (lo, hi) = inset(domain);
    let patch = BoundaryPatch::new(domain, grid[0], grid[1], lo, hi)?;
    let scaled = check_scaled_mc_comparison(&patch, metric, tol)?;
    let local = local_comparison_sweep(&patch, metric, fan, tol)?;
    let mixed = mixed_comparison_sweep(&patch, metric, samples, seed, tol)?;
    let pass = scaled.pass && local.report.pass && mixed.pass;
    let code = if pass { EXIT_PASS } else { EXIT_HYPOTHESIS };
    files.add("csv", scaled.to_csv());
    let cells: Vec<(f64, f64, f64)> = scaled.samples.iter().map(|s| (s.u, s.v, s.margin)).collect();
    files.add("svg", svg_heatmap(&format!("{name}: scaled mean curvature margin"), "u", "v", &cells));
    let strip = |r: &capillary_rig::comparison::ComparisonReport| {
        json!({"pass": r.pass, "branch": r.branch, "min_margin": r.min_margin, "location": r.location, "samples": r.samples.len()})
    };
    let result = json!({
        "scaled_mc": strip(&scaled),
        "local": {
            "comparison": strip(&local.report),
            "max_weight_error": local.max_weight_error,
            "min_weight": local.min_weight,
            "min_weak_convexity": local.min_weak_convexity,
        },
        "mixed": strip(&mixed),
        "seed": seed,
    });
    let summary = format!(
        "check {name}: {} (branch {:?}, min margin {:.3e})",
        status(code),
        scaled.branch,
        scaled.min_margin.min(local.report.min_margin).min(mixed.min_margin)
    );
    Ok(files.finish(Command::Check, name, code, summary, &result))
}

#[allow(clippy::too_many_arguments)]
fn run_minimize(
    mut files: Files,
    name: &str,
    domain: &Domain,
    metric: &MetricField,
    grid: [usize; 2],
    side: Side,
    inits: usize,
    amplitude: f64,
    tol: f64,
    seed: u64,
) -> Result<Outcome, Error> {
    let opts = MinimizeOptions { tol_grad: tol, ..MinimizeOptions::default() };
    let mut runs = Vec::new();
    let mut best: Option<capillary_rig::minimizer::MinimizerResult> = None;
    for i in 0..inits.max(1) {
        let init = random_leaf(domain, grid[0], grid[1], amplitude, seed.wrapping_add(i as u64));
        let r = minimize(domain, metric, side, &init, &opts)?;
        runs.push(json!({
            "seed": seed.wrapping_add(i as u64),
            "energy": r.energy,
            "initial_energy": r.initial_energy,
            "grad_norm": r.grad_norm,
            "max_mean_curvature": r.max_mean_curvature,
            "max_angle_residual": r.max_angle_residual,
            "classification": r.classification,
            "iterations": r.iterations,
            "converged": r.converged,
        }));
        if best.as_ref().is_none_or(|b| r.energy < b.energy) {
            best = Some(r);
        }
    }
    let best = best.expect("at least one run");
    let all = runs.iter().all(|r| r["converged"] == true);
    let code = if all { EXIT_PASS } else { EXIT_SOLVER };
    files.add("csv", best.log_csv());
    let pts: Vec<(f64, f64)> = best.log.iter().map(|r| (r.iter as f64, r.energy)).collect();
    files.add("svg", svg_line(&format!("{name}: energy"), "iteration", "energy", &pts));
    let result = json!({"runs": runs, "best": {"energy": best.energy, "leaf": best.leaf}});
    let summary = format!("minimize {name}: {} (energy {:.3e}, {} runs)", status(code), best.energy, runs.len());
    Ok(files.finish(Command::Minimize, name, code, summary, &result))
}

#[allow(clippy::too_many_arguments)]
fn run_foliate(
    mut files: Files,
    name: &str,
    domain: &Domain,
    metric: &MetricField,
    grid: [usize; 2],
    side: Side,
    t: &[f64],
    reference: Option<f64>,
    tol: f64,
) -> Result<Outcome, Error> {
    let opts = NewtonOptions { tol, ..NewtonOptions::default() };
    if let Shape::Cone { .. } = domain.shape {
        let v = vertex_cone_foliate(domain, metric, t, grid[0], grid[1], &opts)?;
        let rows: Vec<Vec<f64>> =
            v.leaves.iter().map(|l| vec![l.h, l.lambda, l.angle_residual, l.newton_iters as f64]).collect();
        files.add("csv", csv(&["h", "lambda", "angle_residual", "newton_iters"], &rows));
        let pts: Vec<(f64, f64)> = v.leaves.iter().map(|l| (l.h, l.lambda)).collect();
        files.add("svg", svg_line(&format!("{name}: mean curvature near the vertex"), "h", "lambda", &pts));
        let summary = format!("foliate {name}: pass (lambda trend intercept {:.3e})", v.trend[0]);
        return Ok(files.finish(Command::Foliate, name, EXIT_PASS, summary, &v));
    }
    let reference = match reference {
        Some(z) => PolarLeaf::flat(grid[0], grid[1], z),
        None => {
            let init = PolarLeaf::flat(grid[0], grid[1], domain.mid_height());
            minimize(domain, metric, side, &init, &MinimizeOptions::default())?.leaf
        }
    };
    let f = foliate(domain, metric, side, &reference, t, &opts)?;
    let leaves: Vec<_> = f
        .leaves
        .iter()
        .enumerate()
        .map(|(i, l)| {
            json!({"index": i, "t": l.t, "H": l.mean_curvature, "angle_residual": l.angle_residual,
                   "newton_iters": l.newton_iters, "mean_offset": l.mean_offset})
        })
        .collect();
    files.add("csv", f.to_csv());
    let pts: Vec<(f64, f64)> = f.leaves.iter().map(|l| (l.t, l.mean_curvature)).collect();
    files.add("svg", svg_line(&format!("{name}: H(t)"), "t", "H(t)", &pts));
    let result = json!({
        "leaves": leaves,
        "max_speed_error": f.max_speed_error,
        "speed_error_at_zero": f.speed_error_at_zero,
        "sign_pattern": f.sign_pattern,
        "max_newton_iters": f.max_newton_iters,
    });
    let summary = format!(
        "foliate {name}: pass ({} leaves, sign pattern {}, max Newton iterations {})",
        f.leaves.len(),
        f.sign_pattern,
        f.max_newton_iters
    );
    Ok(files.finish(Command::Foliate, name, EXIT_PASS, summary, &result))
}

fn chart_for(domain: &Domain, metric: &MetricField, wall: Option<[f64; 3]>) -> Result<LocalChart, Error> {
    match wall {
        Some([c11, c12, c22]) => Ok(LocalChart::model(Wall::quadratic(QuadraticFit { c11, c12, c22 }))),
        None => LocalChart::top_of(domain, metric),
    }
}

#[allow(clippy::too_many_arguments)]
fn barrier(
    mut files: Files,
    name: &str,
    domain: &Domain,
    metric: &MetricField,
    s: &[f64],
    t: &[f64],
    nth: usize,
    wall: Option<[f64; 3]>,
) -> Result<Outcome, Error> {
    let chart = chart_for(domain, metric, wall)?;
    let r = build_quadratic_barrier(&chart, metric, s, t, nth)?;
    let code = if r.success { EXIT_PASS } else { EXIT_HYPOTHESIS };
    files.add("csv", r.to_csv());
    let cells: Vec<(f64, f64, f64)> = r.cells.iter().map(|c| (c.s, c.t, c.min_mean_curvature)).collect();
    files.add("svg", svg_heatmap(&format!("{name}: barrier mean curvature"), "s", "t", &cells));
    let summary = format!("barrier {name}: {} (H_p+ {:.4e}, s0 {:?}, t0 {:?})", status(code), r.h_p_plus, r.s0, r.t0);
    Ok(files.finish(Command::Barrier, name, code, summary, &r))
}

pub const ANGLE_TOL: f64 = 0.05;
pub const MIN_REMAINDER_ORDER: f64 = 2.7;
pub const LIMIT_TOL: f64 = 0.01;
pub const EUCLIDEAN_LIMIT_TOL: f64 = 1e-8;

#[allow(clippy::too_many_arguments)]
fn verify(
    mut files: Files,
    name: &str,
    domain: &Domain,
    metric: &MetricField,
    s: f64,
    theta: f64,
    t0: f64,
    levels: usize,
    wall: Option<[f64; 3]>,
) -> Result<Outcome, Error> {
    let chart = chart_for(domain, metric, wall)?;
    let grid = geometric_grid(t0, levels);
    let angle = verify_angle_expansion(&chart, metric, s, theta, &grid)?;
    let mc = verify_mc_expansion(&chart, metric, s, theta, &grid)?;
    let h = verify_h_limit(&chart, metric, &grid, 24)?;
    let order = if s == 0.0 { &angle.literal_remainder } else { &angle.remainder };
    let order_ok = order.as_ref().is_none_or(|f| f.exponent >= MIN_REMAINDER_ORDER);
    let angle_ok = (s == 0.0 || angle.relative_error < ANGLE_TOL) && order_ok;
    let mc_ok = mc.difference.relative_error < LIMIT_TOL;
    let h_ok = if h.formula.abs() < 1e-14 { h.error.abs() < EUCLIDEAN_LIMIT_TOL } else { h.relative_error < LIMIT_TOL };
    let code = if angle_ok && mc_ok && h_ok { EXIT_PASS } else { EXIT_HYPOTHESIS };
    let rows: Vec<Vec<f64>> = angle
        .samples
        .iter()
        .zip(&mc.samples)
        .map(|(a, m)| vec![a.0, a.1, a.2, m.1, m.2])
        .collect();
    files.add("csv", csv(&["t", "angle_difference", "predicted_angle_term", "leaf_mean_curvature", "wall_mean_curvature"], &rows));
    let pts: Vec<(f64, f64)> = h.samples.iter().map(|p| (p.0, p.1)).collect();
    files.add("svg", svg_line(&format!("{name}: H along leaves toward the top point"), "t", "H", &pts));
    let result = json!({"angle": angle, "mean_curvature": mc, "h_limit": h,
                        "checks": {"angle": angle_ok, "mean_curvature": mc_ok, "h_limit": h_ok}});
    let summary = format!(
        "verify {name}: {} (angle rel {:.2e}, difference rel {:.2e}, H limit err {:.2e})",
        status(code),
        angle.relative_error,
        mc.difference.relative_error,
        h.error
    );
    Ok(files.finish(Command::Verify, name, code, summary, &result))
}

fn report(
    mut files: Files,
    name: &str,
    domain: &Domain,
    metric: &MetricField,
    grid: [usize; 2],
    curves: usize,
) -> Result<Outcome, Error> {
    let (lo, hi) = inset(domain);
    let patch = BoundaryPatch::new(domain, grid[0], grid[1], lo, hi)?;
    let ident = identity_residuals(&patch)?;
    let weak = weak_convexity_sweep(&patch, 1e-6)?;
    let mut rows = Vec::new();
    let mut per_curve = Vec::new();
    for k in 0..curves {
        let v0 = lo + (k as f64 + 0.5) / curves as f64 * (hi - lo);
        let amp = 0.2 * (hi - lo) / curves as f64;
        let (kind, curve) = match k % 3 {
            0 => ("level", ClosedCurve::level(256, v0)),
            1 => ("slanted", ClosedCurve::slanted(256, v0, amp)),
            _ => ("wiggled", ClosedCurve::wiggled(256, v0, amp, 3)),
        };
        let w = winding_integral(domain, &curve)?;
        let est = curve_estimate_integral(domain, metric, &curve)?;
        rows.push(vec![k as f64, v0, w.total, w.turns as f64, est]);
        per_curve.push(json!({"id": k, "kind": kind, "v0": v0, "winding": w, "curve_estimate": est}));
    }
    files.add("csv", csv(&["id", "v0", "winding", "turns", "curve_estimate"], &rows));
    let cells: Vec<(f64, f64, f64)> = weak.report.samples.iter().map(|s| (s.u, s.v, s.margin)).collect();
    files.add("svg", svg_heatmap(&format!("{name}: weak convexity margin"), "u", "v", &cells));
    let result = json!({
        "identity": {"max_mean_curvature": ident.max_mean_curvature, "max_divergence": ident.max_divergence},
        "weak_convexity": {"pass": weak.report.pass, "min_margin": weak.report.min_margin, "max_det_gap": weak.max_det_gap},
        "curves": per_curve,
    });
    let summary = format!(
        "report {name}: pass (identity residual {:.2e}, weak convexity min {:.3e})",
        ident.max_mean_curvature.max(ident.max_divergence),
        weak.report.min_margin
    );
    Ok(files.finish(Command::Report, name, EXIT_PASS, summary, &result))
}
